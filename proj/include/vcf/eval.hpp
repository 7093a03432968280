#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vcf/features.hpp"
#include "vcf/heightmap.hpp"
#include "vcf/meshing.hpp"
#include "vcf/orientation.hpp"
#include "vcf/rules.hpp"
#include "vcf/volume.hpp"

namespace vcf::eval {

struct PipelineConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  meshing::MeshingOptions meshing;
  orientation::KMeansOptions kmeans;
  heightmap::ProjectionOptions projection;
  features::SectionLayout layout = features::SectionLayout::standard();
  double min_valid_fraction = features::kDefaultMinValidFraction;
  features::ReferenceMode reference_mode = features::ReferenceMode::kScanMax;
  bool use_orientation_hints = true;
  std::optional<std::string> split;  // evaluate only scans in this split

  void validate() const;
};

// Keys: seed, threads, grid_size, min_component_voxels, smooth,
// kmeans_restarts, kmeans_max_iterations, column_span, min_valid_fraction,
// reference_mode ("scan_max" | "adjacent"), use_orientation_hints, split.
// Unknown keys are validation errors.
void apply_config_json(PipelineConfig& cfg, const std::string& json_text);

/// Everything computed for one vertebra on the way to its section stats.
struct VertebraGeometry {
  meshing::TriangleMesh mesh;
  meshing::MeshingReport meshing_report;
  orientation::SurfaceClusters clusters;
  orientation::CanonicalPose pose;
  meshing::OrientedPointCloud posed;
  heightmap::HeightMap map;
  features::SectionStats stats;
};

// mask -> mesh -> clusters -> pose -> height map -> section stats.
// Throws the first geometry Error encountered.
VertebraGeometry extract_vertebra(const volume::LabelVolume& vol, int label, const PipelineConfig& cfg);

struct Exclusion {
  std::string scan_id;
  int label = 0;
  std::string reason;  // error code string or an exclusion flag
  std::string detail;
};

struct ScanResult {
  std::string scan_id;
  std::vector<features::VertebraFeatures> features;
  std::vector<Exclusion> exclusions;
};

// Applies the annotation exclusions, extracts every remaining vertebra and
// builds scan features. Never throws for per-vertebra or volume errors; they
// become exclusions.
ScanResult process_scan(const std::string& scan_id, const std::filesystem::path& volume_path,
                        const std::vector<volume::VertebraRecord>& records, const PipelineConfig& cfg);

// <scan_id>.lvol, <scan_id>.nii.gz or <scan_id>.nii inside dir.
std::optional<std::filesystem::path> find_volume(const std::filesystem::path& dir, const std::string& scan_id);

std::map<std::string, std::string> load_splits(const std::filesystem::path& path);

struct FeatureRun {
  std::vector<volume::VertebraRecord> records;  // annotations in scope
  std::vector<ScanResult> scans;                // annotation order of first appearance
};

// Runs process_scan over every annotated scan (optionally one split) on a
// pool of cfg.threads workers; results are assembled in scan order.
FeatureRun run_features(const std::filesystem::path& dataset_dir, const PipelineConfig& cfg);

std::vector<features::FeatureRow> feature_rows(const FeatureRun& run);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::string> notes;  // zero-division events
};

// Zero denominators yield 0 and a note.
Metrics compute_metrics(const Confusion& c);

struct PredictionRow {
  std::string scan_id;
  int label = 0;
  int grade = 0;
  bool truth = false;
  std::string features_digest;
  double score = 0.0;
  bool predicted = false;
  std::vector<int> fired;
};

struct EvaluationReport {
  std::size_t total = 0;
  std::vector<PredictionRow> rows;
  std::vector<Exclusion> exclusions;
  Confusion confusion;
  Metrics metrics;
  std::vector<features::FeatureRow> feature_table;  // included vertebrae
};

inline constexpr int kPositiveGrade = 2;

// Throws Error(kEmptyEvaluation) when no vertebra survives.
EvaluationReport evaluate(const FeatureRun& run, const rules::RuleModel& model);
EvaluationReport run_pipeline(const std::filesystem::path& dataset_dir, const rules::RuleModel& model,
                              const PipelineConfig& cfg);

// FNV-1a 64 of the row's formatted feature values, as 16 hex digits.
std::string features_digest(const features::FeatureSet& values);

std::string report_json(const EvaluationReport& report, const rules::RuleModel& model);
std::string metrics_table(const EvaluationReport& report);

}  // namespace vcf::eval
