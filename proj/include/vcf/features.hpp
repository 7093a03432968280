#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vcf/heightmap.hpp"

namespace vcf::features {

inline constexpr int kSectionCount = 7;
enum class Section { kP, kM, kA, kL, kR, kC, kA0 };
inline constexpr std::array<const char*, kSectionCount> kSectionNames = {"P", "M", "A", "L", "R", "C", "A0"};
inline constexpr int kPairCount = kSectionCount * (kSectionCount - 1) / 2;

/// Axis-aligned rectangle in normalised footprint coordinates (u, v) in [0,1]^2
/// (v = 0 posterior). Bounds are inclusive unless the matching `open` flag is
/// set. A cell belongs to a region when its centre does.
struct Region {
  double u_lo = 0.0, u_hi = 1.0, v_lo = 0.0, v_hi = 1.0;
  bool u_hi_open = false;
  bool v_hi_open = false;
  bool u_lo_open = false;

  bool contains(double u, double v) const;
};

struct SectionLayout {
  std::array<Region, kSectionCount> regions;

  static SectionLayout standard();
  // Cell indices (iv * G + iu) of each region at grid size g.
  std::vector<int> cells(Section s, int g) const;
};

struct SectionStats {
  std::array<double, kSectionCount> mean{};
  std::array<double, kSectionCount> stdev{};       // population
  std::array<double, kSectionCount> valid_fraction{};
  std::array<bool, kSectionCount> usable{};        // valid_fraction >= threshold
};

inline constexpr double kDefaultMinValidFraction = 0.3;

// Throws Error(kFeatureFailure) if A0, P or C falls below min_valid_fraction.
SectionStats section_stats(const heightmap::HeightMap& map, const SectionLayout& layout = SectionLayout::standard(),
                           double min_valid_fraction = kDefaultMinValidFraction);

// mean(j) / mean(i) for i < j in section order. Throws Error(kDivisionGuard)
// on a non-positive denominator.
std::array<double, kPairCount> pairwise_ratios(const std::array<double, kSectionCount>& means);
std::array<std::pair<int, int>, kPairCount> pair_order();

std::string pair_name(int i, int j);  // "pair_P_A0"
std::string ref_name(int s);          // "ref_C"

/// Named feature values; a missing feature is absent from the map.
using FeatureSet = std::map<std::string, double>;

struct VertebraFeatures {
  std::string scan_id;
  int label = 0;
  SectionStats stats;
  int reference_label = 0;
  FeatureSet values;
};

enum class ReferenceMode {
  kScanMax,   // argmax of mean(C) over the scan
  kAdjacent,  // nearest other label, ties to the lower label
};

// Index into `stats` of the reference vertebra: argmax mean(C), ties to the
// lower label. Throws Error(kScanExcluded) for fewer than two entries.
std::size_t select_reference(const std::vector<int>& labels, const std::vector<SectionStats>& stats);

// Full per-scan feature vectors: pair ratios, reference ratios, means, stds and
// valid fractions. Missing sections leave their features absent.
std::vector<VertebraFeatures> build_scan_features(const std::string& scan_id, const std::vector<int>& labels,
                                                  const std::vector<SectionStats>& stats,
                                                  ReferenceMode mode = ReferenceMode::kScanMax);

// Canonical column order of the feature table.
std::vector<std::string> feature_columns();
bool is_ratio_feature(const std::string& name);

struct FeatureRow {
  std::string scan_id;
  int label = 0;
  int reference_label = 0;
  FeatureSet values;
};

// CSV with header scan_id,vertebra_label,reference_label,<feature_columns>;
// missing values are written as NA, numbers with %.17g.
void write_feature_csv(const std::vector<FeatureRow>& rows, std::ostream& out);
std::vector<FeatureRow> read_feature_csv(std::istream& in);

FeatureRow to_row(const VertebraFeatures& f);

}  // namespace vcf::features
