#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vcf/geometry.hpp"
#include "vcf/volume.hpp"

namespace vcf::phantom {

enum class DeformationKind { kNone, kWedge, kBiconcave, kCrush };

/// Height-loss pattern applied to an elliptic-cylinder body. `fraction` is the
/// remaining height at the most affected point (1.0 = no loss).
struct Deformation {
  DeformationKind kind = DeformationKind::kNone;
  double fraction = 1.0;

  static Deformation none() { return {}; }
  static Deformation wedge(double anterior_fraction) { return {DeformationKind::kWedge, anterior_fraction}; }
  static Deformation biconcave(double central_fraction) { return {DeformationKind::kBiconcave, central_fraction}; }
  static Deformation crush(double uniform_fraction) { return {DeformationKind::kCrush, uniform_fraction}; }

  std::string describe() const;
};

struct PhantomSpec {
  double base_height = 25.0;     // mm
  double radius_ap = 15.0;       // mm, anteroposterior semi-axis
  double radius_lateral = 20.0;  // mm, left-right semi-axis
  Deformation deformation;
  double spacing = 1.0;  // mm/voxel, isotropic
  int label = 20;
  int count_in_scan = 2;
  double surface_noise = 0.0;  // max jitter of the inside test, in voxels (<= 0.5)
  double tilt_deg = 0.0;       // rotation of the whole stack about the lateral axis
  double gap = 6.0;            // mm of background between stacked bodies

  // Throws Error(kValidation) or Error(kResolution).
  void validate() const;
};

/// Closed-form height of one body over its axial footprint, in body
/// coordinates: u lateral (mm from the axis), v anteroposterior (mm from the
/// axis, positive toward anterior).
class HeightField {
 public:
  HeightField() = default;
  HeightField(double base_height, double radius_ap, double radius_lateral, Deformation deformation);

  bool inside(double u, double v) const;
  // Height in mm; defined for every (u, v), meaningful inside the footprint.
  double operator()(double u, double v) const;

  double radius_ap() const { return radius_ap_; }
  double radius_lateral() const { return radius_lateral_; }
  double base_height() const { return base_height_; }

 private:
  double base_height_ = 0.0;
  double radius_ap_ = 1.0;
  double radius_lateral_ = 1.0;
  Deformation deformation_;
};

struct Phantom {
  volume::LabelVolume volume;
  // One entry per stacked body, inferior first; fields[0] is the deformed body.
  std::vector<HeightField> fields;
  std::vector<int> labels;
  // Maps body coordinates (u, v, w; w = 0 at the inferior endplate of the
  // first body) to patient mm.
  Mat3 body_rotation = Mat3::Identity();
  Vec3 body_origin = Vec3::Zero();
};

// The deformed body plus count_in_scan - 1 undeformed bodies stacked superiorly
// with labels label-1, label-2, ...
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

// Arbitrary stack, inferior first. Spacing, noise and tilt come from the
// first entry; count_in_scan is ignored.
Phantom generate_scan(std::span<const PhantomSpec> stack, std::uint64_t seed);

struct BenchmarkScan {
  std::string scan_id;
  std::vector<PhantomSpec> stack;  // inferior first
  std::vector<int> grades;         // Genant grade per stack entry
};

// Seeded suite: `scans` scans of three bodies; every other scan carries one
// deformed middle body (wedge, crush or biconcave). Deformed bodies are
// graded 2 (height loss <= 25%) or 3.
std::vector<BenchmarkScan> benchmark_suite(int scans, std::uint64_t seed);

// Writes <scan_id>.lvol files, annotations.csv and splits.csv into `dir`.
void write_benchmark(const std::filesystem::path& dir, const std::vector<BenchmarkScan>& suite, std::uint64_t seed);

}  // namespace vcf::phantom
