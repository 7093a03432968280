#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "vcf/geometry.hpp"

namespace vcf::volume {

/// Voxel grid geometry shared by label volumes and binary masks.
///
/// Voxel (i, j, k) sits at `origin + direction * (spacing .* (i, j, k))` in
/// patient coordinates (mm, RAS+: +x right, +y anterior, +z superior).
/// Column c of `direction` is the patient-frame unit vector of voxel axis c.
struct SpatialFrame {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing = Vec3::Ones();
  Mat3 direction = Mat3::Identity();
  Vec3 origin = Vec3::Zero();

  std::size_t voxel_count() const;
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  // Continuous voxel coordinates to patient mm.
  Vec3 to_physical(double i, double j, double k) const;

  // Throws Error(kFormat) when dims/spacing/direction violate their invariants.
  void validate() const;
};

/// Segmentation labels, x fastest. 0 is background, k > 0 a vertebra id.
struct LabelVolume {
  SpatialFrame frame;
  std::vector<std::uint16_t> voxels;

  std::uint16_t at(int i, int j, int k) const { return voxels[frame.index(i, j, k)]; }
  std::set<int> labels_present() const;
  void validate() const;
};

struct BinaryMask {
  SpatialFrame frame;
  std::vector<std::uint8_t> voxels;  // 0 or 1
  std::size_t count = 0;

  bool at(int i, int j, int k) const { return voxels[frame.index(i, j, k)] != 0; }
};

struct LoadOptions {
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
};

// Dispatches on extension: .lvol, .nii, .nii.gz.
LabelVolume load_label_volume(const std::filesystem::path& path, const LoadOptions& options = {});

LabelVolume decode_nifti(const std::vector<std::uint8_t>& bytes, const LoadOptions& options = {});
LabelVolume decode_lvol(const std::vector<std::uint8_t>& bytes, const LoadOptions& options = {});

std::vector<std::uint8_t> encode_lvol(const LabelVolume& vol);
// Uncompressed single-file NIfTI-1, uint16 payload, sform from the frame.
std::vector<std::uint8_t> encode_nifti(const LabelVolume& vol);

void write_lvol(const LabelVolume& vol, const std::filesystem::path& path);
void write_nifti(const LabelVolume& vol, const std::filesystem::path& path);

// Throws Error(kEmptyMask) when the label does not occur.
BinaryMask extract_mask(const LabelVolume& vol, int label);

enum class ExclusionFlag { kForeignMaterial, kSingleVertebraScan };

struct VertebraRecord {
  std::string scan_id;
  int vertebra_label = 0;
  int genant_grade = 0;
  std::set<ExclusionFlag> exclusion_flags;
};

std::vector<VertebraRecord> parse_annotations(std::istream& in);
std::vector<VertebraRecord> load_annotations(const std::filesystem::path& path);
void write_annotations(const std::vector<VertebraRecord>& records, std::ostream& out);

std::string_view to_string(ExclusionFlag flag);

// Whole-file read; throws Error(kIo).
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vcf::volume
