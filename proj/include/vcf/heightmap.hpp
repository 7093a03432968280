#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "vcf/meshing.hpp"

namespace vcf::heightmap {

inline constexpr int kDefaultGridSize = 16;

/// Per-column heights over a G x G axial grid of a posed vertebra.
/// Cell (iu, iv) is stored at iv * G + iu; iu runs right-to-left in patient
/// order (u = canonical x), iv runs posterior (0) to anterior (G - 1).
struct HeightMap {
  int grid_size = kDefaultGridSize;
  std::vector<double> heights;  // 0 where invalid
  std::vector<std::uint8_t> valid;
  double u_min = 0.0;
  double u_max = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;

  double at(int iu, int iv) const { return heights[static_cast<std::size_t>(iv * grid_size + iu)]; }
  bool is_valid(int iu, int iv) const { return valid[static_cast<std::size_t>(iv * grid_size + iu)] != 0; }
  std::size_t valid_count() const;
};

struct ProjectionOptions {
  int grid_size = kDefaultGridSize;
  // Column extent (max z - min z) instead of max z.
  bool column_span = false;
};

// Throws Error(kValidation) for grid_size < 4 or an empty cloud,
// Error(kProjectionFailure) when no cell has a superior-surface witness.
HeightMap project_heightmap(const meshing::OrientedPointCloud& posed, const ProjectionOptions& options = {});

// Binary PGM (P5). Each cell becomes a `scale` x `scale` block.
std::vector<std::uint8_t> encode_pgm(const HeightMap& map, int scale = 1);
void render_heightmap(const HeightMap& map, const std::filesystem::path& path, int scale = 1);

// G rows of G comma-separated values, anterior row first, NA for invalid.
void write_csv(const HeightMap& map, std::ostream& out);

}  // namespace vcf::heightmap
