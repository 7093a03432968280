#include "vcf/heightmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "vcf/error.hpp"
#include "vcf/volume.hpp"

namespace vcf::heightmap {
namespace {

int bin(double value, double lo, double hi, int g) {
  const double frac = (value - lo) / (hi - lo);
  return std::clamp(static_cast<int>(std::floor(frac * g)), 0, g - 1);
}

}  // namespace

std::size_t HeightMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

HeightMap project_heightmap(const meshing::OrientedPointCloud& posed, const ProjectionOptions& options) {
  const int g = options.grid_size;
  if (g < 4) throw Error(ErrorCode::kValidation, "grid size must be at least 4");
  if (posed.size() == 0) throw Error(ErrorCode::kValidation, "empty point cloud");

  HeightMap map;
  map.grid_size = g;
  map.u_min = map.v_min = std::numeric_limits<double>::infinity();
  map.u_max = map.v_max = -std::numeric_limits<double>::infinity();
  for (const Vec3& p : posed.points) {
    map.u_min = std::min(map.u_min, p.x());
    map.u_max = std::max(map.u_max, p.x());
    map.v_min = std::min(map.v_min, p.y());
    map.v_max = std::max(map.v_max, p.y());
  }
  if (!(map.u_max > map.u_min) || !(map.v_max > map.v_min)) {
    throw Error(ErrorCode::kProjectionFailure, "point cloud has no axial extent");
  }

  const auto cells = static_cast<std::size_t>(g * g);
  std::vector<double> top(cells, -std::numeric_limits<double>::infinity());
  std::vector<double> bottom(cells, std::numeric_limits<double>::infinity());
  map.valid.assign(cells, 0);
  for (std::size_t i = 0; i < posed.size(); ++i) {
    const Vec3& p = posed.points[i];
    const auto c = static_cast<std::size_t>(bin(p.y(), map.v_min, map.v_max, g) * g +
                                            bin(p.x(), map.u_min, map.u_max, g));
    top[c] = std::max(top[c], p.z());
    bottom[c] = std::min(bottom[c], p.z());
    if (posed.normals[i].z() > 0.0) map.valid[c] = 1;
  }

  map.heights.assign(cells, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    if (!map.valid[c]) continue;
    map.heights[c] = options.column_span ? top[c] - bottom[c] : std::max(0.0, top[c]);
  }
  if (map.valid_count() == 0) throw Error(ErrorCode::kProjectionFailure, "no cell has a superior-surface point");
  return map;
}

std::vector<std::uint8_t> encode_pgm(const HeightMap& map, int scale) {
  if (scale < 1) throw Error(ErrorCode::kValidation, "pgm scale must be positive");
  const int g = map.grid_size;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < map.heights.size(); ++c) {
    if (!map.valid[c]) continue;
    lo = std::min(lo, map.heights[c]);
    hi = std::max(hi, map.heights[c]);
  }
  const int side = g * scale;
  const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + static_cast<std::size_t>(side * side));
  for (int row = 0; row < side; ++row) {
    const int iv = g - 1 - row / scale;  // anterior at the top
    for (int col = 0; col < side; ++col) {
      const int iu = col / scale;
      std::uint8_t px = 0;
      if (map.is_valid(iu, iv)) {
        px = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (map.at(iu, iv) - lo) / (hi - lo))) : 128;
      }
      out.push_back(px);
    }
  }
  return out;
}

void render_heightmap(const HeightMap& map, const std::filesystem::path& path, int scale) {
  volume::write_file_bytes(path, encode_pgm(map, scale));
}

void write_csv(const HeightMap& map, std::ostream& out) {
  const int g = map.grid_size;
  char buf[32];
  for (int iv = g - 1; iv >= 0; --iv) {
    for (int iu = 0; iu < g; ++iu) {
      if (iu) out << ',';
      if (map.is_valid(iu, iv)) {
        std::snprintf(buf, sizeof(buf), "%.6g", map.at(iu, iv));
        out << buf;
      } else {
        out << "NA";
      }
    }
    out << '\n';
  }
}

}  // namespace vcf::heightmap
