#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "vcf/volume.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vcf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline vcf::volume::LabelVolume make_volume(int nx, int ny, int nz,
                                            const std::function<int(int, int, int)>& label_at,
                                            double spacing = 1.0) {
  vcf::volume::LabelVolume vol;
  vol.frame.dims = {nx, ny, nz};
  vol.frame.spacing = vcf::Vec3::Constant(spacing);
  vol.voxels.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) vol.voxels[vol.frame.index(i, j, k)] = static_cast<std::uint16_t>(label_at(i, j, k));
  return vol;
}

// Solid box of `label` occupying [lo, hi) on each axis inside a padded grid.
inline vcf::volume::LabelVolume box_volume(int sx, int sy, int sz, int pad = 2, int label = 1, double spacing = 1.0) {
  return make_volume(
      sx + 2 * pad, sy + 2 * pad, sz + 2 * pad,
      [=](int i, int j, int k) {
        return (i >= pad && i < pad + sx && j >= pad && j < pad + sy && k >= pad && k < pad + sz) ? label : 0;
      },
      spacing);
}

}  // namespace fixture
