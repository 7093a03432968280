#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vcf/error.hpp"
#include "vcf/phantom.hpp"

using namespace vcf;
using namespace vcf::phantom;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

}  // namespace

TEST(HeightField, UndeformedIsConstantInsideEllipse) {
  const HeightField h(25.0, 15.0, 20.0, Deformation::none());
  for (double u : {-19.0, -5.0, 0.0, 12.0})
    for (double v : {-10.0, 0.0, 9.0}) EXPECT_DOUBLE_EQ(h(u, v), 25.0);
  EXPECT_TRUE(h.inside(0.0, 14.99));
  EXPECT_FALSE(h.inside(15.0, 12.0));
}

TEST(HeightField, WedgeIsLinearFromPosteriorToAnterior) {
  const HeightField h(25.0, 15.0, 20.0, Deformation::wedge(0.8));
  EXPECT_DOUBLE_EQ(h(0.0, -15.0), 25.0);
  EXPECT_DOUBLE_EQ(h(0.0, 15.0), 20.0);
  EXPECT_DOUBLE_EQ(h(0.0, 0.0), 22.5);
  EXPECT_DOUBLE_EQ(h(7.0, 7.5), 21.25);  // no lateral dependence
}

TEST(HeightField, BiconcaveDipsToFractionAtAxisAndKeepsRim) {
  const HeightField h(25.0, 15.0, 20.0, Deformation::biconcave(0.7));
  EXPECT_DOUBLE_EQ(h(0.0, 0.0), 17.5);
  EXPECT_DOUBLE_EQ(h(20.0, 0.0), 25.0);
  EXPECT_DOUBLE_EQ(h(0.0, -15.0), 25.0);
  EXPECT_LT(h(0.0, 0.0), h(10.0, 0.0));
}

TEST(HeightField, CrushScalesUniformly) {
  const HeightField h(24.0, 15.0, 20.0, Deformation::crush(0.75));
  EXPECT_DOUBLE_EQ(h(0.0, 0.0), 18.0);
  EXPECT_DOUBLE_EQ(h(-10.0, 10.0), 18.0);
}

TEST(Phantom, SpecValidation) {
  PhantomSpec s;
  s.deformation = Deformation::wedge(0.0);
  EXPECT_EQ(code_of([&] { generate_phantom(s, 0); }), ErrorCode::kValidation);
  s = PhantomSpec{};
  s.deformation = Deformation::crush(1.2);
  EXPECT_EQ(code_of([&] { generate_phantom(s, 0); }), ErrorCode::kValidation);
  s = PhantomSpec{};
  s.count_in_scan = 1;
  EXPECT_EQ(code_of([&] { generate_phantom(s, 0); }), ErrorCode::kValidation);
  s = PhantomSpec{};
  s.base_height = 0.0;
  EXPECT_EQ(code_of([&] { generate_phantom(s, 0); }), ErrorCode::kValidation);
}

TEST(Phantom, CoarseSpacingIsResolutionError) {
  PhantomSpec s;
  s.spacing = 3.0;  // 15 mm radius -> 5 voxels
  EXPECT_EQ(code_of([&] { generate_phantom(s, 0); }), ErrorCode::kResolution);
  s.spacing = 2.5;  // exactly 6 voxels is allowed
  EXPECT_NO_THROW(generate_phantom(s, 0));
}

TEST(Phantom, StacksReferenceBodiesSuperiorly) {
  PhantomSpec s;
  s.count_in_scan = 3;
  s.deformation = Deformation::wedge(0.8);
  const Phantom ph = generate_phantom(s, 1);
  EXPECT_EQ(ph.labels, (std::vector<int>{20, 19, 18}));
  EXPECT_EQ(ph.volume.labels_present(), (std::set<int>{18, 19, 20}));
  // Mean z of each label increases up the stack.
  std::map<int, std::pair<double, int>> z;
  const auto& f = ph.volume.frame;
  for (int k = 0; k < f.dims[2]; ++k)
    for (int j = 0; j < f.dims[1]; ++j)
      for (int i = 0; i < f.dims[0]; ++i) {
        const int l = ph.volume.at(i, j, k);
        if (l == 0) continue;
        z[l].first += f.to_physical(i, j, k).z();
        z[l].second += 1;
      }
  EXPECT_LT(z[20].first / z[20].second, z[19].first / z[19].second);
  EXPECT_LT(z[19].first / z[19].second, z[18].first / z[18].second);
}

TEST(Phantom, MarginOfBackgroundSurroundsTheStack) {
  const Phantom ph = generate_phantom(PhantomSpec{}, 0);
  const auto& f = ph.volume.frame;
  for (int k = 0; k < f.dims[2]; ++k)
    for (int j = 0; j < f.dims[1]; ++j)
      for (int i = 0; i < f.dims[0]; ++i) {
        const bool border = i < 4 || j < 4 || k < 4 || i >= f.dims[0] - 4 || j >= f.dims[1] - 4 || k >= f.dims[2] - 4;
        if (border) ASSERT_EQ(ph.volume.at(i, j, k), 0) << i << ' ' << j << ' ' << k;
      }
}

TEST(Phantom, SameSeedGivesIdenticalBytes) {
  PhantomSpec s;
  s.surface_noise = 0.4;
  s.tilt_deg = 12.0;
  const auto a = volume::encode_lvol(generate_phantom(s, 9).volume);
  const auto b = volume::encode_lvol(generate_phantom(s, 9).volume);
  const auto c = volume::encode_lvol(generate_phantom(s, 10).volume);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

// Property: labelled voxels agree with the analytic body. None lies more than
// one voxel diagonal outside it. At least 98% of voxel centres lie inside for
// jitter up to 0.3 voxel; full 0.5-voxel jitter moves about 3% of the shell.
TEST(Phantom, VoxelizationMatchesAnalyticBody) {
  struct Case {
    Deformation d;
    double spacing, noise, tilt;
  };
  const std::vector<Case> cases = {
      {Deformation::none(), 1.0, 0.0, 0.0},      {Deformation::wedge(0.8), 1.0, 0.5, 0.0},
      {Deformation::biconcave(0.7), 0.8, 0.3, 0.0}, {Deformation::crush(0.75), 1.2, 0.5, 20.0},
      {Deformation::wedge(0.7), 1.0, 0.2, -30.0}, {Deformation::wedge(0.85), 1.0, 0.3, 10.0},
  };
  for (const Case& c : cases) {
    PhantomSpec s;
    s.deformation = c.d;
    s.spacing = c.spacing;
    s.surface_noise = c.noise;
    s.tilt_deg = c.tilt;
    const Phantom ph = generate_phantom(s, 4);
    const HeightField& field = ph.fields[0];
    const double diag = std::sqrt(3.0) * c.spacing;
    const Mat3 qt = ph.body_rotation.transpose();
    const auto& f = ph.volume.frame;
    std::size_t total = 0, inside = 0, far = 0;
    for (int k = 0; k < f.dims[2]; ++k)
      for (int j = 0; j < f.dims[1]; ++j)
        for (int i = 0; i < f.dims[0]; ++i) {
          if (ph.volume.at(i, j, k) != s.label) continue;
          ++total;
          const Vec3 b = qt * (f.to_physical(i, j, k) - ph.body_origin);
          const double h = field(b.x(), b.y());
          if (field.inside(b.x(), b.y()) && b.z() >= 0.0 && b.z() < h) ++inside;
          // Grown body: radii and height extended by one diagonal.
          const double a = b.x() / (field.radius_lateral() + diag);
          const double e = b.y() / (field.radius_ap() + diag);
          const HeightField grown(field.base_height(), field.radius_ap() + diag, field.radius_lateral() + diag, c.d);
          const bool near = a * a + e * e <= 1.0 && b.z() >= -diag && b.z() < grown(b.x(), b.y()) + diag;
          if (!near) ++far;
        }
    ASSERT_GT(total, 0u);
    if (c.noise <= 0.3) EXPECT_GE(static_cast<double>(inside) / static_cast<double>(total), 0.98) << c.d.describe();
    EXPECT_EQ(far, 0u) << c.d.describe();
  }
}

TEST(Phantom, VoxelCountTracksAnalyticVolume) {
  // Wedge volume over an ellipse: the linear term integrates to its value at v = 0.
  PhantomSpec s;
  s.deformation = Deformation::wedge(0.8);
  const Phantom ph = generate_phantom(s, 0);
  const double analytic = std::numbers::pi * 15.0 * 20.0 * 25.0 * 0.9;
  const auto m = volume::extract_mask(ph.volume, 20);
  EXPECT_NEAR(static_cast<double>(m.count), analytic, 0.03 * analytic);
}

TEST(Benchmark, SuiteGradesFollowDeformations) {
  const auto suite = benchmark_suite(12, 3);
  ASSERT_EQ(suite.size(), 12u);
  int deformed = 0;
  for (std::size_t s = 0; s < suite.size(); ++s) {
    ASSERT_EQ(suite[s].stack.size(), 3u);
    for (std::size_t v = 0; v < 3; ++v) {
      const auto& d = suite[s].stack[v].deformation;
      if (d.kind == DeformationKind::kNone) {
        EXPECT_EQ(suite[s].grades[v], 0);
      } else {
        ++deformed;
        EXPECT_EQ(v, 1u);
        EXPECT_EQ(suite[s].grades[v], 1.0 - d.fraction <= 0.25 + 1e-12 ? 2 : 3);
      }
    }
  }
  EXPECT_EQ(deformed, 6);
}

TEST(Benchmark, WritesVolumesAnnotationsAndSplits) {
  fixture::TempDir dir;
  const auto suite = benchmark_suite(2, 1);
  write_benchmark(dir.path(), suite, 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "phantom000.lvol"));
  EXPECT_TRUE(std::filesystem::exists(dir / "phantom001.lvol"));
  EXPECT_EQ(volume::load_annotations(dir / "annotations.csv").size(), 6u);
  EXPECT_TRUE(std::filesystem::exists(dir / "splits.csv"));
}
