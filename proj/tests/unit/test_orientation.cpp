#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vcf/error.hpp"
#include "vcf/meshing.hpp"
#include "vcf/orientation.hpp"
#include "vcf/phantom.hpp"

using namespace vcf;
using namespace vcf::orientation;
using meshing::OrientedPointCloud;

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

OrientedPointCloud cloud_from_normals(const std::vector<Vec3>& normals) {
  OrientedPointCloud c;
  for (const Vec3& n : normals) {
    c.points.push_back(10.0 * n);
    c.normals.push_back(n);
  }
  return c;
}

OrientedPointCloud phantom_cloud(const phantom::PhantomSpec& spec, phantom::Phantom* out = nullptr) {
  const auto ph = phantom::generate_phantom(spec, 2);
  if (out) *out = ph;
  return meshing::to_point_cloud(meshing::marching_cubes(volume::extract_mask(ph.volume, spec.label)));
}

// numpy-style linear percentile, written independently of the library.
double linear_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double degrees_from_identity(const Mat3& r) {
  return std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST(KMeans, CubeNormalsGiveSixAxisCentroids) {
  const auto cloud = cloud_from_normals(oracle::cube_normals(200, 0.05, 1));
  const auto clusters = cluster_normals(cloud, 7);
  std::vector<bool> matched(6, false);
  for (const Vec3& c : clusters.centroids) {
    EXPECT_NEAR(c.norm(), 1.0, 1e-9);
    int best = -1;
    double best_angle = 180.0;
    for (int a = 0; a < 6; ++a) {
      Vec3 axis = Vec3::Zero();
      axis[a / 2] = a % 2 ? 1.0 : -1.0;
      const double ang = angle_deg(c, axis);
      if (ang < best_angle) {
        best_angle = ang;
        best = a;
      }
    }
    EXPECT_LT(best_angle, 5.0);
    EXPECT_FALSE(matched[static_cast<std::size_t>(best)]);
    matched[static_cast<std::size_t>(best)] = true;
  }
  std::size_t total = 0;
  for (auto s : clusters.sizes) total += s;
  EXPECT_EQ(total, cloud.size());
}

TEST(KMeans, CubeMeshNormalsFromMarchingCubes) {
  volume::BinaryMask mask;
  mask.frame.dims = {14, 14, 14};
  mask.voxels.assign(14 * 14 * 14, 0);
  for (int k = 2; k < 12; ++k)
    for (int j = 2; j < 12; ++j)
      for (int i = 2; i < 12; ++i) mask.voxels[mask.frame.index(i, j, k)] = 1;
  mask.count = 1000;
  const auto cloud = meshing::to_point_cloud(meshing::marching_cubes(mask));
  const auto clusters = cluster_normals(cloud, 0);
  for (const Vec3& c : clusters.centroids) {
    const double best = std::min({angle_deg(c, Vec3::UnitX()), angle_deg(c, -Vec3::UnitX()), angle_deg(c, Vec3::UnitY()),
                                  angle_deg(c, -Vec3::UnitY()), angle_deg(c, Vec3::UnitZ()), angle_deg(c, -Vec3::UnitZ())});
    EXPECT_LT(best, 5.0);
  }
}

TEST(KMeans, CylinderCapsAndLateralBand) {
  std::vector<Vec3> normals;
  for (int i = 0; i < 300; ++i) normals.push_back(Vec3::UnitZ());
  for (int i = 0; i < 300; ++i) normals.push_back(-Vec3::UnitZ());
  for (int i = 0; i < 720; ++i) {
    const double t = 2.0 * std::numbers::pi * (i + 0.5) / 720.0;
    normals.emplace_back(std::cos(t), std::sin(t), 0.0);
  }
  // Slight cap jitter so the distinct-direction check sees real spread.
  for (std::size_t i = 0; i < 600; ++i) normals[i] = (normals[i] + Vec3(1e-2 * std::sin(i), 1e-2 * std::cos(i), 0)).normalized();
  const auto cloud = cloud_from_normals(normals);
  const auto clusters = cluster_normals(cloud, 3);
  int caps = 0;
  for (const Vec3& c : clusters.centroids) {
    if (std::abs(c.z()) > std::cos(5.0 * std::numbers::pi / 180.0)) {
      ++caps;
    } else {
      EXPECT_LT(std::abs(c.z()), std::sin(5.0 * std::numbers::pi / 180.0));
    }
  }
  EXPECT_EQ(caps, 2);
  // Fixed point of Lloyd's iteration: every point sits with its nearest centroid.
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    int nearest = 0;
    for (int k = 1; k < kSurfaceCount; ++k) {
      if ((cloud.normals[i] - clusters.centroids[static_cast<std::size_t>(k)]).squaredNorm() <
          (cloud.normals[i] - clusters.centroids[static_cast<std::size_t>(nearest)]).squaredNorm())
        nearest = k;
    }
    const double d_assigned = (cloud.normals[i] - clusters.centroids[static_cast<std::size_t>(clusters.assignments[i])]).squaredNorm();
    const double d_nearest = (cloud.normals[i] - clusters.centroids[static_cast<std::size_t>(nearest)]).squaredNorm();
    EXPECT_LE(d_assigned, d_nearest + 1e-9);
  }
}

TEST(KMeans, IdenticalNormalsAreDegenerate) {
  const auto cloud = cloud_from_normals(std::vector<Vec3>(50, Vec3::UnitZ()));
  EXPECT_EQ(code_of([&] { cluster_normals(cloud, 0); }), ErrorCode::kDegenerateGeometry);
  const auto five = cloud_from_normals({Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ()});
  EXPECT_EQ(code_of([&] { cluster_normals(five, 0); }), ErrorCode::kDegenerateGeometry);
}

TEST(KMeans, RotatingNormalsRotatesCentroids) {
  const auto base = oracle::cube_normals(100, 0.1, 5);
  const Mat3 r = Eigen::AngleAxisd(0.7, Vec3(0.3, -1.0, 0.4).normalized()).toRotationMatrix();
  std::vector<Vec3> rotated;
  for (const Vec3& n : base) rotated.push_back(r * n);
  const auto a = cluster_normals(cloud_from_normals(base), 11);
  const auto b = cluster_normals(cloud_from_normals(rotated), 11);
  // Up to relabelling: every rotated centroid has a partner in the other set.
  for (const Vec3& c : a.centroids) {
    double best = 180.0;
    for (const Vec3& d : b.centroids) best = std::min(best, angle_deg(r * c, d));
    EXPECT_LT(best, 1e-6);
  }
}

TEST(KMeans, FixedSeedIsDeterministic) {
  const auto cloud = cloud_from_normals(oracle::cube_normals(80, 0.3, 9));
  const auto a = cluster_normals(cloud, 42);
  const auto b = cluster_normals(cloud, 42);
  EXPECT_EQ(a.assignments, b.assignments);
  for (int k = 0; k < kSurfaceCount; ++k) EXPECT_EQ(a.centroids[static_cast<std::size_t>(k)], b.centroids[static_cast<std::size_t>(k)]);
}

TEST(Pose, CanonicalPhantomGivesIdentity) {
  const auto cloud = phantom_cloud(phantom::PhantomSpec{});
  const auto pose = compute_pose(cluster_normals(cloud, 0), cloud, PoseHints{});
  EXPECT_LT(degrees_from_identity(pose.transform.rotation), 1.0);
  EXPECT_LT(pose.transform.translation.norm(), 1.0);
  EXPECT_NE(pose.posterior_cluster, pose.inferior_cluster);
  EXPECT_FALSE(pose.low_confidence);
}

TEST(Pose, RecoversLateralTilt) {
  for (double tilt : {30.0, -30.0, 15.0}) {
    phantom::PhantomSpec spec;
    spec.tilt_deg = tilt;
    phantom::Phantom ph;
    const auto cloud = phantom_cloud(spec, &ph);
    const auto pose = compute_pose(cluster_normals(cloud, 1), cloud, PoseHints{});
    EXPECT_LT(degrees_from_identity(pose.transform.rotation * ph.body_rotation), 2.0) << tilt;
  }
}

TEST(Pose, RotationIsProperAndOrthonormal) {
  phantom::PhantomSpec spec;
  spec.tilt_deg = 20.0;
  spec.deformation = phantom::Deformation::wedge(0.8);
  const auto cloud = phantom_cloud(spec);
  const auto pose = compute_pose(cluster_normals(cloud, 4), cloud, PoseHints{});
  EXPECT_LT(orthonormality_error(pose.transform.rotation), 1e-6);
  EXPECT_NEAR(pose.transform.rotation.determinant(), 1.0, 1e-6);
}

TEST(Pose, NearlyParallelSurfacesAreAmbiguous) {
  const double t = 10.0 * std::numbers::pi / 180.0;
  SurfaceClusters clusters;
  clusters.centroids = {Vec3(0, 0, -1), Vec3(0, -std::sin(t), -std::cos(t)), Vec3(0, 0, 1),
                        Vec3(1, 0, 0),  Vec3(-1, 0, 0),                      Vec3(0, 1, 0)};
  OrientedPointCloud cloud;
  for (int k = 0; k < kSurfaceCount; ++k) {
    cloud.points.push_back(clusters.centroids[static_cast<std::size_t>(k)]);
    cloud.normals.push_back(clusters.centroids[static_cast<std::size_t>(k)]);
    clusters.assignments.push_back(k);
    clusters.sizes[static_cast<std::size_t>(k)] = 1;
  }
  EXPECT_EQ(code_of([&] { compute_pose(clusters, cloud, PoseHints{}); }), ErrorCode::kAmbiguousPose);
}

TEST(Pose, AssignmentSizeMismatchIsValidation) {
  const auto cloud = cloud_from_normals(oracle::cube_normals(10, 0.05, 1));
  auto clusters = cluster_normals(cloud, 0);
  clusters.assignments.pop_back();
  EXPECT_EQ(code_of([&] { compute_pose(clusters, cloud, PoseHints{}); }), ErrorCode::kValidation);
}

TEST(Pose, InferiorBaseSitsAtZeroAfterPosing) {
  phantom::PhantomSpec spec;
  spec.tilt_deg = 25.0;
  spec.deformation = phantom::Deformation::biconcave(0.8);
  const auto cloud = phantom_cloud(spec);
  const auto clusters = cluster_normals(cloud, 6);
  const auto pose = compute_pose(clusters, cloud, PoseHints{});
  const auto posed = apply_pose(cloud, pose.transform);
  std::vector<double> z;
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < posed.size(); ++i) {
    if (clusters.assignments[i] == pose.inferior_cluster) z.push_back(posed.points[i].z());
    cx += posed.points[i].x();
    cy += posed.points[i].y();
  }
  EXPECT_NEAR(linear_percentile(z, 0.05), 0.0, 1e-6);
  EXPECT_NEAR(cx / static_cast<double>(posed.size()), 0.0, 1e-6);
  EXPECT_NEAR(cy / static_cast<double>(posed.size()), 0.0, 1e-6);
}

TEST(Pose, PosingTwiceIsIdempotent) {
  phantom::PhantomSpec spec;
  spec.tilt_deg = -20.0;
  const auto cloud = phantom_cloud(spec);
  const auto pose = compute_pose(cluster_normals(cloud, 0), cloud, PoseHints{});
  const auto posed = apply_pose(cloud, pose.transform);
  const auto again = compute_pose(cluster_normals(posed, 0), posed, PoseHints{});
  EXPECT_LT(degrees_from_identity(again.transform.rotation), 1.0);
}

TEST(Pose, FallbackWithoutHintsIsLowConfidence) {
  const auto cloud = phantom_cloud(phantom::PhantomSpec{});
  const auto clusters = cluster_normals(cloud, 0);
  const auto pose = compute_pose(clusters, cloud, std::nullopt);
  EXPECT_TRUE(pose.low_confidence);
  EXPECT_NE(pose.inferior_cluster, pose.posterior_cluster);
  // The inferior cluster is one of the two caps, whatever its sign.
  EXPECT_GT(std::abs(clusters.centroids[static_cast<std::size_t>(pose.inferior_cluster)].z()), 0.95);
}

TEST(ApplyPose, IdentityLeavesCloudUnchanged) {
  const auto cloud = cloud_from_normals(oracle::cube_normals(5, 0.2, 3));
  const auto out = apply_pose(cloud, RigidTransform{});
  EXPECT_EQ(out.points, cloud.points);
  EXPECT_EQ(out.normals, cloud.normals);
}

TEST(ApplyPose, InverseRestoresCloud) {
  const auto cloud = cloud_from_normals(oracle::cube_normals(20, 0.2, 3));
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(1.1, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  t.translation = Vec3(4.0, -7.5, 12.0);
  const auto back = apply_pose(apply_pose(cloud, t), t.inverse());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LT((back.points[i] - cloud.points[i]).norm(), 1e-9);
    EXPECT_LT((back.normals[i] - cloud.normals[i]).norm(), 1e-12);
  }
  const auto forward = apply_pose(cloud, t);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_LT((forward.normals[i] - t.rotation * cloud.normals[i]).norm(), 1e-15);
}

TEST(ApplyPose, ThenComposesInOrder) {
  RigidTransform a, b;
  a.rotation = Eigen::AngleAxisd(0.4, Vec3::UnitZ()).toRotationMatrix();
  a.translation = Vec3(1, 2, 3);
  b.rotation = Eigen::AngleAxisd(-0.9, Vec3::UnitX()).toRotationMatrix();
  b.translation = Vec3(-2, 0, 5);
  const Vec3 p(3.0, -1.0, 2.0);
  EXPECT_LT((a.then(b).apply(p) - b.apply(a.apply(p))).norm(), 1e-12);
}

TEST(Percentile, MatchesLinearInterpolationOracle) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(1 + trial * 7);
    for (double& x : v) x = d(gen);
    for (double q : {0.0, 0.05, 0.5, 0.95, 1.0}) EXPECT_DOUBLE_EQ(percentile(v, q), linear_percentile(v, q));
  }
}
