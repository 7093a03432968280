#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vcf/geometry.hpp"
#include "vcf/meshing.hpp"

namespace vcf::orientation {

inline constexpr int kSurfaceCount = 6;

struct SurfaceClusters {
  std::vector<int> assignments;  // per point, in [0, 6)
  std::array<Vec3, kSurfaceCount> centroids;  // unit mean normal per cluster
  std::array<std::size_t, kSurfaceCount> sizes{};
  double inertia = 0.0;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

// k-means (k = 6) on unit normals, k-means++ seeding, best inertia over
// restarts. Throws Error(kDegenerateGeometry) when fewer than six distinct
// normal directions (1e-3 apart) exist.
SurfaceClusters cluster_normals(const meshing::OrientedPointCloud& cloud, std::uint64_t seed,
                                const KMeansOptions& options = {});

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  RigidTransform then(const RigidTransform& next) const;  // next after this
};

// Patient-frame directions of the posterior and inferior surfaces' normals.
struct PoseHints {
  Vec3 posterior{0.0, -1.0, 0.0};
  Vec3 inferior{0.0, 0.0, -1.0};
};

/// Rigid map into the canonical vertebra frame: +z superior (inferior
/// endplate at z = 0), +y anterior, +x = y cross z, axial centroid at (0, 0).
struct CanonicalPose {
  RigidTransform transform;
  int posterior_cluster = -1;
  int inferior_cluster = -1;
  bool low_confidence = false;  // cluster roles inferred without hints
};

// Throws Error(kAmbiguousPose) when the chosen inferior and posterior
// centroids are within 15 degrees of parallel.
CanonicalPose compute_pose(const SurfaceClusters& clusters, const meshing::OrientedPointCloud& cloud,
                           const std::optional<PoseHints>& hints);

meshing::OrientedPointCloud apply_pose(const meshing::OrientedPointCloud& cloud, const RigidTransform& transform);

// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

}  // namespace vcf::orientation
