#include "vcf/orientation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vcf/error.hpp"
#include "vcf/random.hpp"

namespace vcf::orientation {
namespace {

constexpr double kDistinctDirection = 1e-3;
constexpr double kAmbiguousAngleDeg = 15.0;
constexpr double kBasePercentile = 0.05;
constexpr double kFootprintAnisotropy = 1.05;
constexpr double kSnapConeDeg = 45.0;
constexpr double kPlanarity = 0.1;
constexpr double kPlaneRefineConeDeg = 10.0;

using Centroids = std::array<Vec3, kSurfaceCount>;

int nearest(const Vec3& n, const Centroids& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < kSurfaceCount; ++c) {
    const double d = (n - centroids[static_cast<std::size_t>(c)]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Centroids seed_plus_plus(const std::vector<Vec3>& normals, Rng& rng) {
  Centroids centroids;
  centroids[0] = normals[rng.index(normals.size())];
  std::vector<double> d2(normals.size(), std::numeric_limits<double>::infinity());
  for (int c = 1; c < kSurfaceCount; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < normals.size(); ++i) {
      d2[i] = std::min(d2[i], (normals[i] - centroids[static_cast<std::size_t>(c - 1)]).squaredNorm());
      total += d2[i];
    }
    const double target = rng.uniform() * total;
    double cumulative = 0.0;
    std::size_t pick = normals.size() - 1;
    for (std::size_t i = 0; i < normals.size(); ++i) {
      cumulative += d2[i];
      if (cumulative > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    centroids[static_cast<std::size_t>(c)] = normals[pick];
  }
  return centroids;
}

SurfaceClusters lloyd(const std::vector<Vec3>& normals, Centroids centroids, int max_iterations) {
  SurfaceClusters out;
  out.assignments.assign(normals.size(), 0);
  for (std::size_t i = 0; i < normals.size(); ++i) out.assignments[i] = nearest(normals[i], centroids);

  for (int iter = 0; iter < max_iterations; ++iter) {
    std::array<Vec3, kSurfaceCount> sums;
    sums.fill(Vec3::Zero());
    std::array<std::size_t, kSurfaceCount> counts{};
    for (std::size_t i = 0; i < normals.size(); ++i) {
      const auto a = static_cast<std::size_t>(out.assignments[i]);
      sums[a] += normals[i];
      ++counts[a];
    }
    for (std::size_t c = 0; c < kSurfaceCount; ++c) {
      if (counts[c] == 0 || sums[c].norm() < 1e-12) {
        // Re-seed an empty cluster at the point worst served by its centroid.
        std::size_t worst = 0;
        double worst_d = -1.0;
        for (std::size_t i = 0; i < normals.size(); ++i) {
          const double d = (normals[i] - centroids[static_cast<std::size_t>(out.assignments[i])]).squaredNorm();
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        centroids[c] = normals[worst];
        out.assignments[worst] = static_cast<int>(c);
      } else {
        centroids[c] = sums[c].normalized();
      }
    }
    bool changed = false;
    for (std::size_t i = 0; i < normals.size(); ++i) {
      const int a = nearest(normals[i], centroids);
      if (a != out.assignments[i]) {
        out.assignments[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
  }

  out.sizes.fill(0);
  out.inertia = 0.0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    const auto a = static_cast<std::size_t>(out.assignments[i]);
    ++out.sizes[a];
    out.inertia += (normals[i] - centroids[a]).squaredNorm();
  }
  out.centroids = centroids;
  return out;
}

// Sign-normalised so the largest-magnitude component is positive.
Vec3 canonical_sign(Vec3 v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return v[idx] < 0.0 ? Vec3(-v) : v;
}

std::array<double, kSurfaceCount> mean_projection(const SurfaceClusters& clusters,
                                                  const meshing::OrientedPointCloud& cloud, const Vec3& axis) {
  std::array<double, kSurfaceCount> sum{};
  for (std::size_t i = 0; i < cloud.size(); ++i) sum[static_cast<std::size_t>(clusters.assignments[i])] += cloud.points[i].dot(axis);
  for (std::size_t c = 0; c < kSurfaceCount; ++c) {
    sum[c] = clusters.sizes[c] ? sum[c] / static_cast<double>(clusters.sizes[c]) : std::numeric_limits<double>::infinity();
  }
  return sum;
}

// k-means cuts a curved lateral wall at arbitrary azimuths, so the posterior
// centroid can sit well off the body's symmetry plane. When the axial footprint
// is elongated, snap the direction to its nearest principal axis; positions
// are not quantised by the voxel staircase the way normals are.
// Least-squares plane normal of one cluster's points, signed like `centroid`.
// Unit vertex normals on a voxel staircase average toward the nearest voxel
// axis; the points themselves scatter evenly about the true plane.
Vec3 plane_normal(const SurfaceClusters& clusters, const meshing::OrientedPointCloud& cloud, int cluster,
                  const Vec3& centroid) {
  Vec3 mean = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (clusters.assignments[i] != cluster) continue;
    mean += cloud.points[i];
    ++n;
  }
  if (n < 3) return centroid;
  mean /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (clusters.assignments[i] != cluster) continue;
    const Vec3 d = cloud.points[i] - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // A flat patch has one eigenvalue well below the other two.
  if (!(eig.eigenvalues()[0] < kPlanarity * eig.eigenvalues()[1])) return centroid;
  Vec3 normal = eig.eigenvectors().col(0);
  if (normal.dot(centroid) < 0.0) normal = -normal;
  if (angle_deg(normal, centroid) > kPlaneRefineConeDeg) return centroid;
  return normal;
}

Vec3 snap_to_footprint(const meshing::OrientedPointCloud& cloud, const Vec3& axis, const Vec3& direction) {
  const Vec3 e1 = direction;
  const Vec3 e2 = axis.cross(e1);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const Vec3& p : cloud.points) mean += Eigen::Vector2d(p.dot(e1), p.dot(e2));
  mean /= static_cast<double>(cloud.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Vec3& p : cloud.points) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.dot(e1), p.dot(e2)) - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  if (eig.eigenvalues()[1] < kFootprintAnisotropy * eig.eigenvalues()[0]) return direction;
  Vec3 best = direction;
  double best_dot = std::cos(kSnapConeDeg * std::numbers::pi / 180.0);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Vector2d v = eig.eigenvectors().col(k);
    const Vec3 candidate = (v.x() * e1 + v.y() * e2).normalized();
    for (const Vec3& c : {candidate, Vec3(-candidate)}) {
      if (c.dot(direction) > best_dot) {
        best_dot = c.dot(direction);
        best = c;
      }
    }
  }
  return best;
}

}  // namespace

SurfaceClusters cluster_normals(const meshing::OrientedPointCloud& cloud, std::uint64_t seed,
                                const KMeansOptions& options) {
  if (cloud.normals.size() < kSurfaceCount) {
    throw Error(ErrorCode::kDegenerateGeometry, "fewer than 6 points to cluster");
  }
  std::vector<Vec3> distinct;
  for (const Vec3& n : cloud.normals) {
    const bool fresh = std::none_of(distinct.begin(), distinct.end(),
                                    [&](const Vec3& d) { return (d - n).norm() <= kDistinctDirection; });
    if (fresh) distinct.push_back(n);
    if (distinct.size() >= kSurfaceCount) break;
  }
  if (distinct.size() < kSurfaceCount) {
    throw Error(ErrorCode::kDegenerateGeometry, "fewer than 6 distinct normal directions");
  }

  Rng rng(seed);
  SurfaceClusters best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    SurfaceClusters run = lloyd(cloud.normals, seed_plus_plus(cloud.normals, rng), options.max_iterations);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::then(const RigidTransform& next) const {
  RigidTransform out;
  out.rotation = next.rotation * rotation;
  out.translation = next.rotation * translation + next.translation;
  return out;
}

CanonicalPose compute_pose(const SurfaceClusters& clusters, const meshing::OrientedPointCloud& cloud,
                           const std::optional<PoseHints>& hints) {
  if (clusters.assignments.size() != cloud.size()) {
    throw Error(ErrorCode::kValidation, "cluster assignments do not match the cloud");
  }
  CanonicalPose pose;
  const auto& c = clusters.centroids;

  if (hints) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kSurfaceCount; ++k) {
      if (clusters.sizes[static_cast<std::size_t>(k)] == 0) continue;
      const double score = c[static_cast<std::size_t>(k)].dot(hints->inferior);
      if (score > best) {
        best = score;
        pose.inferior_cluster = k;
      }
    }
    best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kSurfaceCount; ++k) {
      if (k == pose.inferior_cluster || clusters.sizes[static_cast<std::size_t>(k)] == 0) continue;
      const double score = c[static_cast<std::size_t>(k)].dot(hints->posterior);
      if (score > best) {
        best = score;
        pose.posterior_cluster = k;
      }
    }
  } else {
    // Without orientation metadata: the inferior surface is the cluster lowest
    // along the smallest-extent principal axis, the posterior surface the
    // lowest along the middle axis among the lateral clusters.
    pose.low_confidence = true;
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : cloud.points) mean += p;
    mean /= static_cast<double>(cloud.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : cloud.points) cov += (p - mean) * (p - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 axial = canonical_sign(eig.eigenvectors().col(0));
    const Vec3 middle = canonical_sign(eig.eigenvectors().col(1));
    const auto along_axial = mean_projection(clusters, cloud, axial);
    pose.inferior_cluster = static_cast<int>(std::min_element(along_axial.begin(), along_axial.end()) - along_axial.begin());
    int superior = -1;
    double most_opposite = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kSurfaceCount; ++k) {
      if (k == pose.inferior_cluster) continue;
      const double d = c[static_cast<std::size_t>(k)].dot(c[static_cast<std::size_t>(pose.inferior_cluster)]);
      if (d < most_opposite) {
        most_opposite = d;
        superior = k;
      }
    }
    const auto along_middle = mean_projection(clusters, cloud, middle);
    double lowest = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kSurfaceCount; ++k) {
      if (k == pose.inferior_cluster || k == superior) continue;
      if (along_middle[static_cast<std::size_t>(k)] < lowest) {
        lowest = along_middle[static_cast<std::size_t>(k)];
        pose.posterior_cluster = k;
      }
    }
  }
  if (pose.inferior_cluster < 0 || pose.posterior_cluster < 0) {
    throw Error(ErrorCode::kAmbiguousPose, "could not assign inferior and posterior clusters");
  }

  const Vec3 inferior = c[static_cast<std::size_t>(pose.inferior_cluster)];
  const Vec3 posterior = c[static_cast<std::size_t>(pose.posterior_cluster)];
  const double angle = angle_deg(inferior, posterior);
  if (angle < kAmbiguousAngleDeg || angle > 180.0 - kAmbiguousAngleDeg) {
    throw Error(ErrorCode::kAmbiguousPose, "inferior and posterior surfaces are nearly parallel");
  }

  const Vec3 z_axis = -plane_normal(clusters, cloud, pose.inferior_cluster, inferior.normalized());
  const Vec3 y_axis = -snap_to_footprint(cloud, z_axis, (posterior - posterior.dot(z_axis) * z_axis).normalized());
  const Vec3 x_axis = y_axis.cross(z_axis);
  Mat3& r = pose.transform.rotation;
  r.row(0) = x_axis.transpose();
  r.row(1) = y_axis.transpose();
  r.row(2) = z_axis.transpose();

  std::vector<double> base_z;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 q = r * cloud.points[i];
    cx += q.x();
    cy += q.y();
    if (clusters.assignments[i] == pose.inferior_cluster) base_z.push_back(q.z());
  }
  const double n = static_cast<double>(cloud.size());
  pose.transform.translation = Vec3(-cx / n, -cy / n, -percentile(base_z, kBasePercentile));
  return pose;
}

meshing::OrientedPointCloud apply_pose(const meshing::OrientedPointCloud& cloud, const RigidTransform& transform) {
  meshing::OrientedPointCloud out;
  out.points.reserve(cloud.size());
  out.normals.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.points.push_back(transform.apply(cloud.points[i]));
    out.normals.push_back(transform.rotation * cloud.normals[i]);
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace vcf::orientation
