#include "vcf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vcf {

double angle_deg(const Vec3& a, const Vec3& b) {
  // atan2 form stays accurate for nearly parallel vectors.
  const double s = a.cross(b).norm();
  const double c = a.dot(b);
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

double rotation_angle_deg(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(axis.norm() / 2.0, c) * 180.0 / std::numbers::pi;
}

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace vcf
