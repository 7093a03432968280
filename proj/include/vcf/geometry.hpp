#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vcf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Angle in degrees between two (not necessarily unit) vectors.
double angle_deg(const Vec3& a, const Vec3& b);

// Rotation angle in degrees of an orthonormal matrix.
double rotation_angle_deg(const Mat3& r);

// Max elementwise deviation of R^T R from identity.
double orthonormality_error(const Mat3& r);

}  // namespace vcf
