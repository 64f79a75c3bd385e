// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "voxrig/error.hpp"

namespace voxrig {

inline constexpr double kPi = 3.14159265358979323846;

// Rigid body transform [R | t]; applies as x -> R x + t.
template <typename Scalar = double>
struct RigidTransform_ {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }

  Eigen::Matrix<Scalar, 3, 4> matrix34() const {
    Eigen::Matrix<Scalar, 3, 4> m;
    m.template leftCols<3>() = rotation;
    m.col(3) = translation;
    return m;
  }

  static RigidTransform_ identity() { return {}; }

  static RigidTransform_ translate(const Vec3& t) {
    return {Mat3::Identity(), t};
  }

  static RigidTransform_ rotate_x(Scalar a) {
    const Scalar c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return {r, Vec3::Zero()};
  }

  static RigidTransform_ rotate_y(Scalar a) {
    const Scalar c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return {r, Vec3::Zero()};
  }

  static RigidTransform_ rotate_z(Scalar a) {
    const Scalar c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return {r, Vec3::Zero()};
  }

  // Rotation about an arbitrary pivot, leaving the pivot fixed.
  static RigidTransform_ rotate_about(const Mat3& r, const Vec3& pivot) {
    return {r, pivot - r * pivot};
  }
};

using RigidTransform = RigidTransform_<double>;

template <typename Scalar>
bool is_rigid(const RigidTransform_<Scalar>& t, Scalar tol = Scalar(1e-9)) {
  using Mat3 = typename RigidTransform_<Scalar>::Mat3;
  const Mat3 rtr = t.rotation.transpose() * t.rotation;
  if ((rtr - Mat3::Identity()).norm() >= tol) return false;
  if (std::abs(t.rotation.determinant() - Scalar(1)) > tol) return false;
  return t.translation.allFinite();
}

// Result applies b first, then a: (compose(a, b))(x) = a(b(x)).
template <typename Scalar>
RigidTransform_<Scalar> compose(const RigidTransform_<Scalar>& a,
                                const RigidTransform_<Scalar>& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

template <typename Scalar>
RigidTransform_<Scalar> invert_transform(const RigidTransform_<Scalar>& t) {
  typename RigidTransform_<Scalar>::Mat3 rinv = t.rotation.transpose();
  return {rinv, -(rinv * t.translation)};
}

// Fixed pinhole camera at the origin looking along +z; fov is the full
// vertical field of view in radians, pixels are square and the principal
// point sits at the image center.
template <typename Scalar = double>
struct PinholeCamera_ {
  Scalar fov = Scalar(0.175);
  int width = 256;
  int height = 256;

  Scalar focal() const {
    return (Scalar(height) / Scalar(2)) / std::tan(fov / Scalar(2));
  }
};

using PinholeCamera = PinholeCamera_<double>;

template <typename Scalar>
bool is_valid(const PinholeCamera_<Scalar>& cam) {
  return cam.fov > Scalar(0) && cam.fov < Scalar(kPi) && cam.width >= 1 &&
         cam.height >= 1 && std::isfinite(cam.fov);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_point(
    const PinholeCamera_<Scalar>& cam,
    const Eigen::Matrix<Scalar, 3, 1>& p) {
  if (!(p.z() > Scalar(1e-9))) {
    fail(ErrorCode::kPointBehindCamera, "project: point has z <= 1e-9");
  }
  const Scalar f = cam.focal();
  return {f * p.x() / p.z() + Scalar(cam.width) / Scalar(2),
          f * p.y() / p.z() + Scalar(cam.height) / Scalar(2)};
}

template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, 2, 1>> project(
    const PinholeCamera_<Scalar>& cam,
    const std::vector<Eigen::Matrix<Scalar, 3, 1>>& points) {
  std::vector<Eigen::Matrix<Scalar, 2, 1>> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project_point(cam, p));
  return out;
}

// Yaw of the M_y factor assuming M = M_y * M_x * M_z.
template <typename Scalar>
Scalar extract_yaw(const Eigen::Matrix<Scalar, 3, 3>& m) {
  const Scalar pitch =
      std::asin(std::clamp(m(1, 2), Scalar(-1), Scalar(1)));
  const Scalar cp = std::cos(pitch);
  if (std::abs(cp) <= Scalar(1e-9)) {
    fail(ErrorCode::kGimbalLock, "extract_yaw: |cos(pitch)| <= 1e-9");
  }
  return std::atan2(m(0, 2) / cp, m(2, 2) / cp);
}

// Rotation angle between two rotations, stable near zero.
template <typename Scalar>
Scalar rotation_distance(const Eigen::Matrix<Scalar, 3, 3>& a,
                         const Eigen::Matrix<Scalar, 3, 3>& b) {
  // ||R1 - R2||_F = 2 sqrt(2) sin(theta / 2)
  const Scalar fro = (a - b).norm();
  const Scalar s = std::clamp(fro / (Scalar(2) * std::sqrt(Scalar(2))),
                              Scalar(0), Scalar(1));
  return Scalar(2) * std::asin(s);
}

// Log map of a rotation matrix (axis-angle vector), smooth through identity.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rotation_log(const Eigen::Matrix<Scalar, 3, 3>& r) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const Scalar cos_theta =
      std::clamp((r.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  const Scalar theta = std::acos(cos_theta);
  if (theta < Scalar(1e-7)) return vee / Scalar(2);
  return vee * (theta / (Scalar(2) * std::sin(theta)));
}

}  // namespace voxrig
