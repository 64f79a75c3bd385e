// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "voxrig/error.hpp"

namespace voxrig {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
               const std::vector<bool>* mask) {
  if (a.size() != b.size()) fail(ErrorCode::kShapeMismatch, "pearson: length mismatch");
  if (mask != nullptr && static_cast<Eigen::Index>(mask->size()) != a.size()) {
    fail(ErrorCode::kShapeMismatch, "pearson: mask length mismatch");
  }
  double n = 0.0, sa = 0.0, sb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    n += 1.0;
    sa += a[i];
    sb += b[i];
  }
  if (n < 2.0) fail(ErrorCode::kDegenerateVariance, "pearson: fewer than 2 entries");
  const double ma = sa / n, mb = sb / n;
  double vaa = 0.0, vbb = 0.0, vab = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    const double da = a[i] - ma, db = b[i] - mb;
    vaa += da * da;
    vbb += db * db;
    vab += da * db;
  }
  if (!(vaa > 0.0) || !(vbb > 0.0)) {
    fail(ErrorCode::kDegenerateVariance, "pearson: constant input");
  }
  return vab / std::sqrt(vaa * vbb);
}

namespace {

// Wrap an angle to (-pi, pi].
double wrap_angle(double x) {
  double w = std::fmod(x, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  if (w > kPi) w -= 2.0 * kPi;
  return w;
}

}  // namespace

double ayd(double theta_d, double theta_r, double theta_c) {
  return std::abs(wrap_angle(theta_d - (theta_c + theta_r)));
}

namespace {

double code_distance(const CodeVector& a, const CodeVector& b) {
  if (a.size() != b.size()) fail(ErrorCode::kShapeMismatch, "code distance: length mismatch");
  return (a - b).cwiseAbs().sum() / static_cast<double>(a.size());
}

}  // namespace

double asc(const CodeVector& c_s, const CodeVector& c_r) {
  return code_distance(c_s, c_r);
}

double apc(const CodeVector& c_d, const CodeVector& c_r) {
  return code_distance(c_d, c_r);
}

DepthAlignment depth_affine_alignment(const Eigen::VectorXd& d,
                                      const Eigen::VectorXd& d_hat) {
  if (d.size() != d_hat.size() || d.size() < 2) {
    fail(ErrorCode::kShapeMismatch, "depth_affine_alignment: length mismatch");
  }
  const double n = static_cast<double>(d.size());
  const double mean_d = d.mean();
  const double mean_h = d_hat.mean();
  const Eigen::VectorXd ch = d_hat.array() - mean_h;
  const double var_h = ch.squaredNorm() / n;
  if (var_h <= 1e-12) {
    fail(ErrorCode::kDegenerateVariance, "depth_affine_alignment: Var(d_hat) ~ 0");
  }
  const double cov = (d.array() - mean_d).matrix().dot(ch) / n;
  DepthAlignment out;
  out.scale = cov / var_h;
  out.shift = mean_d - out.scale * mean_h;
  return out;
}

Eigen::Matrix<double, 2, 3> fit_affine_2d(const Eigen::MatrixX2d& src,
                                          const Eigen::MatrixX2d& dst) {
  const auto k = src.rows();
  if (dst.rows() != k || k < 3) {
    fail(ErrorCode::kDegenerateConfiguration, "fit_affine_2d: need >= 3 matched points");
  }
  Eigen::MatrixX3d a(k, 3);
  a.leftCols<2>() = src;
  a.col(2).setOnes();
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()[2] < 1e-9 * svd.singularValues()[0]) {
    fail(ErrorCode::kDegenerateConfiguration, "fit_affine_2d: collinear source points");
  }
  Eigen::Matrix<double, 2, 3> affine;
  affine.row(0) = svd.solve(dst.col(0)).transpose();
  affine.row(1) = svd.solve(dst.col(1)).transpose();
  return affine;
}

std::vector<Eigen::Matrix<double, 2, 3>> lift_keypoints_novel_view(
    const Eigen::MatrixX2d& centers, const Image& depth,
    const PinholeCamera& cam, const RenderCube& cube, double yaw) {
  if (depth.channels != 1 || depth.height != cam.height ||
      depth.width != cam.width) {
    fail(ErrorCode::kShapeMismatch, "lift_keypoints_novel_view: depth vs camera");
  }
  const double f = cam.focal();
  const double cx = cam.width / 2.0;
  const double cy = cam.height / 2.0;
  const double du = 0.05 * cam.width;   // 0.05 in normalized image units
  const double dv = 0.05 * cam.height;
  const Eigen::Vector3d pivot = cube.center();
  const Eigen::Matrix3d rot = RigidTransform::rotate_y(yaw).rotation;

  auto sample_depth = [&](double u, double v) -> double {
    const int col = static_cast<int>(std::floor(u));
    const int row = static_cast<int>(std::floor(v));
    if (col < 0 || row < 0 || col >= cam.width || row >= cam.height) {
      fail(ErrorCode::kKeypointOutOfBounds,
           "lift_keypoints_novel_view: sample outside the image");
    }
    const double d = depth.at(row, col);
    if (!std::isfinite(d)) {
      fail(ErrorCode::kNonFiniteDepth, "lift_keypoints_novel_view: depth not finite");
    }
    return d;
  };

  std::vector<Eigen::Matrix<double, 2, 3>> out;
  out.reserve(centers.rows());
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    const double u0 = centers(i, 0);
    const double v0 = centers(i, 1);
    Eigen::MatrixX2d cross(5, 2);
    cross << u0, v0, u0 + du, v0, u0 - du, v0, u0, v0 + dv, u0, v0 - dv;

    Eigen::MatrixX2d reproj(5, 2);
    for (int j = 0; j < 5; ++j) {
      const double u = cross(j, 0), v = cross(j, 1);
      const double t = sample_depth(u, v);
      // Depth is distance along the unit pixel ray.
      const Eigen::Vector3d dir =
          Eigen::Vector3d((u - cx) / f, (v - cy) / f, 1.0).normalized();
      const Eigen::Vector3d p = t * dir;
      const Eigen::Vector3d rotated = pivot + rot * (p - pivot);
      reproj.row(j) = project_point(cam, rotated).transpose();
    }
    out.push_back(fit_affine_2d(cross, reproj));
  }
  return out;
}

PoseSequence filter_part_distances(const PoseSequence& seq, const RenderCube& cube) {
  PoseSequence out = seq;
  if (seq.frames.empty()) return out;
  const int n_parts = seq.frames.front().count();
  for (const auto& f : seq.frames) {
    if (f.count() != n_parts) {
      fail(ErrorCode::kShapeMismatch, "filter_part_distances: uneven part counts");
    }
  }
  const Eigen::Vector3d c0 = cube.center();
  const auto n_frames = seq.frames.size();
  for (int p = 0; p < n_parts; ++p) {
    std::vector<Eigen::Vector3d> centers(n_frames);
    double mean_dist = 0.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
      centers[f] = seq.frames[f].poses[p](c0);
      const double d = centers[f].norm();
      if (d <= 1e-9) {
        fail(ErrorCode::kDegenerateDistance,
             "filter_part_distances: part center at the camera origin");
      }
      mean_dist += d;
    }
    mean_dist /= static_cast<double>(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
      const double d = centers[f].norm();
      const Eigen::Vector3d rescaled = centers[f] * (mean_dist / d);
      RigidTransform& pose = out.frames[f].poses[p];
      pose.translation += rescaled - centers[f];
    }
  }
  return out;
}

}  // namespace voxrig
