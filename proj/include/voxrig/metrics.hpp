// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "voxrig/geometry.hpp"
#include "voxrig/image.hpp"
#include "voxrig/skinning.hpp"
#include "voxrig/volume.hpp"

namespace voxrig {

// Externally produced shape/pose code, consumed as a plain vector.
using CodeVector = Eigen::VectorXd;

struct PoseSequence {
  std::vector<PartPoseSet> frames;
};

// Sample Pearson correlation over unmasked entries.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
               const std::vector<bool>* mask = nullptr);

// Yaw deviation |theta_d - (theta_c + theta_r)| with the difference wrapped
// to (-pi, pi].
double ayd(double theta_d, double theta_r, double theta_c);

double asc(const CodeVector& c_s, const CodeVector& c_r);
double apc(const CodeVector& c_d, const CodeVector& c_r);

struct DepthAlignment {
  double scale = 1.0;
  double shift = 0.0;
};

// Closed-form affine map from d_hat onto d: scale = Cov(d, d_hat)/Var(d_hat).
DepthAlignment depth_affine_alignment(const Eigen::VectorXd& d,
                                      const Eigen::VectorXd& d_hat);

// Least-squares 2x3 affine minimizing sum ||A src - dst||^2.
Eigen::Matrix<double, 2, 3> fit_affine_2d(const Eigen::MatrixX2d& src,
                                          const Eigen::MatrixX2d& dst);

// Depth-lifted novel-view baseline: per center, a 5-point cross (+-0.05 in
// normalized image units) is unprojected through the depth map, rotated about
// the rendering-cube center by R_y(yaw), reprojected, and fit with an affine.
std::vector<Eigen::Matrix<double, 2, 3>> lift_keypoints_novel_view(
    const Eigen::MatrixX2d& centers, const Image& depth,
    const PinholeCamera& cam, const RenderCube& cube, double yaw);

// Inference-time pose filtering: per part, every frame's cube-center distance
// is rescaled to the per-part mean; directions and rotations untouched.
PoseSequence filter_part_distances(const PoseSequence& seq, const RenderCube& cube);

}  // namespace voxrig
