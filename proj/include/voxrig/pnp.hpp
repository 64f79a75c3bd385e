// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include "voxrig/geometry.hpp"

namespace voxrig {

// Paired canonical 3D keypoints and their image-plane observations.
struct KeypointCorrespondence {
  Eigen::MatrixX3d k3d;  // world units
  Eigen::MatrixX2d k2d;  // pixel coordinates
};

struct EpnpOptions {
  bool gauss_newton = true;
  int gn_iterations = 10;
};

// EPnP: recovers the camera-from-points pose T so that project(cam, T k3d)
// matches k2d in the least-squares sense. The part pose of the paper's
// formulation is invert_transform of this result.
RigidTransform solve_epnp(const KeypointCorrespondence& corr,
                          const PinholeCamera& cam,
                          const EpnpOptions& opts = {});

// Mean L1 pixel error sum |k2d - project(pose k3d)| / N.
double reprojection_error(const KeypointCorrespondence& corr,
                          const RigidTransform& pose,
                          const PinholeCamera& cam);

// Central finite-difference sensitivity of the solved pose (axis-angle +
// translation, 6 rows) with respect to each k2d coordinate (2N columns,
// ordered x then y per keypoint).
Eigen::MatrixXd pose_jacobian_fd(const KeypointCorrespondence& corr,
                                 const PinholeCamera& cam,
                                 double eps = 1e-3);

// 6-vector [rotation_log(R), t] used by the Jacobian; exposed for tests.
Eigen::Matrix<double, 6, 1> pose_parameters(const RigidTransform& pose);

}  // namespace voxrig
