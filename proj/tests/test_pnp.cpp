// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "voxrig/pnp.hpp"
#include "voxrig/rng.hpp"

using namespace voxrig;

namespace {

// Regular 5^3 grid spanning [-half, half]^3 around a center.
Eigen::MatrixX3d keypoint_grid(const Eigen::Vector3d& center, double half) {
  Eigen::MatrixX3d grid(125, 3);
  int row = 0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      for (int c = 0; c < 5; ++c)
        grid.row(row++) =
            (center + Eigen::Vector3d(half * (a - 2) / 2.0, half * (b - 2) / 2.0,
                                      half * (c - 2) / 2.0))
                .transpose();
  return grid;
}

Eigen::MatrixX2d project_all(const PinholeCamera& cam, const Eigen::MatrixX3d& pts,
                             const RigidTransform& pose) {
  Eigen::MatrixX2d out(pts.rows(), 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out.row(i) =
        project_point(cam, Eigen::Vector3d(pose(pts.row(i).transpose()))).transpose();
  }
  return out;
}

RigidTransform random_pose(std::uint64_t key, double max_angle_deg) {
  const double lim = max_angle_deg * kPi / 180.0;
  const double yaw = (uniform01(rng_key(key, 1)) * 2.0 - 1.0) * lim;
  const double pitch = (uniform01(rng_key(key, 2)) * 2.0 - 1.0) * lim;
  const double roll = (uniform01(rng_key(key, 3)) * 2.0 - 1.0) * lim;
  const Eigen::Vector3d centroid(
      (uniform01(rng_key(key, 4)) * 2.0 - 1.0) * 0.7,
      (uniform01(rng_key(key, 5)) * 2.0 - 1.0) * 0.7,
      10.5 + (uniform01(rng_key(key, 6)) * 2.0 - 1.0) * 0.7);
  const Eigen::Matrix3d r = (RigidTransform::rotate_y(yaw).rotation *
                             RigidTransform::rotate_x(pitch).rotation *
                             RigidTransform::rotate_z(roll).rotation);
  // Rotate about the grid centroid, then place that centroid.
  RigidTransform t;
  t.rotation = r;
  t.translation = centroid - r * centroid;
  t.translation += Eigen::Vector3d((uniform01(rng_key(key, 7)) - 0.5) * 0.2,
                                   (uniform01(rng_key(key, 8)) - 0.5) * 0.2,
                                   (uniform01(rng_key(key, 9)) - 0.5) * 0.2);
  return t;
}

}  // namespace

TEST_CASE("solve_epnp recovers the identity pose") {
  PinholeCamera cam;
  const Eigen::MatrixX3d k3d = keypoint_grid({0.0, 0.0, 10.5}, 0.8);
  KeypointCorrespondence corr{k3d, project_all(cam, k3d, RigidTransform::identity())};
  const RigidTransform t = solve_epnp(corr, cam);
  CHECK((t.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
  CHECK(t.translation.norm() < 1e-6);
}

TEST_CASE("solve_epnp recovers a yaw + translation pose") {
  PinholeCamera cam;
  const Eigen::Vector3d centroid(0.0, 0.0, 10.5);
  const Eigen::MatrixX3d k3d = keypoint_grid(centroid, 0.5);
  RigidTransform truth = RigidTransform::rotate_about(
      RigidTransform::rotate_y(30.0 * kPi / 180.0).rotation, centroid);
  truth.translation += Eigen::Vector3d(0.1, -0.05, 0.2);
  KeypointCorrespondence corr{k3d, project_all(cam, k3d, truth)};
  const RigidTransform t = solve_epnp(corr, cam);
  CHECK((t.rotation - truth.rotation).norm() < 1e-5);
  CHECK((t.translation - truth.translation).norm() < 1e-5);
}

TEST_CASE("solve_epnp rejects collinear keypoints") {
  PinholeCamera cam;
  Eigen::MatrixX3d k3d(8, 3);
  for (int i = 0; i < 8; ++i) k3d.row(i) = Eigen::RowVector3d(0.1 * i, 0.0, 10.0);
  Eigen::MatrixX2d k2d(8, 2);
  k2d.setConstant(128.0);
  try {
    (void)solve_epnp({k3d, k2d}, cam);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateConfiguration);
  }
}

TEST_CASE("solve_epnp handles planar configurations") {
  PinholeCamera cam;
  Eigen::MatrixX3d k3d(25, 3);
  int row = 0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      k3d.row(row++) =
          Eigen::RowVector3d(0.2 * (a - 2), 0.2 * (b - 2), 0.0) +
          Eigen::RowVector3d(0.0, 0.0, 10.5);
  RigidTransform truth = RigidTransform::rotate_about(
      RigidTransform::rotate_y(0.3).rotation, {0.0, 0.0, 10.5});
  truth.translation += Eigen::Vector3d(0.05, 0.02, -0.1);
  KeypointCorrespondence corr{k3d, project_all(cam, k3d, truth)};
  const RigidTransform t = solve_epnp(corr, cam);
  CHECK(rotation_distance(Eigen::Matrix3d(t.rotation),
                          Eigen::Matrix3d(truth.rotation)) < 1e-3);
  CHECK((t.translation - truth.translation).norm() < 1e-3);
}

TEST_CASE("noiseless round trip over random poses") {
  PinholeCamera cam;
  const Eigen::MatrixX3d base = keypoint_grid({0.0, 0.0, 10.5}, 0.5);
  double max_rot = 0.0, max_trans = 0.0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const RigidTransform truth = random_pose(k, 60.0);
    KeypointCorrespondence corr{base, project_all(cam, base, truth)};
    const RigidTransform t = solve_epnp(corr, cam);
    max_rot = std::max(max_rot,
                       rotation_distance(Eigen::Matrix3d(t.rotation),
                                         Eigen::Matrix3d(truth.rotation)));
    max_trans = std::max(max_trans, (t.translation - truth.translation).norm());
  }
  CHECK(max_rot < 1e-4);
  CHECK(max_trans < 1e-4);
}

TEST_CASE("solve_epnp is invariant to a common row permutation") {
  PinholeCamera cam;
  const Eigen::MatrixX3d k3d = keypoint_grid({0.1, -0.1, 10.3}, 0.5);
  const RigidTransform truth = random_pose(77, 40.0);
  const Eigen::MatrixX2d k2d = project_all(cam, k3d, truth);

  std::vector<int> perm(k3d.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  // Deterministic shuffle.
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    std::swap(perm[i], perm[uniform01(rng_key(88, i)) * (i + 1)]);
  }
  Eigen::MatrixX3d p3(k3d.rows(), 3);
  Eigen::MatrixX2d p2(k3d.rows(), 2);
  for (Eigen::Index i = 0; i < k3d.rows(); ++i) {
    p3.row(i) = k3d.row(perm[i]);
    p2.row(i) = k2d.row(perm[i]);
  }
  const RigidTransform a = solve_epnp({k3d, k2d}, cam);
  const RigidTransform b = solve_epnp({p3, p2}, cam);
  CHECK((a.rotation - b.rotation).norm() < 1e-8);
  CHECK((a.translation - b.translation).norm() < 1e-8);
}

TEST_CASE("noise robustness sanity") {
  PinholeCamera cam;
  const Eigen::MatrixX3d base = keypoint_grid({0.0, 0.0, 10.5}, 0.5);
  std::vector<double> rot_errors;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const RigidTransform truth = random_pose(k + 1000, 60.0);
    Eigen::MatrixX2d k2d = project_all(cam, base, truth);
    for (Eigen::Index i = 0; i < k2d.rows(); ++i) {
      k2d(i, 0) += 0.5 * gaussian(rng_key(99, k, i, 0));
      k2d(i, 1) += 0.5 * gaussian(rng_key(99, k, i, 1));
    }
    const RigidTransform t = solve_epnp({base, k2d}, cam);
    rot_errors.push_back(rotation_distance(Eigen::Matrix3d(t.rotation),
                                           Eigen::Matrix3d(truth.rotation)));
  }
  std::nth_element(rot_errors.begin(), rot_errors.begin() + 50, rot_errors.end());
  CHECK(rot_errors[50] < 2e-2);
}

TEST_CASE("reprojection_error: exact, constant shift, brute force") {
  PinholeCamera cam;
  const Eigen::MatrixX3d k3d = keypoint_grid({0.0, 0.0, 10.5}, 0.5);
  const RigidTransform pose = random_pose(5, 30.0);
  Eigen::MatrixX2d k2d = project_all(cam, k3d, pose);
  CHECK(reprojection_error({k3d, k2d}, pose, cam) < 1e-9);

  Eigen::MatrixX2d shifted = k2d;
  shifted.col(0).array() += 1.0;
  CHECK(reprojection_error({k3d, shifted}, pose, cam) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Random noise case vs an independent recomputation of the mean L1 sum.
  Eigen::MatrixX2d noisy = k2d;
  for (Eigen::Index i = 0; i < noisy.rows(); ++i) {
    noisy(i, 0) += gaussian(rng_key(1, i));
    noisy(i, 1) += gaussian(rng_key(2, i));
  }
  double expect = 0.0;
  for (Eigen::Index i = 0; i < noisy.rows(); ++i) {
    const Eigen::Vector2d uv =
        project_point(cam, Eigen::Vector3d(pose(k3d.row(i).transpose())));
    expect += std::abs(noisy(i, 0) - uv.x()) + std::abs(noisy(i, 1) - uv.y());
  }
  expect /= static_cast<double>(noisy.rows());
  CHECK(reprojection_error({k3d, noisy}, pose, cam) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("pose_jacobian_fd: finiteness, prediction, step validation") {
  PinholeCamera cam;
  const Eigen::MatrixX3d k3d = keypoint_grid({0.0, 0.0, 10.5}, 0.5);
  const RigidTransform truth = random_pose(42, 25.0);
  KeypointCorrespondence corr{k3d, project_all(cam, k3d, truth)};

  const Eigen::MatrixXd jac = pose_jacobian_fd(corr, cam, 1e-3);
  CHECK(jac.allFinite());

  // First-order prediction under a smooth small perturbation.
  Eigen::VectorXd delta(2 * k3d.rows());
  for (Eigen::Index i = 0; i < k3d.rows(); ++i) {
    delta[2 * i] = 0.05 * std::sin(0.1 * static_cast<double>(i));
    delta[2 * i + 1] = 0.05 * std::cos(0.07 * static_cast<double>(i));
  }
  KeypointCorrespondence moved = corr;
  for (Eigen::Index i = 0; i < k3d.rows(); ++i) {
    moved.k2d(i, 0) += delta[2 * i];
    moved.k2d(i, 1) += delta[2 * i + 1];
  }
  const Eigen::VectorXd predicted =
      pose_parameters(solve_epnp(corr, cam)) + jac * delta;
  const Eigen::VectorXd resolved = pose_parameters(solve_epnp(moved, cam));
  const Eigen::VectorXd base = pose_parameters(solve_epnp(corr, cam));
  const double rel = (predicted - resolved).norm() / (resolved - base).norm();
  CHECK(rel < 0.05);

  CHECK_THROWS_AS((void)pose_jacobian_fd(corr, cam, 0.0), Error);

  // Richardson-style trend: doubling eps must not shrink agreement.
  const Eigen::MatrixXd jac2 = pose_jacobian_fd(corr, cam, 2e-3);
  CHECK((jac - jac2).norm() / jac.norm() < 1e-3);
}
