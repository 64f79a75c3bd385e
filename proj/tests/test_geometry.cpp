// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "voxrig/geometry.hpp"
#include "voxrig/rng.hpp"

using namespace voxrig;

namespace {

RigidTransform random_transform(std::uint64_t key) {
  const double yaw = (uniform01(rng_key(key, 1)) - 0.5) * 2.0;
  const double pitch = (uniform01(rng_key(key, 2)) - 0.5) * 2.0;
  const double roll = (uniform01(rng_key(key, 3)) - 0.5) * 2.0;
  RigidTransform t = compose(RigidTransform::rotate_y(yaw),
                             compose(RigidTransform::rotate_x(pitch),
                                     RigidTransform::rotate_z(roll)));
  t.translation = Eigen::Vector3d(uniform01(rng_key(key, 4)) - 0.5,
                                  uniform01(rng_key(key, 5)) - 0.5,
                                  uniform01(rng_key(key, 6)) * 3.0);
  return t;
}

}  // namespace

TEST_CASE("compose: identity and inverse laws") {
  const RigidTransform id = RigidTransform::identity();
  const RigidTransform ii = compose(id, id);
  CHECK((ii.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK(ii.translation.norm() == 0.0);

  const RigidTransform t = random_transform(7);
  const RigidTransform round = compose(t, invert_transform(t));
  CHECK((round.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(round.translation.norm() < 1e-12);
}

TEST_CASE("compose applies right operand first") {
  // R_y(0.2) after translate(0,0,1) moves the origin to (sin 0.2, 0, cos 0.2).
  const RigidTransform t = compose(RigidTransform::rotate_y(0.2),
                                   RigidTransform::translate({0, 0, 1}));
  const Eigen::Vector3d p = t(Eigen::Vector3d::Zero());
  CHECK(p.x() == doctest::Approx(std::sin(0.2)).epsilon(1e-12));
  CHECK(p.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.z() == doctest::Approx(std::cos(0.2)).epsilon(1e-12));
}

TEST_CASE("invert_transform simple cases and round trip") {
  const RigidTransform id = invert_transform(RigidTransform::identity());
  CHECK((id.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);

  const RigidTransform shift =
      invert_transform(RigidTransform::translate({1, 2, 3}));
  CHECK((shift.translation - Eigen::Vector3d(-1, -2, -3)).norm() == 0.0);

  for (std::uint64_t k = 0; k < 50; ++k) {
    const RigidTransform t = random_transform(k);
    const RigidTransform round = invert_transform(invert_transform(t));
    CHECK((round.rotation - t.rotation).norm() < 1e-12);
    CHECK((round.translation - t.translation).norm() < 1e-12);
  }
}

TEST_CASE("rotation closure under composition") {
  for (std::uint64_t k = 0; k < 100; ++k) {
    const RigidTransform c = compose(random_transform(2 * k), random_transform(2 * k + 1));
    CHECK(is_rigid(c));
  }
}

TEST_CASE("project: optical axis, cube edge, behind camera") {
  PinholeCamera cam;  // fov 0.175, 256x256
  const Eigen::Vector2d center = project_point(cam, {0.0, 0.0, 10.5});
  CHECK(center.x() == doctest::Approx(128.0).epsilon(1e-12));
  CHECK(center.y() == doctest::Approx(128.0).epsilon(1e-12));

  // tan(0.0875) * 11.5 ~ 1.0088, so that cube corner hits the right edge.
  const Eigen::Vector2d edge = project_point(cam, {1.0088, 0.0, 11.5});
  CHECK(edge.x() == doctest::Approx(256.0).epsilon(1e-4));

  CHECK_THROWS_AS((void)project_point(cam, {0.0, 0.0, -1.0}), Error);
  try {
    (void)project_point(cam, {0.0, 0.0, -1.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kPointBehindCamera);
  }
}

TEST_CASE("project is scale covariant along rays") {
  PinholeCamera cam;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Eigen::Vector3d p(uniform01(rng_key(k, 1)) - 0.5,
                            uniform01(rng_key(k, 2)) - 0.5,
                            1.0 + uniform01(rng_key(k, 3)) * 10.0);
    const double lambda = 0.1 + uniform01(rng_key(k, 4)) * 5.0;
    const Eigen::Vector2d a = project_point(cam, p);
    const Eigen::Vector2d b = project_point(cam, Eigen::Vector3d(lambda * p));
    CHECK((a - b).norm() < 1e-9);
  }
}

TEST_CASE("extract_yaw: identity, pure yaw, factored composition") {
  CHECK(extract_yaw(Eigen::Matrix3d(Eigen::Matrix3d::Identity())) == 0.0);

  const Eigen::Matrix3d my = RigidTransform::rotate_y(0.3).rotation;
  CHECK(extract_yaw(my) == doctest::Approx(0.3).epsilon(1e-12));

  const Eigen::Matrix3d m = RigidTransform::rotate_y(0.4).rotation *
                            RigidTransform::rotate_x(0.2).rotation *
                            RigidTransform::rotate_z(0.1).rotation;
  CHECK(extract_yaw(m) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("extract_yaw recovers yaw across the working range") {
  for (std::uint64_t k = 0; k < 500; ++k) {
    const double yaw = (uniform01(rng_key(k, 1)) - 0.5) * 1.999 * kPi;
    const double pitch = (uniform01(rng_key(k, 2)) - 0.5) * 2.8;
    const double roll = (uniform01(rng_key(k, 3)) - 0.5) * 2.0 * kPi;
    const Eigen::Matrix3d m = RigidTransform::rotate_y(yaw).rotation *
                              RigidTransform::rotate_x(pitch).rotation *
                              RigidTransform::rotate_z(roll).rotation;
    CHECK(std::abs(extract_yaw(m) - yaw) < 1e-9);
  }
}

TEST_CASE("extract_yaw gimbal lock") {
  const Eigen::Matrix3d m = RigidTransform::rotate_y(0.5).rotation *
                            RigidTransform::rotate_x(kPi / 2).rotation;
  try {
    (void)extract_yaw(m);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGimbalLock);
  }
}

TEST_CASE("scalar-templated instantiations compile and agree") {
  RigidTransform_<float> tf = RigidTransform_<float>::rotate_y(0.25f);
  RigidTransform td = RigidTransform::rotate_y(0.25);
  CHECK(std::abs(static_cast<double>(tf.rotation(0, 2)) - td.rotation(0, 2)) < 1e-6);
  PinholeCamera_<float> cam;
  CHECK(cam.focal() == doctest::Approx(128.0f / std::tan(0.0875f)));
}
