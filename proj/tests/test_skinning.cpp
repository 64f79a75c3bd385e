// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "voxrig/rng.hpp"
#include "voxrig/skinning.hpp"

using namespace voxrig;

namespace {

// Two-part volume split along texture x with hard (one-hot) assignments.
CanonicalVolume split_volume(int size, double hot = 40.0) {
  CanonicalVolume v = make_volume(size, 2);
  for (int z = 0; z < size; ++z) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double tx = -1.0 + (2.0 * x + 1.0) / size;
        const int owner = tx < 0.0 ? 0 : 1;
        v.lbs_logits.at(x, y, z, owner) = hot;
        v.lbs_logits.at(x, y, z, 1 - owner) = -hot;
        v.density.at(x, y, z) = 1.0;
      }
    }
  }
  return v;
}

}  // namespace

TEST_CASE("lbs_forward: identity, cancellation, brute-force oracle") {
  PartPoseSet id1{{RigidTransform::identity()}};
  Eigen::VectorXd w1(1);
  w1 << 1.0;
  const Eigen::Vector3d x(0.3, -0.2, 10.0);
  CHECK((lbs_forward(x, w1, id1) - x).norm() == 0.0);

  // Half weight on +u, half on -u cancels.
  PartPoseSet sym{{RigidTransform::translate({0.5, 0, 0}),
                   RigidTransform::translate({-0.5, 0, 0})}};
  Eigen::VectorXd w2(2);
  w2 << 0.5, 0.5;
  CHECK((lbs_forward(x, w2, sym) - x).norm() < 1e-15);

  // Arbitrary three-part case against an independent summation.
  PartPoseSet three;
  for (int p = 0; p < 3; ++p) {
    RigidTransform t = RigidTransform::rotate_y(0.2 * (p + 1));
    t.translation = Eigen::Vector3d(0.1 * p, -0.2 * p, 0.05);
    three.poses.push_back(t);
  }
  Eigen::VectorXd w3(3);
  w3 << 0.2, 0.5, 0.3;
  Eigen::Vector3d expect = Eigen::Vector3d::Zero();
  for (int p = 0; p < 3; ++p) {
    expect += w3[p] * (three.poses[p].rotation * x + three.poses[p].translation);
  }
  CHECK((lbs_forward(x, w3, three) - expect).norm() < 1e-12);
}

TEST_CASE("inverse_lbs_weights: single part, one-hot regions, empty") {
  RenderCube cube;
  CanonicalVolume v1 = make_volume(8, 1);
  PartPoseSet id1{{RigidTransform::identity()}};
  const auto w = inverse_lbs_weights(cube.center(), id1, v1, cube);
  REQUIRE(w.has_value());
  CHECK((*w)[0] == doctest::Approx(1.0).epsilon(1e-12));

  // Two parts with hard split; move them apart so back-projections are
  // unambiguous.
  CanonicalVolume v2 = split_volume(16);
  PartPoseSet apart{{RigidTransform::translate({-0.4, 0, 0}),
                     RigidTransform::translate({0.4, 0, 0})}};
  // A point reachable only through part 2: deep inside the deformed right
  // half.
  const Eigen::Vector3d probe = cube.center() + Eigen::Vector3d(0.9, 0, 0);
  const auto w2 = inverse_lbs_weights(probe, apart, v2, cube);
  REQUIRE(w2.has_value());
  CHECK((*w2)[0] < 1e-12);
  CHECK((*w2)[1] == doctest::Approx(1.0).epsilon(1e-9));

  // Far outside: all back-projections leave the volume.
  const auto we = inverse_lbs_weights({50.0, 0.0, 10.5}, apart, v2, cube);
  CHECK(!we.has_value());
}

TEST_CASE("deform_to_canonical: single part is the exact rigid inverse") {
  RenderCube cube;
  CanonicalVolume v = make_volume(8, 1);
  RigidTransform t = RigidTransform::rotate_y(0.3);
  t.translation = Eigen::Vector3d(0.2, -0.1, 0.15);
  PartPoseSet poses{{t}};
  const Eigen::Vector3d x_c(0.25, 0.1, 10.4);
  const Eigen::Vector3d x_d = t(x_c);
  const auto back = deform_to_canonical(x_d, poses, v, cube);
  REQUIRE(back.has_value());
  CHECK((*back - x_c).norm() < 1e-12);
}

TEST_CASE("one-hot round trip is exact for non-penetrating parts") {
  RenderCube cube;
  CanonicalVolume v = split_volume(16);
  PartPoseSet poses;
  {
    RigidTransform left = RigidTransform::translate({-0.35, 0.0, 0.0});
    RigidTransform right = RigidTransform::rotate_about(
        RigidTransform::rotate_y(0.25).rotation,
        cube.center() + Eigen::Vector3d(0.5, 0.0, 0.0));
    right.translation += Eigen::Vector3d(0.35, 0.0, 0.0);
    poses.poses = {left, right};
  }
  int tested = 0;
  for (int ix = 0; ix < 10; ++ix) {
    for (int iy = 0; iy < 10; ++iy) {
      for (int iz = 0; iz < 10; ++iz) {
        const Eigen::Vector3d tex(-0.8 + 1.6 * ix / 9.0, -0.8 + 1.6 * iy / 9.0,
                                  -0.8 + 1.6 * iz / 9.0);
        const Eigen::Vector3d x_c = texture_to_world(cube, tex);
        const Eigen::VectorXd w =
            lbs_weights_canonical(v, world_to_texture(cube, x_c));
        const Eigen::Vector3d x_d = lbs_forward(x_c, w, poses);
        const auto back = deform_to_canonical(x_d, poses, v, cube);
        if (!back.has_value()) continue;  // left the modeled volume
        ++tested;
        CHECK((*back - x_c).norm() < 1e-9);
      }
    }
  }
  CHECK(tested > 500);
}

TEST_CASE("soft two-part weights match a brute-force evaluation") {
  RenderCube cube;
  CanonicalVolume v = make_volume(12, 2);
  for (std::size_t i = 0; i < v.lbs_logits.data.size(); ++i) {
    v.lbs_logits.data[i] = (uniform01(rng_key(11, i)) - 0.5) * 4.0;
  }
  PartPoseSet poses;
  {
    RigidTransform a = RigidTransform::rotate_y(0.15);
    a.translation = Eigen::Vector3d(0.1, 0.05, -0.05);
    RigidTransform b = RigidTransform::rotate_x(-0.1);
    b.translation = Eigen::Vector3d(-0.12, 0.0, 0.08);
    poses.poses = {a, b};
  }
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Eigen::Vector3d x_d =
        cube.center() + Eigen::Vector3d((uniform01(rng_key(12, k, 0)) - 0.5),
                                        (uniform01(rng_key(12, k, 1)) - 0.5),
                                        (uniform01(rng_key(12, k, 2)) - 0.5));
    // Brute force per the definition.
    Eigen::Vector2d tilde = Eigen::Vector2d::Zero();
    Eigen::Vector3d y[2];
    for (int p = 0; p < 2; ++p) {
      const RigidTransform inv = invert_transform(poses.poses[p]);
      y[p] = inv(x_d);
      const Eigen::Vector3d tex = world_to_texture(cube, y[p]);
      if (!locate(v.lbs_logits.size, tex).inside) continue;
      tilde[p] = lbs_weights_canonical(v, tex)[p];
    }
    const double denom = tilde.sum();
    const auto got = inverse_lbs_weights(x_d, poses, v, cube);
    const auto back = deform_to_canonical(x_d, poses, v, cube);
    if (denom < 1e-8) {
      CHECK(!got.has_value());
      CHECK(!back.has_value());
      continue;
    }
    REQUIRE(got.has_value());
    CHECK(((*got) - Eigen::VectorXd(tilde / denom)).norm() < 1e-12);
    CHECK(got->minCoeff() >= 0.0);
    CHECK(got->sum() == doctest::Approx(1.0).epsilon(1e-9));
    const Eigen::Vector3d expect =
        (tilde[0] * y[0] + tilde[1] * y[1]) / denom;
    CHECK((*back - expect).norm() < 1e-12);
  }
}

TEST_CASE("inconsistent part counts are rejected") {
  RenderCube cube;
  CanonicalVolume v = make_volume(4, 2);
  PartPoseSet one{{RigidTransform::identity()}};
  CHECK_THROWS_AS((void)inverse_lbs_weights(cube.center(), one, v, cube), Error);
}
