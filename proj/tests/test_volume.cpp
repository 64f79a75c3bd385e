// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "voxrig/rng.hpp"
#include "voxrig/volume.hpp"

using namespace voxrig;

TEST_CASE("world_to_texture maps the scaled cube affinely") {
  RenderCube cube;  // defaults: [-1.0088, 1.0088]^2 x [9.5, 11.5], scale 1.075
  const Eigen::Vector3d center = world_to_texture(cube, {0.0, 0.0, 10.5});
  CHECK(center.norm() == 0.0);

  const Eigen::Vector3d corner = world_to_texture(cube, {1.0088, 1.0088, 11.5});
  for (int k = 0; k < 3; ++k) {
    CHECK(corner[k] == doctest::Approx(1.0 / 1.075).epsilon(1e-12));
  }

  const Eigen::Vector3d outside = world_to_texture(cube, {5.0, 0.0, 10.5});
  CHECK(std::abs(outside.x()) > 1.0);

  // Round trip through texture_to_world.
  const Eigen::Vector3d p(0.3, -0.7, 10.1);
  CHECK((texture_to_world(cube, world_to_texture(cube, p)) - p).norm() < 1e-12);
}

TEST_CASE("sample_trilinear: centers, midpoints, outside") {
  VoxelGrid g(4, 1);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) g.at(x, y, z) = x + 10 * y + 100 * z;

  auto center_tex = [&](int i) { return -1.0 + (2.0 * i + 1.0) / 4.0; };

  // Exactly at a voxel center.
  const Eigen::Vector3d c(center_tex(2), center_tex(1), center_tex(3));
  CHECK(sample_trilinear(g, c)[0] == doctest::Approx(2 + 10 + 300).epsilon(1e-12));

  // Midway between two adjacent centers along x.
  const Eigen::Vector3d mid(0.5 * (center_tex(1) + center_tex(2)), center_tex(0),
                            center_tex(0));
  CHECK(sample_trilinear(g, mid)[0] == doctest::Approx(1.5).epsilon(1e-12));

  // Outside the modeled volume.
  CHECK(sample_trilinear(g, {2.0, 0.0, 0.0})[0] == 0.0);
  CHECK(sample_trilinear(g, {0.0, 0.99, 0.0})[0] == 0.0);
}

TEST_CASE("sample_trilinear is linear in the grid data") {
  const int s = 5;
  VoxelGrid g1(s, 2), g2(s, 2), mix(s, 2);
  for (std::size_t i = 0; i < g1.data.size(); ++i) {
    g1.data[i] = uniform01(rng_key(3, i, 0));
    g2.data[i] = uniform01(rng_key(3, i, 1));
    mix.data[i] = 2.5 * g1.data[i] - 0.75 * g2.data[i];
  }
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Eigen::Vector3d tex((uniform01(rng_key(4, k, 0)) - 0.5) * 2.2,
                              (uniform01(rng_key(4, k, 1)) - 0.5) * 2.2,
                              (uniform01(rng_key(4, k, 2)) - 0.5) * 2.2);
    const Eigen::VectorXd lhs = sample_trilinear(mix, tex);
    const Eigen::VectorXd rhs =
        2.5 * sample_trilinear(g1, tex) - 0.75 * sample_trilinear(g2, tex);
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("sample_trilinear reproduces affine functions in the interior") {
  const int s = 6;
  VoxelGrid g(s, 1);
  const Eigen::Vector3d coef(0.7, -1.3, 0.4);
  const double bias = 0.25;
  for (int z = 0; z < s; ++z) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const Eigen::Vector3d tex(-1.0 + (2.0 * x + 1.0) / s,
                                  -1.0 + (2.0 * y + 1.0) / s,
                                  -1.0 + (2.0 * z + 1.0) / s);
        g.at(x, y, z) = coef.dot(tex) + bias;
      }
    }
  }
  const double lim = 1.0 - 1.0 / s;  // outermost voxel centers
  for (std::uint64_t k = 0; k < 200; ++k) {
    Eigen::Vector3d tex;
    for (int a = 0; a < 3; ++a) {
      tex[a] = (uniform01(rng_key(5, k, a)) * 2.0 - 1.0) * (lim - 1e-9);
    }
    CHECK(sample_trilinear(g, tex)[0] ==
          doctest::Approx(coef.dot(tex) + bias).epsilon(1e-12));
  }
}

TEST_CASE("lbs_weights_canonical: examples and simplex property") {
  // Single part: always (1).
  CanonicalVolume v1 = make_volume(4, 1);
  CHECK(lbs_weights_canonical(v1, {0.1, 0.2, 0.3})[0] == 1.0);

  // Symmetric logits (0, 0) -> (0.5, 0.5).
  CanonicalVolume v2 = make_volume(4, 2);
  const Eigen::VectorXd w0 = lbs_weights_canonical(v2, {0.0, 0.0, 0.0});
  CHECK(w0[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w0[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Logits (ln 3, 0) -> (0.75, 0.25).
  CanonicalVolume v3 = make_volume(4, 2);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) v3.lbs_logits.at(x, y, z, 0) = std::log(3.0);
  const Eigen::VectorXd w1 = lbs_weights_canonical(v3, {0.0, 0.0, 0.0});
  CHECK(w1[0] == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(w1[1] == doctest::Approx(0.25).epsilon(1e-9));

  // Out-of-volume query returns the uniform simplex.
  const Eigen::VectorXd wo = lbs_weights_canonical(v3, {3.0, 0.0, 0.0});
  CHECK(wo[0] == doctest::Approx(0.5).epsilon(1e-12));

  // Valid simplex everywhere, including random logits.
  CanonicalVolume v4 = make_volume(5, 3);
  for (std::size_t i = 0; i < v4.lbs_logits.data.size(); ++i) {
    v4.lbs_logits.data[i] = (uniform01(rng_key(6, i)) - 0.5) * 8.0;
  }
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Eigen::Vector3d tex((uniform01(rng_key(7, k, 0)) - 0.5) * 2.4,
                              (uniform01(rng_key(7, k, 1)) - 0.5) * 2.4,
                              (uniform01(rng_key(7, k, 2)) - 0.5) * 2.4);
    const Eigen::VectorXd w = lbs_weights_canonical(v4, tex);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("volume validation catches bad shapes and values") {
  CanonicalVolume v = make_volume(4, 2);
  CHECK_NOTHROW(validate(v));
  v.density.data[3] = -0.5;
  CHECK_THROWS_AS(validate(v), Error);
  v.density.data[3] = 0.0;
  v.rgb.data[0] = 1.5;
  CHECK_THROWS_AS(validate(v), Error);
}
