// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxrig/geometry.hpp"
#include "voxrig/image.hpp"
#include "voxrig/skinning.hpp"
#include "voxrig/volume.hpp"

namespace voxrig {

// Starting value of the density-noise schedule; the renderer itself only
// consumes the current sigma.
inline constexpr double kDensityNoiseScheduleStart = 0.5;

struct RenderConfig {
  int n_samples = 128;
  bool jitter = false;
  double density_noise_sigma = 0.0;
  bool include_background = true;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Single-part pretraining preset: coarse sampling, noise at schedule start.
inline RenderConfig g_phase_preset() {
  RenderConfig cfg;
  cfg.n_samples = 48;
  cfg.density_noise_sigma = kDensityNoiseScheduleStart;
  return cfg;
}

struct RenderOutput {
  Image rgb;        // H x W x 3
  Image depth;      // H x W, expected ray distance (relative scale)
  Image occupancy;  // H x W, foreground only
  Image normals;    // H x W x 3, unit vectors or zero
  Image parts;      // H x W x N_p, simplex rows where covered
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
};

struct RayHit {
  double t_near = 0.0;
  double t_far = 0.0;
};

// Rays through every pixel center, row-major; ray (row r, col c) passes
// through image point (c + 0.5, r + 0.5), origin at the camera pinhole.
std::vector<Ray> make_rays(const PinholeCamera& cam);

// Slab intersection clipped to t > 0; empty interval is a miss.
std::optional<RayHit> ray_cube_intersect(const Ray& ray, const RenderCube& cube);

RenderOutput render(const CanonicalVolume& vol, const PartPoseSet& poses,
                    const PinholeCamera& cam, const RenderCube& cube,
                    const RenderConfig& cfg);

// Same quadrature over caller-provided rays (row-major height x width).
RenderOutput render_rays(const CanonicalVolume& vol, const PartPoseSet& poses,
                         const std::vector<Ray>& rays, int height, int width,
                         const RenderCube& cube, const RenderConfig& cfg);

namespace detail {

// RNG sub-streams within one render.
inline constexpr std::uint64_t kStreamJitter = 1;
inline constexpr std::uint64_t kStreamDensityNoise = 2;

// Per-ray quadrature record; the adjoint pass recomputes it and walks it
// backwards, so it is the single source of truth for the forward math.
struct RayTrace {
  bool hit = false;
  double t0 = 0.0, t1 = 0.0, delta = 0.0;
  std::vector<double> t;
  std::vector<std::uint8_t> empty;
  std::vector<InverseSkinningSample> skin;
  std::vector<TrilinearQuery> field_query;  // density/rgb cell at x_c
  std::vector<double> sigma_raw;            // sampled density before noise
  std::vector<double> noise;                // drawn noise (0 when disabled)
  std::vector<double> sigma;                // after noise and clamp
  std::vector<Eigen::Vector3d> color;
  std::vector<double> trans;   // T_i entering sample i
  std::vector<double> weight;  // w_i
  double trans_final = 1.0;

  void reset(int n);
};

void trace_ray(const CanonicalVolume& vol,
               const std::vector<RigidTransform>& inverse_poses,
               const RenderCube& cube, const RenderConfig& cfg, const Ray& ray,
               std::uint64_t pixel_index, RayTrace& out);

}  // namespace detail

}  // namespace voxrig
