// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxrig/error.hpp"
#include "voxrig/parallel.hpp"
#include "voxrig/rng.hpp"

namespace voxrig {

std::vector<Ray> make_rays(const PinholeCamera& cam) {
  const double f = cam.focal();
  const double cx = cam.width / 2.0;
  const double cy = cam.height / 2.0;
  std::vector<Ray> rays(static_cast<std::size_t>(cam.height) * cam.width);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      Ray& ray = rays[static_cast<std::size_t>(r) * cam.width + c];
      ray.origin.setZero();
      ray.dir = Eigen::Vector3d((c + 0.5 - cx) / f, (r + 0.5 - cy) / f, 1.0)
                    .normalized();
    }
  }
  return rays;
}

std::optional<RayHit> ray_cube_intersect(const Ray& ray, const RenderCube& cube) {
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const double o = ray.origin[k];
    const double d = ray.dir[k];
    if (d == 0.0) {
      if (o < cube.min[k] || o > cube.max[k]) return std::nullopt;
      continue;
    }
    double lo = (cube.min[k] - o) / d;
    double hi = (cube.max[k] - o) / d;
    if (lo > hi) std::swap(lo, hi);
    t_near = std::max(t_near, lo);
    t_far = std::min(t_far, hi);
    if (t_near > t_far) return std::nullopt;
  }
  return RayHit{t_near, t_far};
}

namespace detail {

void RayTrace::reset(int n) {
  hit = false;
  t0 = t1 = delta = 0.0;
  trans_final = 1.0;
  t.assign(n, 0.0);
  empty.assign(n, 1);
  skin.resize(n);
  field_query.assign(n, TrilinearQuery{});
  sigma_raw.assign(n, 0.0);
  noise.assign(n, 0.0);
  sigma.assign(n, 0.0);
  color.assign(n, Eigen::Vector3d::Zero());
  trans.assign(n, 1.0);
  weight.assign(n, 0.0);
}

void trace_ray(const CanonicalVolume& vol,
               const std::vector<RigidTransform>& inverse_poses,
               const RenderCube& cube, const RenderConfig& cfg, const Ray& ray,
               std::uint64_t pixel_index, RayTrace& out) {
  const int n = cfg.n_samples;
  out.reset(n);
  const auto hit = ray_cube_intersect(ray, cube);
  if (!hit) return;
  out.hit = true;
  out.t0 = hit->t_near;
  out.t1 = hit->t_far;
  out.delta = (out.t1 - out.t0) / n;

  double transmittance = 1.0;
  for (int i = 0; i < n; ++i) {
    double offset = 0.5;
    if (cfg.jitter) {
      offset = uniform01(rng_key(cfg.seed, kStreamJitter, pixel_index,
                                 static_cast<std::uint64_t>(i)));
    }
    const double ti = out.t0 + (i + offset) * out.delta;
    out.t[i] = ti;
    const Eigen::Vector3d x_d = ray.origin + ti * ray.dir;

    InverseSkinningSample& skin = out.skin[i];
    inverse_skinning_detail(x_d, inverse_poses, vol, cube, skin);
    double sigma = 0.0;
    if (!skin.empty) {
      out.empty[i] = 0;
      const TrilinearQuery q =
          locate(vol.density.size, world_to_texture(cube, skin.x_c));
      out.field_query[i] = q;
      if (q.inside) {
        double rho;
        sample_cell(vol.density, q, &rho);
        out.sigma_raw[i] = rho;
        double c[3];
        sample_cell(vol.rgb, q, c);
        out.color[i] = Eigen::Vector3d(c[0], c[1], c[2]);
      }
      if (cfg.density_noise_sigma > 0.0) {
        out.noise[i] =
            cfg.density_noise_sigma *
            gaussian(rng_key(cfg.seed, kStreamDensityNoise, pixel_index,
                             static_cast<std::uint64_t>(i)));
      }
      sigma = std::max(0.0, out.sigma_raw[i] + out.noise[i]);
    }
    out.sigma[i] = sigma;
    out.trans[i] = transmittance;
    const double att = std::exp(-sigma * out.delta);
    out.weight[i] = transmittance * (1.0 - att);
    transmittance *= att;
  }
  out.trans_final = transmittance;
}

}  // namespace detail

namespace {

// World-space step used for the density-gradient normals: one voxel.
Eigen::Vector3d normal_step(const RenderCube& cube, int grid_size) {
  return 2.0 * cube.texture_half_extent() / static_cast<double>(grid_size);
}

Eigen::Vector3d density_normal(const CanonicalVolume& vol, const RenderCube& cube,
                               const Eigen::Vector3d& x_c,
                               const Eigen::Vector3d& h) {
  Eigen::Vector3d g;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d lo = x_c, hi = x_c;
    lo[k] -= h[k];
    hi[k] += h[k];
    const double rho_hi = sample_trilinear(vol.density, world_to_texture(cube, hi))[0];
    const double rho_lo = sample_trilinear(vol.density, world_to_texture(cube, lo))[0];
    g[k] = (rho_hi - rho_lo) / (2.0 * h[k]);
  }
  return -g;
}

}  // namespace

RenderOutput render_rays(const CanonicalVolume& vol, const PartPoseSet& poses,
                         const std::vector<Ray>& rays, int height, int width,
                         const RenderCube& cube, const RenderConfig& cfg) {
  if (poses.count() != vol.n_parts) {
    fail(ErrorCode::kInconsistentParts, "render: pose count != volume n_parts");
  }
  if (cfg.n_samples < 2) {
    fail(ErrorCode::kInvalidArgument, "render: n_samples must be >= 2");
  }
  const int n_parts = vol.n_parts;
  RenderOutput out;
  out.rgb = Image(height, width, 3);
  out.depth = Image(height, width, 1);
  out.occupancy = Image(height, width, 1);
  out.normals = Image(height, width, 3);
  out.parts = Image(height, width, n_parts);

  const std::vector<RigidTransform> inverse_poses = invert_all(poses);
  const Eigen::Vector3d h = normal_step(cube, vol.size());

  parallel_for(static_cast<std::int64_t>(height) * width, cfg.workers,
               [&](std::int64_t px) {
    thread_local detail::RayTrace trace;
    const Ray& ray = rays[px];
    detail::trace_ray(vol, inverse_poses, cube, cfg, ray,
                      static_cast<std::uint64_t>(px), trace);

    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    Eigen::VectorXd parts = Eigen::VectorXd::Zero(n_parts);
    double occ = 0.0;
    double depth_acc = 0.0;
    double t_final = 1.0;
    if (trace.hit) {
      for (int i = 0; i < cfg.n_samples; ++i) {
        const double w = trace.weight[i];
        if (w > 0.0 && !trace.empty[i]) {
          rgb += w * trace.color[i];
          occ += w;
          depth_acc += w * trace.t[i];
          parts += w * trace.skin[i].weights;
          int dominant = 0;
          trace.skin[i].weights.maxCoeff(&dominant);
          normal += w * (poses.poses[dominant].rotation *
                         density_normal(vol, cube, trace.skin[i].x_c, h));
        }
      }
      t_final = trace.trans_final;
    }
    if (cfg.include_background) rgb += t_final * vol.bg_color;

    const int r = static_cast<int>(px / width);
    const int c = static_cast<int>(px % width);
    for (int ch = 0; ch < 3; ++ch) out.rgb.at(r, c, ch) = rgb[ch];
    out.occupancy.at(r, c) = occ;
    out.depth.at(r, c) = depth_acc / std::max(occ, 1e-8);
    if (occ > 1e-8) {
      for (int p = 0; p < n_parts; ++p) out.parts.at(r, c, p) = parts[p] / occ;
    }
    const double nn = normal.norm();
    if (nn > 1e-12) {
      for (int ch = 0; ch < 3; ++ch) out.normals.at(r, c, ch) = normal[ch] / nn;
    }
  });
  return out;
}

RenderOutput render(const CanonicalVolume& vol, const PartPoseSet& poses,
                    const PinholeCamera& cam, const RenderCube& cube,
                    const RenderConfig& cfg) {
  return render_rays(vol, poses, make_rays(cam), cam.height, cam.width, cube, cfg);
}

}  // namespace voxrig
