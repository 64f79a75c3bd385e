// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "voxrig/error.hpp"

namespace voxrig {

// Cubic voxel grid, row-major [z][y][x][channel]. Axis k of the texture
// coordinate maps to index k (x fastest after channels).
struct VoxelGrid {
  int size = 0;      // voxels per axis
  int channels = 0;  // values per voxel
  std::vector<double> data;

  VoxelGrid() = default;
  VoxelGrid(int s, int c, double fill = 0.0)
      : size(s), channels(c),
        data(static_cast<std::size_t>(s) * s * s * c, fill) {}

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(size) * size * size;
  }
  std::int64_t index(int x, int y, int z, int c = 0) const {
    return ((static_cast<std::int64_t>(z) * size + y) * size + x) * channels + c;
  }
  double& at(int x, int y, int z, int c = 0) { return data[index(x, y, z, c)]; }
  double at(int x, int y, int z, int c = 0) const { return data[index(x, y, z, c)]; }
};

// Axis-aligned world region in which the object lives. The modeled volume
// covers this cube enlarged about its center by texture_scale.
struct RenderCube {
  Eigen::Vector3d min{-1.0088, -1.0088, 9.5};
  Eigen::Vector3d max{1.0088, 1.0088, 11.5};
  double texture_scale = 1.075;

  Eigen::Vector3d center() const { return 0.5 * (min + max); }
  Eigen::Vector3d half_extent() const { return 0.5 * (max - min); }
  Eigen::Vector3d texture_half_extent() const {
    return texture_scale * half_extent();
  }
};

// Affine map from world space into the [-1, 1]^3 texture cube; out-of-range
// outputs are allowed, sampling decides what to do with them.
inline Eigen::Vector3d world_to_texture(const RenderCube& cube,
                                        const Eigen::Vector3d& p) {
  return (p - cube.center()).cwiseQuotient(cube.texture_half_extent());
}

inline Eigen::Vector3d texture_to_world(const RenderCube& cube,
                                        const Eigen::Vector3d& tex) {
  return cube.center() + tex.cwiseProduct(cube.texture_half_extent());
}

// Per-axis scale d(tex)/d(world).
inline Eigen::Vector3d texture_jacobian_diag(const RenderCube& cube) {
  return cube.texture_half_extent().cwiseInverse();
}

// Cell lookup for trilinear sampling. Voxel centers sit at
// tex = -1 + (2k + 1)/S; coordinates beyond the outermost centers are
// outside the modeled volume.
struct TrilinearQuery {
  bool inside = false;
  int base[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
};

inline TrilinearQuery locate(int grid_size, const Eigen::Vector3d& tex) {
  TrilinearQuery q;
  const double s = static_cast<double>(grid_size);
  for (int k = 0; k < 3; ++k) {
    const double g = (tex[k] + 1.0) * s / 2.0 - 0.5;
    if (!(g >= 0.0 && g <= s - 1.0)) return q;  // also rejects NaN
    int b = static_cast<int>(std::floor(g));
    if (b > grid_size - 2) b = grid_size - 2;
    if (b < 0) b = 0;
    q.base[k] = b;
    q.frac[k] = (grid_size == 1) ? 0.0 : g - b;
  }
  q.inside = true;
  return q;
}

// Weights for the 8 cell corners; corner index bit 0 = x, bit 1 = y, bit 2 = z.
inline void corner_weights(const TrilinearQuery& q, double w[8]) {
  const double fx = q.frac[0], fy = q.frac[1], fz = q.frac[2];
  const double gx = 1.0 - fx, gy = 1.0 - fy, gz = 1.0 - fz;
  w[0] = gx * gy * gz;
  w[1] = fx * gy * gz;
  w[2] = gx * fy * gz;
  w[3] = fx * fy * gz;
  w[4] = gx * gy * fz;
  w[5] = fx * gy * fz;
  w[6] = gx * fy * fz;
  w[7] = fx * fy * fz;
}

inline std::int64_t corner_index(const VoxelGrid& g, const TrilinearQuery& q,
                                 int corner, int channel) {
  const int x = q.base[0] + (corner & 1);
  const int y = q.base[1] + ((corner >> 1) & 1);
  const int z = q.base[2] + ((corner >> 2) & 1);
  return g.index(x, y, z, channel);
}

// Interpolates all channels at an already-located cell; q must be inside.
inline void sample_cell(const VoxelGrid& g, const TrilinearQuery& q,
                        double* out) {
  double w[8];
  corner_weights(q, w);
  for (int c = 0; c < g.channels; ++c) out[c] = 0.0;
  if (g.size == 1) {
    for (int c = 0; c < g.channels; ++c) out[c] = g.data[c];
    return;
  }
  for (int corner = 0; corner < 8; ++corner) {
    if (w[corner] == 0.0) continue;
    const std::int64_t idx = corner_index(g, q, corner, 0);
    for (int c = 0; c < g.channels; ++c) out[c] += w[corner] * g.data[idx + c];
  }
}

// d(value_c)/d(tex_k) at the query cell, written as grad(k, c).
inline void sample_cell_grad_tex(const VoxelGrid& g, const TrilinearQuery& q,
                                 Eigen::Matrix<double, 3, Eigen::Dynamic>& grad) {
  grad.resize(3, g.channels);
  grad.setZero();
  if (g.size == 1) return;
  const double fx = q.frac[0], fy = q.frac[1], fz = q.frac[2];
  const double gx = 1.0 - fx, gy = 1.0 - fy, gz = 1.0 - fz;
  // d(weight)/d(frac) per corner and axis.
  const double dwx[8] = {-gy * gz, gy * gz, -fy * gz, fy * gz,
                         -gy * fz, gy * fz, -fy * fz, fy * fz};
  const double dwy[8] = {-gx * gz, -fx * gz, gx * gz, fx * gz,
                         -gx * fz, -fx * fz, gx * fz, fx * fz};
  const double dwz[8] = {-gx * gy, -fx * gy, -gx * fy, -fx * fy,
                         gx * gy, fx * gy, gx * fy, fx * fy};
  const double tex_per_frac = static_cast<double>(g.size) / 2.0;
  for (int corner = 0; corner < 8; ++corner) {
    const std::int64_t idx = corner_index(g, q, corner, 0);
    for (int c = 0; c < g.channels; ++c) {
      const double v = g.data[idx + c];
      grad(0, c) += dwx[corner] * v;
      grad(1, c) += dwy[corner] * v;
      grad(2, c) += dwz[corner] * v;
    }
  }
  grad *= tex_per_frac;  // frac = (tex + 1) S/2 - 0.5 - base
}

// Trilinear interpolation with voxel centers at tex = -1 + (2k + 1)/S;
// beyond the outermost centers the modeled volume ends and the zero vector
// is returned.
inline Eigen::VectorXd sample_trilinear(const VoxelGrid& g,
                                        const Eigen::Vector3d& tex) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.channels);
  const TrilinearQuery q = locate(g.size, tex);
  if (!q.inside) return out;
  sample_cell(g, q, out.data());
  return out;
}

inline void softmax_inplace(Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  v = (v.array() - m).exp();
  v /= v.sum();
}

// Canonical object: density, radiance and part-assignment logits sharing one
// grid resolution, plus the fixed background plate constants.
struct CanonicalVolume {
  VoxelGrid density;     // C = 1, post-activation (non-negative)
  VoxelGrid rgb;         // C = 3, values in [0, 1]
  VoxelGrid lbs_logits;  // C = n_parts
  int n_parts = 1;
  Eigen::Vector3d bg_color = Eigen::Vector3d::Zero();
  double bg_density = 1e4;

  int size() const { return density.size; }
};

inline CanonicalVolume make_volume(int size, int n_parts) {
  CanonicalVolume v;
  v.density = VoxelGrid(size, 1);
  v.rgb = VoxelGrid(size, 3);
  v.lbs_logits = VoxelGrid(size, n_parts);
  v.n_parts = n_parts;
  return v;
}

inline void validate(const CanonicalVolume& v) {
  if (v.n_parts < 1) fail(ErrorCode::kInvalidArgument, "volume: n_parts < 1");
  if (v.rgb.size != v.density.size || v.lbs_logits.size != v.density.size) {
    fail(ErrorCode::kShapeMismatch, "volume: grids disagree on size");
  }
  if (v.density.channels != 1 || v.rgb.channels != 3 ||
      v.lbs_logits.channels != v.n_parts) {
    fail(ErrorCode::kShapeMismatch, "volume: bad channel counts");
  }
  for (double d : v.density.data) {
    if (!std::isfinite(d) || d < 0.0) {
      fail(ErrorCode::kNonFinite, "volume: density must be finite and >= 0");
    }
  }
  for (double d : v.rgb.data) {
    if (!std::isfinite(d) || d < 0.0 || d > 1.0) {
      fail(ErrorCode::kNonFinite, "volume: rgb must be finite in [0, 1]");
    }
  }
  for (double d : v.lbs_logits.data) {
    if (!std::isfinite(d)) fail(ErrorCode::kNonFinite, "volume: logits must be finite");
  }
  if (!(v.bg_density > 0.0) || !v.bg_color.allFinite()) {
    fail(ErrorCode::kNonFinite, "volume: bad background");
  }
}

// Canonical LBS weights: softmax of the trilinearly sampled logits.
// Out-of-volume queries see all-zero logits, i.e. the uniform simplex.
inline Eigen::VectorXd lbs_weights_canonical(const CanonicalVolume& vol,
                                             const Eigen::Vector3d& tex) {
  Eigen::VectorXd logits = sample_trilinear(vol.lbs_logits, tex);
  softmax_inplace(logits);
  return logits;
}

}  // namespace voxrig
