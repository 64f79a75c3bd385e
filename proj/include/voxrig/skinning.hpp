// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "voxrig/error.hpp"
#include "voxrig/geometry.hpp"
#include "voxrig/volume.hpp"

namespace voxrig {

// One rigid transform per part, part-to-camera (T_p = [R_p, t_p]).
struct PartPoseSet {
  std::vector<RigidTransform> poses;

  int count() const { return static_cast<int>(poses.size()); }
};

inline std::vector<RigidTransform> invert_all(const PartPoseSet& set) {
  std::vector<RigidTransform> inv;
  inv.reserve(set.poses.size());
  for (const auto& p : set.poses) inv.push_back(invert_transform(p));
  return inv;
}

// Forward skinning: x_d = sum_p w_p (R_p x_c + t_p).
inline Eigen::Vector3d lbs_forward(const Eigen::Vector3d& x_c,
                                   const Eigen::VectorXd& weights,
                                   const PartPoseSet& poses) {
  if (weights.size() != poses.count()) {
    fail(ErrorCode::kShapeMismatch, "lbs_forward: weights vs poses");
  }
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int p = 0; p < poses.count(); ++p) {
    out += weights[p] * poses.poses[p](x_c);
  }
  return out;
}

// Full evaluation record for one deformed point; kept around so the
// renderer's adjoint pass can reuse the exact forward quantities.
struct InverseSkinningSample {
  bool empty = true;
  std::vector<Eigen::Vector3d> back_projected;  // y_p = R_p^-1 x_d - R_p^-1 t_p
  std::vector<TrilinearQuery> queries;          // logits cell per part
  std::vector<Eigen::VectorXd> softmaxes;       // canonical weights at y_p
  Eigen::VectorXd tilde;                        // masked numerators
  double denom = 0.0;
  Eigen::VectorXd weights;                      // normalized inverse weights
  Eigen::Vector3d x_c = Eigen::Vector3d::Zero();
};

// Inverse weights of the deformed-to-canonical lookup. Canonical weights are
// masked to zero where the back-projected point leaves the modeled volume;
// a vanishing denominator (< 1e-8) marks the point as empty.
inline void inverse_skinning_detail(const Eigen::Vector3d& x_d,
                                    const std::vector<RigidTransform>& inverse_poses,
                                    const CanonicalVolume& vol,
                                    const RenderCube& cube,
                                    InverseSkinningSample& out) {
  const int n = static_cast<int>(inverse_poses.size());
  out.empty = true;
  out.back_projected.resize(n);
  out.queries.resize(n);
  out.softmaxes.resize(n);
  out.tilde = Eigen::VectorXd::Zero(n);
  out.denom = 0.0;
  for (int p = 0; p < n; ++p) {
    const Eigen::Vector3d y = inverse_poses[p](x_d);
    out.back_projected[p] = y;
    const TrilinearQuery q = locate(vol.lbs_logits.size, world_to_texture(cube, y));
    out.queries[p] = q;
    if (!q.inside) continue;
    Eigen::VectorXd logits(vol.n_parts);
    sample_cell(vol.lbs_logits, q, logits.data());
    softmax_inplace(logits);
    out.softmaxes[p] = std::move(logits);
    out.tilde[p] = out.softmaxes[p][p];
    out.denom += out.tilde[p];
  }
  if (out.denom < 1e-8) return;
  out.empty = false;
  out.weights = out.tilde / out.denom;
  out.x_c.setZero();
  for (int p = 0; p < n; ++p) {
    if (out.tilde[p] != 0.0) out.x_c += out.weights[p] * out.back_projected[p];
  }
}

inline std::optional<Eigen::VectorXd> inverse_lbs_weights(
    const Eigen::Vector3d& x_d, const PartPoseSet& poses,
    const CanonicalVolume& vol, const RenderCube& cube) {
  if (poses.count() != vol.n_parts) {
    fail(ErrorCode::kInconsistentParts, "inverse_lbs_weights: pose count != n_parts");
  }
  InverseSkinningSample s;
  inverse_skinning_detail(x_d, invert_all(poses), vol, cube, s);
  if (s.empty) return std::nullopt;
  return s.weights;
}

// Approximate deformed-to-canonical lookup: x_c = sum_p w_p(x_d) y_p.
// An empty result signals zero density to the renderer.
inline std::optional<Eigen::Vector3d> deform_to_canonical(
    const Eigen::Vector3d& x_d, const PartPoseSet& poses,
    const CanonicalVolume& vol, const RenderCube& cube) {
  if (poses.count() != vol.n_parts) {
    fail(ErrorCode::kInconsistentParts, "deform_to_canonical: pose count != n_parts");
  }
  InverseSkinningSample s;
  inverse_skinning_detail(x_d, invert_all(poses), vol, cube, s);
  if (s.empty) return std::nullopt;
  return s.x_c;
}

}  // namespace voxrig
