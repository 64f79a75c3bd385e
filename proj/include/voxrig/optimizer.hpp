// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxrig/image.hpp"
#include "voxrig/losses.hpp"
#include "voxrig/renderer.hpp"

namespace voxrig {

struct LossWeights {
  double rec = 1.0;
  double bkg = 1.0;
  double eq = 1.0;
  double proj = 1.0;
  double init = 1.0;
  double geo = 1.0;

  // Inference-style inversion drives on the reconstruction term alone.
  static LossWeights inversion_defaults() {
    LossWeights w;
    w.bkg = w.eq = w.proj = w.init = w.geo = 0.0;
    return w;
  }
};

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

// Bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state);

// Schedules. Step/epoch counters start at 0.
inline double lr_at_step(double base_lr, std::int64_t step,
                         std::int64_t decay_every = 750) {
  double lr = base_lr;
  for (std::int64_t k = 0; k < step / decay_every; ++k) lr *= 0.1;
  return lr;
}

inline double w_bkg_at_epoch(double base, std::int64_t epoch,
                             std::int64_t decay_every = 10) {
  double w = base;
  for (std::int64_t k = 0; k < epoch / decay_every; ++k) w *= 0.8;
  return w;
}

inline double linear_decay(double start, std::int64_t step, std::int64_t zero_at) {
  if (step >= zero_at) return 0.0;
  return start * (1.0 - static_cast<double>(step) / static_cast<double>(zero_at));
}

// Raw (pre-activation) volume parameters: density through softplus, rgb
// through a logistic squash, LBS logits unchanged. Layout is
// [density | rgb | logits], each block ordered like its grid.
struct RawParams {
  int size = 0;
  int n_parts = 0;
  Eigen::VectorXd x;

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(size) * size * size;
  }
  std::int64_t total() const { return voxel_count() * (4 + n_parts); }
  std::int64_t rgb_offset() const { return voxel_count(); }
  std::int64_t logits_offset() const { return 4 * voxel_count(); }
};

double softplus(double x);
double softplus_inverse(double y);  // y must be > 0
double logistic(double x);
double logit(double y);  // y in (0, 1)

RawParams raw_params_zero(int size, int n_parts);

// Applies activations; background and part count are copied from `like`.
CanonicalVolume volume_from_raw(const RawParams& raw, const CanonicalVolume& like);

// Inverse activations with clamping (density to >= 1e-12, rgb into
// [1e-6, 1 - 1e-6]); exact zeros are not representable in raw space.
RawParams raw_from_volume(const CanonicalVolume& vol);

struct RenderLossTerms {
  double rec = 0.0;
  double bkg = 0.0;
  double init = 0.0;
  double geo = 0.0;

  double total(const LossWeights& w) const {
    return w.rec * rec + w.bkg * bkg + w.init * init + w.geo * geo;
  }
};

// The weighted render loss of one target and its analytic gradient with
// respect to the raw parameters (reverse mode through the quadrature,
// trilinear sampling, softmax LBS and the activations; density noise is
// treated as a constant). The background term needs `mask`, the geometry
// term needs `geo_ref`; absent inputs contribute zero. `grad` must be sized
// raw.total() and is accumulated into, scaled by `scale`.
RenderLossTerms grad_render_loss(const RawParams& raw, const PartPoseSet& poses,
                                 const PinholeCamera& cam, const RenderCube& cube,
                                 const RenderConfig& cfg, const Image& target,
                                 const std::optional<Image>& mask,
                                 const LossWeights& weights,
                                 const CanonicalVolume& like,
                                 const CanonicalVolume* geo_ref,
                                 Eigen::VectorXd& grad, double scale = 1.0);

// Forward-only evaluation of the same loss (shares the render path).
RenderLossTerms render_loss_value(const RawParams& raw, const PartPoseSet& poses,
                                  const PinholeCamera& cam, const RenderCube& cube,
                                  const RenderConfig& cfg, const Image& target,
                                  const std::optional<Image>& mask,
                                  const LossWeights& weights,
                                  const CanonicalVolume& like,
                                  const CanonicalVolume* geo_ref);

struct InversionTarget {
  Image image;
  PartPoseSet poses;
  std::optional<Image> mask;
};

struct InversionConfig {
  int steps = 3000;
  double base_lr = 1e-2;
  int lr_decay_every = 750;
  double exploration_noise = 0.5;
  int exploration_noise_zero_at = 1500;
  RenderConfig render;
  LossWeights weights = LossWeights::inversion_defaults();
  std::uint64_t seed = 0;
};

struct InversionTraceRow {
  int step = 0;
  double total = 0.0, rec = 0.0, bkg = 0.0, eq = 0.0, proj = 0.0, init = 0.0,
         geo = 0.0;
};

struct InversionResult {
  CanonicalVolume volume;
  RawParams raw;
  std::vector<InversionTraceRow> trace;
};

// Adam descent on raw volume parameters against the mean weighted loss over
// all targets, with the lr / exploration-noise / w_bkg decay schedules.
InversionResult invert_scene(const std::vector<InversionTarget>& targets,
                             const CanonicalVolume& init,
                             const PinholeCamera& cam, const RenderCube& cube,
                             const InversionConfig& cfg);

// Same loop, starting from explicit raw parameters.
InversionResult invert_scene_raw(const std::vector<InversionTarget>& targets,
                                 const RawParams& init,
                                 const CanonicalVolume& like,
                                 const PinholeCamera& cam, const RenderCube& cube,
                                 const InversionConfig& cfg);

}  // namespace voxrig
