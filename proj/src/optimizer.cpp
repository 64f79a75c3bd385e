// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxrig/error.hpp"
#include "voxrig/parallel.hpp"
#include "voxrig/rng.hpp"

namespace voxrig {

namespace {

constexpr std::uint64_t kStreamExploration = 3;
constexpr std::uint64_t kStreamRenderSeed = 4;

// Gradient accumulation runs on a fixed number of lanes (row % lane), each
// summed sequentially and reduced in lane order, so results are bit-identical
// for any worker count.
constexpr int kGradLanes = 8;

const std::vector<int> kPyramidLevels = {1, 2, 4, 8};

}  // namespace

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state) {
  const Eigen::Index n = params.size();
  if (grads.size() != n) fail(ErrorCode::kShapeMismatch, "adam_step: params vs grads");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(n);
    state.v = Eigen::VectorXd::Zero(n);
  }
  if (state.m.size() != n || state.v.size() != n) {
    fail(ErrorCode::kShapeMismatch, "adam_step: moment buffers vs params");
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + state.eps);
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) {
  if (y > 20.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double y) { return std::log(y / (1.0 - y)); }

RawParams raw_params_zero(int size, int n_parts) {
  RawParams raw;
  raw.size = size;
  raw.n_parts = n_parts;
  raw.x = Eigen::VectorXd::Zero(raw.total());
  return raw;
}

CanonicalVolume volume_from_raw(const RawParams& raw, const CanonicalVolume& like) {
  CanonicalVolume vol = make_volume(raw.size, raw.n_parts);
  vol.bg_color = like.bg_color;
  vol.bg_density = like.bg_density;
  const std::int64_t v = raw.voxel_count();
  for (std::int64_t i = 0; i < v; ++i) vol.density.data[i] = softplus(raw.x[i]);
  const std::int64_t rgb0 = raw.rgb_offset();
  for (std::int64_t i = 0; i < 3 * v; ++i) vol.rgb.data[i] = logistic(raw.x[rgb0 + i]);
  const std::int64_t lbs0 = raw.logits_offset();
  for (std::int64_t i = 0; i < raw.n_parts * v; ++i) {
    vol.lbs_logits.data[i] = raw.x[lbs0 + i];
  }
  return vol;
}

RawParams raw_from_volume(const CanonicalVolume& vol) {
  RawParams raw = raw_params_zero(vol.size(), vol.n_parts);
  const std::int64_t v = raw.voxel_count();
  for (std::int64_t i = 0; i < v; ++i) {
    raw.x[i] = softplus_inverse(std::max(vol.density.data[i], 1e-12));
  }
  const std::int64_t rgb0 = raw.rgb_offset();
  for (std::int64_t i = 0; i < 3 * v; ++i) {
    raw.x[rgb0 + i] = logit(std::clamp(vol.rgb.data[i], 1e-6, 1.0 - 1e-6));
  }
  const std::int64_t lbs0 = raw.logits_offset();
  for (std::int64_t i = 0; i < vol.n_parts * v; ++i) {
    raw.x[lbs0 + i] = vol.lbs_logits.data[i];
  }
  return raw;
}

namespace {

struct ForwardImages {
  Image rgb;
  Image occ;
};

// Lean forward pass for the loss path: rgb and occupancy only, same
// per-ray math as the renderer via detail::trace_ray.
ForwardImages forward_images(const CanonicalVolume& vol,
                             const std::vector<RigidTransform>& inverse_poses,
                             const std::vector<Ray>& rays, int height, int width,
                             const RenderCube& cube, const RenderConfig& cfg) {
  ForwardImages out;
  out.rgb = Image(height, width, 3);
  out.occ = Image(height, width, 1);
  parallel_for(static_cast<std::int64_t>(height) * width, cfg.workers,
               [&](std::int64_t px) {
    thread_local detail::RayTrace trace;
    detail::trace_ray(vol, inverse_poses, cube, cfg, rays[px],
                      static_cast<std::uint64_t>(px), trace);
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double occ = 0.0;
    double t_final = 1.0;
    if (trace.hit) {
      for (int i = 0; i < cfg.n_samples; ++i) {
        const double w = trace.weight[i];
        if (w > 0.0 && !trace.empty[i]) {
          rgb += w * trace.color[i];
          occ += w;
        }
      }
      t_final = trace.trans_final;
    }
    if (cfg.include_background) rgb += t_final * vol.bg_color;
    const int r = static_cast<int>(px / width);
    const int c = static_cast<int>(px % width);
    for (int ch = 0; ch < 3; ++ch) out.rgb.at(r, c, ch) = rgb[ch];
    out.occ.at(r, c) = occ;
  });
  return out;
}

double sign_of(double x) { return (x > 0.0) - (x < 0.0); }

// dL/d(pred rgb) of the weighted pyramid loss.
Image pyramid_loss_backward(const Image& pred, const Image& target, double w_rec) {
  Image bar(pred.height, pred.width, pred.channels);
  for (int factor : kPyramidLevels) {
    const Image a = downsample(pred, factor);
    const Image b = downsample(target, factor);
    const double inv_numel = 1.0 / static_cast<double>(a.data.size());
    const double inv_block = 1.0 / (static_cast<double>(factor) * factor);
    for (int r = 0; r < a.height; ++r) {
      for (int c = 0; c < a.width; ++c) {
        for (int ch = 0; ch < a.channels; ++ch) {
          const double g = w_rec * sign_of(a.at(r, c, ch) - b.at(r, c, ch)) *
                           inv_numel * inv_block;
          if (g == 0.0) continue;
          for (int dr = 0; dr < factor; ++dr) {
            for (int dc = 0; dc < factor; ++dc) {
              bar.at(r * factor + dr, c * factor + dc, ch) += g;
            }
          }
        }
      }
    }
  }
  return bar;
}

// dL/d(occupancy) of the weighted background loss; zero where clamped.
Image background_loss_backward(const Image& occ, const Image& mask, double w_bkg) {
  Image bar(occ.height, occ.width, 1);
  const double inv_numel = 1.0 / static_cast<double>(occ.data.size());
  for (std::size_t i = 0; i < occ.data.size(); ++i) {
    const double o = occ.data[i];
    if (o <= 1e-6 || o >= 1.0 - 1e-6) continue;
    const double b = mask.data[i];
    bar.data[i] = -w_bkg * ((1.0 - b) / o - b / (1.0 - o)) * inv_numel;
  }
  return bar;
}

// Adjoint of one ray through the quadrature, field sampling and softmax LBS,
// accumulated in voxel space (density/rgb post-activation, logits raw).
void backward_ray(const CanonicalVolume& vol, const RenderCube& cube,
                  const RenderConfig& cfg, const detail::RayTrace& trace,
                  const Eigen::Vector3d& rgb_bar, double occ_bar,
                  bool include_background, std::int64_t rgb_offset,
                  std::int64_t logits_offset, Eigen::VectorXd& lane) {
  if (!trace.hit) return;
  const int n = cfg.n_samples;
  const double tbar =
      include_background ? rgb_bar.dot(vol.bg_color) : 0.0;

  const Eigen::Vector3d tex_jac = texture_jacobian_diag(cube);
  Eigen::Matrix<double, 3, Eigen::Dynamic> grad_tex;

  // Reverse sweep: suffix accumulates sum_{j>i} wbar_j w_j.
  double suffix = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const double wbar =
        trace.empty[i] ? 0.0 : rgb_bar.dot(trace.color[i]) + occ_bar;
    const double att = std::exp(-trace.sigma[i] * trace.delta);
    const double dsigma =
        trace.delta *
        (wbar * trace.trans[i] * att - suffix - tbar * trace.trans_final);
    suffix += wbar * trace.weight[i];
    if (trace.empty[i]) continue;

    const bool clamp_open = (trace.sigma_raw[i] + trace.noise[i]) > 0.0;
    const double dsigma_raw = clamp_open ? dsigma : 0.0;
    const Eigen::Vector3d dcolor = trace.weight[i] * rgb_bar;

    Eigen::Vector3d dx_c = Eigen::Vector3d::Zero();
    const TrilinearQuery& q = trace.field_query[i];
    if (q.inside) {
      double w8[8];
      corner_weights(q, w8);
      for (int corner = 0; corner < 8; ++corner) {
        if (w8[corner] == 0.0) continue;
        const std::int64_t di = corner_index(vol.density, q, corner, 0);
        lane[di] += dsigma_raw * w8[corner];
        const std::int64_t ri = corner_index(vol.rgb, q, corner, 0);
        for (int ch = 0; ch < 3; ++ch) {
          lane[rgb_offset + ri + ch] += dcolor[ch] * w8[corner];
        }
      }
      Eigen::Vector3d dtex = Eigen::Vector3d::Zero();
      sample_cell_grad_tex(vol.density, q, grad_tex);
      dtex += dsigma_raw * grad_tex.col(0);
      sample_cell_grad_tex(vol.rgb, q, grad_tex);
      for (int ch = 0; ch < 3; ++ch) dtex += dcolor[ch] * grad_tex.col(ch);
      dx_c = dtex.cwiseProduct(tex_jac);
    }

    if (dx_c.isZero(0.0)) continue;

    // x_c = sum_p w_p y_p, w_p = tilde_p / denom.
    const InverseSkinningSample& skin = trace.skin[i];
    const int n_parts = vol.n_parts;
    double wdot = 0.0;  // sum_q dL/dw_q w_q
    Eigen::VectorXd dw(n_parts);
    for (int p = 0; p < n_parts; ++p) {
      dw[p] = skin.back_projected[p].dot(dx_c);
      wdot += dw[p] * skin.weights[p];
    }
    for (int p = 0; p < n_parts; ++p) {
      if (skin.tilde[p] == 0.0) continue;  // masked out-of-volume part
      const double dtilde = (dw[p] - wdot) / skin.denom;
      const Eigen::VectorXd& s = skin.softmaxes[p];
      const TrilinearQuery& qp = skin.queries[p];
      double w8[8];
      corner_weights(qp, w8);
      // d tilde_p / d l_m = s_p (delta_pm - s_m)
      for (int m = 0; m < n_parts; ++m) {
        const double dl = dtilde * s[p] * (((m == p) ? 1.0 : 0.0) - s[m]);
        if (dl == 0.0) continue;
        for (int corner = 0; corner < 8; ++corner) {
          if (w8[corner] == 0.0) continue;
          lane[logits_offset + corner_index(vol.lbs_logits, qp, corner, m)] +=
              dl * w8[corner];
        }
      }
    }
  }
}

// Init-loss value and voxel-space gradient (density and logits blocks).
double init_loss_with_grad(const CanonicalVolume& vol, const PartPoseSet& poses,
                           double w_init, std::int64_t logits_offset,
                           Eigen::VectorXd* grad) {
  const int n_parts = vol.n_parts;
  const Eigen::VectorXd sigma_p = part_mean_density(vol);
  const double value = init_loss(poses, sigma_p);
  if (grad == nullptr || w_init == 0.0) return value;

  Eigen::Matrix<double, 3, 4> target;
  if (n_parts == 1) {
    target = RigidTransform::identity().matrix34();
  } else {
    int p_max = 0;
    sigma_p.maxCoeff(&p_max);
    target = poses.poses[p_max].matrix34();
  }
  Eigen::VectorXd dsigma = Eigen::VectorXd::Zero(n_parts);
  for (int p = 0; p < n_parts; ++p) {
    if (sigma_p[p] < kInitDensityThreshold) {
      dsigma[p] = -w_init *
                  (poses.poses[p].matrix34() - target).cwiseAbs().sum();
    }
  }
  if (dsigma.isZero(0.0)) return value;

  const std::int64_t n = vol.density.voxel_count();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd logits(n_parts);
  for (std::int64_t v = 0; v < n; ++v) {
    for (int p = 0; p < n_parts; ++p) {
      logits[p] = vol.lbs_logits.data[v * n_parts + p];
    }
    softmax_inplace(logits);
    const double dot = dsigma.dot(logits);
    (*grad)[v] += dot * inv_n;  // density block
    const double rho = vol.density.data[v];
    for (int m = 0; m < n_parts; ++m) {
      (*grad)[logits_offset + v * n_parts + m] +=
          rho * inv_n * logits[m] * (dsigma[m] - dot);
    }
  }
  return value;
}

double geo_loss_with_grad(const CanonicalVolume& vol, const CanonicalVolume& ref,
                          double w_geo, std::int64_t logits_offset,
                          Eigen::VectorXd* grad) {
  const double value = geometry_reg_loss(vol, ref);
  if (grad == nullptr || w_geo == 0.0) return value;
  const double inv_d = 1.0 / static_cast<double>(vol.density.data.size());
  for (std::size_t i = 0; i < vol.density.data.size(); ++i) {
    (*grad)[static_cast<std::int64_t>(i)] +=
        w_geo * sign_of(vol.density.data[i] - ref.density.data[i]) * inv_d;
  }
  const double inv_l = 1.0 / static_cast<double>(vol.lbs_logits.data.size());
  for (std::size_t i = 0; i < vol.lbs_logits.data.size(); ++i) {
    (*grad)[logits_offset + static_cast<std::int64_t>(i)] +=
        w_geo * sign_of(vol.lbs_logits.data[i] - ref.lbs_logits.data[i]) * inv_l;
  }
  return value;
}

RenderLossTerms render_loss_impl(const RawParams& raw, const PartPoseSet& poses,
                                 const PinholeCamera& cam, const RenderCube& cube,
                                 const RenderConfig& cfg, const Image& target,
                                 const std::optional<Image>& mask,
                                 const LossWeights& weights,
                                 const CanonicalVolume& like,
                                 const CanonicalVolume* geo_ref,
                                 Eigen::VectorXd* grad, double scale) {
  if (raw.x.size() != raw.total()) {
    fail(ErrorCode::kShapeMismatch, "render loss: raw parameter size");
  }
  const CanonicalVolume vol = volume_from_raw(raw, like);
  if (poses.count() != vol.n_parts) {
    fail(ErrorCode::kInconsistentParts, "render loss: pose count != n_parts");
  }
  if (target.height != cam.height || target.width != cam.width ||
      target.channels != 3) {
    fail(ErrorCode::kShapeMismatch, "render loss: target vs camera size");
  }
  const std::vector<RigidTransform> inverse_poses = invert_all(poses);
  const std::vector<Ray> rays = make_rays(cam);
  const ForwardImages fwd =
      forward_images(vol, inverse_poses, rays, cam.height, cam.width, cube, cfg);

  RenderLossTerms terms;
  terms.rec = pyramid_reconstruction_loss(fwd.rgb, target, kPyramidLevels);
  if (mask.has_value()) terms.bkg = background_loss(fwd.occ, *mask);

  const std::int64_t rgb_offset = raw.rgb_offset();
  const std::int64_t logits_offset = raw.logits_offset();

  Eigen::VectorXd voxel_grad;
  if (grad != nullptr) {
    voxel_grad = Eigen::VectorXd::Zero(raw.total());

    const Image rgb_bar = pyramid_loss_backward(fwd.rgb, target, weights.rec);
    Image occ_bar;
    if (mask.has_value() && weights.bkg != 0.0) {
      occ_bar = background_loss_backward(fwd.occ, *mask, weights.bkg);
    }

    std::vector<Eigen::VectorXd> lanes(
        kGradLanes, Eigen::VectorXd::Zero(raw.total()));
    parallel_for(kGradLanes, std::min(cfg.workers, kGradLanes),
                 [&](std::int64_t lane_idx) {
      detail::RayTrace trace;
      Eigen::VectorXd& lane = lanes[lane_idx];
      for (int r = static_cast<int>(lane_idx); r < cam.height; r += kGradLanes) {
        for (int c = 0; c < cam.width; ++c) {
          const std::int64_t px = static_cast<std::int64_t>(r) * cam.width + c;
          Eigen::Vector3d pix_rgb_bar(rgb_bar.at(r, c, 0), rgb_bar.at(r, c, 1),
                                      rgb_bar.at(r, c, 2));
          const double pix_occ_bar =
              (occ_bar.data.empty()) ? 0.0 : occ_bar.at(r, c);
          if (pix_rgb_bar.isZero(0.0) && pix_occ_bar == 0.0) continue;
          detail::trace_ray(vol, inverse_poses, cube, cfg, rays[px],
                            static_cast<std::uint64_t>(px), trace);
          backward_ray(vol, cube, cfg, trace, pix_rgb_bar, pix_occ_bar,
                       cfg.include_background, rgb_offset, logits_offset, lane);
        }
      }
    });
    for (int l = 0; l < kGradLanes; ++l) voxel_grad += lanes[l];
  }

  if (weights.init != 0.0 || grad == nullptr) {
    terms.init = init_loss_with_grad(vol, poses, weights.init, logits_offset,
                                     grad ? &voxel_grad : nullptr);
  }
  if (geo_ref != nullptr) {
    terms.geo = geo_loss_with_grad(vol, *geo_ref, weights.geo, logits_offset,
                                   grad ? &voxel_grad : nullptr);
  }

  if (grad != nullptr) {
    // Chain through the activations: density softplus, rgb logistic.
    const std::int64_t v = raw.voxel_count();
    for (std::int64_t i = 0; i < v; ++i) {
      voxel_grad[i] *= logistic(raw.x[i]);
    }
    for (std::int64_t i = 0; i < 3 * v; ++i) {
      const double c = vol.rgb.data[i];
      voxel_grad[rgb_offset + i] *= c * (1.0 - c);
    }
    grad->noalias() += scale * voxel_grad;
  }
  return terms;
}

}  // namespace

RenderLossTerms grad_render_loss(const RawParams& raw, const PartPoseSet& poses,
                                 const PinholeCamera& cam, const RenderCube& cube,
                                 const RenderConfig& cfg, const Image& target,
                                 const std::optional<Image>& mask,
                                 const LossWeights& weights,
                                 const CanonicalVolume& like,
                                 const CanonicalVolume* geo_ref,
                                 Eigen::VectorXd& grad, double scale) {
  if (grad.size() != raw.total()) {
    fail(ErrorCode::kShapeMismatch, "grad_render_loss: gradient size");
  }
  return render_loss_impl(raw, poses, cam, cube, cfg, target, mask, weights,
                          like, geo_ref, &grad, scale);
}

RenderLossTerms render_loss_value(const RawParams& raw, const PartPoseSet& poses,
                                  const PinholeCamera& cam, const RenderCube& cube,
                                  const RenderConfig& cfg, const Image& target,
                                  const std::optional<Image>& mask,
                                  const LossWeights& weights,
                                  const CanonicalVolume& like,
                                  const CanonicalVolume* geo_ref) {
  return render_loss_impl(raw, poses, cam, cube, cfg, target, mask, weights,
                          like, geo_ref, nullptr, 1.0);
}

InversionResult invert_scene_raw(const std::vector<InversionTarget>& targets,
                                 const RawParams& init,
                                 const CanonicalVolume& like,
                                 const PinholeCamera& cam, const RenderCube& cube,
                                 const InversionConfig& cfg) {
  if (targets.empty()) {
    fail(ErrorCode::kInvalidArgument, "invert_scene: need at least one target");
  }
  if (cfg.steps < 0) fail(ErrorCode::kInvalidArgument, "invert_scene: steps < 0");

  InversionResult result;
  RawParams raw = init;
  const CanonicalVolume geo_ref = volume_from_raw(init, like);
  const double inv_targets = 1.0 / static_cast<double>(targets.size());

  AdamState adam;
  Eigen::VectorXd grad(raw.total());
  Eigen::VectorXd noised(raw.total());
  result.trace.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    const double expl =
        linear_decay(cfg.exploration_noise, step, cfg.exploration_noise_zero_at);
    noised = raw.x;
    if (expl > 0.0) {
      for (std::int64_t i = 0; i < noised.size(); ++i) {
        noised[i] += expl * gaussian(rng_key(cfg.seed, kStreamExploration,
                                             static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(i)));
      }
    }
    RawParams eval = raw;
    eval.x.swap(noised);

    LossWeights w = cfg.weights;
    w.bkg = w_bkg_at_epoch(w.bkg, step);

    grad.setZero();
    RenderLossTerms mean_terms;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      RenderConfig rcfg = cfg.render;
      rcfg.seed = rng_key(cfg.seed, kStreamRenderSeed,
                          static_cast<std::uint64_t>(step), j);
      const RenderLossTerms terms = grad_render_loss(
          eval, targets[j].poses, cam, cube, rcfg, targets[j].image,
          targets[j].mask, w, like, (w.geo != 0.0) ? &geo_ref : nullptr, grad,
          inv_targets);
      mean_terms.rec += terms.rec * inv_targets;
      mean_terms.bkg += terms.bkg * inv_targets;
      mean_terms.init += terms.init * inv_targets;
      mean_terms.geo += terms.geo * inv_targets;
    }

    InversionTraceRow row;
    row.step = step;
    row.rec = mean_terms.rec;
    row.bkg = mean_terms.bkg;
    row.init = mean_terms.init;
    row.geo = mean_terms.geo;
    row.total = mean_terms.total(w);
    result.trace.push_back(row);

    if (!std::isfinite(row.total) || !grad.allFinite()) {
      fail(ErrorCode::kNonFinite,
           "invert_scene: non-finite loss or gradient at step " +
               std::to_string(step));
    }

    adam.lr = lr_at_step(cfg.base_lr, step, cfg.lr_decay_every);
    adam_step(raw.x, grad, adam);
  }

  result.raw = raw;
  result.volume = volume_from_raw(raw, like);
  return result;
}

InversionResult invert_scene(const std::vector<InversionTarget>& targets,
                             const CanonicalVolume& init,
                             const PinholeCamera& cam, const RenderCube& cube,
                             const InversionConfig& cfg) {
  return invert_scene_raw(targets, raw_from_volume(init), init, cam, cube, cfg);
}

}  // namespace voxrig
