// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxrig/error.hpp"
#include "voxrig/metrics.hpp"
#include "voxrig/optimizer.hpp"
#include "voxrig/pnp.hpp"
#include "voxrig/renderer.hpp"
#include "voxrig/scene_io.hpp"

namespace {

namespace fs = std::filesystem;
using namespace voxrig;

void write_render_outputs(const RenderOutput& out, const std::string& prefix) {
  write_image(out.rgb, prefix + ".rgb.ppm");
  write_depth(out.depth, prefix + ".depth.pfm");
  write_depth(out.occupancy, prefix + ".occ.pfm");
  for (int p = 0; p < out.parts.channels; ++p) {
    Image part(out.parts.height, out.parts.width, 1);
    for (int r = 0; r < part.height; ++r) {
      for (int c = 0; c < part.width; ++c) part.at(r, c) = out.parts.at(r, c, p);
    }
    write_depth(part, prefix + ".parts" + std::to_string(p) + ".pfm");
  }
}

int run_synth(std::uint64_t seed, int size, int parts, const std::string& out) {
  SynthSpec spec;
  spec.size = size;
  spec.n_parts = parts;
  save_scene(synth_scene(seed, spec), out);
  return 0;
}

int run_render(const std::string& scene_path, const std::string& poses_path,
               const std::string& prefix, int samples, bool no_bg,
               std::uint64_t seed, int workers) {
  const Scene scene = load_scene(scene_path);
  PartPoseSet poses;
  if (poses_path.empty()) {
    poses.poses.assign(scene.volume.n_parts, RigidTransform::identity());
  } else {
    poses = load_poses(poses_path);
  }
  RenderConfig cfg;
  cfg.n_samples = samples;
  cfg.include_background = !no_bg;
  cfg.seed = seed;
  cfg.workers = workers;
  write_render_outputs(render(scene.volume, poses, scene.camera, scene.cube, cfg),
                       prefix);
  return 0;
}

int run_estimate_pose(const std::string& scene_path, const std::string& kp_path,
                      const std::string& out) {
  const Scene scene = load_scene(scene_path);
  const auto k2d = load_keypoints2d(kp_path);
  if (static_cast<int>(k2d.size()) != scene.volume.n_parts) {
    fail(ErrorCode::kShapeMismatch, "estimate-pose: keypoint blocks vs scene parts");
  }
  PartPoseSet poses;
  std::printf("part,reproj_error\n");
  for (int p = 0; p < scene.volume.n_parts; ++p) {
    KeypointCorrespondence corr{scene.canonical_keypoints[p], k2d[p]};
    const RigidTransform camera_from_points = solve_epnp(corr, scene.camera);
    std::printf("%d,%.17g\n", p,
                reprojection_error(corr, camera_from_points, scene.camera));
    // The part pose is the inverse of the recovered camera pose.
    poses.poses.push_back(invert_transform(camera_from_points));
  }
  save_poses(poses, out);
  return 0;
}

int run_animate(const std::string& scene_path, const std::string& track_path,
                double novel_yaw, bool filter, const std::string& prefix,
                int samples, std::uint64_t seed, int workers) {
  const Scene scene = load_scene(scene_path);
  PoseSequence track = load_pose_track(track_path);
  if (filter) track = filter_part_distances(track, scene.cube);
  if (novel_yaw != 0.0) {
    const RigidTransform spin = RigidTransform::rotate_about(
        RigidTransform::rotate_y(novel_yaw).rotation, scene.cube.center());
    for (auto& frame : track.frames) {
      for (auto& pose : frame.poses) pose = compose(spin, pose);
    }
  }
  RenderConfig cfg;
  cfg.n_samples = samples;
  cfg.seed = seed;
  cfg.workers = workers;
  for (std::size_t f = 0; f < track.frames.size(); ++f) {
    char tag[16];
    std::snprintf(tag, sizeof(tag), ".f%04zu", f);
    write_render_outputs(
        render(scene.volume, track.frames[f], scene.camera, scene.cube, cfg),
        prefix + tag);
  }
  return 0;
}

int run_invert(const std::string& targets_dir, const std::string& init_path,
               int steps, const std::string& out, const std::string& trace_path,
               std::uint64_t seed, int workers, int samples) {
  const Scene init = load_scene(init_path);

  // Target layout: frame<k>.ppm + frame<k>.poses.json (+ frame<k>.mask.pfm).
  std::vector<InversionTarget> targets;
  for (int k = 0;; ++k) {
    const fs::path img = fs::path(targets_dir) / ("frame" + std::to_string(k) + ".ppm");
    const fs::path pos =
        fs::path(targets_dir) / ("frame" + std::to_string(k) + ".poses.json");
    if (!fs::exists(img)) break;
    InversionTarget t;
    t.image = read_image(img.string());
    t.poses = load_poses(pos.string());
    const fs::path mask =
        fs::path(targets_dir) / ("frame" + std::to_string(k) + ".mask.pfm");
    if (fs::exists(mask)) t.mask = read_depth(mask.string());
    targets.push_back(std::move(t));
  }
  if (targets.empty()) {
    fail(ErrorCode::kIo, "invert: no frame<k>.ppm targets in " + targets_dir);
  }

  InversionConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.render.workers = workers;
  cfg.render.n_samples = samples;
  if (targets.front().mask.has_value()) cfg.weights.bkg = 1.0;

  const InversionResult result =
      invert_scene(targets, init.volume, init.camera, init.cube, cfg);

  Scene fitted = init;
  fitted.volume = result.volume;
  save_scene(fitted, out);

  std::ofstream trace(trace_path);
  if (!trace) fail(ErrorCode::kIo, "cannot open for writing: " + trace_path);
  trace << "step,total,rec,bkg,eq,proj,init,geo\n";
  char line[256];
  for (const auto& row : result.trace) {
    std::snprintf(line, sizeof(line),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.step,
                  row.total, row.rec, row.bkg, row.eq, row.proj, row.init,
                  row.geo);
    trace << line;
  }
  return 0;
}

Eigen::VectorXd flatten(const Image& img) {
  return Eigen::Map<const Eigen::VectorXd>(img.data.data(),
                                           static_cast<Eigen::Index>(img.data.size()));
}

int run_metrics(const std::string& pred_path, const std::string& ref_path,
                const std::string& mask_path, const std::string& kind) {
  const Image pred = read_depth(pred_path);
  const Image ref = read_depth(ref_path);
  std::printf("metric,value,n\n");
  if (kind == "pearson") {
    const Eigen::VectorXd a = flatten(pred);
    const Eigen::VectorXd b = flatten(ref);
    std::int64_t n = a.size();
    double r;
    if (!mask_path.empty()) {
      const Image m = read_depth(mask_path);
      std::vector<bool> keep(m.data.size());
      n = 0;
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        keep[i] = m.data[i] > 0.5;
        n += keep[i];
      }
      r = pearson(a, b, &keep);
    } else {
      r = pearson(a, b);
    }
    std::printf("pearson,%.17g,%lld\n", r, static_cast<long long>(n));
  } else if (kind == "ayd") {
    // pred: one value (driving yaw); ref: rendered yaw, camera yaw.
    if (pred.data.size() != 1 || ref.data.size() != 2) {
      fail(ErrorCode::kShapeMismatch,
           "metrics ayd: pred needs 1 value, ref needs 2 (theta_r, theta_c)");
    }
    std::printf("ayd,%.17g,1\n", ayd(pred.data[0], ref.data[0], ref.data[1]));
  } else if (kind == "asc" || kind == "apc") {
    const Eigen::VectorXd a = flatten(pred);
    const Eigen::VectorXd b = flatten(ref);
    const double v = (kind == "asc") ? asc(a, b) : apc(a, b);
    std::printf("%s,%.17g,%lld\n", kind.c_str(), v,
                static_cast<long long>(a.size()));
  } else {
    fail(ErrorCode::kInvalidArgument, "metrics: unknown kind " + kind);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxrig: volumetric animation numerics engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "emit a synthetic scene");
  std::uint64_t synth_seed = 0;
  int synth_size = 64, synth_parts = 1;
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--size", synth_size, "voxels per axis");
  synth->add_option("--parts", synth_parts, "number of parts");
  synth->add_option("--out", synth_out, "scene manifest path")->required();

  // render
  auto* rend = app.add_subcommand("render", "render a posed scene");
  std::string rend_scene, rend_poses, rend_prefix;
  int rend_samples = 128, rend_workers = 1;
  bool rend_no_bg = false;
  std::uint64_t rend_seed = 0;
  rend->add_option("--scene", rend_scene)->required();
  rend->add_option("--poses", rend_poses, "poses JSON (identity when omitted)");
  rend->add_option("--out-prefix", rend_prefix)->required();
  rend->add_option("--samples", rend_samples);
  rend->add_flag("--no-bg", rend_no_bg);
  rend->add_option("--seed", rend_seed);
  rend->add_option("--workers", rend_workers);

  // estimate-pose
  auto* est = app.add_subcommand("estimate-pose", "EPnP per part");
  std::string est_scene, est_kp, est_out;
  est->add_option("--scene", est_scene)->required();
  est->add_option("--keypoints", est_kp)->required();
  est->add_option("--out", est_out)->required();

  // animate
  auto* anim = app.add_subcommand("animate", "render a pose track");
  std::string anim_scene, anim_track, anim_prefix;
  double anim_yaw = 0.0;
  bool anim_filter = false;
  int anim_samples = 128, anim_workers = 1;
  std::uint64_t anim_seed = 0;
  anim->add_option("--scene", anim_scene)->required();
  anim->add_option("--driving-poses", anim_track)->required();
  anim->add_option("--novel-yaw", anim_yaw, "rotate about the cube center (rad)");
  anim->add_flag("--filter-distances", anim_filter);
  anim->add_option("--out-prefix", anim_prefix)->required();
  anim->add_option("--samples", anim_samples);
  anim->add_option("--seed", anim_seed);
  anim->add_option("--workers", anim_workers);

  // invert
  auto* inv = app.add_subcommand("invert", "scene inversion");
  std::string inv_targets, inv_init, inv_out, inv_trace;
  int inv_steps = 3000, inv_workers = 1, inv_samples = 128;
  std::uint64_t inv_seed = 0;
  inv->add_option("--targets", inv_targets)->required();
  inv->add_option("--init", inv_init)->required();
  inv->add_option("--steps", inv_steps);
  inv->add_option("--out", inv_out)->required();
  inv->add_option("--trace", inv_trace)->required();
  inv->add_option("--seed", inv_seed);
  inv->add_option("--workers", inv_workers);
  inv->add_option("--samples", inv_samples);

  // metrics
  auto* met = app.add_subcommand("metrics", "evaluation metrics to stdout");
  std::string met_pred, met_ref, met_mask, met_kind;
  met->add_option("--pred", met_pred)->required();
  met->add_option("--ref", met_ref)->required();
  met->add_option("--mask", met_mask);
  met->add_option("--kind", met_kind)->required()->check(
      CLI::IsMember({"pearson", "ayd", "asc", "apc"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_seed, synth_size, synth_parts, synth_out);
    if (rend->parsed()) {
      return run_render(rend_scene, rend_poses, rend_prefix, rend_samples,
                        rend_no_bg, rend_seed, rend_workers);
    }
    if (est->parsed()) return run_estimate_pose(est_scene, est_kp, est_out);
    if (anim->parsed()) {
      return run_animate(anim_scene, anim_track, anim_yaw, anim_filter,
                         anim_prefix, anim_samples, anim_seed, anim_workers);
    }
    if (inv->parsed()) {
      return run_invert(inv_targets, inv_init, inv_steps, inv_out, inv_trace,
                        inv_seed, inv_workers, inv_samples);
    }
    if (met->parsed()) return run_metrics(met_pred, met_ref, met_mask, met_kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
