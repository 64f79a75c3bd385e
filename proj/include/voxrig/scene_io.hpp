// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "voxrig/geometry.hpp"
#include "voxrig/image.hpp"
#include "voxrig/metrics.hpp"
#include "voxrig/skinning.hpp"
#include "voxrig/volume.hpp"

namespace voxrig {

// Everything needed to reproduce a rendering experiment: the canonical
// object, the fixed camera, the rendering cube, the shared per-part canonical
// keypoints, and (optionally) a ground-truth pose track.
struct Scene {
  CanonicalVolume volume;
  RenderCube cube;
  PinholeCamera camera;
  std::vector<Eigen::MatrixX3d> canonical_keypoints;  // one N_k x 3 block per part
  std::optional<PoseSequence> pose_track;
};

void validate(const Scene& scene);

// JSON manifest plus sibling raw float32 grid files (little endian,
// row-major [z][y][x][c], no header). Grid file names are derived from the
// manifest path and recorded in it.
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

// P6 PPM, 8-bit, byte = round(255 v) clamped; rgb must be finite in [0, 1].
void write_image(const Image& img, const std::string& path);
Image read_image(const std::string& path);

// Grayscale PFM ("Pf"), little endian, scale -1.0, bottom-up scanlines.
void write_depth(const Image& map, const std::string& path);
Image read_depth(const std::string& path);

enum class PartLayout { kOneHot, kSoft };

struct SynthSpec {
  int size = 16;
  int n_parts = 1;
  int blobs_per_part = 2;
  PartLayout layout = PartLayout::kOneHot;
  int track_frames = 8;
  int image_width = 256;
  int image_height = 256;
  double fov = 0.175;
};

// Deterministic Gaussian-blob scene with known ground truth; identical seeds
// give byte-identical scenes. Grid values are float32-exact so that scene
// round trips through disk are bit-exact.
Scene synth_scene(std::uint64_t seed, const SynthSpec& spec);

// Pose/keypoint interchange (JSON, row-major 3x4 matrices).
void save_poses(const PartPoseSet& poses, const std::string& path);
PartPoseSet load_poses(const std::string& path);
void save_pose_track(const PoseSequence& track, const std::string& path);
PoseSequence load_pose_track(const std::string& path);
std::vector<Eigen::MatrixX2d> load_keypoints2d(const std::string& path);
void save_keypoints2d(const std::vector<Eigen::MatrixX2d>& kps,
                      const std::string& path);

}  // namespace voxrig
