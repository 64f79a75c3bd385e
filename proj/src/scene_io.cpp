// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/scene_io.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxrig/error.hpp"
#include "voxrig/rng.hpp"

namespace voxrig {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_stem(const std::string& path) {
  const std::string suffix = ".json";
  if (path.size() > suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return path.substr(0, path.size() - suffix.size());
  }
  return path;
}

void write_grid_file(const VoxelGrid& grid, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path.string());
  std::vector<float> buffer(grid.data.size());
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    buffer[i] = static_cast<float>(grid.data[i]);
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

VoxelGrid read_grid_file(const fs::path& path, int size, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "missing grid file: " + path.string());
  in.seekg(0, std::ios::end);
  const std::int64_t bytes = in.tellg();
  in.seekg(0, std::ios::beg);
  const std::int64_t expected =
      static_cast<std::int64_t>(size) * size * size * channels *
      static_cast<std::int64_t>(sizeof(float));
  if (bytes != expected) {
    fail(ErrorCode::kGridSizeMismatch,
         "grid file " + path.string() + " has " + std::to_string(bytes) +
             " bytes, expected " + std::to_string(expected));
  }
  std::vector<float> buffer(static_cast<std::size_t>(bytes) / sizeof(float));
  in.read(reinterpret_cast<char*>(buffer.data()), bytes);
  if (!in) fail(ErrorCode::kIo, "read failed: " + path.string());
  VoxelGrid grid(size, channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    grid.data[i] = static_cast<double>(buffer[i]);
  }
  return grid;
}

json vec3_to_json(const Eigen::Vector3d& v) { return json{v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    fail(ErrorCode::kMalformedManifest, "expected a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json pose_to_json(const RigidTransform& t) {
  json row = json::array();
  const Eigen::Matrix<double, 3, 4> m = t.matrix34();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
  }
  return row;
}

RigidTransform pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 12) {
    fail(ErrorCode::kMalformedManifest, "pose must be 12 numbers (row-major 3x4)");
  }
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = j[4 * r + c].get<double>();
    t.translation[r] = j[4 * r + 3].get<double>();
  }
  return t;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedManifest, path + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace

void validate(const Scene& scene) {
  validate(scene.volume);
  if (!is_valid(scene.camera)) fail(ErrorCode::kInvalidArgument, "scene: bad camera");
  if ((scene.cube.min.array() >= scene.cube.max.array()).any()) {
    fail(ErrorCode::kInvalidArgument, "scene: cube min must be < max");
  }
  if (static_cast<int>(scene.canonical_keypoints.size()) != scene.volume.n_parts) {
    fail(ErrorCode::kShapeMismatch, "scene: keypoint blocks vs n_parts");
  }
  for (const auto& block : scene.canonical_keypoints) {
    if (block.rows() < 1) fail(ErrorCode::kInvalidArgument, "scene: empty keypoint block");
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      const Eigen::Vector3d p = block.row(i).transpose();
      if (!p.allFinite() || (p.array() < scene.cube.min.array()).any() ||
          (p.array() > scene.cube.max.array()).any()) {
        fail(ErrorCode::kInvalidArgument,
             "scene: keypoints must lie inside the rendering cube");
      }
    }
  }
  if (scene.pose_track) {
    for (const auto& frame : scene.pose_track->frames) {
      if (frame.count() != scene.volume.n_parts) {
        fail(ErrorCode::kShapeMismatch, "scene: pose track vs n_parts");
      }
    }
  }
}

void save_scene(const Scene& scene, const std::string& path) {
  validate(scene);
  const std::string stem = manifest_stem(path);
  const fs::path dir = fs::path(path).parent_path();
  const std::string base = fs::path(stem).filename().string();

  json j;
  j["size"] = scene.volume.size();
  j["n_parts"] = scene.volume.n_parts;
  j["camera"] = {{"fov", scene.camera.fov},
                 {"width", scene.camera.width},
                 {"height", scene.camera.height}};
  j["cube"] = {{"min", vec3_to_json(scene.cube.min)},
               {"max", vec3_to_json(scene.cube.max)},
               {"texture_scale", scene.cube.texture_scale}};
  j["bg_color"] = vec3_to_json(scene.volume.bg_color);
  j["bg_density"] = scene.volume.bg_density;
  j["grids"] = {{"density", base + ".density.f32"},
                {"rgb", base + ".rgb.f32"},
                {"lbs", base + ".lbs.f32"}};
  json kps = json::array();
  for (const auto& block : scene.canonical_keypoints) {
    json part = json::array();
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      part.push_back(json{block(i, 0), block(i, 1), block(i, 2)});
    }
    kps.push_back(part);
  }
  j["keypoints"] = kps;
  if (scene.pose_track) {
    json track = json::array();
    for (const auto& frame : scene.pose_track->frames) {
      json fj = json::array();
      for (const auto& pose : frame.poses) fj.push_back(pose_to_json(pose));
      track.push_back(fj);
    }
    j["pose_track"] = track;
  }

  write_grid_file(scene.volume.density, fs::path(stem + ".density.f32"));
  write_grid_file(scene.volume.rgb, fs::path(stem + ".rgb.f32"));
  write_grid_file(scene.volume.lbs_logits, fs::path(stem + ".lbs.f32"));
  write_json_file(j, path);
  (void)dir;
}

Scene load_scene(const std::string& path) {
  const json j = load_json_file(path);
  Scene scene;
  try {
    const int size = j.at("size").get<int>();
    const int n_parts = j.at("n_parts").get<int>();
    if (size < 1 || n_parts < 1) {
      fail(ErrorCode::kMalformedManifest, "bad size or n_parts");
    }
    scene.camera.fov = j.at("camera").at("fov").get<double>();
    scene.camera.width = j.at("camera").at("width").get<int>();
    scene.camera.height = j.at("camera").at("height").get<int>();
    scene.cube.min = vec3_from_json(j.at("cube").at("min"));
    scene.cube.max = vec3_from_json(j.at("cube").at("max"));
    scene.cube.texture_scale = j.at("cube").at("texture_scale").get<double>();
    scene.volume.n_parts = n_parts;
    scene.volume.bg_color = vec3_from_json(j.at("bg_color"));
    scene.volume.bg_density = j.at("bg_density").get<double>();

    const fs::path dir = fs::path(path).parent_path();
    scene.volume.density =
        read_grid_file(dir / j.at("grids").at("density").get<std::string>(), size, 1);
    scene.volume.rgb =
        read_grid_file(dir / j.at("grids").at("rgb").get<std::string>(), size, 3);
    scene.volume.lbs_logits =
        read_grid_file(dir / j.at("grids").at("lbs").get<std::string>(), size, n_parts);

    for (const auto& part : j.at("keypoints")) {
      Eigen::MatrixX3d block(part.size(), 3);
      for (std::size_t i = 0; i < part.size(); ++i) {
        const Eigen::Vector3d p = vec3_from_json(part[i]);
        block.row(i) = p.transpose();
      }
      scene.canonical_keypoints.push_back(std::move(block));
    }
    if (j.contains("pose_track")) {
      PoseSequence track;
      for (const auto& fj : j.at("pose_track")) {
        PartPoseSet frame;
        for (const auto& pj : fj) frame.poses.push_back(pose_from_json(pj));
        track.frames.push_back(std::move(frame));
      }
      scene.pose_track = std::move(track);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedManifest, path + ": " + e.what());
  }
  validate(scene);
  return scene;
}

void write_image(const Image& img, const std::string& path) {
  if (img.channels != 3) fail(ErrorCode::kShapeMismatch, "write_image: need 3 channels");
  if (!img.all_finite()) fail(ErrorCode::kNonFinite, "write_image: non-finite pixels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(std::round(255.0 * img.at(r, c, ch)), 0.0, 255.0);
        row[static_cast<std::size_t>(c) * 3 + ch] = static_cast<unsigned char>(v);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

namespace {

// Reads one whitespace-delimited PNM token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open: " + path);
  if (pnm_token(in) != "P6") fail(ErrorCode::kIo, path + ": not a P6 PPM");
  const int width = std::stoi(pnm_token(in));
  const int height = std::stoi(pnm_token(in));
  const int maxval = std::stoi(pnm_token(in));
  if (width < 1 || height < 1 || maxval != 255) {
    fail(ErrorCode::kIo, path + ": unsupported PPM header");
  }
  Image img(height, width, 3);
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 3);
  for (int r = 0; r < height; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!in) fail(ErrorCode::kIo, path + ": truncated pixel data");
    for (int c = 0; c < width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        img.at(r, c, ch) = row[static_cast<std::size_t>(c) * 3 + ch] / 255.0;
      }
    }
  }
  return img;
}

void write_depth(const Image& map, const std::string& path) {
  if (map.channels != 1) fail(ErrorCode::kShapeMismatch, "write_depth: need 1 channel");
  if (!map.all_finite()) fail(ErrorCode::kNonFinite, "write_depth: non-finite values");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path);
  out << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(map.width));
  for (int r = map.height - 1; r >= 0; --r) {  // PFM scanlines are bottom-up
    for (int c = 0; c < map.width; ++c) row[c] = static_cast<float>(map.at(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

Image read_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open: " + path);
  if (pnm_token(in) != "Pf") fail(ErrorCode::kIo, path + ": not a grayscale PFM");
  const int width = std::stoi(pnm_token(in));
  const int height = std::stoi(pnm_token(in));
  const double scale = std::stod(pnm_token(in));
  if (width < 1 || height < 1 || scale >= 0.0) {
    fail(ErrorCode::kIo, path + ": unsupported PFM header (need little endian)");
  }
  Image img(height, width, 1);
  std::vector<float> row(static_cast<std::size_t>(width));
  for (int r = height - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) fail(ErrorCode::kIo, path + ": truncated pixel data");
    for (int c = 0; c < width; ++c) img.at(r, c) = static_cast<double>(row[c]);
  }
  return img;
}

namespace {

float f32(double v) { return static_cast<float>(v); }

}  // namespace

Scene synth_scene(std::uint64_t seed, const SynthSpec& spec) {
  if (spec.size < 2 || spec.n_parts < 1 || spec.blobs_per_part < 1 ||
      spec.track_frames < 0 || spec.image_width < 1 || spec.image_height < 1 ||
      !(spec.fov > 0.0 && spec.fov < kPi)) {
    fail(ErrorCode::kInvalidSpec, "synth_scene: bad spec");
  }
  Scene scene;
  scene.camera.fov = spec.fov;
  scene.camera.width = spec.image_width;
  scene.camera.height = spec.image_height;
  scene.volume = make_volume(spec.size, spec.n_parts);
  scene.volume.bg_density = 1e4;
  scene.volume.bg_color =
      Eigen::Vector3d(f32(0.2 + 0.6 * uniform01(rng_key(seed, 1, 0))),
                      f32(0.2 + 0.6 * uniform01(rng_key(seed, 1, 1))),
                      f32(0.2 + 0.6 * uniform01(rng_key(seed, 1, 2))));

  const int parts = spec.n_parts;
  const double slab = 2.0 / parts;  // per-part slab along texture x

  struct Blob {
    Eigen::Vector3d center;  // texture coordinates
    double radius = 0.2;
    double amplitude = 10.0;
    Eigen::Vector3d color;
    int part = 0;
  };
  std::vector<Blob> blobs;
  std::vector<Eigen::Vector3d> part_center(parts, Eigen::Vector3d::Zero());
  for (int p = 0; p < parts; ++p) {
    const double x_lo = -1.0 + p * slab;
    for (int b = 0; b < spec.blobs_per_part; ++b) {
      const std::uint64_t tag = rng_key(seed, 2, p, b);
      Blob blob;
      blob.part = p;
      blob.center.x() = x_lo + slab * (0.3 + 0.4 * uniform01(mix64(tag ^ 11)));
      blob.center.y() = -0.45 + 0.9 * uniform01(mix64(tag ^ 12));
      blob.center.z() = -0.45 + 0.9 * uniform01(mix64(tag ^ 13));
      blob.radius = (0.12 + 0.12 * uniform01(mix64(tag ^ 14))) * std::min(slab, 1.0);
      blob.amplitude = 6.0 + 8.0 * uniform01(mix64(tag ^ 15));
      blob.color = Eigen::Vector3d(0.1 + 0.8 * uniform01(mix64(tag ^ 16)),
                                   0.1 + 0.8 * uniform01(mix64(tag ^ 17)),
                                   0.1 + 0.8 * uniform01(mix64(tag ^ 18)));
      part_center[p] += blob.center / spec.blobs_per_part;
      blobs.push_back(blob);
    }
  }

  const int s = spec.size;
  for (int z = 0; z < s; ++z) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const Eigen::Vector3d tex(-1.0 + (2.0 * x + 1.0) / s,
                                  -1.0 + (2.0 * y + 1.0) / s,
                                  -1.0 + (2.0 * z + 1.0) / s);
        double density = 0.0;
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        for (const Blob& blob : blobs) {
          const double d2 = (tex - blob.center).squaredNorm();
          const double w = blob.amplitude *
                           std::exp(-d2 / (2.0 * blob.radius * blob.radius));
          density += w;
          color += w * blob.color;
        }
        scene.volume.density.at(x, y, z) =
            f32(density < 1e-4 ? 0.0 : density);
        if (density > 1e-12) color /= density;
        else color.setConstant(0.5);
        for (int ch = 0; ch < 3; ++ch) {
          scene.volume.rgb.at(x, y, z, ch) =
              f32(std::clamp(color[ch], 0.0, 1.0));
        }
        for (int p = 0; p < parts; ++p) {
          double logit;
          if (spec.layout == PartLayout::kOneHot) {
            const int owner =
                std::min(parts - 1, static_cast<int>((tex.x() + 1.0) / slab));
            logit = (owner == p) ? 20.0 : -20.0;
          } else {
            const double cx = -1.0 + (p + 0.5) * slab;
            logit = -10.0 * (tex.x() - cx) * (tex.x() - cx);
          }
          scene.volume.lbs_logits.at(x, y, z, p) = f32(logit);
        }
      }
    }
  }

  // Per-part 5^3 keypoint grid centered on the part, inside the cube.
  const Eigen::Vector3d cube_center = scene.cube.center();
  const Eigen::Vector3d cube_half = scene.cube.half_extent();
  for (int p = 0; p < parts; ++p) {
    const Eigen::Vector3d center_w = texture_to_world(scene.cube, part_center[p]);
    Eigen::Vector3d half = 0.25 * cube_half;
    Eigen::Vector3d lo = center_w - half;
    Eigen::Vector3d hi = center_w + half;
    for (int k = 0; k < 3; ++k) {  // keep the grid strictly inside the cube
      const double margin = 0.02 * cube_half[k];
      if (lo[k] < scene.cube.min[k] + margin) {
        const double shift = scene.cube.min[k] + margin - lo[k];
        lo[k] += shift;
        hi[k] += shift;
      }
      if (hi[k] > scene.cube.max[k] - margin) {
        const double shift = hi[k] - (scene.cube.max[k] - margin);
        lo[k] -= shift;
        hi[k] -= shift;
      }
    }
    Eigen::MatrixX3d grid(125, 3);
    int row = 0;
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        for (int c = 0; c < 5; ++c) {
          grid.row(row++) = Eigen::Vector3d(lo.x() + (hi.x() - lo.x()) * a / 4.0,
                                            lo.y() + (hi.y() - lo.y()) * b / 4.0,
                                            lo.z() + (hi.z() - lo.z()) * c / 4.0)
                                .transpose();
        }
      }
    }
    scene.canonical_keypoints.push_back(std::move(grid));
  }

  if (spec.track_frames > 0) {
    PoseSequence track;
    for (int f = 0; f < spec.track_frames; ++f) {
      PartPoseSet frame;
      const double phase = 2.0 * kPi * f / spec.track_frames;
      for (int p = 0; p < parts; ++p) {
        const double shift = 1.3 * p + 0.7 * uniform01(rng_key(seed, 3, p));
        const double yaw = 0.3 * std::sin(phase + shift);
        const Eigen::Vector3d pivot = texture_to_world(scene.cube, part_center[p]);
        RigidTransform pose = RigidTransform::rotate_about(
            RigidTransform::rotate_y(yaw).rotation, pivot);
        pose.translation +=
            Eigen::Vector3d(0.05 * std::sin(phase * 2.0 + shift),
                            0.05 * std::cos(phase + 2.0 * shift), 0.0);
        frame.poses.push_back(pose);
      }
      track.frames.push_back(std::move(frame));
    }
    scene.pose_track = std::move(track);
  }
  (void)cube_center;
  validate(scene);
  return scene;
}

void save_poses(const PartPoseSet& poses, const std::string& path) {
  json j;
  json arr = json::array();
  for (const auto& pose : poses.poses) arr.push_back(pose_to_json(pose));
  j["poses"] = arr;
  write_json_file(j, path);
}

PartPoseSet load_poses(const std::string& path) {
  const json j = load_json_file(path);
  PartPoseSet out;
  try {
    for (const auto& pj : j.at("poses")) out.poses.push_back(pose_from_json(pj));
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedManifest, path + ": " + e.what());
  }
  return out;
}

void save_pose_track(const PoseSequence& track, const std::string& path) {
  json j;
  json frames = json::array();
  for (const auto& frame : track.frames) {
    json fj = json::array();
    for (const auto& pose : frame.poses) fj.push_back(pose_to_json(pose));
    frames.push_back(fj);
  }
  j["frames"] = frames;
  write_json_file(j, path);
}

PoseSequence load_pose_track(const std::string& path) {
  const json j = load_json_file(path);
  PoseSequence out;
  try {
    for (const auto& fj : j.at("frames")) {
      PartPoseSet frame;
      for (const auto& pj : fj) frame.poses.push_back(pose_from_json(pj));
      out.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedManifest, path + ": " + e.what());
  }
  return out;
}

std::vector<Eigen::MatrixX2d> load_keypoints2d(const std::string& path) {
  const json j = load_json_file(path);
  std::vector<Eigen::MatrixX2d> out;
  try {
    for (const auto& part : j.at("keypoints")) {
      Eigen::MatrixX2d block(part.size(), 2);
      for (std::size_t i = 0; i < part.size(); ++i) {
        block(static_cast<Eigen::Index>(i), 0) = part[i][0].get<double>();
        block(static_cast<Eigen::Index>(i), 1) = part[i][1].get<double>();
      }
      out.push_back(std::move(block));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedManifest, path + ": " + e.what());
  }
  return out;
}

void save_keypoints2d(const std::vector<Eigen::MatrixX2d>& kps,
                      const std::string& path) {
  json j;
  json parts = json::array();
  for (const auto& block : kps) {
    json part = json::array();
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      part.push_back(json{block(i, 0), block(i, 1)});
    }
    parts.push_back(part);
  }
  j["keypoints"] = parts;
  write_json_file(j, path);
}

}  // namespace voxrig
