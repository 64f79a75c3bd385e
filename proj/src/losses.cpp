// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/losses.hpp"

#include <cmath>

#include "voxrig/error.hpp"

namespace voxrig {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

Image downsample(const Image& img, int factor) {
  if (!power_of_two(factor)) {
    fail(ErrorCode::kInvalidArgument, "downsample: factor must be a power of two");
  }
  if (img.height % factor != 0 || img.width % factor != 0) {
    fail(ErrorCode::kIndivisibleSize, "downsample: size not divisible by factor");
  }
  if (factor == 1) return img;
  Image out(img.height / factor, img.width / factor, img.channels);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0;
        for (int dr = 0; dr < factor; ++dr) {
          for (int dc = 0; dc < factor; ++dc) {
            acc += img.at(r * factor + dr, c * factor + dc, ch);
          }
        }
        out.at(r, c, ch) = acc * inv;
      }
    }
  }
  return out;
}

double pyramid_reconstruction_loss(const Image& pred, const Image& target,
                                   const std::vector<int>& levels) {
  if (!pred.same_shape(target)) {
    fail(ErrorCode::kShapeMismatch, "pyramid_reconstruction_loss: shape mismatch");
  }
  double total = 0.0;
  for (int factor : levels) {
    const Image a = downsample(pred, factor);
    const Image b = downsample(target, factor);
    double level = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      level += std::abs(a.data[i] - b.data[i]);
    }
    total += level / static_cast<double>(a.data.size());
  }
  return total;
}

double background_loss(const Image& occupancy, const Image& mask) {
  if (!occupancy.same_shape(mask) || occupancy.channels != 1) {
    fail(ErrorCode::kShapeMismatch, "background_loss: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < occupancy.data.size(); ++i) {
    const double o = std::clamp(occupancy.data[i], 1e-6, 1.0 - 1e-6);
    const double b = mask.data[i];
    total -= (1.0 - b) * std::log(o) + b * std::log(1.0 - o);
  }
  return total / static_cast<double>(occupancy.data.size());
}

double equivariance_loss(const Eigen::MatrixX2d& k_orig,
                         const Eigen::MatrixX2d& k_warped,
                         const Eigen::Matrix<double, 2, 3>& affine) {
  if (k_orig.rows() != k_warped.rows()) {
    fail(ErrorCode::kShapeMismatch, "equivariance_loss: keypoint count mismatch");
  }
  const auto n = k_orig.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d mapped =
        affine.leftCols<2>() * k_orig.row(i).transpose() + affine.col(2);
    total += std::abs(mapped.x() - k_warped(i, 0)) +
             std::abs(mapped.y() - k_warped(i, 1));
  }
  return total / static_cast<double>(2 * n);
}

Image warp_affine(const Image& img, const Eigen::Matrix<double, 2, 3>& affine) {
  const Eigen::Matrix2d lin = affine.leftCols<2>();
  const double det = lin.determinant();
  if (std::abs(det) < 1e-12) {
    fail(ErrorCode::kSingularAffine, "warp_affine: affine is singular");
  }
  const Eigen::Matrix2d inv = lin.inverse();
  Image out(img.height, img.width, img.channels);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      // Inverse warp in pixel-center coordinates, zero outside.
      const Eigen::Vector2d dst(c + 0.5, r + 0.5);
      const Eigen::Vector2d src = inv * (dst - affine.col(2));
      const double x = src.x() - 0.5;
      const double y = src.y() - 0.5;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      const double fx = x - x0;
      const double fy = y - y0;
      for (int ch = 0; ch < img.channels; ++ch) {
        auto tap = [&](int xi, int yi) -> double {
          if (xi < 0 || yi < 0 || xi >= img.width || yi >= img.height) return 0.0;
          return img.at(yi, xi, ch);
        };
        out.at(r, c, ch) = (1 - fx) * (1 - fy) * tap(x0, y0) +
                           fx * (1 - fy) * tap(x0 + 1, y0) +
                           (1 - fx) * fy * tap(x0, y0 + 1) +
                           fx * fy * tap(x0 + 1, y0 + 1);
      }
    }
  }
  return out;
}

Eigen::VectorXd part_mean_density(const CanonicalVolume& vol) {
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(vol.n_parts);
  const std::int64_t n = vol.density.voxel_count();
  Eigen::VectorXd logits(vol.n_parts);
  for (std::int64_t v = 0; v < n; ++v) {
    for (int p = 0; p < vol.n_parts; ++p) {
      logits[p] = vol.lbs_logits.data[v * vol.n_parts + p];
    }
    softmax_inplace(logits);
    sigma += vol.density.data[v] * logits;
  }
  return sigma / static_cast<double>(n);
}

double init_loss(const PartPoseSet& poses, const Eigen::VectorXd& sigma_p,
                 double threshold) {
  const int n = poses.count();
  if (sigma_p.size() != n) {
    fail(ErrorCode::kShapeMismatch, "init_loss: sigma_p vs poses");
  }
  Eigen::Matrix<double, 3, 4> target;
  if (n == 1) {
    target = RigidTransform::identity().matrix34();
  } else {
    int p_max = 0;
    sigma_p.maxCoeff(&p_max);
    target = poses.poses[p_max].matrix34();
  }
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    const double hinge = std::max(0.0, threshold - sigma_p[p]);
    if (hinge == 0.0) continue;
    total += hinge * (poses.poses[p].matrix34() - target).cwiseAbs().sum();
  }
  return total;
}

double geometry_reg_loss(const CanonicalVolume& vol,
                         const CanonicalVolume& vol_ref) {
  if (vol.size() != vol_ref.size() || vol.n_parts != vol_ref.n_parts) {
    fail(ErrorCode::kShapeMismatch, "geometry_reg_loss: shape mismatch");
  }
  double dens = 0.0;
  for (std::size_t i = 0; i < vol.density.data.size(); ++i) {
    dens += std::abs(vol.density.data[i] - vol_ref.density.data[i]);
  }
  double lbs = 0.0;
  for (std::size_t i = 0; i < vol.lbs_logits.data.size(); ++i) {
    lbs += std::abs(vol.lbs_logits.data[i] - vol_ref.lbs_logits.data[i]);
  }
  return dens / static_cast<double>(vol.density.data.size()) +
         lbs / static_cast<double>(vol.lbs_logits.data.size());
}

}  // namespace voxrig
