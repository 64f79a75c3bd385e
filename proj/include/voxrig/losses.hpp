// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <vector>

#include "voxrig/image.hpp"
#include "voxrig/skinning.hpp"
#include "voxrig/volume.hpp"

namespace voxrig {

inline constexpr double kInitDensityThreshold = 0.01;

// Box-filter mean over factor x factor blocks; factor must be a power of two
// dividing both image dimensions.
Image downsample(const Image& img, int factor);

// Sum over pyramid levels of the mean absolute pixel difference of the
// downsampled pair; levels default to {1, 2, 4, 8}.
double pyramid_reconstruction_loss(const Image& pred, const Image& target,
                                   const std::vector<int>& levels = {1, 2, 4, 8});

// Binary cross-entropy of the occupancy map against target 1 - B, with the
// occupancy clamped to [1e-6, 1 - 1e-6].
double background_loss(const Image& occupancy, const Image& mask);

// Mean L1 between affine-mapped original keypoints and the warped ones,
// averaged over all coordinates.
double equivariance_loss(const Eigen::MatrixX2d& k_orig,
                         const Eigen::MatrixX2d& k_warped,
                         const Eigen::Matrix<double, 2, 3>& affine);

// Inverse warp with bilinear sampling and zero padding.
Image warp_affine(const Image& img, const Eigen::Matrix<double, 2, 3>& affine);

// Per-part mean of density weighted by the canonical LBS weight.
Eigen::VectorXd part_mean_density(const CanonicalVolume& vol);

// Hinge that pulls parts with no density toward the densest part's pose
// (identity when there is a single part).
double init_loss(const PartPoseSet& poses, const Eigen::VectorXd& sigma_p,
                 double threshold = kInitDensityThreshold);

// Mean |density - density_ref| + mean |lbs_logits - lbs_logits_ref|.
double geometry_reg_loss(const CanonicalVolume& vol,
                         const CanonicalVolume& vol_ref);

}  // namespace voxrig
