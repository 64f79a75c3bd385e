// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#include "voxrig/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <vector>

#include "voxrig/error.hpp"

namespace voxrig {

namespace {

constexpr double kPlanarEigenRatio = 1e-9;

struct ControlPoints {
  int count = 4;                     // 4, or 3 for planar configurations
  Eigen::Matrix<double, 4, 3> world; // rows are control points
};

ControlPoints choose_control_points(const Eigen::MatrixX3d& k3d) {
  const int n = static_cast<int>(k3d.rows());
  const Eigen::RowVector3d centroid = k3d.colwise().mean();
  const Eigen::MatrixX3d centered = k3d.rowwise() - centroid;
  const Eigen::Matrix3d cov = centered.transpose() * centered;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  // Ascending order from Eigen; read out descending.
  const Eigen::Vector3d evals = eig.eigenvalues().reverse();
  Eigen::Matrix3d axes;
  axes.col(0) = eig.eigenvectors().col(2);
  axes.col(1) = eig.eigenvectors().col(1);
  axes.col(2) = eig.eigenvectors().col(0);

  if (!(evals[0] > 0.0) || evals[1] < kPlanarEigenRatio * evals[0]) {
    fail(ErrorCode::kDegenerateConfiguration,
         "solve_epnp: keypoints are collinear or coincident");
  }

  ControlPoints ctrl;
  ctrl.count = (evals[2] < kPlanarEigenRatio * evals[0]) ? 3 : 4;
  ctrl.world.row(0) = centroid;
  for (int i = 1; i < ctrl.count; ++i) {
    const double k = std::sqrt(evals[i - 1] / n);
    ctrl.world.row(i) = centroid + k * axes.col(i - 1).transpose();
  }
  return ctrl;
}

// Barycentric coordinates of each point w.r.t. the control points; exact for
// 4 control points, least squares for the planar 3-point fallback.
Eigen::MatrixXd barycentric_coordinates(const Eigen::MatrixX3d& k3d,
                                        const ControlPoints& ctrl) {
  const int n = static_cast<int>(k3d.rows());
  const int m = ctrl.count;
  Eigen::MatrixXd alphas(n, m);
  Eigen::Matrix3d basis;  // columns c_i - c_0
  for (int i = 1; i < m; ++i) {
    basis.col(i - 1) = (ctrl.world.row(i) - ctrl.world.row(0)).transpose();
  }
  if (m == 4) {
    const Eigen::Matrix3d inv = basis.inverse();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d rhs =
          (k3d.row(i) - ctrl.world.row(0)).transpose();
      const Eigen::Vector3d a = inv * rhs;
      alphas(i, 1) = a[0];
      alphas(i, 2) = a[1];
      alphas(i, 3) = a[2];
      alphas(i, 0) = 1.0 - a.sum();
    }
  } else {
    const Eigen::Matrix<double, 3, 2> b2 = basis.leftCols<2>();
    const Eigen::Matrix2d gram = b2.transpose() * b2;
    const Eigen::Matrix2d inv = gram.inverse();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d rhs =
          (k3d.row(i) - ctrl.world.row(0)).transpose();
      const Eigen::Vector2d a = inv * (b2.transpose() * rhs);
      alphas(i, 1) = a[0];
      alphas(i, 2) = a[1];
      alphas(i, 0) = 1.0 - a.sum();
    }
  }
  return alphas;
}

// Null-space basis of the projection system, columns ordered by ascending
// eigenvalue of M^T M (the standard EPnP candidate vectors).
Eigen::MatrixXd candidate_basis(const Eigen::MatrixXd& alphas,
                                const Eigen::MatrixX2d& k2d,
                                const PinholeCamera& cam, int n_ctrl,
                                int n_basis) {
  const int n = static_cast<int>(alphas.rows());
  const double f = cam.focal();
  const double cx = cam.width / 2.0;
  const double cy = cam.height / 2.0;
  const int cols = 3 * n_ctrl;
  Eigen::MatrixXd m(2 * n, cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n_ctrl; ++j) {
      const double a = alphas(i, j);
      m(2 * i, 3 * j + 0) = a * f;
      m(2 * i, 3 * j + 1) = 0.0;
      m(2 * i, 3 * j + 2) = a * (cx - k2d(i, 0));
      m(2 * i + 1, 3 * j + 0) = 0.0;
      m(2 * i + 1, 3 * j + 1) = a * f;
      m(2 * i + 1, 3 * j + 2) = a * (cy - k2d(i, 1));
    }
  }
  const Eigen::MatrixXd mtm = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(mtm);
  Eigen::MatrixXd basis(cols, n_basis);
  for (int k = 0; k < n_basis; ++k) basis.col(k) = eig.eigenvectors().col(k);
  return basis;
}

struct DistanceSystem {
  std::vector<std::pair<int, int>> pairs;
  Eigen::VectorXd rho;        // squared control-point distances
  Eigen::MatrixXd l;          // rows per pair, columns per beta product
  int n_basis = 0;
};

// Beta-product column order for n basis vectors: (0,0), (0,1), (1,1), (0,2),
// (1,2), (2,2), (0,3), (1,3), (2,3), (3,3) — diagonal products carry weight
// 1, off-diagonal 2.
DistanceSystem build_distance_system(const ControlPoints& ctrl,
                                     const Eigen::MatrixXd& basis) {
  DistanceSystem sys;
  sys.n_basis = static_cast<int>(basis.cols());
  for (int i = 0; i < ctrl.count; ++i) {
    for (int j = i + 1; j < ctrl.count; ++j) sys.pairs.emplace_back(i, j);
  }
  const int n_pairs = static_cast<int>(sys.pairs.size());
  int n_prod = 0;
  for (int b = 0; b < sys.n_basis; ++b) n_prod += b + 1;
  sys.rho.resize(n_pairs);
  sys.l.resize(n_pairs, n_prod);
  for (int r = 0; r < n_pairs; ++r) {
    const auto [i, j] = sys.pairs[r];
    sys.rho[r] =
        (ctrl.world.row(i) - ctrl.world.row(j)).squaredNorm();
    std::vector<Eigen::Vector3d> dv(sys.n_basis);
    for (int b = 0; b < sys.n_basis; ++b) {
      dv[b] = basis.col(b).segment<3>(3 * i) - basis.col(b).segment<3>(3 * j);
    }
    int col = 0;
    for (int b = 0; b < sys.n_basis; ++b) {
      for (int a = 0; a <= b; ++a) {
        const double dot = dv[a].dot(dv[b]);
        sys.l(r, col++) = (a == b) ? dot : 2.0 * dot;
      }
    }
  }
  return sys;
}

int product_column(int a, int b) {  // a <= b
  return b * (b + 1) / 2 + a;
}

Eigen::VectorXd solve_ls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
}

// Initial betas for the 1-, 2- and 3-vector combinations, following the
// classic EPnP approximations.
Eigen::VectorXd betas_case(const DistanceSystem& sys, int n_vec) {
  Eigen::VectorXd betas = Eigen::VectorXd::Zero(sys.n_basis);
  if (n_vec == 1) {
    // Products (0,0), (0,1), (0,2), (0,3) are all linear in beta_0 beta_k.
    Eigen::MatrixXd a(sys.l.rows(), sys.n_basis);
    for (int k = 0; k < sys.n_basis; ++k) {
      a.col(k) = sys.l.col(product_column(0, k));
    }
    const Eigen::VectorXd sol = solve_ls(a, sys.rho);
    const double sign = (sol[0] < 0) ? -1.0 : 1.0;
    betas[0] = std::sqrt(std::abs(sol[0]));
    if (betas[0] > 0) {
      for (int k = 1; k < sys.n_basis; ++k) betas[k] = sign * sol[k] / betas[0];
    }
    return betas;
  }
  if (n_vec == 2) {
    Eigen::MatrixXd a(sys.l.rows(), 3);
    a.col(0) = sys.l.col(product_column(0, 0));
    a.col(1) = sys.l.col(product_column(0, 1));
    a.col(2) = sys.l.col(product_column(1, 1));
    const Eigen::VectorXd sol = solve_ls(a, sys.rho);
    if (sol[0] < 0) {
      betas[0] = std::sqrt(-sol[0]);
      betas[1] = (sol[2] < 0) ? std::sqrt(-sol[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(sol[0]);
      betas[1] = (sol[2] > 0) ? std::sqrt(sol[2]) : 0.0;
    }
    if (sol[1] < 0) betas[0] = -betas[0];
    return betas;
  }
  // n_vec == 3
  Eigen::MatrixXd a(sys.l.rows(), 5);
  a.col(0) = sys.l.col(product_column(0, 0));
  a.col(1) = sys.l.col(product_column(0, 1));
  a.col(2) = sys.l.col(product_column(1, 1));
  a.col(3) = sys.l.col(product_column(0, 2));
  a.col(4) = sys.l.col(product_column(1, 2));
  const Eigen::VectorXd sol = solve_ls(a, sys.rho);
  if (sol[0] < 0) {
    betas[0] = std::sqrt(-sol[0]);
    betas[1] = (sol[2] < 0) ? std::sqrt(-sol[2]) : 0.0;
  } else {
    betas[0] = std::sqrt(sol[0]);
    betas[1] = (sol[2] > 0) ? std::sqrt(sol[2]) : 0.0;
  }
  if (sol[1] < 0) betas[0] = -betas[0];
  betas[2] = (betas[0] != 0.0) ? sol[3] / betas[0] : 0.0;
  return betas;
}

// Gauss-Newton on the inter-control-point distance residuals.
void refine_betas(const DistanceSystem& sys, int iterations,
                  Eigen::VectorXd& betas) {
  const int n_pairs = static_cast<int>(sys.rho.size());
  const int nb = sys.n_basis;
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd jac(n_pairs, nb);
    Eigen::VectorXd res(n_pairs);
    for (int r = 0; r < n_pairs; ++r) {
      // dist = sum_{a<=b} L(r, ab) beta_a beta_b; the off-diagonal 2x is
      // already folded into those columns.
      double dist = 0.0;
      for (int b = 0; b < nb; ++b) {
        for (int a = 0; a <= b; ++a) {
          dist += sys.l(r, product_column(a, b)) * betas[a] * betas[b];
        }
      }
      res[r] = dist - sys.rho[r];
      for (int k = 0; k < nb; ++k) {
        double d = 2.0 * sys.l(r, product_column(k, k)) * betas[k];
        for (int a = 0; a < nb; ++a) {
          if (a == k) continue;
          const int lo = std::min(a, k), hi = std::max(a, k);
          d += sys.l(r, product_column(lo, hi)) * betas[a];
        }
        jac(r, k) = d;
      }
    }
    const Eigen::VectorXd delta = solve_ls(jac, -res);
    if (!delta.allFinite()) break;
    betas += delta;
    if (delta.norm() < 1e-14) break;
  }
}

struct Candidate {
  RigidTransform pose;
  double error = std::numeric_limits<double>::infinity();
  bool valid = false;
};

// Internal reprojection error that treats points behind the camera as an
// infinite-error candidate instead of throwing.
double candidate_error(const Eigen::MatrixX3d& k3d, const Eigen::MatrixX2d& k2d,
                       const RigidTransform& pose, const PinholeCamera& cam) {
  const int n = static_cast<int>(k3d.rows());
  const double f = cam.focal();
  const double cx = cam.width / 2.0;
  const double cy = cam.height / 2.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p = pose(k3d.row(i).transpose());
    if (!(p.z() > 1e-9)) return std::numeric_limits<double>::infinity();
    const double u = f * p.x() / p.z() + cx;
    const double v = f * p.y() / p.z() + cy;
    total += std::abs(k2d(i, 0) - u) + std::abs(k2d(i, 1) - v);
  }
  return total / n;
}

Candidate pose_from_betas(const Eigen::MatrixX3d& k3d,
                          const Eigen::MatrixX2d& k2d,
                          const PinholeCamera& cam, const ControlPoints& ctrl,
                          const Eigen::MatrixXd& alphas,
                          const Eigen::MatrixXd& basis,
                          const Eigen::VectorXd& betas) {
  Candidate cand;
  const int m = ctrl.count;
  const int n = static_cast<int>(k3d.rows());
  Eigen::MatrixXd ccs(m, 3);  // control points in camera frame
  Eigen::VectorXd flat = basis * betas;
  for (int j = 0; j < m; ++j) ccs.row(j) = flat.segment<3>(3 * j).transpose();

  Eigen::MatrixXd pcs = alphas * ccs;  // points in camera frame
  double zsum = pcs.col(2).sum();
  if (zsum < 0) {
    ccs = -ccs;
    pcs = -pcs;
    zsum = -zsum;
  }
  if (!(zsum > 0.0) || !pcs.allFinite()) return cand;

  // Closed-form rigid alignment world -> camera (centroids + SVD of the
  // cross covariance, det corrected).
  const Eigen::RowVector3d pc0 = pcs.colwise().mean();
  const Eigen::RowVector3d pw0 = k3d.colwise().mean();
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    h += (pcs.row(i) - pc0).transpose() * (k3d.row(i) - pw0);
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }
  const Eigen::Vector3d t = pc0.transpose() - r * pw0.transpose();

  cand.pose = {r, t};
  cand.error = candidate_error(k3d, k2d, cand.pose, cam);
  cand.valid = std::isfinite(cand.error);
  return cand;
}

}  // namespace

RigidTransform solve_epnp(const KeypointCorrespondence& corr,
                          const PinholeCamera& cam, const EpnpOptions& opts) {
  const int n = static_cast<int>(corr.k3d.rows());
  if (n < 6 || corr.k2d.rows() != n) {
    fail(ErrorCode::kInvalidArgument,
         "solve_epnp: need >= 6 matched correspondences");
  }
  if (!corr.k3d.allFinite() || !corr.k2d.allFinite()) {
    fail(ErrorCode::kInvalidArgument, "solve_epnp: non-finite input");
  }

  const ControlPoints ctrl = choose_control_points(corr.k3d);
  const Eigen::MatrixXd alphas = barycentric_coordinates(corr.k3d, ctrl);
  const int n_basis = (ctrl.count == 4) ? 4 : 3;
  const Eigen::MatrixXd basis =
      candidate_basis(alphas, corr.k2d, cam, ctrl.count, n_basis);
  const DistanceSystem sys = build_distance_system(ctrl, basis);

  const int max_case = (ctrl.count == 4) ? 3 : 2;
  Candidate best;
  bool any_frontal = false;
  for (int n_vec = 1; n_vec <= max_case; ++n_vec) {
    Eigen::VectorXd betas = betas_case(sys, n_vec);
    if (opts.gauss_newton) refine_betas(sys, opts.gn_iterations, betas);
    const Candidate cand =
        pose_from_betas(corr.k3d, corr.k2d, cam, ctrl, alphas, basis, betas);
    if (!cand.valid) continue;
    any_frontal = true;
    if (cand.error < best.error) best = cand;  // ties keep the earlier case
  }
  if (!any_frontal) {
    fail(ErrorCode::kBehindCamera,
         "solve_epnp: no candidate places the points in front of the camera");
  }
  return best.pose;
}

double reprojection_error(const KeypointCorrespondence& corr,
                          const RigidTransform& pose,
                          const PinholeCamera& cam) {
  const int n = static_cast<int>(corr.k3d.rows());
  if (corr.k2d.rows() != n || n == 0) {
    fail(ErrorCode::kShapeMismatch, "reprojection_error: shape mismatch");
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d uv =
        project_point(cam, Eigen::Vector3d(pose(corr.k3d.row(i).transpose())));
    total += std::abs(corr.k2d(i, 0) - uv.x()) + std::abs(corr.k2d(i, 1) - uv.y());
  }
  return total / n;
}

Eigen::Matrix<double, 6, 1> pose_parameters(const RigidTransform& pose) {
  Eigen::Matrix<double, 6, 1> p;
  p.head<3>() = rotation_log(Eigen::Matrix3d(pose.rotation));
  p.tail<3>() = pose.translation;
  return p;
}

Eigen::MatrixXd pose_jacobian_fd(const KeypointCorrespondence& corr,
                                 const PinholeCamera& cam, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidStep, "pose_jacobian_fd: eps must be > 0");
  const int n = static_cast<int>(corr.k3d.rows());
  Eigen::MatrixXd jac(6, 2 * n);
  KeypointCorrespondence work = corr;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double saved = work.k2d(i, c);
      work.k2d(i, c) = saved + eps;
      const Eigen::Matrix<double, 6, 1> plus =
          pose_parameters(solve_epnp(work, cam));
      work.k2d(i, c) = saved - eps;
      const Eigen::Matrix<double, 6, 1> minus =
          pose_parameters(solve_epnp(work, cam));
      work.k2d(i, c) = saved;
      jac.col(2 * i + c) = (plus - minus) / (2.0 * eps);
    }
  }
  return jac;
}

}  // namespace voxrig
