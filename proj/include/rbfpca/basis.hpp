#pragma once

#include <Eigen/Dense>
#include <string>

namespace rbfpca {

// Shifted-Legendre design: H(:,p) is degree-p Legendre mapped from [lo,hi]
// onto [-1,1], scaled so every column of the construction-grid design has unit
// Euclidean norm.  evaluate() reuses the same mapping and scaling so that all
// evaluation grids sample the same continuous basis functions.
struct BasisSystem {
  Eigen::VectorXd grid;
  double lo = 0.0, hi = 1.0;
  int P = 0;
  Eigen::MatrixXd H;          // m x P
  Eigen::VectorXd col_scale;  // P

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& times) const;
};

BasisSystem build_basis(const Eigen::VectorXd& grid, int P);

// Eigenpairs of the prior covariance projected into basis-coefficient space:
//   Psi = (H'H)^-1 H' C H (H'H)^-1,  Psi = U diag(L) U'
// truncated to the leading K (descending), columns sign-canonicalized.
struct PriorProjection {
  Eigen::MatrixXd U;  // P x K, orthonormal
  Eigen::VectorXd L;  // K, positive (floored at 1e-10 * L_max)
};

PriorProjection build_prior_projection(const Eigen::MatrixXd& H,
                                       const Eigen::MatrixXd& prior_cov, int K);

// H_eval*U is the curve-space loading matrix; the surface is HU Omega HU',
// returned exactly symmetric.
Eigen::MatrixXd reconstruct_covariance(const Eigen::MatrixXd& hu_eval,
                                       const Eigen::MatrixXd& omega);

// Prior covariance kernel: a named closed form, or a gridded matrix (from
// file) interpolated bilinearly.
struct PriorCovSpec {
  enum class Kind { gauss3, minst, matern, matrix };
  Kind kind = Kind::gauss3;
  double sigma2 = 1.0, rho = 1.0;  // matern parameters
  std::string path;                // source path when loaded from file
  Eigen::VectorXd grid;            // matrix kind: grid the values live on
  Eigen::MatrixXd cov;             // matrix kind: symmetrized values

  // "gauss3" | "minst" | "matern:<sigma2>,<rho>" | "file:<path>"
  // (file contents are attached later via load_prior_cov_csv)
  static PriorCovSpec parse(const std::string& text);
  std::string describe() const;
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& eval_grid) const;
};

// piecewise-linear interpolation helpers (clamped at the boundary)
double interp_linear(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                     double x);
double interp_bilinear(const Eigen::VectorXd& grid, const Eigen::MatrixXd& m,
                       double s, double t);

}  // namespace rbfpca
