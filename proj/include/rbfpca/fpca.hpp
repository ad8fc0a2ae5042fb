#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rbfpca/asmc.hpp"
#include "rbfpca/model.hpp"

namespace rbfpca {

// Trapezoid quadrature weights for a sorted (not necessarily equispaced) grid.
Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);

// Smallest value whose cumulative weight reaches q * total, after sorting.
double weighted_quantile(const Eigen::VectorXd& values, const Eigen::VectorXd& weights,
                         double q);

// Model-implied covariance surface of one particle on an evaluation design
// B = H(eval) U: a single component contributes B Omega B'; the mixture is
// the assignment-probability blend pi1 B Omega_0 B' + (1 - pi1) B Omega_1 B'
// (both components are mean-zero, so the blend is the marginal second moment).
Eigen::MatrixXd particle_covariance(const ParticleState& state,
                                    const Eigen::MatrixXd& hu_eval);

struct CovarianceSummary {
  Eigen::MatrixXd mean, lower, upper;  // g x g
};

// Weighted posterior mean and pointwise weighted quantile bands of the
// covariance surface over the final particle population.
CovarianceSummary posterior_covariance(const AsmcRun& run, const ModelWorkspace& ws,
                                       const Eigen::VectorXd& eval_grid,
                                       double level = 0.95);

struct FpcBasis {
  Eigen::VectorXd eigenvalues;    // K, nonincreasing, nonnegative
  Eigen::MatrixXd eigenfunctions; // g x K, unit quadrature norm, canonical sign
};

// Discretized Mercer eigenproblem: eigendecompose W^{1/2} C W^{1/2} with
// trapezoid weights W, map back by W^{-1/2}, clamp negative eigenvalues to
// zero, and fix each eigenfunction's sign (positive quadrature integral,
// falling back to a positive leading loading).
FpcBasis eigen_fpca(const Eigen::MatrixXd& cov, const Eigen::VectorXd& grid, int K);

// Fractions of retained spectral mass.
Eigen::VectorXd variance_explained(const Eigen::VectorXd& eigenvalues);

// Quadrature scores for dense curves: xi_ik = integral of phi_k * Y_i.
Eigen::MatrixXd scores_dense(const Eigen::MatrixXd& y, const FpcBasis& fpc,
                             const Eigen::VectorXd& grid);

// Conditional-expectation (PACE) score for one sparse curve:
// xi_k = lambda_k phi_k(t_i)' (Q(t_i, t_i) + Sigma_i + 1e-8 I)^{-1} y_i,
// with Q and phi carried from the support grid by bilinear/linear
// interpolation.
Eigen::VectorXd pace_scores_one(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& support_grid,
                                const Eigen::MatrixXd& q_hat,
                                const Eigen::MatrixXd& sigma_hat,
                                const FpcBasis& fpc);

// Posterior mean of each curve's error covariance (the assigned component's
// inverse precision, averaged under the particle weights).
std::vector<Eigen::MatrixXd> posterior_error_cov(const AsmcRun& run,
                                                 const ModelWorkspace& ws);

// PACE scores for every curve of a sparse-layout workspace.
Eigen::MatrixXd scores_sparse(const ModelWorkspace& ws, const AsmcRun& run,
                              const Eigen::MatrixXd& q_hat, const FpcBasis& fpc);

struct FpcBands {
  Eigen::MatrixXd lower, upper;  // g x K
};

// Pointwise credible bands for the eigenfunctions: each particle's surface is
// eigendecomposed, every eigenfunction sign-aligned to the posterior-mean
// eigenfunction, then weighted quantiles taken per grid point.
FpcBands fpc_credible_bands(const AsmcRun& run, const ModelWorkspace& ws,
                            const Eigen::VectorXd& eval_grid, int K,
                            double level = 0.95);

struct FpcaResult {
  Eigen::VectorXd grid;
  Eigen::MatrixXd cov_mean, cov_lower, cov_upper;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;
  Eigen::VectorXd var_explained;
  Eigen::MatrixXd scores;
  Eigen::MatrixXd fpc_lower, fpc_upper;
  double band_level = 0.95;
};

// Full posterior summary on the workspace's working grid: covariance surface
// with bands, leading-K eigenstructure, variance fractions, FPC scores
// (quadrature for dense data, conditional expectation for sparse), and
// eigenfunction bands.
FpcaResult analyze(const AsmcRun& run, const ModelWorkspace& ws,
                   double band_level = 0.95);

}  // namespace rbfpca
