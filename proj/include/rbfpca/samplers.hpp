#pragma once

#include <Eigen/Dense>

#include "rbfpca/rng.hpp"

namespace rbfpca {

// Cholesky factor of a symmetric matrix, escalating a diagonal jitter of
// {1e-12, 1e-10, 1e-8} * trace/d before giving up with NonSpdMatrix.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& a,
                                     const char* context);

// x = mean + L z with z iid standard normal.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov, RngStream& rng);

// Draw from N(mean, prec^-1) given the lower Cholesky factor of the precision.
Eigen::VectorXd sample_mvn_precision_chol(const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& prec_chol_lower,
                                          RngStream& rng);

// One-sided truncated normal X ~ N(mean, sd^2) | X > lower.  Inverse-CDF on
// the upper tail for moderate truncation, translated-exponential rejection
// deep in the tail.
double truncated_normal_lower(double mean, double sd, double lower,
                              RngStream& rng);

// Positive-orthant truncated MVN via coordinate Gibbs on the precision matrix;
// `z` holds the starting point and is updated in place.
void tmvn_positive_gibbs(const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& prec, Eigen::VectorXd& z,
                         int sweeps, RngStream& rng);

// Convenience covariance-parameterized version; starts at
// max(mean_j, 0.1*sqrt(cov_jj)) unless `start` is supplied.
Eigen::VectorXd sample_tmvn_positive(const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov, RngStream& rng,
                                     int sweeps = 5,
                                     const Eigen::VectorXd* start = nullptr);

double sample_gamma(RngStream& rng, double shape);  // unit rate
double sample_gamma(RngStream& rng, double shape, double rate);
// Gamma(shape, rate) conditioned on X > lower: rejection while the tail mass
// is workable, inverse-CDF bisection when it underflows (< 1e-6).
double sample_gamma_truncated(RngStream& rng, double shape, double rate,
                              double lower);
double sample_chi2(RngStream& rng, double df);
double sample_beta(RngStream& rng, double a, double b);

// Bartlett decomposition; requires df > d-1.
Eigen::MatrixXd sample_wishart(RngStream& rng, double df,
                               const Eigen::MatrixXd& scale);
// Wishart with scale = inv_scale^-1 without forming the inverse explicitly.
Eigen::MatrixXd sample_wishart_inverse_scale(RngStream& rng, double df,
                                             const Eigen::MatrixXd& inv_scale);

// Exponential (Matern nu=1/2) covariance sigma2 * exp(-|s-t|/rho).
Eigen::MatrixXd matern_half_cov(const Eigen::VectorXd& grid, double sigma2,
                                double rho);

}  // namespace rbfpca
