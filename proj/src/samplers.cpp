#include "rbfpca/samplers.hpp"

#include <cmath>

#include "rbfpca/common.hpp"

namespace rbfpca {

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& a,
                                     const char* context) {
  if (a.rows() != a.cols()) throw DimensionMismatch("cholesky needs a square matrix");
  const double base = a.trace() / static_cast<double>(a.rows());
  static const double eps[] = {0.0, 1e-12, 1e-10, 1e-8};
  for (double e : eps) {
    Eigen::MatrixXd m = a;
    if (e > 0.0) m.diagonal().array() += e * base;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      if (e > 0.0)
        warn(std::string(context) + ": added diagonal jitter " +
             std::to_string(e) + "*trace/d for Cholesky");
      return llt.matrixL();
    }
  }
  throw NonSpdMatrix(std::string(context) +
                     ": matrix not positive definite within jitter budget");
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov, RngStream& rng) {
  if (cov.rows() != mean.size())
    throw DimensionMismatch("sample_mvn: mean/cov sizes disagree");
  Eigen::MatrixXd L = cholesky_with_jitter(cov, "sample_mvn");
  Eigen::VectorXd z(mean.size());
  for (long i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + L * z;
}

Eigen::VectorXd sample_mvn_precision_chol(const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& prec_chol_lower,
                                          RngStream& rng) {
  Eigen::VectorXd z(mean.size());
  for (long i = 0; i < z.size(); ++i) z[i] = rng.normal();
  // x = mean + L^-T z has covariance (L L')^-1
  return mean + prec_chol_lower.triangularView<Eigen::Lower>()
                    .transpose()
                    .solve(z);
}

double truncated_normal_lower(double mean, double sd, double lower,
                              RngStream& rng) {
  if (!(sd > 0.0)) throw DomainError("truncated_normal_lower needs sd > 0");
  const double a = (lower - mean) / sd;
  double x;
  if (a <= 5.0) {
    // X > a  <=>  upper-tail prob of X uniform on (0, q)
    const double q = normal_cdf_upper(a);
    x = normal_quantile_upper(q * rng.uniform());
  } else {
    // translated-exponential rejection (acceptance > 0.95 for a > 5)
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    int tries = 0;
    for (;;) {
      x = a + rng.exponential() / lambda;
      const double diff = x - lambda;
      if (std::log(rng.uniform()) <= -0.5 * diff * diff) break;
      if (++tries > 1000)
        throw IterationCap("truncated normal tail rejection stalled");
    }
  }
  return mean + sd * x;
}

void tmvn_positive_gibbs(const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& prec, Eigen::VectorXd& z,
                         int sweeps, RngStream& rng) {
  if (sweeps < 1) throw DomainError("tmvn_positive_gibbs needs sweeps >= 1");
  const long d = mean.size();
  if (prec.rows() != d || z.size() != d)
    throw DimensionMismatch("tmvn_positive_gibbs: sizes disagree");
  // rho tracks prec * (z - mean); each coordinate update is O(d)
  Eigen::VectorXd rho = prec * (z - mean);
  for (int s = 0; s < sweeps; ++s) {
    for (long j = 0; j < d; ++j) {
      const double pj = prec(j, j);
      if (!(pj > 0.0)) throw NonSpdMatrix("tmvn precision has nonpositive diagonal");
      const double cond_mean = z[j] - rho[j] / pj;
      const double znew =
          truncated_normal_lower(cond_mean, 1.0 / std::sqrt(pj), 0.0, rng);
      const double delta = znew - z[j];
      if (delta != 0.0) {
        rho.noalias() += delta * prec.col(j);
        z[j] = znew;
      }
    }
  }
}

Eigen::VectorXd sample_tmvn_positive(const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov, RngStream& rng,
                                     int sweeps, const Eigen::VectorXd* start) {
  const long d = mean.size();
  Eigen::MatrixXd L = cholesky_with_jitter(cov, "sample_tmvn_positive");
  Eigen::MatrixXd prec = L.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(d, d));
  prec = prec.transpose() * prec;  // cov^-1
  Eigen::VectorXd z(d);
  if (start) {
    z = *start;
    for (long j = 0; j < d; ++j)
      if (!(z[j] > 0.0)) throw DomainError("tmvn start must be positive");
  } else {
    for (long j = 0; j < d; ++j)
      z[j] = std::max(mean[j], 0.1 * std::sqrt(cov(j, j)));
  }
  tmvn_positive_gibbs(mean, prec, z, sweeps, rng);
  return z;
}

double sample_gamma(RngStream& rng, double shape) {
  if (!(shape > 0.0)) throw DomainError("sample_gamma needs shape > 0");
  if (shape < 1.0) {
    // boost trick: G(a) = G(a+1) * U^(1/a)
    const double g = sample_gamma(rng, shape + 1.0);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_gamma(RngStream& rng, double shape, double rate) {
  if (!(rate > 0.0)) throw DomainError("sample_gamma needs rate > 0");
  return sample_gamma(rng, shape) / rate;
}

double sample_gamma_truncated(RngStream& rng, double shape, double rate,
                              double lower) {
  if (lower <= 0.0) return sample_gamma(rng, shape, rate);
  const double tail = gamma_q(shape, rate * lower);
  if (tail >= 1e-6) {
    for (int tries = 0; tries < 200; ++tries) {
      double x = sample_gamma(rng, shape, rate);
      if (x > lower) return x;
    }
    // fall through: unlucky streak, finish exactly via the inverse CDF
  }
  // invert P(shape, rate*x) = 1 - tail*(1-u) on a bracket above `lower`
  const double u = rng.uniform();
  const double target = 1.0 - tail * (1.0 - u);
  double lo = lower, hi = std::max(2.0 * lower, lower + (shape + 1.0) / rate);
  int guard = 0;
  while (gamma_p(shape, rate * hi) < target) {
    hi *= 2.0;
    if (++guard > 200) throw NoRoot("truncated gamma bracket expansion failed");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (gamma_p(shape, rate * mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double sample_chi2(RngStream& rng, double df) {
  if (!(df > 0.0)) throw DomainError("sample_chi2 needs df > 0");
  return 2.0 * sample_gamma(rng, 0.5 * df);
}

double sample_beta(RngStream& rng, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("sample_beta needs a,b > 0");
  const double x = sample_gamma(rng, a);
  const double y = sample_gamma(rng, b);
  return x / (x + y);
}

namespace {

// Lower-triangular Bartlett factor: sqrt(chi2) diagonal, normal subdiagonal.
Eigen::MatrixXd bartlett_factor(RngStream& rng, double df, long d) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (long i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(sample_chi2(rng, df - static_cast<double>(i)));
    for (long j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return a;
}

}  // namespace

Eigen::MatrixXd sample_wishart(RngStream& rng, double df,
                               const Eigen::MatrixXd& scale) {
  const long d = scale.rows();
  if (scale.cols() != d) throw DimensionMismatch("sample_wishart: scale not square");
  if (!(df > static_cast<double>(d - 1)))
    throw InvalidDf("sample_wishart needs df > d-1");
  Eigen::MatrixXd L = cholesky_with_jitter(scale, "sample_wishart");
  Eigen::MatrixXd la = L * bartlett_factor(rng, df, d);
  Eigen::MatrixXd w = la * la.transpose();
  return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd sample_wishart_inverse_scale(RngStream& rng, double df,
                                             const Eigen::MatrixXd& inv_scale) {
  const long d = inv_scale.rows();
  if (inv_scale.cols() != d)
    throw DimensionMismatch("sample_wishart_inverse_scale: matrix not square");
  if (!(df > static_cast<double>(d - 1)))
    throw InvalidDf("sample_wishart_inverse_scale needs df > d-1");
  // scale = B^-1 and chol(B) = Lb  =>  T = Lb^-T satisfies T T' = scale
  Eigen::MatrixXd lb = cholesky_with_jitter(inv_scale, "sample_wishart_inverse_scale");
  Eigen::MatrixXd t = lb.triangularView<Eigen::Lower>()
                          .transpose()
                          .solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd ta = t * bartlett_factor(rng, df, d);
  Eigen::MatrixXd w = ta * ta.transpose();
  return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd matern_half_cov(const Eigen::VectorXd& grid, double sigma2,
                                double rho) {
  if (!(sigma2 > 0.0) || !(rho > 0.0))
    throw DomainError("matern_half_cov needs sigma2 > 0 and rho > 0");
  const long m = grid.size();
  Eigen::MatrixXd c(m, m);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j <= i; ++j) {
      c(i, j) = sigma2 * std::exp(-std::fabs(grid[i] - grid[j]) / rho);
      c(j, i) = c(i, j);
    }
  return c;
}

}  // namespace rbfpca
