#include "rbfpca/outlier.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rbfpca/special.hpp"

namespace rbfpca {

namespace {

double column_median(std::vector<double>& v) {
  const size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return 0.5 * (v[n / 2 - 1] + hi);
}

// Tukey bisquare weight on u = d / cutoff.
double bisquare_weight(double u) {
  if (u >= 1.0) return 0.0;
  const double s = 1.0 - u * u;
  return s * s;
}

// Gaussian consistency factor for the bisquare-weighted covariance: under
// N_K(0, I) the weighted second moment is gamma * I with
// gamma = E[w(sqrt(T)/c) T] / (K E[w(sqrt(T)/c)]), T ~ chi2_K; computed by
// composite Simpson on [0, c^2] (the weight vanishes beyond the cutoff).
double bisquare_consistency(int K, double cutoff) {
  const double c2 = cutoff * cutoff;
  const double log_norm = -0.5 * K * std::log(2.0) - std::lgamma(0.5 * K);
  auto integrand = [&](double t, bool with_t) {
    if (t <= 0.0) return 0.0;
    const double logpdf = log_norm + (0.5 * K - 1.0) * std::log(t) - 0.5 * t;
    const double w = bisquare_weight(std::sqrt(t) / cutoff);
    return w * std::exp(logpdf) * (with_t ? t : 1.0);
  };
  const int steps = 2048;
  const double h = c2 / steps;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < steps; ++j) {
    const double a = j * h, b = a + h, mid = a + 0.5 * h;
    num += (integrand(a, true) + 4.0 * integrand(mid, true) + integrand(b, true));
    den += (integrand(a, false) + 4.0 * integrand(mid, false) + integrand(b, false));
  }
  return num / (K * den);
}

// Cholesky with the documented ridge fallback; throws when even the ridge
// cannot restore positive definiteness.
Eigen::LLT<Eigen::MatrixXd> factor_scatter(Eigen::MatrixXd& scatter) {
  Eigen::LLT<Eigen::MatrixXd> llt(scatter);
  if (llt.info() == Eigen::Success) return llt;
  const long K = scatter.rows();
  double ridge = 1e-8 * scatter.trace() / double(K);
  if (!(ridge > 0.0)) ridge = 1e-12;
  warn("weighted scatter is rank-deficient; applying ridge " +
       std::to_string(ridge));
  scatter += ridge * Eigen::MatrixXd::Identity(K, K);
  llt.compute(scatter);
  if (llt.info() != Eigen::Success)
    throw SingularScatter("weighted scatter is singular even after ridging");
  return llt;
}

Eigen::VectorXd distances_from_llt(const Eigen::MatrixXd& scores,
                                   const Eigen::VectorXd& location,
                                   const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const long n = scores.rows();
  Eigen::VectorXd d(n);
  for (long i = 0; i < n; ++i) {
    const Eigen::VectorXd centered = scores.row(i).transpose() - location;
    d[i] = llt.matrixL().solve(centered).norm();
  }
  return d;
}

}  // namespace

RobustEstimate robust_location_scatter(const Eigen::MatrixXd& scores) {
  const long n = scores.rows(), K = scores.cols();
  if (K < 1) throw DomainError("score matrix has no columns");
  if (n <= K + 1)
    throw InsufficientData("need more than K + 1 rows for robust estimation");
  if (!scores.allFinite()) throw NonFiniteValue("scores contain non-finite values");

  RobustEstimate est;
  est.location.resize(K);
  est.scatter = Eigen::MatrixXd::Zero(K, K);
  std::vector<double> buf(static_cast<size_t>(n));
  for (long k = 0; k < K; ++k) {
    for (long i = 0; i < n; ++i) buf[size_t(i)] = scores(i, k);
    const double med = column_median(buf);
    est.location[k] = med;
    for (long i = 0; i < n; ++i) buf[size_t(i)] = std::abs(scores(i, k) - med);
    const double mad = 1.4826 * column_median(buf);  // scaled for normal consistency
    est.scatter(k, k) = std::max(mad * mad, 1e-12);
  }

  const double cutoff = std::sqrt(chi2_quantile(double(K), 0.975));
  const double consistency = bisquare_consistency(int(K), cutoff);

  for (int iter = 0; iter < 100; ++iter) {
    Eigen::MatrixXd scatter = est.scatter;
    const auto llt = factor_scatter(scatter);
    const Eigen::VectorXd d = distances_from_llt(scores, est.location, llt);

    Eigen::VectorXd wts(n);
    for (long i = 0; i < n; ++i) wts[i] = bisquare_weight(d[i] / cutoff);
    const double total = wts.sum();
    if (!(total > 0.0))
      throw SingularScatter("every observation received zero weight");

    const Eigen::VectorXd mu = (scores.transpose() * wts) / total;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(K, K);
    for (long i = 0; i < n; ++i) {
      const Eigen::VectorXd centered = scores.row(i).transpose() - mu;
      cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, wts[i]);
    }
    cov = Eigen::MatrixXd(cov.selfadjointView<Eigen::Lower>()) / (total * consistency);

    const double shift = (mu - est.location).norm() / (1.0 + mu.norm());
    const double turn = (cov - est.scatter).norm() / (1.0 + cov.norm());
    est.location = mu;
    est.scatter = cov;
    if (shift < 1e-8 && turn < 1e-8) break;
  }
  // leave a factorizable scatter behind even on the degenerate path
  Eigen::MatrixXd check = est.scatter;
  factor_scatter(check);
  est.scatter = check;
  return est;
}

Eigen::VectorXd mahalanobis_distances(const Eigen::MatrixXd& scores,
                                      const Eigen::VectorXd& location,
                                      const Eigen::MatrixXd& scatter) {
  if (scores.cols() != location.size())
    throw DimensionMismatch("scores and location differ in dimension");
  if (scatter.rows() != location.size() || scatter.cols() != location.size())
    throw DimensionMismatch("scatter does not match the location dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(scatter);
  if (llt.info() != Eigen::Success)
    throw NonSpdMatrix("scatter is not positive definite");
  return distances_from_llt(scores, location, llt);
}

FlagResult flag_outliers(const Eigen::VectorXd& distances, int K, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("level must lie in (0,1)");
  if (K < 1) throw DomainError("dimension must be positive");
  FlagResult out;
  out.threshold = chi2_quantile(double(K), level);
  out.flags.resize(size_t(distances.size()));
  for (long i = 0; i < distances.size(); ++i)
    out.flags[size_t(i)] = distances[i] * distances[i] > out.threshold ? 1 : 0;
  return out;
}

OutlierReport detect_outliers(const Eigen::MatrixXd& scores, double level) {
  OutlierReport report;
  report.level = level;
  report.estimator = robust_location_scatter(scores);
  report.distances =
      mahalanobis_distances(scores, report.estimator.location, report.estimator.scatter);
  FlagResult fr = flag_outliers(report.distances, int(scores.cols()), level);
  report.threshold = fr.threshold;
  report.flags = std::move(fr.flags);
  return report;
}

Eigen::VectorXd outlier_probability(const AsmcRun& run, const ModelWorkspace& ws,
                                    double level) {
  if (run.particles.empty()) throw EmptyDataset("particle population is empty");
  const long n = ws.n;
  const int K = ws.spec.K;
  const Eigen::VectorXd& grid = ws.support_grid;
  const Eigen::MatrixXd hu_eval = ws.basis.evaluate(grid) * ws.proj.U;

  Eigen::MatrixXd dense_y;
  if (ws.dense_layout) {
    dense_y.resize(n, ws.m);
    for (long i = 0; i < n; ++i) dense_y.row(i) = ws.y[size_t(i)].transpose();
  }

  Eigen::VectorXd prob = Eigen::VectorXd::Zero(n);
  for (size_t r = 0; r < run.particles.size(); ++r) {
    const ParticleState& p = run.particles[r];
    const Eigen::MatrixXd q_hat = particle_covariance(p, hu_eval);
    const FpcBasis fpc = eigen_fpca(q_hat, grid, K);

    Eigen::MatrixXd scores(n, K);
    if (ws.dense_layout) {
      scores = scores_dense(dense_y, fpc, grid);
    } else {
      for (long i = 0; i < n; ++i) {
        const int f = p.tau.empty() ? 0 : p.tau[size_t(i)];
        const Eigen::MatrixXd& prec = p.comp[size_t(f)].sigma_inv_i[size_t(i)];
        const Eigen::MatrixXd sigma =
            prec.llt().solve(Eigen::MatrixXd::Identity(prec.rows(), prec.rows()));
        scores.row(i) = pace_scores_one(ws.time_points(i), ws.y[size_t(i)], grid,
                                        q_hat, sigma, fpc)
                            .transpose();
      }
    }

    const OutlierReport rep = detect_outliers(scores, level);
    for (long i = 0; i < n; ++i)
      if (rep.flags[size_t(i)]) prob[i] += run.weights[long(r)];
  }
  return prob;
}

}  // namespace rbfpca
