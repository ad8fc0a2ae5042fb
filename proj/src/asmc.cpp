#include "rbfpca/asmc.hpp"

#include <cmath>
#include <string>

namespace rbfpca {

void validate_config(const AsmcConfig& cfg) {
  if (cfg.n_particles < 2)
    throw DomainError("n_particles must be at least 2, got " +
                      std::to_string(cfg.n_particles));
  if (!(cfg.rcess_threshold > 0.0 && cfg.rcess_threshold < 1.0))
    throw DomainError("rcess_threshold must lie in (0, 1)");
  if (!(cfg.resample_threshold > 0.0 && cfg.resample_threshold <= 1.0))
    throw DomainError("resample_threshold must lie in (0, 1]");
  if (cfg.max_iterations < 1) throw DomainError("max_iterations must be positive");
  if (cfg.threads < 1) throw DomainError("threads must be positive");
}

double rcess(const Eigen::VectorXd& weights, const Eigen::VectorXd& u) {
  if (weights.size() != u.size())
    throw DimensionMismatch("weights and increments differ in length");
  if (u.minCoeff() < 0.0) throw DomainError("negative incremental weight");
  const double num = weights.dot(u);
  const double den = weights.dot(u.cwiseProduct(u));
  if (den == 0.0)
    throw AllZeroIncrements("every weighted incremental weight is zero");
  return num * num / den;
}

namespace {

// rcess of the step delta from alpha_prev, with log-likelihoods centered by
// their weighted max so the largest incremental weight is exactly 1.
double step_rcess(const Eigen::VectorXd& weights, const Eigen::VectorXd& centered,
                  double delta) {
  return rcess(weights, (delta * centered.array()).exp().matrix());
}

}  // namespace

double find_next_alpha(const Eigen::VectorXd& weights, const Eigen::VectorXd& log_lik,
                       double alpha_prev, double iota) {
  if (!(alpha_prev >= 0.0 && alpha_prev < 1.0))
    throw DomainError("alpha_prev must lie in [0, 1)");
  if (!(iota > 0.0 && iota < 1.0)) throw DomainError("iota must lie in (0, 1)");
  if (!log_lik.allFinite())
    throw NonFiniteValue("log-likelihood vector contains a non-finite entry");

  double weighted_max = -std::numeric_limits<double>::infinity();
  for (long k = 0; k < weights.size(); ++k)
    if (weights[k] > 0.0) weighted_max = std::max(weighted_max, log_lik[k]);
  const Eigen::VectorXd centered = log_lik.array() - weighted_max;

  const double full = 1.0 - alpha_prev;
  if (step_rcess(weights, centered, full) >= iota) return 1.0;

  double lo = 0.0, hi = full;  // rcess(lo) = 1 > iota, rcess(hi) < iota
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (step_rcess(weights, centered, mid) >= iota ? lo : hi) = mid;
  }
  if (hi <= 1e-10) {
    warn("annealing step collapsed below 1e-10; advancing by 1e-10 "
         "(likelihood spread is too wide for the rcess threshold)");
    return alpha_prev + 1e-10;
  }
  return alpha_prev + 0.5 * (lo + hi);
}

double reweight_and_accumulate(Eigen::VectorXd& weights, const Eigen::VectorXd& log_lik,
                               double delta_alpha) {
  if (weights.size() != log_lik.size())
    throw DimensionMismatch("weights and log-likelihoods differ in length");
  if (delta_alpha < 0.0) throw DomainError("annealing increment must be nonnegative");
  if (delta_alpha == 0.0) return 0.0;

  const long n = weights.size();
  Eigen::VectorXd log_w(n);
  for (long k = 0; k < n; ++k) {
    log_w[k] = (weights[k] > 0.0)
                   ? std::log(weights[k]) + delta_alpha * log_lik[k]
                   : -std::numeric_limits<double>::infinity();
  }
  const double m = log_w.maxCoeff();
  if (!std::isfinite(m)) throw AllZeroIncrements("all particle weights are zero");
  double sum = 0.0;
  for (long k = 0; k < n; ++k) sum += std::exp(log_w[k] - m);
  const double increment = m + std::log(sum);

  for (long k = 0; k < n; ++k) weights[k] = std::exp(log_w[k] - increment);
  weights /= weights.sum();
  return increment;
}

double relative_ess(const Eigen::VectorXd& weights) {
  return 1.0 / (double(weights.size()) * weights.squaredNorm());
}

std::vector<long> systematic_resample_indices(const Eigen::VectorXd& weights,
                                              double offset, long n_out) {
  const long n = weights.size();
  if (n == 0) throw EmptyDataset("cannot resample an empty population");
  if (!(offset >= 0.0 && offset < 1.0))
    throw DomainError("resampling offset must lie in [0, 1)");
  if (n_out < 0) n_out = n;

  std::vector<long> idx(static_cast<size_t>(n_out));
  const double total = weights.sum();
  double cum = weights[0] / total;
  long i = 0;
  for (long j = 0; j < n_out; ++j) {
    const double p = (double(j) + offset) / double(n_out);
    while (i + 1 < n && cum <= p) {
      ++i;
      cum += weights[i] / total;
    }
    idx[size_t(j)] = i;
  }
  return idx;
}

namespace {

struct FpcaAsmcModel {
  using Particle = ParticleState;
  const ModelWorkspace* ws;

  Particle init_particle(RngStream& rng) const { return rbfpca::init_particle(*ws, rng); }
  double log_likelihood(const Particle& p) const {
    return rbfpca::log_likelihood(*ws, p);
  }
  void propagate(Particle& p, double alpha, RngStream& rng,
                 SweepDiagnostics* diag) const {
    gibbs_sweep(*ws, p, alpha, rng, diag);
  }
};

}  // namespace

AsmcRun run_asmc(const ModelWorkspace& ws, const AsmcConfig& cfg) {
  FpcaAsmcModel model{&ws};
  return run_asmc(model, cfg);
}

}  // namespace rbfpca
