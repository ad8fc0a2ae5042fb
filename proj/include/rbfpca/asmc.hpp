#pragma once

#include <Eigen/Dense>
#include <concepts>
#include <cstdint>
#include <utility>
#include <vector>

#include "rbfpca/common.hpp"
#include "rbfpca/gibbs.hpp"
#include "rbfpca/model.hpp"
#include "rbfpca/parallel.hpp"
#include "rbfpca/rng.hpp"

namespace rbfpca {

struct AsmcConfig {
  long n_particles = 200;
  double rcess_threshold = 0.9;    // iota: annealing step selector
  double resample_threshold = 0.5; // varsigma: rESS trigger
  long max_iterations = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
};

void validate_config(const AsmcConfig& cfg);

// One line per annealing iteration, in order.
struct AsmcRecord {
  long iteration = 0;
  double alpha = 0.0;
  double ress = 1.0;
  bool resampled = false;
  double mh_acceptance = 0.0;
  double log_evidence = 0.0;  // running total after this iteration
};

template <class P>
struct AsmcResult {
  std::vector<P> particles;
  Eigen::VectorXd weights;       // normalized, sums to 1
  std::vector<double> schedule;  // alpha_0 = 0 through alpha_R = 1
  double log_evidence = 0.0;
  std::vector<AsmcRecord> diagnostics;
};

// Relative conditional effective sample size (sum W u)^2 / sum W u^2 of the
// incremental weights u under current normalized weights W.
double rcess(const Eigen::VectorXd& weights, const Eigen::VectorXd& u);

// Largest annealing exponent in (alpha_prev, 1] whose incremental weights keep
// rcess >= iota; bisection to 1e-10 on log-likelihoods centered by their
// weighted maximum. Returns 1 when even the full remaining step satisfies the
// threshold; degenerate brackets warn and advance by 1e-10.
double find_next_alpha(const Eigen::VectorXd& weights, const Eigen::VectorXd& log_lik,
                       double alpha_prev, double iota);

// Multiplies weights by exp(delta_alpha * log_lik), renormalizes in place, and
// returns the log evidence increment log sum_k W_k exp(delta_alpha ll_k)
// evaluated with the pre-update weights.
double reweight_and_accumulate(Eigen::VectorXd& weights, const Eigen::VectorXd& log_lik,
                               double delta_alpha);

// Ancestor index for each of n_out strata at the given uniform offset; counts
// per ancestor differ from n_out * W_k by less than one.
std::vector<long> systematic_resample_indices(const Eigen::VectorXd& weights,
                                              double offset, long n_out = -1);

double relative_ess(const Eigen::VectorXd& weights);

template <class P>
void resample_systematic(std::vector<P>& particles, Eigen::VectorXd& weights,
                         RngStream& rng) {
  const auto idx = systematic_resample_indices(weights, rng.uniform());
  std::vector<P> next;
  next.reserve(idx.size());
  for (long j : idx) next.push_back(particles[size_t(j)]);
  particles = std::move(next);
  weights.setConstant(1.0 / double(weights.size()));
}

// Any target the annealed sampler can traverse: draw a fresh particle from the
// prior, score the data under the particle, and apply a pi_alpha-invariant
// transition. The FPCA model satisfies this; tests use closed-form toys.
template <class M>
concept AnnealedModel = requires(const M model, typename M::Particle& p,
                                 RngStream& rng, SweepDiagnostics* diag) {
  { model.init_particle(rng) } -> std::same_as<typename M::Particle>;
  { model.log_likelihood(std::as_const(p)) } -> std::convertible_to<double>;
  { model.propagate(p, 0.5, rng, diag) };
};

// Adaptive annealed SMC: repeat {select alpha by rcess, reweight and
// accumulate evidence, propagate every particle once at the new alpha,
// resample when rESS drops below the threshold} until alpha reaches 1.
// Per-particle RNG streams are keyed (seed, particle, iteration, site) and all
// reductions run in particle-index order, so serial and threaded execution
// produce bit-identical results.
template <AnnealedModel M>
AsmcResult<typename M::Particle> run_asmc(const M& model, const AsmcConfig& cfg) {
  validate_config(cfg);
  const long n = cfg.n_particles;

  AsmcResult<typename M::Particle> run;
  run.particles.resize(size_t(n));
  parallel_for(n, cfg.threads, [&](long k) {
    RngStream rng(cfg.seed, std::uint64_t(k), 0, Site::init);
    run.particles[size_t(k)] = model.init_particle(rng);
  });
  run.weights = Eigen::VectorXd::Constant(n, 1.0 / double(n));
  run.schedule.push_back(0.0);

  Eigen::VectorXd log_lik(n);
  double alpha = 0.0;
  for (long r = 1; alpha < 1.0; ++r) {
    if (r > cfg.max_iterations)
      throw IterationCap("annealing schedule did not reach 1 within " +
                         std::to_string(cfg.max_iterations) + " iterations");
    parallel_for(n, cfg.threads, [&](long k) {
      log_lik[k] = model.log_likelihood(run.particles[size_t(k)]);
    });
    const double alpha_new =
        find_next_alpha(run.weights, log_lik, alpha, cfg.rcess_threshold);
    run.log_evidence +=
        reweight_and_accumulate(run.weights, log_lik, alpha_new - alpha);

    std::vector<SweepDiagnostics> sweep_diag(static_cast<size_t>(n));
    parallel_for(n, cfg.threads, [&](long k) {
      RngStream rng(cfg.seed, std::uint64_t(k), std::uint64_t(r), Site::propagate);
      model.propagate(run.particles[size_t(k)], alpha_new, rng,
                      &sweep_diag[size_t(k)]);
    });
    SweepDiagnostics total;
    for (const auto& d : sweep_diag) {
      total.mh_proposals += d.mh_proposals;
      total.mh_accepts += d.mh_accepts;
    }

    const double ress = relative_ess(run.weights);
    bool resampled = false;
    if (alpha_new < 1.0 && ress < cfg.resample_threshold) {
      RngStream rng(cfg.seed, 0, std::uint64_t(r), Site::resample);
      resample_systematic(run.particles, run.weights, rng);
      resampled = true;
    }

    run.schedule.push_back(alpha_new);
    run.diagnostics.push_back({r, alpha_new, ress, resampled,
                               total.acceptance_rate(), run.log_evidence});
    alpha = alpha_new;
  }
  return run;
}

using AsmcRun = AsmcResult<ParticleState>;

// The concrete model: annealed Gibbs sweeps over a built workspace.
AsmcRun run_asmc(const ModelWorkspace& ws, const AsmcConfig& cfg);

}  // namespace rbfpca
