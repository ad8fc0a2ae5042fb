#include "rbfpca/gibbs.hpp"

#include <cmath>
#include <limits>

#include "rbfpca/common.hpp"
#include "rbfpca/samplers.hpp"
#include "rbfpca/special.hpp"

namespace rbfpca {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool is_assigned(const ParticleState& state, int f, long i) {
  if (state.tau.empty()) return f == 0;
  return state.tau[static_cast<size_t>(i)] == f;
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw DomainError("annealing exponent must lie in [0,1]");
}

const Eigen::VectorXd& d_of(const ComponentState& c, bool dense, long i) {
  return dense ? c.d : c.d_i[static_cast<size_t>(i)];
}

const Eigen::MatrixXd& sigma_inv_of(const ComponentState& c, bool dense, long i) {
  return dense ? c.sigma_inv : c.sigma_inv_i[static_cast<size_t>(i)];
}

}  // namespace

void update_beta(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
                 RngStream& rng) {
  check_alpha(alpha);
  auto& c = state.comp[static_cast<size_t>(f)];
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(ws.spec.K);

  // Dense layout shares Sigma across curves, so hoist the K x m projection.
  Eigen::MatrixXd M, G;
  if (ws.dense_layout) {
    M = ws.HU.transpose() * c.sigma_inv;
    G = M * ws.HU;
  }
  for (long i = 0; i < ws.n; ++i) {
    const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
    if (aw == 0.0) {
      c.beta.row(i) =
          sample_mvn_precision_chol(zero, c.omega_inv_chol, rng).transpose();
      continue;
    }
    const Eigen::VectorXd resid =
        ws.y[static_cast<size_t>(i)] -
        d_of(c, ws.dense_layout, i).cwiseProduct(c.z[static_cast<size_t>(i)]);
    Eigen::MatrixXd prec;
    Eigen::VectorXd rhs;
    if (ws.dense_layout) {
      prec = aw * G + c.omega_inv;
      rhs = aw * (M * resid);
    } else {
      const auto& HU = ws.HU_i[static_cast<size_t>(i)];
      const Eigen::MatrixXd Mi = HU.transpose() * c.sigma_inv_i[static_cast<size_t>(i)];
      prec = aw * (Mi * HU) + c.omega_inv;
      rhs = aw * (Mi * resid);
    }
    const Eigen::MatrixXd chol = cholesky_with_jitter(prec, "score conditional");
    const Eigen::VectorXd mean =
        chol.transpose().triangularView<Eigen::Upper>().solve(
            chol.triangularView<Eigen::Lower>().solve(rhs));
    c.beta.row(i) = sample_mvn_precision_chol(mean, chol, rng).transpose();
  }
}

void update_omega(const ModelWorkspace& ws, ParticleState& state, int f,
                  RngStream& rng) {
  auto& c = state.comp[static_cast<size_t>(f)];
  // Conjugate df nu + n_f (the prior layer is never annealed). Equation 15
  // prints nu + n + 1, which disagrees with the Wishart prior it updates:
  // with no curves the conditional must reduce to Wishart(nu, L^-1), and the
  // successive-conditional check fails under the extra unit of df.
  Eigen::MatrixXd scatter = Eigen::MatrixXd(ws.L.asDiagonal());
  double df = ws.hyper.nu;
  for (long i = 0; i < ws.n; ++i) {
    if (!is_assigned(state, f, i)) continue;
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(c.beta.row(i).transpose(), 1.0);
    df += 1.0;
  }
  scatter = scatter.selfadjointView<Eigen::Lower>();
  c.omega_inv = sample_wishart_inverse_scale(rng, df, scatter);
  refresh_omega_cache(c);
}

void update_z(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng) {
  check_alpha(alpha);
  auto& c = state.comp[static_cast<size_t>(f)];

  // Dense layout shares D Sigma^-1 D across curves.
  Eigen::MatrixXd M_z;
  if (ws.dense_layout) M_z = c.sigma_inv.cwiseProduct(c.d * c.d.transpose());

  for (long i = 0; i < ws.n; ++i) {
    auto& zi = c.z[static_cast<size_t>(i)];
    const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
    if (aw == 0.0) {
      for (long j = 0; j < zi.size(); ++j) zi[j] = std::abs(rng.normal());
      continue;
    }
    const auto& d = d_of(c, ws.dense_layout, i);
    const auto& sigma_inv = sigma_inv_of(c, ws.dense_layout, i);
    Eigen::MatrixXd prec = ws.dense_layout
                               ? Eigen::MatrixXd(aw * M_z)
                               : Eigen::MatrixXd(aw * sigma_inv.cwiseProduct(
                                                          d * d.transpose()));
    prec.diagonal().array() += 1.0;
    const Eigen::VectorXd resid =
        ws.y[static_cast<size_t>(i)] - ws.design(i) * c.beta.row(i).transpose();
    const Eigen::VectorXd a = aw * d.cwiseProduct(sigma_inv * resid);
    const Eigen::MatrixXd chol = cholesky_with_jitter(prec, "latent conditional");
    const Eigen::VectorXd mean =
        chol.transpose().triangularView<Eigen::Upper>().solve(
            chol.triangularView<Eigen::Lower>().solve(a));
    tmvn_positive_gibbs(mean, prec, zi, ws.spec.tmvn_sweeps, rng);
  }
}

void update_d(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng) {
  check_alpha(alpha);
  auto& c = state.comp[static_cast<size_t>(f)];
  const double gamma_inv = 1.0 / ws.hyper.gamma_diag;

  if (ws.dense_layout) {
    Eigen::MatrixXd S_z = Eigen::MatrixXd::Zero(ws.m, ws.m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(ws.m);
    for (long i = 0; i < ws.n; ++i) {
      const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
      if (aw == 0.0) continue;
      const auto& zi = c.z[static_cast<size_t>(i)];
      S_z.selfadjointView<Eigen::Lower>().rankUpdate(zi, aw);
      const Eigen::VectorXd resid =
          ws.y[static_cast<size_t>(i)] - ws.HU * c.beta.row(i).transpose();
      b += aw * zi.cwiseProduct(c.sigma_inv * resid);
    }
    S_z = S_z.selfadjointView<Eigen::Lower>();
    Eigen::MatrixXd B = c.sigma_inv.cwiseProduct(S_z);
    B.diagonal().array() += gamma_inv;
    const Eigen::MatrixXd chol = cholesky_with_jitter(B, "skewness conditional");
    const Eigen::VectorXd mean =
        chol.transpose().triangularView<Eigen::Upper>().solve(
            chol.triangularView<Eigen::Lower>().solve(b));
    c.d = sample_mvn_precision_chol(mean, chol, rng);
    return;
  }

  for (long i = 0; i < ws.n; ++i) {
    const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
    const long mi = ws.obs_dim(i);
    auto& di = c.d_i[static_cast<size_t>(i)];
    if (aw == 0.0) {
      const double sd = std::sqrt(ws.hyper.gamma_diag);
      for (long j = 0; j < mi; ++j) di[j] = sd * rng.normal();
      continue;
    }
    const auto& zi = c.z[static_cast<size_t>(i)];
    const auto& sigma_inv = c.sigma_inv_i[static_cast<size_t>(i)];
    Eigen::MatrixXd B = aw * sigma_inv.cwiseProduct(zi * zi.transpose());
    B.diagonal().array() += gamma_inv;
    const Eigen::VectorXd resid =
        ws.y[static_cast<size_t>(i)] - ws.design(i) * c.beta.row(i).transpose();
    const Eigen::VectorXd b = aw * zi.cwiseProduct(sigma_inv * resid);
    const Eigen::MatrixXd chol = cholesky_with_jitter(B, "skewness conditional");
    const Eigen::VectorXd mean =
        chol.transpose().triangularView<Eigen::Upper>().solve(
            chol.triangularView<Eigen::Lower>().solve(b));
    di = sample_mvn_precision_chol(mean, chol, rng);
  }
}

void update_sigma(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
                  RngStream& rng) {
  check_alpha(alpha);
  auto& c = state.comp[static_cast<size_t>(f)];

  if (ws.dense_layout) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(ws.m, ws.m);
    B.diagonal() = (2.0 * ws.hyper.kappa).cwiseInverse();
    double df = ws.hyper.two_r;
    for (long i = 0; i < ws.n; ++i) {
      const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
      if (aw == 0.0) continue;
      const Eigen::VectorXd e =
          ws.y[static_cast<size_t>(i)] - ws.HU * c.beta.row(i).transpose() -
          c.d.cwiseProduct(c.z[static_cast<size_t>(i)]);
      B.selfadjointView<Eigen::Lower>().rankUpdate(e, aw);
      df += alpha;
    }
    B = B.selfadjointView<Eigen::Lower>();
    const double floor = static_cast<double>(ws.m) - 1.0 + 1e-6;
    if (df <= static_cast<double>(ws.m) - 1.0) {
      warn("error-precision df raised to the Wishart floor");
      df = floor;
    }
    c.sigma_inv = sample_wishart_inverse_scale(rng, df, B);
    refresh_sigma_cache(c);
    return;
  }

  for (long i = 0; i < ws.n; ++i) {
    const double aw = is_assigned(state, f, i) ? alpha * c.w[i] : 0.0;
    const long mi = ws.obs_dim(i);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(mi, mi);
    B.diagonal() = (2.0 * ws.hyper.kappa_i[static_cast<size_t>(i)]).cwiseInverse();
    double df = ws.hyper.two_r_i[static_cast<size_t>(i)];
    if (aw != 0.0) {
      const Eigen::VectorXd e =
          ws.y[static_cast<size_t>(i)] - ws.design(i) * c.beta.row(i).transpose() -
          c.d_i[static_cast<size_t>(i)].cwiseProduct(c.z[static_cast<size_t>(i)]);
      B.selfadjointView<Eigen::Lower>().rankUpdate(e, aw);
      df += alpha;
    }
    B = B.selfadjointView<Eigen::Lower>();
    const double floor = static_cast<double>(mi) - 1.0 + 1e-6;
    if (df <= static_cast<double>(mi) - 1.0) {
      warn("error-precision df raised to the Wishart floor");
      df = floor;
    }
    c.sigma_inv_i[static_cast<size_t>(i)] = sample_wishart_inverse_scale(rng, df, B);
    refresh_sigma_cache(c, i);
  }
}

void update_w(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng) {
  check_alpha(alpha);
  auto& c = state.comp[static_cast<size_t>(f)];
  for (long i = 0; i < ws.n; ++i) {
    const double a = is_assigned(state, f, i) ? alpha : 0.0;
    const double mi = static_cast<double>(ws.obs_dim(i));
    const double half_nu = c.nu_w[i] / 2.0;
    c.w[i] = sample_gamma(rng, half_nu + a * mi / 2.0,
                          half_nu + a * mi * ws.s[i] / 2.0);
  }
}

void update_nu_w_mh(const ModelWorkspace& ws, ParticleState& state, int f,
                    RngStream& rng, SweepDiagnostics* diag) {
  auto& c = state.comp[static_cast<size_t>(f)];
  constexpr double step = 0.5;
  for (long i = 0; i < ws.n; ++i) {
    const double wi = c.w[i];
    // Conditional over nu given w_i: truncated-Gamma(1, 0.1) prior times
    // Gamma(w_i | nu/2, nu/2); random walk on log(nu - 2) with its Jacobian.
    const auto log_target = [wi](double nu) {
      const double h = nu / 2.0;
      return -0.1 * nu + h * std::log(h) - std::lgamma(h) +
             (h - 1.0) * std::log(wi) - h * wi;
    };
    const double cur = c.nu_w[i];
    const double prop = 2.0 + std::exp(std::log(cur - 2.0) + step * rng.normal());
    const double log_ratio = log_target(prop) - log_target(cur) +
                             std::log(prop - 2.0) - std::log(cur - 2.0);
    if (diag) ++diag->mh_proposals;
    if (std::log(rng.uniform()) < log_ratio) {
      c.nu_w[i] = prop;
      if (diag) ++diag->mh_accepts;
    }
  }
}

void update_mixture_weights(ParticleState& state, RngStream& rng) {
  long n1 = 0;
  for (int t : state.tau) n1 += t == 0;
  const long n2 = static_cast<long>(state.tau.size()) - n1;
  state.pi1 = sample_beta(rng, 1.0 + static_cast<double>(n1),
                          1.0 + static_cast<double>(n2));
}

namespace {

// alpha-tempered log density of curve i under component slot f.
double component_log_density(const ModelWorkspace& ws, const ParticleState& state,
                             int f, long i) {
  const auto& c = state.comp[static_cast<size_t>(f)];
  const double wi = c.w[i];
  const double mi = static_cast<double>(ws.obs_dim(i));
  const Eigen::VectorXd e =
      ws.y[static_cast<size_t>(i)] - ws.design(i) * c.beta.row(i).transpose() -
      d_of(c, ws.dense_layout, i).cwiseProduct(c.z[static_cast<size_t>(i)]);
  const auto& chol =
      ws.dense_layout ? c.sigma_inv_chol : c.sigma_inv_chol_i[static_cast<size_t>(i)];
  const double log_det =
      ws.dense_layout ? c.log_det_sigma_inv : c.log_det_sigma_inv_i[i];
  const double quad = wi * (chol.transpose() * e).squaredNorm();
  return 0.5 * (mi * (std::log(wi) - kLog2Pi) + log_det - quad);
}

}  // namespace

void update_assignments(const ModelWorkspace& ws, ParticleState& state, double alpha,
                        RngStream& rng) {
  check_alpha(alpha);
  for (long i = 0; i < ws.n; ++i) {
    const double log_a =
        std::log(state.pi1) + alpha * component_log_density(ws, state, 0, i);
    const double log_b =
        std::log(1.0 - state.pi1) + alpha * component_log_density(ws, state, 1, i);
    // P(tau = 0) = A / (A + B), drawn without leaving log space.
    double p0;
    if (log_a == -std::numeric_limits<double>::infinity()) p0 = 0.0;
    else if (log_b == -std::numeric_limits<double>::infinity()) p0 = 1.0;
    else p0 = 1.0 / (1.0 + std::exp(log_b - log_a));
    state.tau[static_cast<size_t>(i)] = rng.uniform() < p0 ? 0 : 1;
  }
}

void gibbs_sweep(const ModelWorkspace& ws, ParticleState& state, double alpha,
                 RngStream& rng, SweepDiagnostics* diag) {
  check_alpha(alpha);
  for (int f = 0; f < static_cast<int>(state.comp.size()); ++f) {
    update_beta(ws, state, f, alpha, rng);
    update_omega(ws, state, f, rng);
    update_z(ws, state, f, alpha, rng);
    update_d(ws, state, f, alpha, rng);
    update_sigma(ws, state, f, alpha, rng);
    if (state.kind[static_cast<size_t>(f)] == ComponentKind::st) {
      update_w(ws, state, f, alpha, rng);
      update_nu_w_mh(ws, state, f, rng, diag);
    }
  }
  if (ws.spec.variant == Variant::mm) {
    update_mixture_weights(state, rng);
    update_assignments(ws, state, alpha, rng);
    canonicalize_labels(state);
  }
}

double log_likelihood(const ModelWorkspace& ws, const ParticleState& state) {
  double total = 0.0;
  for (long i = 0; i < ws.n; ++i) {
    const int f = state.tau.empty() ? 0 : state.tau[static_cast<size_t>(i)];
    total += component_log_density(ws, state, f, i);
  }
  return total;
}

}  // namespace rbfpca
