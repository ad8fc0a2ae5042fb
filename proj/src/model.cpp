#include "rbfpca/model.hpp"

#include <algorithm>
#include <cmath>

#include "rbfpca/common.hpp"
#include "rbfpca/samplers.hpp"

namespace rbfpca {

Variant parse_variant(const std::string& name) {
  if (name == "sn") return Variant::sn;
  if (name == "st") return Variant::st;
  if (name == "mm") return Variant::mm;
  throw UnknownKey("unknown model variant '" + name + "' (expected sn, st, or mm)");
}

std::string describe(Variant v) {
  switch (v) {
    case Variant::sn: return "sn";
    case Variant::st: return "st";
    default: return "mm";
  }
}

namespace {

double squared_range_floor(double r2, double global_r2) {
  if (r2 > 0) return r2;
  warn("constant coordinate: flooring squared range at 1e-6 of the global range");
  return 1e-6 * global_r2;
}

// Indices of the `count` pooled observations nearest to t (pooled times
// sorted ascending); returns [lo, hi).
std::pair<long, long> nearest_window(const std::vector<double>& t, double query,
                                     long count) {
  const long n = static_cast<long>(t.size());
  count = std::min(count, n);
  long hi = static_cast<long>(
      std::lower_bound(t.begin(), t.end(), query) - t.begin());
  long lo = hi;
  while (hi - lo < count) {
    if (lo == 0) ++hi;
    else if (hi == n) --lo;
    else if (query - t[lo - 1] <= t[hi] - query) --lo;
    else ++hi;
  }
  return {lo, hi};
}

}  // namespace

Hyperparameters derive_hyperparameters(const FunctionalDataset& data, int K) {
  if (K < 1) throw DomainError("component count must be positive");
  Hyperparameters hp;
  hp.nu = 2.0 * K;
  hp.gamma_diag = 10.0;

  if (data.dense) {
    const long m = data.grid.size();
    const double global_range = data.y.maxCoeff() - data.y.minCoeff();
    if (!(global_range > 0)) throw DegenerateRange("all observations are identical");
    const double global_r2 = global_range * global_range;
    hp.two_r = static_cast<double>(m);
    hp.R.resize(m);
    hp.kappa.resize(m);
    for (long j = 0; j < m; ++j) {
      const double range = data.y.col(j).maxCoeff() - data.y.col(j).minCoeff();
      hp.R[j] = squared_range_floor(range * range, global_r2);
      hp.kappa[j] = 100.0 / (hp.R[j] * hp.two_r);
    }
    return hp;
  }

  const long n = data.n_curves();
  hp.h_R = static_cast<int>(std::max<long>(
      static_cast<long>(std::ceil(0.05 * static_cast<double>(n))), 5));

  // Pooled scatter sorted by time for the range windows.
  std::vector<std::pair<double, double>> pooled;
  pooled.reserve(static_cast<size_t>(data.n_obs()));
  for (const auto& c : data.curves)
    for (long j = 0; j < c.t.size(); ++j) pooled.emplace_back(c.t[j], c.y[j]);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> pt(pooled.size()), py(pooled.size());
  for (size_t k = 0; k < pooled.size(); ++k) {
    pt[k] = pooled[k].first;
    py[k] = pooled[k].second;
  }
  const double global_range = *std::max_element(py.begin(), py.end()) -
                              *std::min_element(py.begin(), py.end());
  if (!(global_range > 0)) throw DegenerateRange("all observations are identical");
  const double global_r2 = global_range * global_range;

  hp.two_r_i.resize(static_cast<size_t>(n));
  hp.R_i.resize(static_cast<size_t>(n));
  hp.kappa_i.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    const auto& c = data.curves[static_cast<size_t>(i)];
    const long ni = c.t.size();
    hp.two_r_i[static_cast<size_t>(i)] = static_cast<double>(ni);
    Eigen::VectorXd R(ni), kappa(ni);
    for (long j = 0; j < ni; ++j) {
      const auto [lo, hi] = nearest_window(pt, c.t[j], hp.h_R);
      double ymin = py[static_cast<size_t>(lo)], ymax = ymin;
      for (long k = lo + 1; k < hi; ++k) {
        ymin = std::min(ymin, py[static_cast<size_t>(k)]);
        ymax = std::max(ymax, py[static_cast<size_t>(k)]);
      }
      const double range = ymax - ymin;
      R[j] = squared_range_floor(range * range, global_r2);
      kappa[j] = 100.0 / (R[j] * static_cast<double>(ni));
    }
    hp.R_i[static_cast<size_t>(i)] = std::move(R);
    hp.kappa_i[static_cast<size_t>(i)] = std::move(kappa);
  }
  return hp;
}

void refresh_omega_cache(ComponentState& comp) {
  comp.omega_inv_chol = cholesky_with_jitter(comp.omega_inv, "score precision");
}

void refresh_sigma_cache(ComponentState& comp) {
  comp.sigma_inv_chol = cholesky_with_jitter(comp.sigma_inv, "error precision");
  comp.log_det_sigma_inv = 2.0 * comp.sigma_inv_chol.diagonal().array().log().sum();
}

void refresh_sigma_cache(ComponentState& comp, long i) {
  auto& chol = comp.sigma_inv_chol_i[static_cast<size_t>(i)];
  chol = cholesky_with_jitter(comp.sigma_inv_i[static_cast<size_t>(i)],
                              "error precision");
  comp.log_det_sigma_inv_i[i] = 2.0 * chol.diagonal().array().log().sum();
}

ModelWorkspace build_workspace(const FunctionalDataset& centered, const ModelSpec& spec,
                               const Hyperparameters& hyper) {
  ModelWorkspace ws;
  ws.spec = spec;
  ws.hyper = hyper;
  ws.dense_layout = centered.dense;
  ws.n = centered.n_curves();
  ws.ids = centered.ids;

  if (centered.dense) {
    ws.m = centered.grid.size();
    ws.basis = build_basis(centered.grid, spec.P);
    const Eigen::MatrixXd prior_cov = spec.prior.evaluate(centered.grid);
    ws.proj = build_prior_projection(ws.basis.H, prior_cov, spec.K);
    ws.HU = ws.basis.H * ws.proj.U;
    ws.L = ws.proj.L;
    ws.L_inv = ws.L.cwiseInverse();
    ws.support_grid = centered.grid;

    ws.y.reserve(static_cast<size_t>(ws.n));
    ws.times.reserve(static_cast<size_t>(ws.n));
    for (long i = 0; i < ws.n; ++i) {
      ws.y.push_back(centered.y.row(i).transpose());
      ws.times.push_back(centered.grid);
    }
  } else {
    long min_ni = centered.curves[0].t.size();
    for (const auto& c : centered.curves) min_ni = std::min(min_ni, c.t.size());
    if (spec.P > min_ni)
      throw DomainError("basis size " + std::to_string(spec.P) +
                        " exceeds the shortest curve length " + std::to_string(min_ni));
    if (spec.support_points < 2)
      throw DomainError("support grid needs at least 2 points");

    ws.m = 0;
    ws.support_grid.resize(spec.support_points);
    for (int j = 0; j < spec.support_points; ++j)
      ws.support_grid[j] = centered.lo + (centered.hi - centered.lo) *
                                             static_cast<double>(j) /
                                             (spec.support_points - 1);
    ws.basis = build_basis(ws.support_grid, spec.P);
    ws.proj =
        build_prior_projection(ws.basis.H, spec.prior.evaluate(ws.support_grid), spec.K);
    ws.HU = ws.basis.H * ws.proj.U;

    // Per-curve eigenstructure, columns sign-aligned to the support-grid
    // reference so scores mean the same thing across curves. The shared score
    // scale is the elementwise average of the per-curve inverse spectra.
    ws.L_inv = Eigen::VectorXd::Zero(spec.K);
    ws.y.reserve(static_cast<size_t>(ws.n));
    ws.times.reserve(static_cast<size_t>(ws.n));
    ws.HU_i.reserve(static_cast<size_t>(ws.n));
    for (const auto& c : centered.curves) {
      const Eigen::MatrixXd H_i = ws.basis.evaluate(c.t);
      PriorProjection proj_i =
          build_prior_projection(H_i, spec.prior.evaluate(c.t), spec.K);
      for (int k = 0; k < spec.K; ++k)
        if (proj_i.U.col(k).dot(ws.proj.U.col(k)) < 0) proj_i.U.col(k) = -proj_i.U.col(k);
      ws.HU_i.push_back(H_i * proj_i.U);
      ws.L_inv += proj_i.L.cwiseInverse();
      ws.y.push_back(c.y);
      ws.times.push_back(c.t);
    }
    ws.L_inv /= static_cast<double>(ws.n);
    ws.L = ws.L_inv.cwiseInverse();
  }

  // Per-curve sample variances feed the mixing-weight update.
  ws.s.resize(ws.n);
  for (long i = 0; i < ws.n; ++i) {
    const auto& yi = ws.y[static_cast<size_t>(i)];
    const long ni = yi.size();
    if (ni < 2) {
      ws.s[i] = 0.0;
      continue;
    }
    const double mean = yi.mean();
    ws.s[i] = (yi.array() - mean).square().sum() / static_cast<double>(ni - 1);
  }
  return ws;
}

namespace {

void init_component(const ModelWorkspace& ws, ComponentKind kind, ComponentState& comp,
                    RngStream& rng) {
  const int K = ws.spec.K;
  const long n = ws.n;

  comp.omega_inv = sample_wishart(
      rng, ws.hyper.nu, Eigen::MatrixXd(ws.L_inv.asDiagonal()));
  refresh_omega_cache(comp);

  comp.beta.resize(n, K);
  const Eigen::VectorXd zero_k = Eigen::VectorXd::Zero(K);
  for (long i = 0; i < n; ++i)
    comp.beta.row(i) =
        sample_mvn_precision_chol(zero_k, comp.omega_inv_chol, rng).transpose();

  comp.z.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    auto& zi = comp.z[static_cast<size_t>(i)];
    zi.resize(ws.obs_dim(i));
    for (long j = 0; j < zi.size(); ++j) zi[j] = std::abs(rng.normal());
  }

  const double d_sd = std::sqrt(ws.hyper.gamma_diag);
  if (ws.dense_layout) {
    comp.d.resize(ws.m);
    for (long j = 0; j < ws.m; ++j) comp.d[j] = d_sd * rng.normal();
    Eigen::VectorXd scale = 2.0 * ws.hyper.kappa;
    comp.sigma_inv =
        sample_wishart(rng, ws.hyper.two_r, Eigen::MatrixXd(scale.asDiagonal()));
    refresh_sigma_cache(comp);
  } else {
    comp.d_i.resize(static_cast<size_t>(n));
    comp.sigma_inv_i.resize(static_cast<size_t>(n));
    comp.sigma_inv_chol_i.resize(static_cast<size_t>(n));
    comp.log_det_sigma_inv_i.resize(n);
    for (long i = 0; i < n; ++i) {
      const long ni = ws.obs_dim(i);
      auto& di = comp.d_i[static_cast<size_t>(i)];
      di.resize(ni);
      for (long j = 0; j < ni; ++j) di[j] = d_sd * rng.normal();
      Eigen::VectorXd scale = 2.0 * ws.hyper.kappa_i[static_cast<size_t>(i)];
      comp.sigma_inv_i[static_cast<size_t>(i)] = sample_wishart(
          rng, ws.hyper.two_r_i[static_cast<size_t>(i)],
          Eigen::MatrixXd(scale.asDiagonal()));
      refresh_sigma_cache(comp, i);
    }
  }

  if (kind == ComponentKind::st) {
    comp.nu_w.resize(n);
    comp.w.resize(n);
    for (long i = 0; i < n; ++i) {
      comp.nu_w[i] = sample_gamma_truncated(rng, 1.0, 0.1, 2.0);
      comp.w[i] = sample_gamma(rng, comp.nu_w[i] / 2.0, comp.nu_w[i] / 2.0);
    }
  } else {
    comp.w = Eigen::VectorXd::Ones(n);
    comp.nu_w.resize(0);
  }
}

}  // namespace

ParticleState init_particle(const ModelWorkspace& ws, RngStream& rng) {
  ParticleState state;
  switch (ws.spec.variant) {
    case Variant::sn:
      state.kind = {ComponentKind::sn};
      break;
    case Variant::st:
      state.kind = {ComponentKind::st};
      break;
    case Variant::mm:
      state.kind = {ComponentKind::sn, ComponentKind::st};
      break;
  }
  state.comp.resize(state.kind.size());
  for (size_t c = 0; c < state.comp.size(); ++c)
    init_component(ws, state.kind[c], state.comp[c], rng);

  if (ws.spec.variant == Variant::mm) {
    state.pi1 = sample_beta(rng, 1.0, 1.0);
    state.tau.resize(static_cast<size_t>(ws.n));
    for (long i = 0; i < ws.n; ++i)
      state.tau[static_cast<size_t>(i)] = rng.uniform() < state.pi1 ? 0 : 1;
  }
  return state;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("state invariant violated: " + what);
}

void validate_component(const ModelWorkspace& ws, ComponentKind kind,
                        const ComponentState& comp) {
  const long n = ws.n;
  require(comp.beta.rows() == n && comp.beta.cols() == ws.spec.K, "score shape");
  require(comp.beta.allFinite(), "finite scores");
  require(comp.omega_inv.allFinite(), "finite score precision");
  require(comp.omega_inv.llt().info() == Eigen::Success, "score precision SPD");
  require((comp.omega_inv_chol * comp.omega_inv_chol.transpose() - comp.omega_inv)
                  .cwiseAbs()
                  .maxCoeff() < 1e-8 * (1.0 + comp.omega_inv.cwiseAbs().maxCoeff()),
          "score precision factor cache");

  require(static_cast<long>(comp.z.size()) == n, "latent count");
  for (long i = 0; i < n; ++i) {
    const auto& zi = comp.z[static_cast<size_t>(i)];
    require(zi.size() == ws.obs_dim(i), "latent length");
    require(zi.allFinite() && (zi.array() > 0).all(), "positive latents");
  }

  if (ws.dense_layout) {
    require(comp.d.size() == ws.m && comp.d.allFinite(), "skewness loadings");
    require(comp.sigma_inv.allFinite(), "finite error precision");
    require(comp.sigma_inv.llt().info() == Eigen::Success, "error precision SPD");
    require(std::isfinite(comp.log_det_sigma_inv), "error precision determinant");
  } else {
    require(static_cast<long>(comp.d_i.size()) == n, "skewness loading count");
    require(static_cast<long>(comp.sigma_inv_i.size()) == n, "error precision count");
    for (long i = 0; i < n; ++i) {
      require(comp.d_i[static_cast<size_t>(i)].size() == ws.obs_dim(i) &&
                  comp.d_i[static_cast<size_t>(i)].allFinite(),
              "skewness loadings");
      require(comp.sigma_inv_i[static_cast<size_t>(i)].llt().info() == Eigen::Success,
              "error precision SPD");
      require(std::isfinite(comp.log_det_sigma_inv_i[i]), "error precision determinant");
    }
  }

  require(comp.w.size() == n && comp.w.allFinite() && (comp.w.array() > 0).all(),
          "positive mixing weights");
  if (kind == ComponentKind::sn) {
    require((comp.w.array() == 1.0).all(), "unit weights for skew-normal");
    require(comp.nu_w.size() == 0, "no tail df for skew-normal");
  } else {
    require(comp.nu_w.size() == n && comp.nu_w.allFinite() &&
                (comp.nu_w.array() > 2.0).all(),
            "tail df above 2");
  }
}

}  // namespace

void validate_state(const ModelWorkspace& ws, const ParticleState& state) {
  const size_t expected = ws.spec.variant == Variant::mm ? 2 : 1;
  require(state.comp.size() == expected && state.kind.size() == expected,
          "component count");
  for (size_t c = 0; c < state.comp.size(); ++c)
    validate_component(ws, state.kind[c], state.comp[c]);

  if (ws.spec.variant == Variant::mm) {
    require(state.kind[0] == ComponentKind::sn && state.kind[1] == ComponentKind::st,
            "canonical component order");
    require(state.pi1 >= 0.0 && state.pi1 <= 1.0, "mixture weight in [0,1]");
    require(static_cast<long>(state.tau.size()) == ws.n, "assignment count");
    for (int t : state.tau) require(t == 0 || t == 1, "assignment labels");
  } else {
    require(state.kind[0] == (ws.spec.variant == Variant::sn ? ComponentKind::sn
                                                             : ComponentKind::st),
            "component kind matches variant");
    require(state.tau.empty(), "no assignments outside the mixture");
  }
}

void canonicalize_labels(ParticleState& state) {
  if (state.comp.size() != 2 || state.kind[0] == ComponentKind::sn) return;
  std::swap(state.comp[0], state.comp[1]);
  std::swap(state.kind[0], state.kind[1]);
  state.pi1 = 1.0 - state.pi1;
  for (auto& t : state.tau) t = 1 - t;
}

}  // namespace rbfpca
