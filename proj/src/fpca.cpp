#include "rbfpca/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbfpca/basis.hpp"

namespace rbfpca {

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const long g = grid.size();
  if (g < 2) throw DomainError("quadrature grid needs at least 2 points");
  Eigen::VectorXd w(g);
  w[0] = 0.5 * (grid[1] - grid[0]);
  for (long j = 1; j + 1 < g; ++j) w[j] = 0.5 * (grid[j + 1] - grid[j - 1]);
  w[g - 1] = 0.5 * (grid[g - 1] - grid[g - 2]);
  if (w.minCoeff() <= 0.0) throw DomainError("quadrature grid must be increasing");
  return w;
}

double weighted_quantile(const Eigen::VectorXd& values, const Eigen::VectorXd& weights,
                         double q) {
  if (values.size() != weights.size())
    throw DimensionMismatch("values and weights differ in length");
  if (values.size() == 0) throw EmptyDataset("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0,1]");
  const long n = values.size();
  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(),
            [&](long a, long b) { return values[a] < values[b]; });
  const double total = weights.sum();
  if (total <= 0.0) throw DomainError("weights must have positive total");
  double cum = 0.0;
  for (long r = 0; r < n; ++r) {
    cum += weights[order[size_t(r)]];
    if (cum >= q * total * (1.0 - 1e-15)) return values[order[size_t(r)]];
  }
  return values[order[size_t(n - 1)]];
}

namespace {

// Inverse of a component's score precision via its cached Cholesky factor.
Eigen::MatrixXd omega_of(const ComponentState& comp) {
  const long K = comp.omega_inv.rows();
  const Eigen::MatrixXd inv_l = comp.omega_inv_chol.triangularView<Eigen::Lower>()
                                    .solve(Eigen::MatrixXd::Identity(K, K));
  return inv_l.transpose() * inv_l;
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& precision) {
  const long m = precision.rows();
  return precision.llt().solve(Eigen::MatrixXd::Identity(m, m));
}

}  // namespace

Eigen::MatrixXd particle_covariance(const ParticleState& state,
                                    const Eigen::MatrixXd& hu_eval) {
  if (state.comp.size() == 1)
    return reconstruct_covariance(hu_eval, omega_of(state.comp[0]));
  Eigen::MatrixXd surface =
      state.pi1 * reconstruct_covariance(hu_eval, omega_of(state.comp[0]));
  surface +=
      (1.0 - state.pi1) * reconstruct_covariance(hu_eval, omega_of(state.comp[1]));
  return surface;
}

CovarianceSummary posterior_covariance(const AsmcRun& run, const ModelWorkspace& ws,
                                       const Eigen::VectorXd& eval_grid,
                                       double level) {
  if (run.particles.empty()) throw EmptyDataset("particle population is empty");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("band level outside (0,1)");
  const long g = eval_grid.size();
  const long R = long(run.particles.size());
  const Eigen::MatrixXd hu_eval = ws.basis.evaluate(eval_grid) * ws.proj.U;

  Eigen::MatrixXd surfaces(R, g * g);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(g, g);
  for (long r = 0; r < R; ++r) {
    const Eigen::MatrixXd s = particle_covariance(run.particles[size_t(r)], hu_eval);
    surfaces.row(r) = Eigen::Map<const Eigen::VectorXd>(s.data(), g * g).transpose();
    mean += run.weights[r] * s;
  }

  CovarianceSummary out;
  out.mean = 0.5 * (mean + mean.transpose());
  out.lower.resize(g, g);
  out.upper.resize(g, g);
  const double lo_q = 0.5 * (1.0 - level), hi_q = 0.5 * (1.0 + level);
  for (long c = 0; c < g * g; ++c) {
    out.lower(c % g, c / g) = weighted_quantile(surfaces.col(c), run.weights, lo_q);
    out.upper(c % g, c / g) = weighted_quantile(surfaces.col(c), run.weights, hi_q);
  }
  return out;
}

FpcBasis eigen_fpca(const Eigen::MatrixXd& cov, const Eigen::VectorXd& grid, int K) {
  const long g = grid.size();
  if (cov.rows() != g || cov.cols() != g)
    throw DimensionMismatch("covariance does not match the grid");
  if (K < 1 || K > g) throw DomainError("component count outside [1, grid size]");

  const Eigen::VectorXd w = trapezoid_weights(grid);
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  const Eigen::MatrixXd scaled = sw.asDiagonal() * sym * sw.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  if (es.info() != Eigen::Success)
    throw DegenerateSpectrum("eigendecomposition failed to converge");

  FpcBasis fpc;
  fpc.eigenvalues.resize(K);
  fpc.eigenfunctions.resize(g, K);
  for (int k = 0; k < K; ++k) {
    const long src = g - 1 - k;  // solver returns ascending order
    fpc.eigenvalues[k] = std::max(0.0, es.eigenvalues()[src]);
    Eigen::VectorXd phi = es.eigenvectors().col(src).cwiseQuotient(sw);
    const double norm2 = phi.cwiseProduct(phi).dot(w);
    if (norm2 > 0.0) phi /= std::sqrt(norm2);

    double sign_stat = phi.dot(w);  // quadrature integral
    if (std::abs(sign_stat) <= 1e-10) {
      const double scale = phi.cwiseAbs().maxCoeff();
      for (long j = 0; j < g; ++j)
        if (std::abs(phi[j]) > 1e-8 * scale) {
          sign_stat = phi[j];
          break;
        }
    }
    if (sign_stat < 0.0) phi = -phi;
    fpc.eigenfunctions.col(k) = phi;
  }
  return fpc;
}

Eigen::VectorXd variance_explained(const Eigen::VectorXd& eigenvalues) {
  if (eigenvalues.size() == 0) throw EmptyDataset("no eigenvalues");
  if (eigenvalues.minCoeff() < 0.0) throw DomainError("negative eigenvalue");
  const double total = eigenvalues.sum();
  if (total <= 0.0) throw DegenerateSpectrum("all eigenvalues are zero");
  return eigenvalues / total;
}

Eigen::MatrixXd scores_dense(const Eigen::MatrixXd& y, const FpcBasis& fpc,
                             const Eigen::VectorXd& grid) {
  if (y.cols() != grid.size())
    throw DimensionMismatch("curves do not match the grid");
  if (fpc.eigenfunctions.rows() != grid.size())
    throw DimensionMismatch("eigenfunctions do not match the grid");
  const Eigen::VectorXd w = trapezoid_weights(grid);
  return y * (w.asDiagonal() * fpc.eigenfunctions);
}

Eigen::VectorXd pace_scores_one(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& support_grid,
                                const Eigen::MatrixXd& q_hat,
                                const Eigen::MatrixXd& sigma_hat,
                                const FpcBasis& fpc) {
  const long ni = t.size();
  if (y.size() != ni) throw DimensionMismatch("times and values differ in length");
  if (sigma_hat.rows() != ni || sigma_hat.cols() != ni)
    throw DimensionMismatch("error covariance does not match the curve");
  const int K = int(fpc.eigenvalues.size());

  Eigen::MatrixXd q_obs(ni, ni);
  for (long j = 0; j < ni; ++j)
    for (long l = 0; l < ni; ++l)
      q_obs(j, l) = interp_bilinear(support_grid, q_hat, t[j], t[l]);
  Eigen::MatrixXd conditioning =
      0.5 * (q_obs + q_obs.transpose()) + sigma_hat +
      1e-8 * Eigen::MatrixXd::Identity(ni, ni);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(conditioning,
                                                    Eigen::EigenvaluesOnly);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (emin <= 0.0 || emax / emin > 1e12)
    throw SingularConditioning("observation covariance is numerically singular");

  const Eigen::VectorXd solved = conditioning.llt().solve(y);
  Eigen::MatrixXd phi_at(ni, K);
  for (int k = 0; k < K; ++k)
    for (long j = 0; j < ni; ++j)
      phi_at(j, k) = interp_linear(support_grid, fpc.eigenfunctions.col(k), t[j]);

  return fpc.eigenvalues.cwiseProduct(phi_at.transpose() * solved);
}

std::vector<Eigen::MatrixXd> posterior_error_cov(const AsmcRun& run,
                                                 const ModelWorkspace& ws) {
  if (run.particles.empty()) throw EmptyDataset("particle population is empty");
  const long n = ws.n;
  std::vector<Eigen::MatrixXd> out(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i)
    out[size_t(i)] = Eigen::MatrixXd::Zero(ws.obs_dim(i), ws.obs_dim(i));

  for (size_t r = 0; r < run.particles.size(); ++r) {
    const ParticleState& p = run.particles[r];
    const double wt = run.weights[long(r)];
    if (ws.dense_layout) {
      std::vector<Eigen::MatrixXd> comp_cov(p.comp.size());
      for (size_t f = 0; f < p.comp.size(); ++f)
        comp_cov[f] = invert_spd(p.comp[f].sigma_inv);
      for (long i = 0; i < n; ++i) {
        const int f = p.tau.empty() ? 0 : p.tau[size_t(i)];
        out[size_t(i)] += wt * comp_cov[size_t(f)];
      }
    } else {
      for (long i = 0; i < n; ++i) {
        const int f = p.tau.empty() ? 0 : p.tau[size_t(i)];
        out[size_t(i)] += wt * invert_spd(p.comp[size_t(f)].sigma_inv_i[size_t(i)]);
      }
    }
  }
  return out;
}

Eigen::MatrixXd scores_sparse(const ModelWorkspace& ws, const AsmcRun& run,
                              const Eigen::MatrixXd& q_hat, const FpcBasis& fpc) {
  const auto sigma_hat = posterior_error_cov(run, ws);
  const int K = int(fpc.eigenvalues.size());
  Eigen::MatrixXd scores(ws.n, K);
  for (long i = 0; i < ws.n; ++i) {
    scores.row(i) = pace_scores_one(ws.time_points(i), ws.y[size_t(i)],
                                    ws.support_grid, q_hat, sigma_hat[size_t(i)], fpc)
                        .transpose();
  }
  return scores;
}

FpcBands fpc_credible_bands(const AsmcRun& run, const ModelWorkspace& ws,
                            const Eigen::VectorXd& eval_grid, int K, double level) {
  if (run.particles.empty()) throw EmptyDataset("particle population is empty");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("band level outside (0,1)");
  const long g = eval_grid.size();
  const long R = long(run.particles.size());
  const Eigen::MatrixXd hu_eval = ws.basis.evaluate(eval_grid) * ws.proj.U;
  const Eigen::VectorXd w = trapezoid_weights(eval_grid);

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(g, g);
  for (long r = 0; r < R; ++r)
    mean += run.weights[r] * particle_covariance(run.particles[size_t(r)], hu_eval);
  const FpcBasis reference = eigen_fpca(0.5 * (mean + mean.transpose()), eval_grid, K);

  std::vector<Eigen::MatrixXd> phis(static_cast<size_t>(R));
  for (long r = 0; r < R; ++r) {
    const Eigen::MatrixXd surf =
        particle_covariance(run.particles[size_t(r)], hu_eval);
    FpcBasis fpc = eigen_fpca(surf, eval_grid, K);
    for (int k = 0; k < K; ++k) {
      const double align = fpc.eigenfunctions.col(k)
                               .cwiseProduct(reference.eigenfunctions.col(k))
                               .dot(w);
      if (align < 0.0) fpc.eigenfunctions.col(k) *= -1.0;
    }
    phis[size_t(r)] = std::move(fpc.eigenfunctions);
  }

  FpcBands bands;
  bands.lower.resize(g, K);
  bands.upper.resize(g, K);
  const double lo_q = 0.5 * (1.0 - level), hi_q = 0.5 * (1.0 + level);
  Eigen::VectorXd cell(R);
  for (int k = 0; k < K; ++k) {
    for (long j = 0; j < g; ++j) {
      for (long r = 0; r < R; ++r) cell[r] = phis[size_t(r)](j, k);
      bands.lower(j, k) = weighted_quantile(cell, run.weights, lo_q);
      bands.upper(j, k) = weighted_quantile(cell, run.weights, hi_q);
    }
  }
  return bands;
}

FpcaResult analyze(const AsmcRun& run, const ModelWorkspace& ws, double band_level) {
  FpcaResult res;
  res.grid = ws.support_grid;
  res.band_level = band_level;

  const CovarianceSummary cov =
      posterior_covariance(run, ws, res.grid, band_level);
  res.cov_mean = cov.mean;
  res.cov_lower = cov.lower;
  res.cov_upper = cov.upper;

  const FpcBasis fpc = eigen_fpca(res.cov_mean, res.grid, ws.spec.K);
  res.eigenvalues = fpc.eigenvalues;
  res.eigenfunctions = fpc.eigenfunctions;
  res.var_explained = variance_explained(fpc.eigenvalues);

  if (ws.dense_layout) {
    Eigen::MatrixXd y(ws.n, ws.m);
    for (long i = 0; i < ws.n; ++i) y.row(i) = ws.y[size_t(i)].transpose();
    res.scores = scores_dense(y, fpc, res.grid);
  } else {
    res.scores = scores_sparse(ws, run, res.cov_mean, fpc);
  }

  const FpcBands bands =
      fpc_credible_bands(run, ws, res.grid, ws.spec.K, band_level);
  res.fpc_lower = bands.lower;
  res.fpc_upper = bands.upper;
  return res;
}

}  // namespace rbfpca
