#include "rbfpca/basis.hpp"

#include <cmath>

#include "rbfpca/common.hpp"

namespace rbfpca {

namespace {

Eigen::MatrixXd legendre_raw(const Eigen::VectorXd& t, int P, double lo,
                             double hi) {
  const long m = t.size();
  Eigen::MatrixXd h(m, P);
  for (long i = 0; i < m; ++i) {
    const double x = 2.0 * (t[i] - lo) / (hi - lo) - 1.0;
    h(i, 0) = 1.0;
    if (P > 1) h(i, 1) = x;
    for (int p = 2; p < P; ++p)
      h(i, p) = ((2.0 * p - 1.0) * x * h(i, p - 1) - (p - 1.0) * h(i, p - 2)) / p;
  }
  return h;
}

}  // namespace

Eigen::MatrixXd BasisSystem::evaluate(const Eigen::VectorXd& times) const {
  const double slack = 1e-9 * (hi - lo);
  for (long i = 0; i < times.size(); ++i)
    if (times[i] < lo - slack || times[i] > hi + slack)
      throw DomainError("basis evaluation point outside construction domain");
  return legendre_raw(times, P, lo, hi) * col_scale.asDiagonal();
}

BasisSystem build_basis(const Eigen::VectorXd& grid, int P) {
  const long m = grid.size();
  if (m < 1) throw DomainError("build_basis: empty grid");
  if (P < 1) throw DomainError("build_basis: P must be >= 1");
  if (P > m) throw DomainError("build_basis: P exceeds number of grid points");
  for (long i = 1; i < m; ++i)
    if (!(grid[i] > grid[i - 1]))
      throw DomainError("build_basis: grid must be strictly increasing");
  BasisSystem b;
  b.grid = grid;
  b.lo = grid[0];
  b.hi = grid[m - 1];
  b.P = P;
  if (m > 1 && !(b.hi > b.lo)) throw DomainError("build_basis: zero-width domain");
  if (m == 1) {  // degenerate single-point grid only supports the constant
    b.lo = grid[0] - 0.5;
    b.hi = grid[0] + 0.5;
  }
  Eigen::MatrixXd raw = legendre_raw(grid, P, b.lo, b.hi);
  b.col_scale.resize(P);
  for (int p = 0; p < P; ++p) {
    double nrm = raw.col(p).norm();
    if (!(nrm > 0.0)) throw ZeroVector("build_basis: zero basis column");
    b.col_scale[p] = 1.0 / nrm;
  }
  b.H = raw * b.col_scale.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b.H);
  if (qr.rank() < P) throw RankDeficient("build_basis: design is rank deficient");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.H.transpose() * b.H);
  const double cond =
      es.eigenvalues()(P - 1) / std::max(es.eigenvalues()(0), 1e-300);
  if (cond > 1e6)
    warn("build_basis: ill-conditioned design, cond(H'H) = " + std::to_string(cond));
  return b;
}

PriorProjection build_prior_projection(const Eigen::MatrixXd& H,
                                       const Eigen::MatrixXd& prior_cov, int K) {
  const long m = H.rows(), P = H.cols();
  if (prior_cov.rows() != m || prior_cov.cols() != m)
    throw DimensionMismatch("build_prior_projection: prior covariance is not m x m");
  if (K < 1 || K > P)
    throw DomainError("build_prior_projection: K must satisfy 1 <= K <= P");
  Eigen::MatrixXd hth = H.transpose() * H;
  Eigen::LLT<Eigen::MatrixXd> llt(hth);
  if (llt.info() != Eigen::Success)
    throw NonSpdMatrix("build_prior_projection: H'H is singular");
  // Psi = (H'H)^-1 H' C H (H'H)^-1
  Eigen::MatrixXd hc = llt.solve(H.transpose() * prior_cov * H);
  Eigen::MatrixXd psi = llt.solve(hc.transpose());
  psi = 0.5 * (psi + psi.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(psi);
  if (es.info() != Eigen::Success)
    throw NonSpdMatrix("build_prior_projection: eigendecomposition failed");
  // Eigen sorts ascending; take the trailing K in descending order.
  const double lmax = es.eigenvalues()(P - 1);
  if (!(lmax > 0.0))
    throw RankDeficient("build_prior_projection: projected prior has no positive spectrum");
  const double floor = 1e-10 * lmax;
  int above = 0;
  for (long i = 0; i < P; ++i)
    if (es.eigenvalues()(i) > floor) ++above;
  if (above < K)
    throw RankDeficient("build_prior_projection: only " + std::to_string(above) +
                        " usable eigenvalues for K = " + std::to_string(K));
  PriorProjection proj;
  proj.U.resize(P, K);
  proj.L.resize(K);
  for (int k = 0; k < K; ++k) {
    proj.L[k] = std::max(es.eigenvalues()(P - 1 - k), floor);
    Eigen::VectorXd u = es.eigenvectors().col(P - 1 - k);
    // canonical sign: positive coefficient sum, falling back to the first
    // non-negligible entry
    double s = u.sum();
    if (std::fabs(s) <= 1e-12) {
      for (long i = 0; i < P; ++i)
        if (std::fabs(u[i]) > 1e-12) {
          s = u[i];
          break;
        }
    }
    proj.U.col(k) = (s < 0.0) ? Eigen::VectorXd(-u) : u;
  }
  return proj;
}

Eigen::MatrixXd reconstruct_covariance(const Eigen::MatrixXd& hu_eval,
                                       const Eigen::MatrixXd& omega) {
  if (omega.rows() != omega.cols() || omega.rows() != hu_eval.cols())
    throw DimensionMismatch("reconstruct_covariance: Omega is not K x K");
  Eigen::MatrixXd q = hu_eval * omega * hu_eval.transpose();
  return 0.5 * (q + q.transpose());
}

PriorCovSpec PriorCovSpec::parse(const std::string& text) {
  PriorCovSpec spec;
  if (text == "gauss3") {
    spec.kind = Kind::gauss3;
  } else if (text == "minst") {
    spec.kind = Kind::minst;
  } else if (text.rfind("matern:", 0) == 0) {
    spec.kind = Kind::matern;
    const std::string args = text.substr(7);
    const auto comma = args.find(',');
    if (comma == std::string::npos)
      throw ParseError("matern prior needs 'matern:<sigma2>,<rho>'");
    try {
      spec.sigma2 = std::stod(args.substr(0, comma));
      spec.rho = std::stod(args.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError("matern prior needs numeric 'matern:<sigma2>,<rho>'");
    }
    if (!(spec.sigma2 > 0.0) || !(spec.rho > 0.0))
      throw DomainError("matern prior needs sigma2 > 0 and rho > 0");
  } else if (text.rfind("file:", 0) == 0) {
    spec.kind = Kind::matrix;
    spec.path = text.substr(5);
    if (spec.path.empty()) throw ParseError("file prior needs 'file:<path>'");
  } else {
    throw UnknownKey("unknown prior covariance '" + text + "'");
  }
  return spec;
}

std::string PriorCovSpec::describe() const {
  switch (kind) {
    case Kind::gauss3: return "gauss3";
    case Kind::minst: return "minst";
    case Kind::matern:
      return "matern:" + std::to_string(sigma2) + "," + std::to_string(rho);
    case Kind::matrix: return path.empty() ? "matrix" : "file:" + path;
  }
  return "?";
}

Eigen::MatrixXd PriorCovSpec::evaluate(const Eigen::VectorXd& eval_grid) const {
  const long m = eval_grid.size();
  Eigen::MatrixXd c(m, m);
  switch (kind) {
    case Kind::gauss3:
      for (long i = 0; i < m; ++i)
        for (long j = 0; j <= i; ++j) {
          double d = eval_grid[i] - eval_grid[j];
          c(i, j) = c(j, i) = std::exp(-3.0 * d * d);
        }
      break;
    case Kind::minst:
      for (long i = 0; i < m; ++i)
        for (long j = 0; j <= i; ++j)
          c(i, j) = c(j, i) = std::min(eval_grid[i] + 1.0, eval_grid[j] + 1.0);
      break;
    case Kind::matern:
      for (long i = 0; i < m; ++i)
        for (long j = 0; j <= i; ++j)
          c(i, j) = c(j, i) =
              sigma2 * std::exp(-std::fabs(eval_grid[i] - eval_grid[j]) / rho);
      break;
    case Kind::matrix: {
      if (grid.size() == 0 || cov.rows() != grid.size())
        throw DomainError("prior covariance matrix not loaded");
      for (long i = 0; i < m; ++i)
        for (long j = 0; j <= i; ++j) {
          double v = interp_bilinear(grid, cov, eval_grid[i], eval_grid[j]);
          c(i, j) = c(j, i) = v;
        }
      break;
    }
  }
  return c;
}

double interp_linear(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                     double x) {
  const long n = xs.size();
  if (n == 0 || ys.size() != n)
    throw DimensionMismatch("interp_linear: bad table sizes");
  if (x <= xs[0]) return ys[0];
  if (x >= xs[n - 1]) return ys[n - 1];
  long hi = std::upper_bound(xs.data(), xs.data() + n, x) - xs.data();
  long lo = hi - 1;
  double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return (1.0 - t) * ys[lo] + t * ys[hi];
}

double interp_bilinear(const Eigen::VectorXd& grid, const Eigen::MatrixXd& m,
                       double s, double t) {
  const long n = grid.size();
  if (m.rows() != n || m.cols() != n)
    throw DimensionMismatch("interp_bilinear: matrix does not match grid");
  auto cell = [&](double x, long& lo, double& w) {
    if (x <= grid[0]) {
      lo = 0;
      w = 0.0;
    } else if (x >= grid[n - 1]) {
      lo = n - 2;
      w = 1.0;
    } else {
      long hi = std::upper_bound(grid.data(), grid.data() + n, x) - grid.data();
      lo = hi - 1;
      w = (x - grid[lo]) / (grid[hi] - grid[lo]);
    }
  };
  if (n == 1) return m(0, 0);
  long i, j;
  double u, v;
  cell(s, i, u);
  cell(t, j, v);
  return (1.0 - u) * (1.0 - v) * m(i, j) + u * (1.0 - v) * m(i + 1, j) +
         (1.0 - u) * v * m(i, j + 1) + u * v * m(i + 1, j + 1);
}

}  // namespace rbfpca
