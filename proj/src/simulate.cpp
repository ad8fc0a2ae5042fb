#include "rbfpca/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbfpca/fpca.hpp"
#include "rbfpca/samplers.hpp"

namespace rbfpca {

namespace {

std::vector<double> parse_number_list(const std::string& text,
                                      const char* context) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    const std::string piece = text.substr(pos, comma - pos);
    try {
      size_t used = 0;
      out.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument(piece);
    } catch (const std::exception&) {
      throw ParseError(std::string(context) + " needs numeric parameters, got '" +
                       text + "'");
    }
    pos = comma + 1;
  }
  return out;
}

double skew_core(double shape, RngStream& rng) {
  const double delta = shape / std::sqrt(1.0 + shape * shape);
  return delta * std::abs(rng.normal()) +
         std::sqrt(1.0 - delta * delta) * rng.normal();
}

double mean_value(const std::string& name, double t) {
  if (name == "sin2pi") return std::sin(2.0 * M_PI * t);
  if (name == "damped-sin")
    return 10.0 * std::sin(2.0 * M_PI * t) * std::exp(-3.0 * t);
  if (name == "zero") return 0.0;
  throw UnknownKey("unknown mean function '" + name + "'");
}

std::string default_mean(int study) {
  return (study == 3 || study == 4) ? "damped-sin" : "sin2pi";
}

}  // namespace

NoiseSpec NoiseSpec::parse(const std::string& text) {
  NoiseSpec spec;
  if (text == "none") {
    spec.kind = Kind::none;
    return spec;
  }
  const size_t colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string args =
      colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (head == "normal") {
    spec.kind = Kind::normal;
    const auto v = parse_number_list(args, "normal noise");
    if (v.size() != 1) throw ParseError("normal noise needs 'normal:<sigma2>'");
    spec.sigma2 = v[0];
    if (spec.sigma2 < 0.0) throw DomainError("noise variance must be >= 0");
  } else if (head == "t") {
    spec.kind = Kind::student_t;
    const auto v = parse_number_list(args, "t noise");
    if (v.size() != 1) throw ParseError("t noise needs 't:<df>'");
    spec.df = v[0];
    if (spec.df <= 0.0) throw DomainError("t noise needs df > 0");
  } else if (head == "sn" || head == "st") {
    const bool tailed = head == "st";
    spec.kind = tailed ? Kind::skew_t : Kind::skew_normal;
    const auto v = parse_number_list(args, "skew noise");
    if (v.size() != (tailed ? 4u : 3u))
      throw ParseError(tailed ? "skew t noise needs 'st:<loc>,<scale>,<shape>,<df>'"
                              : "skew normal noise needs 'sn:<loc>,<scale>,<shape>'");
    spec.loc = v[0];
    spec.scale = v[1];
    spec.shape = v[2];
    if (spec.scale <= 0.0) throw DomainError("skew noise needs scale > 0");
    if (tailed) {
      spec.df = v[3];
      if (spec.df <= 0.0) throw DomainError("skew t noise needs df > 0");
    }
  } else {
    throw ParseError("unknown noise spec '" + text + "'");
  }
  return spec;
}

std::string NoiseSpec::describe() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  switch (kind) {
    case Kind::none: return "none";
    case Kind::normal: return "normal:" + num(sigma2);
    case Kind::student_t: return "t:" + num(df);
    case Kind::skew_normal:
      return "sn:" + num(loc) + "," + num(scale) + "," + num(shape);
    case Kind::skew_t:
      return "st:" + num(loc) + "," + num(scale) + "," + num(shape) + "," + num(df);
  }
  return "none";
}

double NoiseSpec::draw(RngStream& rng) const {
  switch (kind) {
    case Kind::none: return 0.0;
    case Kind::normal: return std::sqrt(sigma2) * rng.normal();
    case Kind::student_t:
      return rng.normal() / std::sqrt(sample_chi2(rng, df) / df);
    case Kind::skew_normal: return loc + scale * skew_core(shape, rng);
    case Kind::skew_t:
      return loc + scale * skew_core(shape, rng) /
                       std::sqrt(sample_chi2(rng, df) / df);
  }
  return 0.0;
}

void validate_design(const SimDesign& design) {
  if (design.study < 1 || design.study > 5)
    throw DomainError("study outside 1..5");
  if (design.n < 1) throw DomainError("need at least one curve");
  if (design.m < 2) throw DomainError("need at least two grid points");
  if ((design.study == 3 || design.study == 4) && design.m < 4)
    throw DomainError("studies 3 and 4 need at least four grid points");
  if (!(design.contamination_p >= 0.0 && design.contamination_p <= 1.0))
    throw DomainError("contamination probability outside [0,1]");
  if (design.process != ProcessKind::gaussian && design.study != 1)
    throw DomainError("skew process variants belong to study 1");
  if (design.process_df <= 0.0) throw DomainError("process df must be > 0");
  if (design.sparsity) {
    if (design.sparsity->n_min < 3)
      throw DomainError("sparse curves need at least 3 observations");
    if (design.sparsity->n_max < design.sparsity->n_min)
      throw DomainError("sparsity n_max below n_min");
    if (design.sparsity->n_max > design.m)
      throw DomainError("sparsity n_max exceeds the grid size");
  }
}

SimData gen_kl_data(const SimDesign& design) {
  validate_design(design);
  const long n = design.n, m = design.m;
  const bool unit_domain = design.study == 3 || design.study == 4;

  SimData sim;
  auto& tr = sim.truth;
  tr.grid = Eigen::VectorXd::LinSpaced(m, unit_domain ? 0.0 : -1.0, 1.0);
  const std::string mean_name =
      design.mean.empty() ? default_mean(design.study) : design.mean;
  tr.mean.resize(m);
  for (long j = 0; j < m; ++j) tr.mean[j] = mean_value(mean_name, tr.grid[j]);

  if (unit_domain) {
    // eigenfunctions of the exponential kernel, spectrum pinned to the
    // four-step ladder the study prescribes
    const FpcBasis fpc =
        eigen_fpca(matern_half_cov(tr.grid, 1.0, 3.0), tr.grid, 4);
    tr.phi = fpc.eigenfunctions;
    tr.lambda.resize(4);
    tr.lambda << 0.83, 0.08, 0.03, 0.015;
  } else {
    const FpcBasis fpc =
        eigen_fpca(design.true_cov.evaluate(tr.grid), tr.grid, int(m));
    tr.phi = fpc.eigenfunctions;
    tr.lambda = fpc.eigenvalues;
  }
  tr.cov = tr.phi * tr.lambda.asDiagonal() * tr.phi.transpose();
  tr.cov = 0.5 * (tr.cov + tr.cov.transpose()).eval();

  const long K = tr.lambda.size();
  const Eigen::VectorXd root_lambda = tr.lambda.cwiseSqrt();
  tr.scores.resize(n, K);
  tr.outlier.assign(static_cast<size_t>(n), 0);

  NoiseSpec clean_noise;  // study-5 uncontaminated curves
  clean_noise.kind = NoiseSpec::Kind::normal;
  clean_noise.sigma2 = 0.3;

  RngStream rng(design.seed, 0, 0, Site::simulate);
  Eigen::MatrixXd y(n, m);
  for (long i = 0; i < n; ++i) {
    bool wild = false;
    if (design.study == 5 && design.contamination_p > 0.0) {
      wild = rng.uniform() < design.contamination_p;
      tr.outlier[static_cast<size_t>(i)] = wild ? 1 : 0;
    }

    for (long k = 0; k < K; ++k) tr.scores(i, k) = rng.normal();
    Eigen::VectorXd x =
        tr.phi * root_lambda.cwiseProduct(tr.scores.row(i).transpose());

    ProcessKind pk = design.process;
    if (pk == ProcessKind::half_mix)
      pk = (i < (n + 1) / 2) ? ProcessKind::skew_normal : ProcessKind::skew_t;
    if (pk == ProcessKind::skew_normal || pk == ProcessKind::skew_t)
      for (long j = 0; j < m; ++j) x[j] += std::abs(rng.normal());
    if (pk == ProcessKind::skew_t)
      x /= std::sqrt(sample_chi2(rng, design.process_df) / design.process_df);

    const NoiseSpec& noise =
        (design.study == 5 && !wild) ? clean_noise : design.noise;
    for (long j = 0; j < m; ++j) y(i, j) = tr.mean[j] + x[j] + noise.draw(rng);
  }
  sim.data = FunctionalDataset::from_dense(tr.grid, y);

  if ((design.study == 3 || design.study == 4) && design.contamination_p > 0.0) {
    RngStream crng(design.seed, 0, 1, Site::simulate);
    contaminate(sim, design.contamination_p, crng);
  }
  if (design.sparsity) {
    RngStream srng(design.seed, 0, 2, Site::simulate);
    sim.data = sparsify(sim.data, design.sparsity->n_min, design.sparsity->n_max,
                        srng);
  }
  return sim;
}

void contaminate(SimData& sim, double p, RngStream& rng) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError("contamination probability outside [0,1]");
  if (!sim.data.dense)
    throw DomainError("contamination applies before sparsification");
  auto& tr = sim.truth;
  const long n = sim.data.y.rows();
  if (tr.scores.rows() != n || tr.scores.cols() < 3 || tr.lambda.size() < 3 ||
      tr.phi.cols() < 3)
    throw InsufficientData("truth record lacks the scores to contaminate");
  if (tr.outlier.size() != static_cast<size_t>(n))
    tr.outlier.assign(static_cast<size_t>(n), 0);

  const double sd = 0.25;  // variance 1/16 on both replaced scores
  for (long i = 0; i < n; ++i) {
    if (rng.uniform() >= p) continue;
    const double z2 = 20.0 + sd * rng.normal();
    const double z3 = 25.0 + sd * rng.normal();
    sim.data.y.row(i) += std::sqrt(tr.lambda[1]) * (z2 - tr.scores(i, 1)) *
                             tr.phi.col(1).transpose() +
                         std::sqrt(tr.lambda[2]) * (z3 - tr.scores(i, 2)) *
                             tr.phi.col(2).transpose();
    tr.scores(i, 1) = z2;
    tr.scores(i, 2) = z3;
    tr.outlier[static_cast<size_t>(i)] = 1;
  }
}

FunctionalDataset sparsify(const FunctionalDataset& dense, int n_min, int n_max,
                           RngStream& rng, bool grid_times) {
  if (!dense.dense) throw DomainError("sparsify needs a dense dataset");
  const long n = dense.y.rows(), m = dense.grid.size();
  if (n_min < 3) throw DomainError("sparse curves need at least 3 observations");
  if (n_max < n_min) throw DomainError("n_max below n_min");
  if (n_max > m) throw DomainError("n_max exceeds the grid size");

  const double lo = dense.grid[0], hi = dense.grid[m - 1];
  std::vector<SparseCurve> curves;
  curves.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    const int span = n_max - n_min + 1;
    const int ni =
        n_min + std::min(span - 1, int(rng.uniform() * double(span)));
    SparseCurve c;
    c.id = dense.ids[static_cast<size_t>(i)];
    c.t.resize(ni);
    c.y.resize(ni);
    if (grid_times) {
      std::vector<long> idx(static_cast<size_t>(m));
      std::iota(idx.begin(), idx.end(), 0L);
      for (int j = 0; j < ni; ++j) {
        const long pick =
            j + std::min(m - 1 - j, long(rng.uniform() * double(m - j)));
        std::swap(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(pick)]);
      }
      idx.resize(static_cast<size_t>(ni));
      std::sort(idx.begin(), idx.end());
      for (int j = 0; j < ni; ++j) {
        c.t[j] = dense.grid[idx[static_cast<size_t>(j)]];
        c.y[j] = dense.y(i, idx[static_cast<size_t>(j)]);
      }
    } else {
      const Eigen::VectorXd row = dense.y.row(i).transpose();
      std::vector<double> t(static_cast<size_t>(ni));
      do {
        for (auto& v : t) v = lo + rng.uniform() * (hi - lo);
        std::sort(t.begin(), t.end());
      } while (std::adjacent_find(t.begin(), t.end()) != t.end());
      for (int j = 0; j < ni; ++j) {
        c.t[j] = t[static_cast<size_t>(j)];
        c.y[j] = interp_linear(dense.grid, row, c.t[j]);
      }
    }
    curves.push_back(std::move(c));
  }
  return FunctionalDataset::from_sparse(std::move(curves));
}

double metric_l2_cov(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != est.cols() || truth.rows() != truth.cols() ||
      est.rows() != truth.rows())
    throw DimensionMismatch("covariance estimates differ in shape");
  return (est - truth).norm();
}

double metric_l2_cov(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth,
                     const Eigen::VectorXd& grid) {
  if (est.rows() != est.cols() || truth.rows() != truth.cols() ||
      est.rows() != truth.rows())
    throw DimensionMismatch("covariance estimates differ in shape");
  if (grid.size() != est.rows())
    throw DimensionMismatch("grid does not match the covariance");
  const Eigen::VectorXd sw = trapezoid_weights(grid).cwiseSqrt();
  return (sw.asDiagonal() * (est - truth) * sw.asDiagonal()).norm();
}

double metric_pc_error(const Eigen::VectorXd& est_pc,
                       const Eigen::VectorXd& true_pc, PcMetric kind) {
  if (est_pc.size() != true_pc.size())
    throw DimensionMismatch("principal components differ in length");
  const double ne = est_pc.norm(), nt = true_pc.norm();
  if (ne == 0.0 || nt == 0.0)
    throw ZeroVector("principal component has zero norm");
  Eigen::VectorXd e = est_pc / ne;
  const Eigen::VectorXd t = true_pc / nt;
  double dot = e.dot(t);
  if (dot < 0.0) {
    e = -e;
    dot = -dot;
  }
  if (kind == PcMetric::mse)
    return (e - t).squaredNorm() / double(e.size());
  return std::acos(std::min(1.0, dot));
}

}  // namespace rbfpca
