#include "rbfpca/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "rbfpca/common.hpp"

namespace rbfpca {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_value(const std::string& raw, const std::string& context) {
  const std::string s = trim(raw);
  if (s.empty()) throw ParseError("empty numeric field in " + context);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ParseError("malformed number '" + s + "' in " + context);
  if (!std::isfinite(v))
    throw ParseError("non-finite value '" + s + "' in " + context);
  return v;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  return out;
}

// Reads lines, skipping blank ones, stripping a trailing '\r'.
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) return true;
  }
  return false;
}

void check_unique_ids(const std::vector<std::string>& ids) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw DuplicateId("duplicate curve id '" + id + "'");
}

}  // namespace

long FunctionalDataset::n_obs() const {
  if (dense) return y.rows() * y.cols();
  long total = 0;
  for (const auto& c : curves) total += c.t.size();
  return total;
}

FunctionalDataset FunctionalDataset::from_dense(const Eigen::VectorXd& grid,
                                                const Eigen::MatrixXd& y,
                                                std::vector<std::string> ids) {
  if (grid.size() == 0 || y.rows() == 0) throw EmptyDataset("no observations");
  if (y.cols() != grid.size())
    throw DimensionMismatch("curve length " + std::to_string(y.cols()) +
                            " does not match grid size " + std::to_string(grid.size()));
  for (long j = 0; j + 1 < grid.size(); ++j)
    if (!(grid[j] < grid[j + 1]))
      throw DomainError("grid times must be strictly increasing");
  if (!grid.allFinite() || !y.allFinite())
    throw DomainError("dataset contains non-finite values");
  if (ids.empty()) {
    ids.reserve(y.rows());
    for (long i = 0; i < y.rows(); ++i) ids.push_back(std::to_string(i + 1));
  }
  if (static_cast<long>(ids.size()) != y.rows())
    throw DimensionMismatch("id count does not match curve count");
  check_unique_ids(ids);

  FunctionalDataset data;
  data.dense = true;
  data.grid = grid;
  data.y = y;
  data.ids = std::move(ids);
  data.lo = grid[0];
  data.hi = grid[grid.size() - 1];
  return data;
}

FunctionalDataset FunctionalDataset::from_sparse(std::vector<SparseCurve> curves) {
  if (curves.empty()) throw EmptyDataset("no curves");
  FunctionalDataset data;
  data.dense = false;
  data.lo = std::numeric_limits<double>::infinity();
  data.hi = -data.lo;
  for (auto& c : curves) {
    if (c.t.size() < 3)
      throw InsufficientData("curve '" + c.id + "' has fewer than 3 measurements");
    if (c.t.size() != c.y.size())
      throw DimensionMismatch("curve '" + c.id + "' has mismatched time/value lengths");
    if (!c.t.allFinite() || !c.y.allFinite())
      throw DomainError("curve '" + c.id + "' contains non-finite values");
    for (long j = 0; j + 1 < c.t.size(); ++j)
      if (!(c.t[j] < c.t[j + 1]))
        throw DomainError("curve '" + c.id + "' times must be strictly increasing");
    data.lo = std::min(data.lo, c.t[0]);
    data.hi = std::max(data.hi, c.t[c.t.size() - 1]);
    data.ids.push_back(c.id);
  }
  check_unique_ids(data.ids);
  data.curves = std::move(curves);
  return data;
}

FunctionalDataset load_dense_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!next_line(in, line)) throw EmptyDataset(path + " is empty");
  auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header[0]) != "t")
    throw ParseError(path + ": expected header 't,<t_1>,...'");
  const long m = static_cast<long>(header.size()) - 1;
  Eigen::VectorXd grid(m);
  for (long j = 0; j < m; ++j)
    grid[j] = parse_value(header[j + 1], path + " header");

  std::vector<std::string> ids;
  std::vector<Eigen::VectorXd> rows;
  while (next_line(in, line)) {
    auto fields = split_csv_line(line);
    if (static_cast<long>(fields.size()) != m + 1)
      throw ParseError(path + " row " + std::to_string(rows.size() + 1) + ": expected " +
                       std::to_string(m + 1) + " fields, got " + std::to_string(fields.size()));
    ids.push_back(trim(fields[0]));
    Eigen::VectorXd row(m);
    for (long j = 0; j < m; ++j)
      row[j] = parse_value(fields[j + 1], path + " row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyDataset(path + " has no curves");
  Eigen::MatrixXd y(static_cast<long>(rows.size()), m);
  for (size_t i = 0; i < rows.size(); ++i) y.row(static_cast<long>(i)) = rows[i];
  return FunctionalDataset::from_dense(grid, y, std::move(ids));
}

FunctionalDataset load_sparse_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!next_line(in, line)) throw EmptyDataset(path + " is empty");
  auto header = split_csv_line(line);
  if (header.size() != 3 || trim(header[0]) != "curve_id" || trim(header[1]) != "t" ||
      trim(header[2]) != "y")
    throw ParseError(path + ": expected header 'curve_id,t,y'");

  // Group observations by id, preserving first-appearance order of curves.
  std::vector<std::string> order;
  std::vector<std::vector<std::pair<double, double>>> obs;
  long row = 0;
  while (next_line(in, line)) {
    ++row;
    auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw ParseError(path + " row " + std::to_string(row) + ": expected 3 fields");
    const std::string id = trim(fields[0]);
    const double t = parse_value(fields[1], path + " row " + std::to_string(row));
    const double y = parse_value(fields[2], path + " row " + std::to_string(row));
    size_t k = 0;
    while (k < order.size() && order[k] != id) ++k;
    if (k == order.size()) {
      order.push_back(id);
      obs.emplace_back();
    }
    obs[k].emplace_back(t, y);
  }
  if (order.empty()) throw EmptyDataset(path + " has no observations");

  std::vector<SparseCurve> curves;
  curves.reserve(order.size());
  for (size_t k = 0; k < order.size(); ++k) {
    auto& pts = obs[k];
    std::sort(pts.begin(), pts.end());
    for (size_t j = 0; j + 1 < pts.size(); ++j)
      if (pts[j].first == pts[j + 1].first)
        throw DomainError("curve '" + order[k] + "' has duplicate time " +
                          format_value(pts[j].first));
    if (pts.size() < 3) {
      warn("dropping curve '" + order[k] + "' with fewer than 3 measurements");
      continue;
    }
    SparseCurve c;
    c.id = order[k];
    c.t.resize(static_cast<long>(pts.size()));
    c.y.resize(static_cast<long>(pts.size()));
    for (size_t j = 0; j < pts.size(); ++j) {
      c.t[static_cast<long>(j)] = pts[j].first;
      c.y[static_cast<long>(j)] = pts[j].second;
    }
    curves.push_back(std::move(c));
  }
  if (curves.empty())
    throw InsufficientData(path + ": every curve has fewer than 3 measurements");
  return FunctionalDataset::from_sparse(std::move(curves));
}

void save_dense_csv(const std::string& path, const FunctionalDataset& data) {
  if (!data.dense) throw DomainError("dataset is not on a shared grid");
  auto out = open_output(path);
  out << "t";
  for (long j = 0; j < data.grid.size(); ++j) out << "," << format_value(data.grid[j]);
  out << "\n";
  for (long i = 0; i < data.y.rows(); ++i) {
    out << data.ids[static_cast<size_t>(i)];
    for (long j = 0; j < data.y.cols(); ++j) out << "," << format_value(data.y(i, j));
    out << "\n";
  }
}

void save_sparse_csv(const std::string& path, const FunctionalDataset& data) {
  auto out = open_output(path);
  out << "curve_id,t,y\n";
  if (data.dense) {
    for (long i = 0; i < data.y.rows(); ++i)
      for (long j = 0; j < data.y.cols(); ++j)
        out << data.ids[static_cast<size_t>(i)] << "," << format_value(data.grid[j]) << ","
            << format_value(data.y(i, j)) << "\n";
    return;
  }
  for (const auto& c : data.curves)
    for (long j = 0; j < c.t.size(); ++j)
      out << c.id << "," << format_value(c.t[j]) << "," << format_value(c.y[j]) << "\n";
}

PriorCovSpec load_prior_cov_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!next_line(in, line)) throw EmptyDataset(path + " is empty");
  auto header = split_csv_line(line);
  const long q = static_cast<long>(header.size());
  Eigen::VectorXd grid(q);
  for (long j = 0; j < q; ++j) grid[j] = parse_value(header[j], path + " header");
  for (long j = 0; j + 1 < q; ++j)
    if (!(grid[j] < grid[j + 1]))
      throw DomainError(path + ": grid times must be strictly increasing");

  Eigen::MatrixXd cov(q, q);
  for (long i = 0; i < q; ++i) {
    if (!next_line(in, line))
      throw ParseError(path + ": expected " + std::to_string(q) + " rows, got " +
                       std::to_string(i));
    auto fields = split_csv_line(line);
    if (static_cast<long>(fields.size()) != q)
      throw ParseError(path + " row " + std::to_string(i + 1) + ": expected " +
                       std::to_string(q) + " fields");
    for (long j = 0; j < q; ++j)
      cov(i, j) = parse_value(fields[j], path + " row " + std::to_string(i + 1));
  }
  if (next_line(in, line)) throw ParseError(path + ": trailing rows beyond square matrix");

  PriorCovSpec spec;
  spec.kind = PriorCovSpec::Kind::matrix;
  spec.path = path;
  spec.grid = grid;
  spec.cov = 0.5 * (cov + cov.transpose());
  return spec;
}

void save_prior_cov_csv(const std::string& path, const Eigen::VectorXd& grid,
                        const Eigen::MatrixXd& cov) {
  if (cov.rows() != grid.size() || cov.cols() != grid.size())
    throw DimensionMismatch("covariance does not match grid size");
  auto out = open_output(path);
  for (long j = 0; j < grid.size(); ++j)
    out << (j ? "," : "") << format_value(grid[j]);
  out << "\n";
  for (long i = 0; i < cov.rows(); ++i) {
    for (long j = 0; j < cov.cols(); ++j) out << (j ? "," : "") << format_value(cov(i, j));
    out << "\n";
  }
}

namespace {

// Gaussian local-linear estimate at x; falls back to the kernel-weighted mean
// when the local design is degenerate (e.g. all mass on one far side).
double local_linear_at(const std::vector<double>& t, const std::vector<double>& y,
                       double h, double x) {
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    const double u = (t[i] - x) / h;
    const double k = std::exp(-0.5 * u * u);
    const double dt = t[i] - x;
    s0 += k;
    s1 += k * dt;
    s2 += k * dt * dt;
    t0 += k * y[i];
    t1 += k * dt * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  if (!(s0 > 0)) throw NumericUnderflow("smoother kernel weights vanished");
  if (det <= 1e-12 * s0 * s2 || s2 <= 0) return t0 / s0;
  return (s2 * t0 - s1 * t1) / det;
}

}  // namespace

MeanEstimate detrend(FunctionalDataset& data) {
  if (data.n_obs() < 10)
    throw InsufficientData("need at least 10 pooled observations, got " +
                           std::to_string(data.n_obs()));
  MeanEstimate mean;
  if (data.dense) {
    mean.grid = data.grid;
    mean.value = data.y.colwise().mean();
    data.y.rowwise() -= mean.value.transpose();
    return mean;
  }

  std::vector<double> t, y;
  for (const auto& c : data.curves)
    for (long j = 0; j < c.t.size(); ++j) {
      t.push_back(c.t[j]);
      y.push_back(c.y[j]);
    }
  const long n = static_cast<long>(t.size());

  // Silverman bandwidth on the pooled times: 0.9 min(sd, IQR/1.34) n^{-1/5}.
  std::vector<double> ts = t;
  std::sort(ts.begin(), ts.end());
  const double mean_t = std::accumulate(ts.begin(), ts.end(), 0.0) / n;
  double ss = 0;
  for (double v : ts) ss += (v - mean_t) * (v - mean_t);
  const double sd = std::sqrt(ss / (n - 1));
  const double iqr = ts[static_cast<size_t>(0.75 * (n - 1))] -
                     ts[static_cast<size_t>(0.25 * (n - 1))];
  double spread = sd;
  if (iqr > 0) spread = std::min(sd, iqr / 1.34);
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0)) throw DegenerateRange("pooled times have no spread");

  const long grid_points = 101;
  mean.grid.resize(grid_points);
  mean.value.resize(grid_points);
  for (long j = 0; j < grid_points; ++j) {
    mean.grid[j] =
        data.lo + (data.hi - data.lo) * static_cast<double>(j) / (grid_points - 1);
    mean.value[j] = local_linear_at(t, y, h, mean.grid[j]);
  }
  // Center at the exact observation times rather than by interpolation.
  for (auto& c : data.curves)
    for (long j = 0; j < c.t.size(); ++j) c.y[j] -= local_linear_at(t, y, h, c.t[j]);
  return mean;
}

}  // namespace rbfpca
