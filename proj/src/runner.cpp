#include "rbfpca/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "rbfpca/basis.hpp"
#include "rbfpca/parallel.hpp"
#include "rbfpca/special.hpp"

namespace rbfpca {

namespace {

std::string trimmed(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "' needs a number, got '" + value +
                     "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "' needs an integer, got '" +
                     value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value[0] == '-')
      throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key +
                     "' needs a nonnegative integer, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < INT_MIN || v > INT_MAX)
    throw ParseError("config key '" + key + "' out of range: " + value);
  return static_cast<int>(v);
}

std::ofstream open_artifact(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  return out;
}

std::string join_path(const std::string& dir, const char* name) {
  if (dir.empty() || dir == ".") return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

// Minimal structured JSON emitter; every number goes through format_g17.
class JsonWriter {
public:
  explicit JsonWriter(std::ostream& out) : out_(out) {}

  void begin_object() { separator(); out_ << '{'; fresh_ = true; }
  void end_object() { out_ << '}'; fresh_ = false; }
  void begin_array() { separator(); out_ << '['; fresh_ = true; }
  void end_array() { out_ << ']'; fresh_ = false; }
  void null_value() { separator(); out_ << "null"; fresh_ = false; }
  void key(const std::string& name) {
    separator();
    out_ << '"' << escaped(name) << "\":";
    fresh_ = true;
  }
  void value(double v) { separator(); out_ << format_g17(v); fresh_ = false; }
  void value(long v) { separator(); out_ << v; fresh_ = false; }
  void value(std::uint64_t v) { separator(); out_ << v; fresh_ = false; }
  void value(bool v) { separator(); out_ << (v ? "true" : "false"); fresh_ = false; }
  void value(const std::string& v) {
    separator();
    out_ << '"' << escaped(v) << '"';
    fresh_ = false;
  }
  void array(const double* p, long n) {
    separator();
    out_ << '[';
    for (long i = 0; i < n; ++i) {
      if (i) out_ << ',';
      out_ << format_g17(p[i]);
    }
    out_ << ']';
    fresh_ = false;
  }
  void array(const Eigen::VectorXd& v) { array(v.data(), v.size()); }
  // Row-major flattening regardless of Eigen's storage order.
  void array_row_major(const Eigen::MatrixXd& m) {
    separator();
    out_ << '[';
    bool first = true;
    for (long i = 0; i < m.rows(); ++i)
      for (long j = 0; j < m.cols(); ++j) {
        if (!first) out_ << ',';
        first = false;
        out_ << format_g17(m(i, j));
      }
    out_ << ']';
    fresh_ = false;
  }
  void array(const std::vector<std::string>& v) {
    separator();
    out_ << '[';
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) out_ << ',';
      out_ << '"' << escaped(v[i]) << '"';
    }
    out_ << ']';
    fresh_ = false;
  }

private:
  void separator() {
    if (!fresh_) out_ << ',';
    fresh_ = true;
  }
  static std::string escaped(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
      if (c == '"' || c == '\\') {
        out += '\\';
        out += c;
      } else if (static_cast<unsigned char>(c) < 0x20) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "\\u%04x", c);
        out += buf;
      } else {
        out += c;
      }
    }
    return out;
  }
  std::ostream& out_;
  bool fresh_ = true;
};

void write_meta(JsonWriter& w, const std::string& digest, std::uint64_t seed) {
  w.key("meta");
  w.begin_object();
  w.key("version");
  w.value(std::string(RBFPCA_VERSION));
  w.key("config_hash");
  w.value(digest);
  w.key("seed");
  w.value(seed);
  w.end_object();
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigMap
// ---------------------------------------------------------------------------

void ConfigMap::set(const std::string& key, const std::string& value) {
  entries.emplace_back(key, value);
}

const std::string* ConfigMap::find(const std::string& key) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->first == key) return &it->second;
  return nullptr;
}

void ConfigMap::merge(const ConfigMap& overrides) {
  for (const auto& e : overrides.entries) entries.push_back(e);
}

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  ConfigMap map;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string text = trimmed(line.substr(0, line.find('#')));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": malformed section header '" + text + "'");
      continue;  // sections organize the file; keys are flat
    }
    const size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + text + "'");
    const std::string key = trimmed(text.substr(0, eq));
    const std::string value = trimmed(text.substr(eq + 1));
    if (key.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
    map.set(key, value);
  }
  return map;
}

std::string ConfigMap::canonical() const {
  std::map<std::string, std::string> effective;
  for (const auto& e : entries) effective[e.first] = e.second;
  std::string out;
  for (const auto& e : effective) out += e.first + "=" + e.second + "\n";
  return out;
}

std::uint64_t ConfigMap::digest() const {
  const std::string text = canonical();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ConfigMap::digest_hex() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, digest());
  return buf;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// fit configuration
// ---------------------------------------------------------------------------

namespace {

// Returns true when the key belongs to FitConfig and was applied.
bool apply_fit_key(FitConfig& cfg, const std::string& key,
                   const std::string& value) {
  if (key == "data") cfg.data = value;
  else if (key == "variant") cfg.variant = value;
  else if (key == "P") cfg.P = parse_int(key, value);
  else if (key == "K") cfg.K = parse_int(key, value);
  else if (key == "prior") cfg.prior = value;
  else if (key == "support_points") cfg.support_points = parse_int(key, value);
  else if (key == "tmvn_sweeps") cfg.tmvn_sweeps = parse_int(key, value);
  else if (key == "particles") cfg.particles = parse_long(key, value);
  else if (key == "rcess") cfg.rcess = parse_double(key, value);
  else if (key == "resample") cfg.resample = parse_double(key, value);
  else if (key == "max_iterations") cfg.max_iterations = parse_long(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "threads") cfg.threads = parse_int(key, value);
  else if (key == "band_level") cfg.band_level = parse_double(key, value);
  else if (key == "outlier_level") cfg.outlier_level = parse_double(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "verbosity") cfg.verbosity = parse_int(key, value);
  else return false;
  return true;
}

}  // namespace

void apply_config(FitConfig& cfg, const ConfigMap& map) {
  for (const auto& e : map.entries)
    if (!apply_fit_key(cfg, e.first, e.second))
      throw UnknownKey("unknown config key '" + e.first + "'");
}

ConfigMap effective_config(const FitConfig& cfg) {
  // identifies the run scientifically: threads/out/verbosity never change
  // results, so they stay out of the hash
  ConfigMap map;
  map.set("data", cfg.data);
  map.set("variant", cfg.variant);
  map.set("P", std::to_string(cfg.P));
  map.set("K", std::to_string(cfg.K));
  map.set("prior", cfg.prior);
  map.set("support_points", std::to_string(cfg.support_points));
  map.set("tmvn_sweeps", std::to_string(cfg.tmvn_sweeps));
  map.set("particles", std::to_string(cfg.particles));
  map.set("rcess", format_g17(cfg.rcess));
  map.set("resample", format_g17(cfg.resample));
  map.set("max_iterations", std::to_string(cfg.max_iterations));
  map.set("seed", std::to_string(cfg.seed));
  map.set("band_level", format_g17(cfg.band_level));
  map.set("outlier_level", format_g17(cfg.outlier_level));
  return map;
}

void validate_fit_config(const FitConfig& cfg) {
  if (cfg.P < 1) throw DomainError("P must be >= 1");
  if (cfg.K < 1) throw DomainError("K must be >= 1");
  if (cfg.K > cfg.P)
    throw DomainError("model requires K <= P, got K=" + std::to_string(cfg.K) +
                      " > P=" + std::to_string(cfg.P));
  if (cfg.support_points < 2)
    throw DomainError("support_points must be >= 2");
  if (cfg.tmvn_sweeps < 1) throw DomainError("tmvn_sweeps must be >= 1");
  if (!(cfg.band_level > 0.0 && cfg.band_level < 1.0))
    throw DomainError("band_level must lie in (0,1)");
  if (!(cfg.outlier_level > 0.0 && cfg.outlier_level < 1.0))
    throw DomainError("outlier_level must lie in (0,1)");
  if (cfg.threads < 0) throw DomainError("threads must be >= 0");
  parse_variant(cfg.variant);            // throws on unknown names
  PriorCovSpec::parse(cfg.prior);        // throws on malformed specs
}

FunctionalDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string first;
  if (!std::getline(in, first)) throw EmptyDataset(path + " is empty");
  in.close();
  const std::string head = trimmed(first.substr(0, first.find(',')));
  if (head == "curve_id") return load_sparse_csv(path);
  return load_dense_csv(path);
}

FitOutcome run_fit(FunctionalDataset data, const FitConfig& cfg) {
  validate_fit_config(cfg);

  FitOutcome outcome;
  outcome.variant = parse_variant(cfg.variant);
  outcome.seed = cfg.seed;
  outcome.config_digest = effective_config(cfg).digest_hex();
  outcome.threads = cfg.threads > 0
                        ? cfg.threads
                        : std::max(1, int(std::thread::hardware_concurrency()));
  if (data.dense) {
    outcome.ids = data.ids;
  } else {
    outcome.ids.reserve(data.curves.size());
    for (const auto& c : data.curves) outcome.ids.push_back(c.id);
  }

  outcome.mean = detrend(data);

  ModelSpec spec;
  spec.variant = outcome.variant;
  spec.P = cfg.P;
  spec.K = cfg.K;
  spec.prior = PriorCovSpec::parse(cfg.prior);
  spec.support_points = cfg.support_points;
  spec.tmvn_sweeps = cfg.tmvn_sweeps;

  const Hyperparameters hyper = derive_hyperparameters(data, cfg.K);
  const ModelWorkspace ws = build_workspace(data, spec, hyper);

  AsmcConfig acfg;
  acfg.n_particles = cfg.particles;
  acfg.rcess_threshold = cfg.rcess;
  acfg.resample_threshold = cfg.resample;
  acfg.max_iterations = cfg.max_iterations;
  acfg.seed = cfg.seed;
  acfg.threads = outcome.threads;

  if (cfg.verbosity >= 1)
    std::fprintf(stderr, "[rbfpca] fitting %s: n=%ld, particles=%ld, threads=%d\n",
                 cfg.variant.c_str(), long(ws.n), cfg.particles, outcome.threads);
  outcome.run = run_asmc(ws, acfg);
  if (cfg.verbosity >= 1)
    std::fprintf(stderr,
                 "[rbfpca] annealed in %zu steps, log evidence %.6f\n",
                 outcome.run.schedule.size() - 1, outcome.run.log_evidence);

  outcome.fpca = analyze(outcome.run, ws, cfg.band_level);

  try {
    outcome.outliers = detect_outliers(outcome.fpca.scores, cfg.outlier_level);
    outcome.outliers.probabilities =
        outlier_probability(outcome.run, ws, cfg.outlier_level);
  } catch (const InsufficientData& e) {
    warn(std::string("outlier stage skipped: ") + e.what());
    outcome.outliers = OutlierReport{};
    outcome.outliers.level = cfg.outlier_level;
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// artifacts
// ---------------------------------------------------------------------------

void write_fpca_result(const std::string& path, const FitOutcome& outcome) {
  auto out = open_artifact(path);
  const FpcaResult& r = outcome.fpca;
  Eigen::VectorXd mean_on_grid(r.grid.size());
  for (long j = 0; j < r.grid.size(); ++j)
    mean_on_grid[j] = outcome.mean.at(r.grid[j]);

  JsonWriter w(out);
  w.begin_object();
  write_meta(w, outcome.config_digest, outcome.seed);
  w.key("variant");
  w.value(describe(outcome.variant));
  w.key("log_evidence");
  w.value(outcome.run.log_evidence);
  w.key("n");
  w.value(long(r.scores.rows()));
  w.key("g");
  w.value(long(r.grid.size()));
  w.key("K");
  w.value(long(r.eigenvalues.size()));
  w.key("band_level");
  w.value(r.band_level);
  w.key("grid");
  w.array(r.grid);
  w.key("mean");
  w.array(mean_on_grid);
  w.key("covariance");
  w.array_row_major(r.cov_mean);
  w.key("covariance_lower");
  w.array_row_major(r.cov_lower);
  w.key("covariance_upper");
  w.array_row_major(r.cov_upper);
  w.key("eigenvalues");
  w.array(r.eigenvalues);
  w.key("eigenfunctions");
  w.array_row_major(r.eigenfunctions);
  w.key("variance_explained");
  w.array(r.var_explained);
  w.key("fpc_lower");
  w.array_row_major(r.fpc_lower);
  w.key("fpc_upper");
  w.array_row_major(r.fpc_upper);
  w.key("curve_ids");
  w.array(outcome.ids);
  w.key("scores");
  w.array_row_major(r.scores);
  w.end_object();
  out << "\n";
}

namespace {

void write_outlier_rows(std::ostream& out, const std::vector<std::string>& ids,
                        const OutlierReport& report) {
  const bool with_prob = report.probabilities.size() == report.distances.size();
  for (long i = 0; i < report.distances.size(); ++i) {
    out << ids[size_t(i)] << "\t" << format_g17(report.distances[i]) << "\t"
        << int(report.flags[size_t(i)]) << "\t"
        << (with_prob ? format_g17(report.probabilities[i]) : "nan") << "\n";
  }
}

}  // namespace

void write_outliers_tsv(const std::string& path,
                        const std::vector<std::string>& ids,
                        const OutlierReport& report,
                        const std::string& config_digest, std::uint64_t seed) {
  if (long(ids.size()) < report.distances.size())
    throw DimensionMismatch("fewer curve ids than distances");
  auto out = open_artifact(path);
  out << "# version=" << RBFPCA_VERSION << " config_hash=" << config_digest
      << " seed=" << seed << "\n";
  out << "# level=" << format_g17(report.level)
      << " threshold=" << format_g17(report.threshold) << "\n";
  out << "curve_id\tdistance\tflag\tprobability\n";
  write_outlier_rows(out, ids, report);
}

void write_outliers_json(const std::string& path,
                         const std::vector<std::string>& ids,
                         const OutlierReport& report,
                         const std::string& config_digest, std::uint64_t seed,
                         std::optional<long> top_k) {
  if (long(ids.size()) < report.distances.size())
    throw DimensionMismatch("fewer curve ids than distances");
  auto out = open_artifact(path);
  JsonWriter w(out);
  w.begin_object();
  write_meta(w, config_digest, seed);
  w.key("level");
  w.value(report.level);
  w.key("threshold");
  w.value(report.threshold);
  if (top_k) {
    w.key("top_k");
    w.value(long(*top_k));
  }
  w.key("estimator");
  w.begin_object();
  w.key("location");
  w.array(report.estimator.location);
  w.key("scatter");
  w.array_row_major(report.estimator.scatter);
  w.end_object();
  const bool with_prob = report.probabilities.size() == report.distances.size();
  w.key("curves");
  w.begin_array();
  for (long i = 0; i < report.distances.size(); ++i) {
    w.begin_object();
    w.key("curve_id");
    w.value(ids[size_t(i)]);
    w.key("distance");
    w.value(report.distances[i]);
    w.key("flag");
    w.value(bool(report.flags[size_t(i)]));
    w.key("probability");
    if (with_prob)
      w.value(report.probabilities[i]);
    else
      w.null_value();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  out << "\n";
}

void write_diagnostics_ndjson(const std::string& path,
                              const FitOutcome& outcome) {
  auto out = open_artifact(path);
  {
    JsonWriter w(out);
    w.begin_object();
    write_meta(w, outcome.config_digest, outcome.seed);
    w.end_object();
  }
  out << "\n";
  for (const AsmcRecord& rec : outcome.run.diagnostics) {
    JsonWriter w(out);
    w.begin_object();
    w.key("iteration");
    w.value(rec.iteration);
    w.key("alpha");
    w.value(rec.alpha);
    w.key("ress");
    w.value(rec.ress);
    w.key("resampled");
    w.value(rec.resampled);
    w.key("mh_acceptance");
    w.value(rec.mh_acceptance);
    w.key("log_evidence");
    w.value(rec.log_evidence);
    w.end_object();
    out << "\n";
  }
}

void write_evidence_txt(const std::string& path, const FitOutcome& outcome) {
  auto out = open_artifact(path);
  out << "log_evidence = " << format_g17(outcome.run.log_evidence) << "\n";
  out << "variant = " << describe(outcome.variant) << "\n";
  out << "version = " << RBFPCA_VERSION << "\n";
  out << "config_hash = " << outcome.config_digest << "\n";
  out << "seed = " << outcome.seed << "\n";
}

StoredResult load_fpca_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    StoredResult result;
    const long n = doc.at("n").get<long>();
    const long g = doc.at("g").get<long>();
    const long K = doc.at("K").get<long>();
    if (n < 1 || g < 1 || K < 1)
      throw ParseError(path + ": non-positive shape fields");
    const auto grid = doc.at("grid").get<std::vector<double>>();
    const auto scores = doc.at("scores").get<std::vector<double>>();
    const auto lambda = doc.at("eigenvalues").get<std::vector<double>>();
    result.ids = doc.at("curve_ids").get<std::vector<std::string>>();
    if (long(grid.size()) != g || long(scores.size()) != n * K ||
        long(lambda.size()) != K || long(result.ids.size()) != n)
      throw ParseError(path + ": field lengths disagree with shapes");
    result.grid = Eigen::Map<const Eigen::VectorXd>(grid.data(), g);
    result.eigenvalues = Eigen::Map<const Eigen::VectorXd>(lambda.data(), K);
    result.scores.resize(n, K);
    for (long i = 0; i < n; ++i)
      for (long k = 0; k < K; ++k)
        result.scores(i, k) = scores[size_t(i * K + k)];
    if (doc.contains("meta")) {
      const auto& meta = doc.at("meta");
      if (meta.contains("config_hash"))
        result.config_digest = meta.at("config_hash").get<std::string>();
      if (meta.contains("seed"))
        result.seed = meta.at("seed").get<std::uint64_t>();
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

int cmd_fit(const FitConfig& cfg) {
  if (cfg.data.empty()) throw DomainError("fit needs a data file");
  const FunctionalDataset data = load_dataset(cfg.data);
  const FitOutcome outcome = run_fit(data, cfg);
  write_fpca_result(join_path(cfg.out, "fpca_result.json"), outcome);
  write_outliers_tsv(join_path(cfg.out, "outliers.tsv"), outcome.ids,
                     outcome.outliers, outcome.config_digest, outcome.seed);
  write_diagnostics_ndjson(join_path(cfg.out, "diagnostics.ndjson"), outcome);
  write_evidence_txt(join_path(cfg.out, "evidence.txt"), outcome);
  if (cfg.verbosity >= 1)
    std::fprintf(stderr, "[rbfpca] artifacts written to %s\n",
                 cfg.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    const std::string piece = trimmed(text.substr(pos, comma - pos));
    if (!piece.empty()) out.push_back(piece);
    pos = comma + 1;
  }
  return out;
}

std::string joined(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

}  // namespace

void apply_config(CompareConfig& cfg, const ConfigMap& map) {
  for (const auto& e : map.entries) {
    if (e.first == "variants")
      cfg.variants = split_list(e.second);
    else if (!apply_fit_key(cfg.base, e.first, e.second))
      throw UnknownKey("unknown config key '" + e.first + "'");
  }
}

std::vector<CompareRow> run_compare(const FunctionalDataset& data,
                                    const CompareConfig& cfg) {
  if (cfg.variants.size() < 2)
    throw DomainError("compare needs at least two variants, got " +
                      std::to_string(cfg.variants.size()));
  for (const auto& v : cfg.variants) parse_variant(v);
  {
    FitConfig probe = cfg.base;
    probe.variant = cfg.variants.front();
    validate_fit_config(probe);  // shared settings fail before any fitting
  }

  std::vector<CompareRow> rows;
  for (const auto& v : cfg.variants) {
    CompareRow row;
    row.variant = v;
    FitConfig f = cfg.base;
    f.variant = v;
    try {
      row.log_evidence = run_fit(data, f).run.log_evidence;
    } catch (const Error& e) {
      row.error = e.what();
      row.log_evidence = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const CompareRow& a, const CompareRow& b) {
                     if (a.error.empty() != b.error.empty())
                       return a.error.empty();
                     if (a.error.empty()) return a.log_evidence > b.log_evidence;
                     return false;
                   });
  if (!rows.empty() && rows.front().error.empty()) rows.front().winner = true;
  return rows;
}

int cmd_compare(const CompareConfig& cfg) {
  if (cfg.base.data.empty()) throw DomainError("compare needs a data file");
  if (cfg.variants.size() < 2)
    throw DomainError("compare needs at least two variants, got " +
                      std::to_string(cfg.variants.size()));
  const FunctionalDataset data = load_dataset(cfg.base.data);
  const auto rows = run_compare(data, cfg);

  ConfigMap meta = effective_config(cfg.base);
  meta.set("variants", joined(cfg.variants));
  const std::string digest = meta.digest_hex();

  std::printf("%-10s %-24s\n", "variant", "log_evidence");
  for (const auto& row : rows) {
    if (row.error.empty())
      std::printf("%-10s %-24s%s\n", row.variant.c_str(),
                  format_g17(row.log_evidence).c_str(),
                  row.winner ? "  <- best" : "");
    else
      std::printf("%-10s failed: %s\n", row.variant.c_str(), row.error.c_str());
  }

  auto out = open_artifact(join_path(cfg.base.out, "comparison.tsv"));
  out << "# version=" << RBFPCA_VERSION << " config_hash=" << digest
      << " seed=" << cfg.base.seed << "\n";
  out << "variant\tlog_evidence\twinner\terror\n";
  for (const auto& row : rows)
    out << row.variant << "\t" << format_g17(row.log_evidence) << "\t"
        << int(row.winner) << "\t" << row.error << "\n";

  const bool any_ok = std::any_of(rows.begin(), rows.end(),
                                  [](const CompareRow& r) { return r.error.empty(); });
  return any_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

void apply_config(DetectConfig& cfg, const ConfigMap& map) {
  for (const auto& e : map.entries) {
    if (e.first == "result") cfg.result = e.second;
    else if (e.first == "level") cfg.level = parse_double(e.first, e.second);
    else if (e.first == "top_k") cfg.top_k = parse_long(e.first, e.second);
    else if (e.first == "out") cfg.out = e.second;
    else if (e.first == "verbosity") cfg.verbosity = parse_int(e.first, e.second);
    else throw UnknownKey("unknown config key '" + e.first + "'");
  }
}

OutlierReport detect_from_scores(const Eigen::MatrixXd& scores,
                                 const DetectConfig& cfg) {
  if (cfg.level && cfg.top_k)
    throw DomainError("give either level or top_k, not both");
  if (!cfg.level && !cfg.top_k)
    throw DomainError("detect needs a chi-square level or a top_k count");
  if (cfg.level) return detect_outliers(scores, *cfg.level);

  const long n = scores.rows();
  const long k = *cfg.top_k;
  if (k < 1 || k > n)
    throw DomainError("top_k must lie in [1, n]; n=" + std::to_string(n) +
                      ", top_k=" + std::to_string(k));
  OutlierReport report;
  report.estimator = robust_location_scatter(scores);
  report.distances = mahalanobis_distances(scores, report.estimator.location,
                                           report.estimator.scatter);
  Eigen::VectorXd d2 = report.distances.array().square();
  std::vector<long> order(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) order[size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](long a, long b) { return d2[a] > d2[b]; });
  // threshold between ranks k and k+1 keeps flags[i] <=> d_i^2 > threshold
  report.threshold =
      k < n ? 0.5 * (d2[order[size_t(k - 1)]] + d2[order[size_t(k)]]) : -1.0;
  report.level = 0.0;  // not a chi-square mode
  report.flags.assign(static_cast<size_t>(n), 0);
  for (long i = 0; i < n; ++i)
    report.flags[size_t(i)] = d2[i] > report.threshold ? 1 : 0;
  return report;
}

int cmd_detect(const DetectConfig& cfg) {
  if (cfg.result.empty()) throw DomainError("detect needs a result file");
  const StoredResult stored = load_fpca_result(cfg.result);
  const OutlierReport report = detect_from_scores(stored.scores, cfg);

  ConfigMap meta;
  meta.set("result", cfg.result);
  if (cfg.level) meta.set("level", format_g17(*cfg.level));
  if (cfg.top_k) meta.set("top_k", std::to_string(*cfg.top_k));
  meta.set("fit_config_hash", stored.config_digest);
  const std::string digest = meta.digest_hex();

  // Top-k mode lists exactly the flagged curves in rank order; level mode
  // lists every curve.
  std::vector<std::string> ids = stored.ids;
  OutlierReport listed = report;
  if (cfg.top_k) {
    const long n = report.distances.size();
    std::vector<long> order(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) order[size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
      return report.distances[a] > report.distances[b];
    });
    ids.clear();
    std::vector<double> dist;
    for (long i : order) {
      if (!report.flags[size_t(i)]) continue;
      ids.push_back(stored.ids[size_t(i)]);
      dist.push_back(report.distances[i]);
    }
    listed.distances =
        Eigen::Map<const Eigen::VectorXd>(dist.data(), long(dist.size()));
    listed.flags.assign(dist.size(), 1);
    listed.probabilities.resize(0);
  }

  write_outliers_tsv(join_path(cfg.out, "outliers.tsv"), ids, listed, digest,
                     stored.seed);
  write_outliers_json(join_path(cfg.out, "outliers.json"), ids, listed, digest,
                      stored.seed, cfg.top_k);
  if (cfg.verbosity >= 1) {
    long flagged = 0;
    for (char f : report.flags) flagged += f;
    std::fprintf(stderr,
                 "[rbfpca] flagged %ld of %ld curves (threshold %.6g)\n",
                 flagged, long(report.distances.size()), report.threshold);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate / bench
// ---------------------------------------------------------------------------

namespace {

std::string process_name(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::gaussian: return "gaussian";
    case ProcessKind::skew_normal: return "sn";
    case ProcessKind::skew_t: return "st";
    case ProcessKind::half_mix: return "half-mix";
  }
  return "gaussian";
}

ProcessKind parse_process(const std::string& name) {
  if (name == "gaussian") return ProcessKind::gaussian;
  if (name == "sn") return ProcessKind::skew_normal;
  if (name == "st") return ProcessKind::skew_t;
  if (name == "half-mix") return ProcessKind::half_mix;
  throw ParseError("unknown process '" + name +
                   "' (expected gaussian|sn|st|half-mix)");
}

std::string effective_mean_name(const SimDesign& d) {
  if (!d.mean.empty()) return d.mean;
  return (d.study == 3 || d.study == 4) ? "damped-sin" : "sin2pi";
}

// Returns true when the key belongs to SimDesign and was applied.
bool apply_design_key(SimDesign& d, const std::string& key,
                      const std::string& value) {
  if (key == "study") d.study = parse_int(key, value);
  else if (key == "n") d.n = parse_long(key, value);
  else if (key == "m") d.m = parse_long(key, value);
  else if (key == "mean") d.mean = value;
  else if (key == "cov") d.true_cov = PriorCovSpec::parse(value);
  else if (key == "process") d.process = parse_process(value);
  else if (key == "process_df") d.process_df = parse_double(key, value);
  else if (key == "noise") d.noise = NoiseSpec::parse(value);
  else if (key == "contamination") d.contamination_p = parse_double(key, value);
  else if (key == "sparsity") {
    if (value == "none") {
      d.sparsity.reset();
    } else {
      const auto parts = split_list(value);
      if (parts.size() != 2)
        throw ParseError("sparsity needs '<n_min>,<n_max>' or 'none'");
      d.sparsity = SparsitySpec{parse_int(key, parts[0]),
                                parse_int(key, parts[1])};
    }
  } else if (key == "seed") d.seed = parse_u64(key, value);
  else return false;
  return true;
}

ConfigMap design_config(const SimDesign& d) {
  ConfigMap map;
  map.set("study", std::to_string(d.study));
  map.set("n", std::to_string(d.n));
  map.set("m", std::to_string(d.m));
  map.set("mean", effective_mean_name(d));
  map.set("cov", d.true_cov.describe());
  map.set("process", process_name(d.process));
  map.set("process_df", format_g17(d.process_df));
  map.set("noise", d.noise.describe());
  map.set("contamination", format_g17(d.contamination_p));
  map.set("sparsity", d.sparsity ? std::to_string(d.sparsity->n_min) + "," +
                                       std::to_string(d.sparsity->n_max)
                                 : std::string("none"));
  map.set("seed", std::to_string(d.seed));
  return map;
}

}  // namespace

void apply_config(SimulateConfig& cfg, const ConfigMap& map) {
  for (const auto& e : map.entries) {
    if (apply_design_key(cfg.design, e.first, e.second)) continue;
    if (e.first == "out") cfg.out = e.second;
    else if (e.first == "verbosity") cfg.verbosity = parse_int(e.first, e.second);
    else throw UnknownKey("unknown config key '" + e.first + "'");
  }
}

int cmd_simulate(const SimulateConfig& cfg) {
  validate_design(cfg.design);
  const SimData sim = gen_kl_data(cfg.design);

  const std::string data_path = join_path(cfg.out, "dataset.csv");
  if (sim.data.dense)
    save_dense_csv(data_path, sim.data);
  else
    save_sparse_csv(data_path, sim.data);

  const std::string digest = design_config(cfg.design).digest_hex();
  auto out = open_artifact(join_path(cfg.out, "truth.json"));
  JsonWriter w(out);
  w.begin_object();
  write_meta(w, digest, cfg.design.seed);
  w.key("design");
  w.begin_object();
  for (const auto& e : design_config(cfg.design).entries) {
    w.key(e.first);
    w.value(e.second);
  }
  if (cfg.design.process != ProcessKind::gaussian) {
    // generative choices the design text leaves open
    w.key("skew_loadings");
    w.value(std::string("identity"));
  }
  w.end_object();
  w.key("grid");
  w.array(sim.truth.grid);
  w.key("mean");
  w.array(sim.truth.mean);
  w.key("lambda");
  w.array(sim.truth.lambda);
  w.key("phi");
  w.array_row_major(sim.truth.phi);
  w.key("scores");
  w.array_row_major(sim.truth.scores);
  w.key("outlier");
  w.begin_array();
  for (int flag : sim.truth.outlier) w.value(long(flag));
  w.end_array();
  w.key("covariance");
  w.array_row_major(sim.truth.cov);
  w.end_object();
  out << "\n";

  if (cfg.verbosity >= 1)
    std::fprintf(stderr, "[rbfpca] wrote dataset.csv (%ld curves) and truth.json to %s\n",
                 long(sim.data.n_curves()), cfg.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

void apply_config(BenchConfig& cfg, const ConfigMap& map) {
  for (const auto& e : map.entries) {
    if (e.first == "replicates") {
      cfg.replicates = parse_long(e.first, e.second);
    } else if (e.first == "threads") {
      cfg.threads = parse_int(e.first, e.second);
    } else if (e.first == "out") {
      cfg.out = e.second;
    } else if (e.first == "verbosity") {
      cfg.verbosity = parse_int(e.first, e.second);
    } else if (e.first == "seed") {
      const std::uint64_t seed = parse_u64(e.first, e.second);
      cfg.design.seed = seed;  // one seed governs the whole replicate family
      cfg.fit.seed = seed;
    } else if (apply_design_key(cfg.design, e.first, e.second)) {
    } else if (apply_fit_key(cfg.fit, e.first, e.second)) {
      if (e.first == "data" || e.first == "out")
        throw UnknownKey("unknown config key '" + e.first + "'");
    } else {
      throw UnknownKey("unknown config key '" + e.first + "'");
    }
  }
}

NaiveFit naive_fit(const FunctionalDataset& data, const Eigen::VectorXd& grid,
                   int K) {
  const long n = data.n_curves();
  const long g = grid.size();
  if (n < 2) throw InsufficientData("naive baseline needs at least 2 curves");

  NaiveFit fit;
  fit.grid = grid;
  Eigen::MatrixXd yg(n, g);
  if (data.dense && data.grid.size() == g &&
      (data.grid.array() == grid.array()).all()) {
    yg = data.y;
  } else if (data.dense) {
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < g; ++j)
        yg(i, j) = interp_linear(data.grid, data.y.row(i).transpose(), grid[j]);
  } else {
    for (long i = 0; i < n; ++i) {
      const SparseCurve& c = data.curves[size_t(i)];
      for (long j = 0; j < g; ++j) yg(i, j) = interp_linear(c.t, c.y, grid[j]);
    }
  }

  const Eigen::RowVectorXd mu = yg.colwise().mean();
  const Eigen::MatrixXd centered = yg.rowwise() - mu;
  fit.cov = centered.transpose() * centered / double(n - 1);
  fit.fpc = eigen_fpca(fit.cov, grid, K);
  fit.scores = scores_dense(centered, fit.fpc, grid);
  return fit;
}

namespace {

Eigen::MatrixXd correlation_surface(const Eigen::MatrixXd& cov) {
  const long g = cov.rows();
  const double floor = 1e-12 * std::max(cov.diagonal().maxCoeff(), 1e-300);
  Eigen::VectorXd d(g);
  for (long j = 0; j < g; ++j) d[j] = std::sqrt(std::max(cov(j, j), floor));
  Eigen::MatrixXd corr(g, g);
  for (long j = 0; j < g; ++j)
    for (long l = 0; l < g; ++l) corr(j, l) = cov(j, l) / (d[j] * d[l]);
  return corr;
}

std::vector<BenchRow> bench_replicate(const BenchConfig& cfg, long r) {
  SimDesign design = cfg.design;
  design.seed = cfg.design.seed + std::uint64_t(r);
  const SimData sim = gen_kl_data(design);

  FitConfig fcfg = cfg.fit;
  fcfg.seed = design.seed;
  fcfg.threads = 1;  // replicates parallelize; each fit stays serial
  fcfg.verbosity = 0;
  const FitOutcome rb = run_fit(sim.data, fcfg);
  const std::string rb_name = "rb-" + fcfg.variant;

  const Eigen::VectorXd& grid = rb.fpca.grid;
  const Eigen::MatrixXd truth_cov =
      sim.data.dense ? sim.truth.cov : design.true_cov.evaluate(grid);
  const NaiveFit naive = naive_fit(sim.data, grid, cfg.fit.K);
  const FpcBasis truth_fpc =
      eigen_fpca(truth_cov, grid, int(std::min<long>(cfg.fit.K, grid.size())));
  const Eigen::VectorXd truth_pc1 = truth_fpc.eigenfunctions.col(0);

  std::vector<BenchRow> rows;
  auto add = [&](const std::string& method, const std::string& metric,
                 double value) {
    rows.push_back({design.study, r, method, metric, value});
  };

  add(rb_name, "cov_l2", metric_l2_cov(rb.fpca.cov_mean, truth_cov));
  add("naive", "cov_l2", metric_l2_cov(naive.cov, truth_cov));
  const Eigen::MatrixXd truth_corr = correlation_surface(truth_cov);
  add(rb_name, "corr_l2",
      metric_l2_cov(correlation_surface(rb.fpca.cov_mean), truth_corr));
  add("naive", "corr_l2",
      metric_l2_cov(correlation_surface(naive.cov), truth_corr));
  add(rb_name, "pc1_mse",
      metric_pc_error(rb.fpca.eigenfunctions.col(0), truth_pc1, PcMetric::mse));
  add("naive", "pc1_mse",
      metric_pc_error(naive.fpc.eigenfunctions.col(0), truth_pc1, PcMetric::mse));
  add(rb_name, "pc1_angle",
      metric_pc_error(rb.fpca.eigenfunctions.col(0), truth_pc1, PcMetric::angle));
  add("naive", "pc1_angle",
      metric_pc_error(naive.fpc.eigenfunctions.col(0), truth_pc1, PcMetric::angle));
  add(rb_name, "evidence", rb.run.log_evidence);

  const long n = long(sim.truth.outlier.size());
  long positives = 0;
  for (int flag : sim.truth.outlier) positives += flag;
  if (positives > 0 && long(rb.outliers.flags.size()) == n) {
    long tp = 0, fp = 0;
    for (long i = 0; i < n; ++i) {
      if (rb.outliers.flags[size_t(i)]) {
        if (sim.truth.outlier[size_t(i)]) ++tp;
        else ++fp;
      }
    }
    add(rb_name, "outlier_recall", double(tp) / double(positives));
    add(rb_name, "outlier_fpr", double(fp) / double(n - positives));
  }
  return rows;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  if (cfg.replicates < 1) throw DomainError("replicates must be >= 1");
  if (cfg.threads < 0) throw DomainError("threads must be >= 0");
  validate_design(cfg.design);
  validate_fit_config(cfg.fit);
  if (cfg.design.sparsity &&
      (cfg.design.study == 3 || cfg.design.study == 4))
    throw DomainError(
        "sparse benchmarking needs an analytic true covariance (studies 3 "
        "and 4 pin a spectral ladder on the dense grid)");

  const int threads =
      cfg.threads > 0 ? cfg.threads
                      : std::max(1, int(std::thread::hardware_concurrency()));
  std::vector<std::vector<BenchRow>> per(static_cast<size_t>(cfg.replicates));
  parallel_for(cfg.replicates, threads,
               [&](long r) { per[size_t(r)] = bench_replicate(cfg, r); });

  std::vector<BenchRow> rows;
  for (const auto& chunk : per)
    rows.insert(rows.end(), chunk.begin(), chunk.end());
  return rows;
}

int cmd_bench(const BenchConfig& cfg) {
  const auto rows = run_bench(cfg);

  ConfigMap meta = design_config(cfg.design);
  meta.merge(effective_config(cfg.fit));
  meta.set("replicates", std::to_string(cfg.replicates));
  const std::string digest = meta.digest_hex();

  auto out = open_artifact(join_path(cfg.out, "results.tsv"));
  out << "# version=" << RBFPCA_VERSION << " config_hash=" << digest
      << " seed=" << cfg.design.seed << "\n";
  out << "study\treplicate\tmethod\tmetric\tvalue\n";
  for (const auto& row : rows)
    out << row.study << "\t" << row.replicate << "\t" << row.method << "\t"
        << row.metric << "\t" << format_g17(row.value) << "\n";

  if (cfg.verbosity >= 1) {
    std::map<std::pair<std::string, std::string>, std::pair<double, long>> agg;
    for (const auto& row : rows) {
      auto& slot = agg[{row.method, row.metric}];
      slot.first += row.value;
      slot.second += 1;
    }
    std::fprintf(stderr, "[rbfpca] %ld replicates; means:\n", cfg.replicates);
    for (const auto& [key, slot] : agg)
      std::fprintf(stderr, "  %-10s %-16s %.6g\n", key.first.c_str(),
                   key.second.c_str(), slot.first / double(slot.second));
  }
  return 0;
}

}  // namespace rbfpca
