#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rbfpca/runner.hpp"
#include "rbfpca/rng.hpp"
#include "rbfpca/special.hpp"

using namespace rbfpca;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/rbfpca_test_runner_") + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(bool(out));
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Small dense dataset from the study-2 generator; cheap enough to fit with a
// handful of particles.
FunctionalDataset tiny_dataset(std::uint64_t seed, long n = 12, long m = 12) {
  SimDesign design;
  design.study = 2;
  design.n = n;
  design.m = m;
  design.noise = NoiseSpec::parse("normal:0.3");
  design.seed = seed;
  return gen_kl_data(design).data;
}

FitConfig tiny_fit_config() {
  FitConfig cfg;
  cfg.variant = "sn";
  cfg.P = 5;
  cfg.K = 2;
  cfg.particles = 8;
  cfg.seed = 17;
  cfg.threads = 1;
  cfg.verbosity = 0;
  cfg.band_level = 0.9;
  cfg.outlier_level = 0.95;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration maps
// ---------------------------------------------------------------------------

TEST_CASE("config map: last value wins and merges layer on top") {
  ConfigMap map;
  CHECK(map.find("a") == nullptr);
  map.set("a", "1");
  map.set("b", "2");
  map.set("a", "3");  // later occurrence shadows the first
  REQUIRE(map.find("a") != nullptr);
  CHECK(*map.find("a") == "3");
  CHECK(*map.find("b") == "2");

  ConfigMap overrides;
  overrides.set("b", "9");
  overrides.set("c", "4");
  map.merge(overrides);
  CHECK(*map.find("b") == "9");
  CHECK(*map.find("c") == "4");
  CHECK(*map.find("a") == "3");
}

TEST_CASE("config digest: canonical text is sorted and deduplicated") {
  ConfigMap map;
  map.set("b", "2");
  map.set("a", "0");
  map.set("a", "1");
  CHECK(map.canonical() == "a=1\nb=2\n");

  // [DERIVED] FNV-1a 64 of "a=1\nb=2\n", computed independently.
  CHECK(map.digest() == 0xe1906f913755e085ull);
  CHECK(map.digest_hex() == "e1906f913755e085");

  // [DERIVED] the empty map hashes to the FNV offset basis.
  CHECK(ConfigMap{}.digest() == 0xcbf29ce484222325ull);

  // Insertion order is irrelevant; values are not.
  ConfigMap reordered;
  reordered.set("a", "1");
  reordered.set("b", "2");
  CHECK(reordered.digest() == map.digest());
  reordered.set("b", "3");
  CHECK(reordered.digest() != map.digest());
}

TEST_CASE("config files: comments and section headers, errors carry line numbers") {
  const auto path = temp_path("good.cfg");
  spit(path,
       "# top comment\n"
       "[model]\n"
       "variant = st   # trailing comment\n"
       "P=6\n"
       "\n"
       "[sampler]\n"
       "particles = 32\n");
  const auto map = ConfigMap::from_file(path);
  CHECK(*map.find("variant") == "st");
  CHECK(*map.find("P") == "6");
  CHECK(*map.find("particles") == "32");
  CHECK(map.find("model") == nullptr);  // sections are not keys

  // Canonical text written back out parses to the same digest.
  const auto round = temp_path("round.cfg");
  spit(round, map.canonical());
  CHECK(ConfigMap::from_file(round).digest() == map.digest());

  const auto bad = temp_path("bad.cfg");
  spit(bad, "ok = 1\nnot a pair\n");
  CHECK_THROWS_WITH_AS(ConfigMap::from_file(bad),
                       doctest::Contains(":2:"), ParseError);
  spit(bad, "[unclosed\n");
  CHECK_THROWS_AS(ConfigMap::from_file(bad), ParseError);
  spit(bad, " = value\n");
  CHECK_THROWS_AS(ConfigMap::from_file(bad), ParseError);
  CHECK_THROWS_AS(ConfigMap::from_file(temp_path("missing.cfg")), ParseError);
}

TEST_CASE("format_g17 round-trips doubles exactly") {
  const double values[] = {0.0,   1.0,     0.1,  1.0 / 3.0, 2.0 / 3.0,
                           1e300, 1e-300,  -2.5, 3.141592653589793,
                           -658.93735615734818, 5e-324};
  for (double v : values) {
    CAPTURE(v);
    CHECK(std::strtod(format_g17(v).c_str(), nullptr) == v);
  }
  CHECK(format_g17(0.5) == "0.5");
  CHECK(format_g17(-1.0) == "-1");
}

TEST_CASE("fit config keys apply; unknown keys and malformed values are rejected") {
  ConfigMap map;
  map.set("variant", "st");
  map.set("P", "9");
  map.set("K", "4");
  map.set("particles", "64");
  map.set("seed", "12345");
  map.set("rcess", "0.8");
  map.set("threads", "2");
  FitConfig cfg;
  apply_config(cfg, map);
  CHECK(cfg.variant == "st");
  CHECK(cfg.P == 9);
  CHECK(cfg.K == 4);
  CHECK(cfg.particles == 64);
  CHECK(cfg.seed == 12345);
  CHECK(cfg.rcess == 0.8);
  CHECK(cfg.threads == 2);

  ConfigMap unknown;
  unknown.set("particels", "64");
  CHECK_THROWS_WITH_AS(apply_config(cfg, unknown),
                       doctest::Contains("particels"), UnknownKey);

  ConfigMap garbled;
  garbled.set("P", "6x");
  CHECK_THROWS_WITH_AS(apply_config(cfg, garbled), doctest::Contains("P"),
                       ParseError);
  garbled = ConfigMap{};
  garbled.set("rcess", "fast");
  CHECK_THROWS_AS(apply_config(cfg, garbled), ParseError);
}

TEST_CASE("fit config validation rejects out-of-range settings") {
  const FitConfig base = tiny_fit_config();
  CHECK_NOTHROW(validate_fit_config(base));

  auto cfg = base;
  cfg.P = 3;
  cfg.K = 5;
  CHECK_THROWS_WITH_AS(validate_fit_config(cfg), doctest::Contains("K <= P"),
                       DomainError);

  cfg = base;
  cfg.P = 0;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.K = 0;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.support_points = 1;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.tmvn_sweeps = 0;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.band_level = 1.0;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.outlier_level = 0.0;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.threads = -1;
  CHECK_THROWS_AS(validate_fit_config(cfg), DomainError);
  cfg = base;
  cfg.variant = "cauchy";
  CHECK_THROWS_AS(validate_fit_config(cfg), UnknownKey);
  cfg = base;
  cfg.prior = "matern:1";
  CHECK_THROWS_AS(validate_fit_config(cfg), Error);
}

TEST_CASE("effective config hashes the science, not the output plumbing") {
  FitConfig cfg = tiny_fit_config();
  cfg.data = "a.csv";
  const auto digest = effective_config(cfg).digest_hex();

  auto same = cfg;
  same.threads = 7;
  same.out = "/elsewhere";
  same.verbosity = 0;
  CHECK(effective_config(same).digest_hex() == digest);

  auto other = cfg;
  other.seed = 18;
  CHECK(effective_config(other).digest_hex() != digest);
  other = cfg;
  other.data = "b.csv";
  CHECK(effective_config(other).digest_hex() != digest);
  other = cfg;
  other.particles = 16;
  CHECK(effective_config(other).digest_hex() != digest);
}

// ---------------------------------------------------------------------------
// dataset I/O
// ---------------------------------------------------------------------------

TEST_CASE("dataset loading sniffs dense versus sparse layouts") {
  const auto dense = temp_path("sniff_dense.csv");
  spit(dense, "t,0,0.5,1\nA,1,2,3\nB,3,2,1\n");
  auto d = load_dataset(dense);
  CHECK(d.dense);
  CHECK(d.n_curves() == 2);
  CHECK(d.ids[0] == "A");

  const auto sparse = temp_path("sniff_sparse.csv");
  spit(sparse, "curve_id,t,y\nA,0,1\nA,0.5,2\nA,1,3\n");
  auto s = load_dataset(sparse);
  CHECK_FALSE(s.dense);
  CHECK(s.n_curves() == 1);
  CHECK(s.curves[0].t.size() == 3);

  CHECK_THROWS_AS(load_dataset(temp_path("nope.csv")), ParseError);
  const auto empty = temp_path("empty.csv");
  spit(empty, "");
  CHECK_THROWS_AS(load_dataset(empty), EmptyDataset);
}

TEST_CASE("csv round-trips are bit-stable") {
  SimDesign design;
  design.study = 2;
  design.n = 7;
  design.m = 9;
  design.noise = NoiseSpec::parse("normal:0.3");
  design.seed = 31;

  const auto dense = gen_kl_data(design).data;
  const auto p1 = temp_path("dense_rt.csv");
  save_dense_csv(p1, dense);
  const auto back = load_dataset(p1);
  REQUIRE(back.dense);
  CHECK((back.grid - dense.grid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.y - dense.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.ids == dense.ids);
  const auto p2 = temp_path("dense_rt2.csv");
  save_dense_csv(p2, back);
  CHECK(slurp(p1) == slurp(p2));

  design.study = 5;
  design.sparsity = SparsitySpec{5, 8};
  const auto sparse = gen_kl_data(design).data;
  const auto s1 = temp_path("sparse_rt.csv");
  save_sparse_csv(s1, sparse);
  const auto sback = load_dataset(s1);
  REQUIRE_FALSE(sback.dense);
  REQUIRE(sback.n_curves() == sparse.n_curves());
  for (long i = 0; i < sparse.n_curves(); ++i) {
    CHECK(sback.curves[size_t(i)].id == sparse.curves[size_t(i)].id);
    CHECK((sback.curves[size_t(i)].t - sparse.curves[size_t(i)].t)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((sback.curves[size_t(i)].y - sparse.curves[size_t(i)].y)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  const auto s2 = temp_path("sparse_rt2.csv");
  save_sparse_csv(s2, sback);
  CHECK(slurp(s1) == slurp(s2));
}

// ---------------------------------------------------------------------------
// fit artifacts
// ---------------------------------------------------------------------------

TEST_CASE("fit artifacts round-trip through fpca_result.json") {
  const auto data = tiny_dataset(5);
  const auto cfg = tiny_fit_config();
  const auto outcome = run_fit(data, cfg);

  REQUIRE(outcome.ids.size() == 12);
  CHECK(outcome.seed == 17);
  CHECK(outcome.config_digest == effective_config(cfg).digest_hex());
  CHECK(std::isfinite(outcome.run.log_evidence));
  REQUIRE(outcome.fpca.scores.rows() == 12);
  REQUIRE(outcome.fpca.scores.cols() == 2);

  const auto path = temp_path("fit_result.json");
  write_fpca_result(path, outcome);
  const auto stored = load_fpca_result(path);
  CHECK((stored.grid - outcome.fpca.grid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stored.scores - outcome.fpca.scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stored.eigenvalues - outcome.fpca.eigenvalues).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(stored.ids == outcome.ids);
  CHECK(stored.seed == outcome.seed);
  CHECK(stored.config_digest == outcome.config_digest);

  // The file is plain JSON with the pinned top-level fields.
  const auto doc = json::parse(slurp(path));
  for (const char* key :
       {"meta", "variant", "log_evidence", "n", "g", "K", "band_level", "grid",
        "mean", "covariance", "covariance_lower", "covariance_upper",
        "eigenvalues", "eigenfunctions", "variance_explained", "fpc_lower",
        "fpc_upper", "curve_ids", "scores"}) {
    CAPTURE(key);
    CHECK(doc.contains(key));
  }
  CHECK(doc["n"] == 12);
  CHECK(doc["K"] == 2);
  CHECK(doc["variant"] == "sn");
  CHECK(doc["meta"]["version"] == RBFPCA_VERSION);
  CHECK(doc["log_evidence"].get<double>() == outcome.run.log_evidence);

  // evidence.txt carries the same number at full precision.
  const auto evid = temp_path("fit_evidence.txt");
  write_evidence_txt(evid, outcome);
  CHECK(slurp(evid).find("log_evidence = " +
                         format_g17(outcome.run.log_evidence)) !=
        std::string::npos);

  // diagnostics.ndjson: one meta line, then one record per annealing step.
  const auto diag = temp_path("fit_diag.ndjson");
  write_diagnostics_ndjson(diag, outcome);
  const auto rows = lines_of(slurp(diag));
  REQUIRE(rows.size() == outcome.run.diagnostics.size() + 1);
  CHECK(json::parse(rows[0]).contains("meta"));
  const auto last = json::parse(rows.back());
  CHECK(last["iteration"] == outcome.run.diagnostics.back().iteration);
  CHECK(last["alpha"].get<double>() == 1.0);
  CHECK(last["log_evidence"].get<double>() == outcome.run.log_evidence);
}

TEST_CASE("stored result loader rejects malformed files") {
  const auto bad = temp_path("broken.json");
  spit(bad, "{not json");
  CHECK_THROWS_AS(load_fpca_result(bad), ParseError);
  CHECK_THROWS_AS(load_fpca_result(temp_path("absent.json")), ParseError);

  // Start from a valid artifact and break it one field at a time.
  const auto data = tiny_dataset(6, 8, 8);
  auto cfg = tiny_fit_config();
  cfg.P = 4;
  const auto outcome = run_fit(data, cfg);
  const auto good = temp_path("good_result.json");
  write_fpca_result(good, outcome);
  auto doc = json::parse(slurp(good));

  auto mutated = doc;
  mutated.erase("scores");
  spit(bad, mutated.dump());
  CHECK_THROWS_AS(load_fpca_result(bad), ParseError);

  mutated = doc;
  mutated["n"] = 0;
  spit(bad, mutated.dump());
  CHECK_THROWS_AS(load_fpca_result(bad), Error);

  mutated = doc;
  mutated["scores"] = std::vector<double>{1.0, 2.0, 3.0};  // wrong length
  spit(bad, mutated.dump());
  CHECK_THROWS_AS(load_fpca_result(bad), Error);
}

TEST_CASE("outlier artifacts echo the report") {
  OutlierReport report;
  report.distances = Eigen::Vector3d(1.0, 2.5, 0.3);
  report.threshold = 6.0;
  report.level = 0.9;
  report.flags = {0, 1, 0};  // 2.5^2 = 6.25 > 6
  report.probabilities = Eigen::Vector3d(0.125, 0.875, 0.0);
  report.estimator.location = Eigen::Vector2d(0.5, -0.25);
  report.estimator.scatter =
      (Eigen::Matrix2d() << 2.0, 0.5, 0.5, 1.0).finished();
  const std::vector<std::string> ids = {"A", "B", "C"};

  const auto tsv = temp_path("outliers.tsv");
  write_outliers_tsv(tsv, ids, report, "deadbeef00000000", 42);
  const auto rows = lines_of(slurp(tsv));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].find("config_hash=deadbeef00000000") != std::string::npos);
  CHECK(rows[0].find("seed=42") != std::string::npos);
  CHECK(rows[1].find("level=" + format_g17(0.9)) != std::string::npos);
  CHECK(rows[2] == "curve_id\tdistance\tflag\tprobability");
  CHECK(rows[4] == "B\t2.5\t1\t0.875");

  const auto jpath = temp_path("outliers.json");
  write_outliers_json(jpath, ids, report, "deadbeef00000000", 42);
  auto doc = json::parse(slurp(jpath));
  CHECK(doc["level"].get<double>() == 0.9);
  CHECK(doc["threshold"].get<double>() == 6.0);
  CHECK_FALSE(doc.contains("top_k"));
  CHECK(doc["estimator"]["location"][1].get<double>() == -0.25);
  CHECK(doc["estimator"]["scatter"][2].get<double>() == 0.5);
  REQUIRE(doc["curves"].size() == 3);
  CHECK(doc["curves"][1]["curve_id"] == "B");
  CHECK(doc["curves"][1]["flag"] == true);
  CHECK(doc["curves"][1]["probability"].get<double>() == 0.875);
  CHECK(doc["curves"][0]["flag"] == false);

  // Without per-particle probabilities the column reads nan / null.
  report.probabilities = Eigen::VectorXd();
  write_outliers_tsv(tsv, ids, report, "deadbeef00000000", 42);
  CHECK(lines_of(slurp(tsv))[4] == "B\t2.5\t1\tnan");
  write_outliers_json(jpath, ids, report, "deadbeef00000000", 42, 2L);
  doc = json::parse(slurp(jpath));
  CHECK(doc["top_k"] == 2);
  CHECK(doc["curves"][1]["probability"].is_null());
}

// ---------------------------------------------------------------------------
// score-based detection
// ---------------------------------------------------------------------------

namespace {

// 27 standard-normal score rows plus three gross outliers in rows 0..2.
Eigen::MatrixXd detect_scores() {
  RngStream rng(99, 0, 0, Site::simulate);
  Eigen::MatrixXd scores(30, 2);
  for (long i = 0; i < 30; ++i)
    for (long k = 0; k < 2; ++k) scores(i, k) = rng.normal();
  scores.row(0) << 8.0, 8.0;
  scores.row(1) << -9.0, 5.0;
  scores.row(2) << 10.0, -10.0;
  return scores;
}

}  // namespace

TEST_CASE("score-based detection: level mode flags against the chi-square cut") {
  const auto scores = detect_scores();
  DetectConfig cfg;
  cfg.level = 0.99;
  const auto report = detect_from_scores(scores, cfg);

  CHECK(report.level == 0.99);
  CHECK(report.threshold == chi2_quantile(2, 0.99));
  CHECK(report.probabilities.size() == 0);
  REQUIRE(report.distances.size() == 30);
  REQUIRE(report.flags.size() == 30);
  for (long i = 0; i < 30; ++i) {
    CAPTURE(i);
    CHECK(bool(report.flags[size_t(i)]) ==
          (report.distances[i] * report.distances[i] > report.threshold));
  }
  CHECK(report.flags[0] == 1);
  CHECK(report.flags[1] == 1);
  CHECK(report.flags[2] == 1);
}

TEST_CASE("score-based detection: top-k mode thresholds between ranks") {
  const auto scores = detect_scores();
  DetectConfig cfg;
  cfg.top_k = 3;
  const auto report = detect_from_scores(scores, cfg);

  CHECK(report.level == 0.0);
  long flagged = 0;
  for (long i = 0; i < 30; ++i) flagged += report.flags[size_t(i)];
  CHECK(flagged == 3);
  CHECK(report.flags[0] == 1);
  CHECK(report.flags[1] == 1);
  CHECK(report.flags[2] == 1);

  // The threshold separates ranks 3 and 4 of d^2 and the flag invariant holds.
  Eigen::VectorXd d2 = report.distances.array().square();
  std::vector<double> sorted(d2.data(), d2.data() + d2.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  CHECK(report.threshold < sorted[2]);
  CHECK(report.threshold > sorted[3]);
  for (long i = 0; i < 30; ++i)
    CHECK(bool(report.flags[size_t(i)]) == (d2[i] > report.threshold));

  // k == n flags everything via a sentinel threshold below any distance.
  cfg.top_k = 30;
  const auto all = detect_from_scores(scores, cfg);
  CHECK(all.threshold == -1.0);
  for (long i = 0; i < 30; ++i) CHECK(all.flags[size_t(i)] == 1);
}

TEST_CASE("score-based detection rejects bad mode selections") {
  const auto scores = detect_scores();
  DetectConfig cfg;
  CHECK_THROWS_AS(detect_from_scores(scores, cfg), DomainError);  // neither
  cfg.level = 0.99;
  cfg.top_k = 3;
  CHECK_THROWS_AS(detect_from_scores(scores, cfg), DomainError);  // both
  cfg.level.reset();
  cfg.top_k = 0;
  CHECK_THROWS_AS(detect_from_scores(scores, cfg), DomainError);
  cfg.top_k = 31;
  CHECK_THROWS_AS(detect_from_scores(scores, cfg), DomainError);
  cfg.top_k.reset();
  cfg.level = 1.0;
  CHECK_THROWS_AS(detect_from_scores(scores, cfg), DomainError);
}

// ---------------------------------------------------------------------------
// naive baseline
// ---------------------------------------------------------------------------

TEST_CASE("naive baseline matches the hand-worked dense case") {
  // Grid (0, 1/2, 1), rows (1,2,3), (3,2,1), (2,2,2): the centered rows are
  // +-(-1,0,1) and zero, so the empirical covariance is [[1,0,-1],[0,0,0],
  // [-1,0,1]].  With trapezoid weights (1/4,1/2,1/4) the one nonzero Mercer
  // eigenvalue is 1/2 with eigenfunction (sqrt2, 0, -sqrt2), and the scores
  // are -+sqrt2/2 and zero.  [DERIVED]
  Eigen::VectorXd grid(3);
  grid << 0.0, 0.5, 1.0;
  Eigen::MatrixXd y(3, 3);
  y << 1, 2, 3, 3, 2, 1, 2, 2, 2;
  const auto data = FunctionalDataset::from_dense(grid, y);
  const auto fit = naive_fit(data, grid, 1);

  Eigen::MatrixXd cov_expected(3, 3);
  cov_expected << 1, 0, -1, 0, 0, 0, -1, 0, 1;
  CHECK((fit.cov - cov_expected).cwiseAbs().maxCoeff() == 0.0);

  const double sqrt2 = std::sqrt(2.0);
  REQUIRE(fit.fpc.eigenvalues.size() == 1);
  CHECK(fit.fpc.eigenvalues[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.fpc.eigenfunctions(0, 0) == doctest::Approx(sqrt2).epsilon(1e-12));
  CHECK(fit.fpc.eigenfunctions(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fit.fpc.eigenfunctions(2, 0) == doctest::Approx(-sqrt2).epsilon(1e-12));
  REQUIRE(fit.scores.rows() == 3);
  CHECK(fit.scores(0, 0) == doctest::Approx(-sqrt2 / 2).epsilon(1e-12));
  CHECK(fit.scores(1, 0) == doctest::Approx(sqrt2 / 2).epsilon(1e-12));
  CHECK(fit.scores(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("naive baseline completes sparse curves by interpolation") {
  Eigen::VectorXd grid(3);
  grid << 0.0, 0.5, 1.0;

  std::vector<SparseCurve> curves(4);
  curves[0].id = "A";
  curves[0].t = grid;
  curves[0].y = Eigen::Vector3d(0.0, 1.0, 2.0);  // on-grid copy
  curves[1].id = "B";
  curves[1].t = grid;
  curves[1].y = Eigen::Vector3d(1.0, 1.0, 1.0);
  curves[2].id = "C";
  curves[2].t = Eigen::Vector3d(0.25, 0.5, 0.75);
  curves[2].y = Eigen::Vector3d(1.0, 1.5, 2.0);  // -> (1, 1.5, 2), flat ends
  curves[3].id = "D";
  curves[3].t = (Eigen::VectorXd(4) << 0.0, 0.25, 0.75, 1.0).finished();
  curves[3].y = (Eigen::VectorXd(4) << 0.0, 1.0, 3.0, 4.0).finished();
  const auto sparse = FunctionalDataset::from_sparse(curves);
  const auto fit = naive_fit(sparse, grid, 1);

  // Interior interpolation for D at 1/2 lands halfway between its middle
  // observations; C is extended flat outside (1/4, 3/4).  All values are
  // exactly representable, so the sparse path must agree bit for bit with a
  // dense fit on the pre-completed rows.
  Eigen::MatrixXd completed(4, 3);
  completed << 0, 1, 2, 1, 1, 1, 1, 1.5, 2, 0, 2, 4;
  const auto dense_fit =
      naive_fit(FunctionalDataset::from_dense(grid, completed), grid, 1);
  CHECK((fit.cov - dense_fit.cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fit.scores - dense_fit.scores).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("naive baseline needs at least two curves") {
  Eigen::VectorXd grid(3);
  grid << 0.0, 0.5, 1.0;
  Eigen::MatrixXd y(1, 3);
  y << 1, 2, 3;
  CHECK_THROWS_AS(
      naive_fit(FunctionalDataset::from_dense(grid, y), grid, 1),
      InsufficientData);
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

TEST_CASE("variant comparison is deterministic and ranked by evidence") {
  const auto data = tiny_dataset(9, 10, 10);
  CompareConfig cfg;
  cfg.base = tiny_fit_config();
  cfg.base.P = 4;
  cfg.variants = {"sn", "st"};

  const auto rows = run_compare(data, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].error.empty());
  CHECK(rows[1].error.empty());
  CHECK(rows[0].log_evidence >= rows[1].log_evidence);
  CHECK(rows[0].winner);
  CHECK_FALSE(rows[1].winner);

  const auto again = run_compare(data, cfg);
  REQUIRE(again.size() == 2);
  CHECK(again[0].variant == rows[0].variant);
  CHECK(again[0].log_evidence == rows[0].log_evidence);
  CHECK(again[1].log_evidence == rows[1].log_evidence);
}

TEST_CASE("variant comparison rejects short or unknown variant lists") {
  const auto data = tiny_dataset(9, 10, 10);
  CompareConfig cfg;
  cfg.base = tiny_fit_config();
  cfg.variants = {"sn"};
  CHECK_THROWS_AS(run_compare(data, cfg), DomainError);
  cfg.variants = {"sn", "bogus"};
  CHECK_THROWS_AS(run_compare(data, cfg), UnknownKey);
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

TEST_CASE("benchmark rows are deterministic and thread-invariant") {
  BenchConfig cfg;
  cfg.design.study = 2;
  cfg.design.n = 8;
  cfg.design.m = 10;
  cfg.design.noise = NoiseSpec::parse("normal:0.3");
  cfg.design.seed = 2;
  cfg.replicates = 2;
  cfg.fit = tiny_fit_config();
  cfg.fit.P = 4;
  cfg.threads = 1;
  cfg.verbosity = 0;

  const auto rows = run_bench(cfg);
  REQUIRE(rows.size() == 18);  // 9 rows per replicate
  const char* metrics[] = {"cov_l2",  "cov_l2",  "corr_l2",   "corr_l2",
                           "pc1_mse", "pc1_mse", "pc1_angle", "pc1_angle",
                           "evidence"};
  for (long r = 0; r < 2; ++r) {
    for (int j = 0; j < 9; ++j) {
      const auto& row = rows[size_t(9 * r + j)];
      CAPTURE(r);
      CAPTURE(j);
      CHECK(row.study == 2);
      CHECK(row.replicate == r);
      CHECK(row.metric == metrics[j]);
      CHECK(row.method == (j == 8 || j % 2 == 0 ? "rb-sn" : "naive"));
      CHECK(std::isfinite(row.value));
    }
  }
  // Replicates use distinct seeds, so their draws differ.
  CHECK(rows[0].value != rows[9].value);

  auto parallel = cfg;
  parallel.threads = 2;
  const auto prows = run_bench(parallel);
  REQUIRE(prows.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(prows[i].method == rows[i].method);
    CHECK(prows[i].metric == rows[i].metric);
    CHECK(prows[i].value == rows[i].value);
  }
}

TEST_CASE("benchmark scores outlier detection under contamination") {
  BenchConfig cfg;
  cfg.design.study = 3;
  cfg.design.n = 14;
  cfg.design.m = 12;
  cfg.design.contamination_p = 0.3;
  cfg.design.seed = 4;
  cfg.replicates = 1;
  cfg.fit = tiny_fit_config();
  cfg.fit.P = 4;
  cfg.threads = 1;
  cfg.verbosity = 0;

  const auto rows = run_bench(cfg);
  bool saw_recall = false, saw_fpr = false;
  for (const auto& row : rows) {
    if (row.metric == "outlier_recall") {
      saw_recall = true;
      CHECK(row.method == "rb-sn");
      CHECK(row.value >= 0.0);
      CHECK(row.value <= 1.0);
    }
    if (row.metric == "outlier_fpr") {
      saw_fpr = true;
      CHECK(row.value >= 0.0);
      CHECK(row.value <= 1.0);
    }
  }
  CHECK(saw_recall);
  CHECK(saw_fpr);
}

TEST_CASE("benchmark rejects designs it cannot score") {
  BenchConfig cfg;
  cfg.design.study = 2;
  cfg.design.n = 8;
  cfg.design.m = 10;
  cfg.fit = tiny_fit_config();
  cfg.replicates = 0;
  CHECK_THROWS_AS(run_bench(cfg), DomainError);

  cfg.replicates = 1;
  cfg.design.study = 3;
  cfg.design.m = 12;
  cfg.design.sparsity = SparsitySpec{5, 8};
  CHECK_THROWS_WITH_AS(run_bench(cfg), doctest::Contains("analytic"),
                       DomainError);
}
