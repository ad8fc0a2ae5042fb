#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rbfpca/asmc.hpp"
#include "rbfpca/dataset.hpp"
#include "rbfpca/fpca.hpp"
#include "rbfpca/model.hpp"
#include "rbfpca/outlier.hpp"
#include "rbfpca/simulate.hpp"

namespace rbfpca {

// ---------------------------------------------------------------------------
// Configuration: ordered key=value pairs.  Files provide the base layer and
// command-line flags are merged on top, so flags always win.
// ---------------------------------------------------------------------------

struct ConfigMap {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value);
  // Last occurrence wins; nullptr when the key never appears.
  const std::string* find(const std::string& key) const;
  void merge(const ConfigMap& overrides);

  // 'key = value' lines with '#' comments; [section] headers are allowed for
  // organization and ignored (keys are flat and globally unique).
  static ConfigMap from_file(const std::string& path);

  // Effective pairs, deduplicated (last wins) and sorted by key, one
  // 'key=value' per line: the canonical text that gets hashed.
  std::string canonical() const;
  std::uint64_t digest() const;  // FNV-1a over canonical()
  std::string digest_hex() const;
};

// '%.17g' rendering of a double (17 significant digits round-trip exactly);
// used for every floating-point value the artifacts serialize.
std::string format_g17(double v);

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitConfig {
  std::string data;            // dense or sparse CSV (format sniffed)
  std::string variant = "sn";  // sn | st | mm
  int P = 15;
  int K = 5;
  std::string prior = "gauss3";  // PriorCovSpec text
  int support_points = 51;
  int tmvn_sweeps = 5;
  long particles = 200;
  double rcess = 0.9;
  double resample = 0.5;
  long max_iterations = 10000;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all hardware threads; 1 = bit-exact serial reference
  double band_level = 0.95;
  double outlier_level = 0.99;
  std::string out = ".";
  int verbosity = 1;
};

// Applies recognized keys; unknown keys raise UnknownKey, malformed values
// ParseError.
void apply_config(FitConfig& cfg, const ConfigMap& map);
// Full echo of the effective settings (for hashing and artifact metadata).
ConfigMap effective_config(const FitConfig& cfg);
// Domain checks shared by fit and compare; the K/P rule reads "K <= P".
void validate_fit_config(const FitConfig& cfg);

struct FitOutcome {
  Variant variant = Variant::sn;
  MeanEstimate mean;             // subtracted before modeling
  std::vector<std::string> ids;  // curve ids in row order
  AsmcRun run;
  FpcaResult fpca;
  OutlierReport outliers;  // scored at cfg.outlier_level, with probabilities
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_digest;
};

// Full pipeline: center, build the workspace, anneal, summarize, score
// outliers.  Deterministic in (data, config): the thread count never changes
// any result bit.
FitOutcome run_fit(FunctionalDataset data, const FitConfig& cfg);

// Loads a CSV, sniffing dense ('t,...') versus sparse ('curve_id,t,y').
FunctionalDataset load_dataset(const std::string& path);

// Artifact writers.  Every artifact embeds (library version, config hash,
// seed).
void write_fpca_result(const std::string& path, const FitOutcome& outcome);
void write_outliers_tsv(const std::string& path,
                        const std::vector<std::string>& ids,
                        const OutlierReport& report,
                        const std::string& config_digest, std::uint64_t seed);
void write_outliers_json(const std::string& path,
                         const std::vector<std::string>& ids,
                         const OutlierReport& report,
                         const std::string& config_digest, std::uint64_t seed,
                         std::optional<long> top_k = std::nullopt);
void write_diagnostics_ndjson(const std::string& path,
                              const FitOutcome& outcome);
void write_evidence_txt(const std::string& path, const FitOutcome& outcome);

// The slice of fpca_result.json that later commands need back.
struct StoredResult {
  Eigen::VectorXd grid;
  Eigen::MatrixXd scores;  // n x K
  std::vector<std::string> ids;
  Eigen::VectorXd eigenvalues;
  std::string config_digest;
  std::uint64_t seed = 0;
};
StoredResult load_fpca_result(const std::string& path);

// Writes fpca_result.json, outliers.tsv, diagnostics.ndjson, evidence.txt
// into cfg.out.  Returns the process exit status.
int cmd_fit(const FitConfig& cfg);

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareConfig {
  FitConfig base;                     // shared data/model/sampler settings
  std::vector<std::string> variants;  // >= 2 entries
};
void apply_config(CompareConfig& cfg, const ConfigMap& map);

struct CompareRow {
  std::string variant;
  double log_evidence = 0.0;
  bool winner = false;
  std::string error;  // non-empty when this variant's fit failed
};

// Fits every variant on the same data and seed; rows sorted by evidence
// descending with failures last.  A failed variant is reported in its row,
// not fatal.
std::vector<CompareRow> run_compare(const FunctionalDataset& data,
                                    const CompareConfig& cfg);
int cmd_compare(const CompareConfig& cfg);  // table to stdout + comparison.tsv

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectConfig {
  std::string result;  // path to a saved fpca_result.json
  std::optional<double> level;
  std::optional<long> top_k;
  std::string out = ".";
  int verbosity = 1;
};
void apply_config(DetectConfig& cfg, const ConfigMap& map);

// Level mode: chi-square flagging over all curves.  Top-k mode: the k most
// outlying curves in rank order, threshold set between ranks k and k+1.
// Exactly one of level/top_k must be given.
OutlierReport detect_from_scores(const Eigen::MatrixXd& scores,
                                 const DetectConfig& cfg);
int cmd_detect(const DetectConfig& cfg);  // outliers.tsv + outliers.json

// ---------------------------------------------------------------------------
// simulate / bench
// ---------------------------------------------------------------------------

struct SimulateConfig {
  SimDesign design;
  std::string out = ".";
  int verbosity = 1;
};
void apply_config(SimulateConfig& cfg, const ConfigMap& map);
int cmd_simulate(const SimulateConfig& cfg);  // dataset.csv + truth.json

struct BenchConfig {
  SimDesign design;     // design.seed is the base; replicate r uses seed + r
  long replicates = 5;
  FitConfig fit;        // model/sampler settings; data and out are ignored
  int threads = 0;      // parallelism across replicates (fits run serial)
  std::string out = ".";
  int verbosity = 1;
};
void apply_config(BenchConfig& cfg, const ConfigMap& map);

struct BenchRow {
  int study = 0;
  long replicate = 0;
  std::string method;  // rb-<variant> | naive
  std::string metric;  // cov_l2 | corr_l2 | pc1_mse | pc1_angle | evidence |
                       // outlier_recall | outlier_fpr
  double value = 0.0;
};

// Runs (design x replicates), fitting the model and the naive baseline and
// measuring both against the generating truth.  Row order is deterministic
// and independent of the thread count.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);
int cmd_bench(const BenchConfig& cfg);  // results.tsv

// Naive baseline: empirical covariance plus its eigendecomposition.  Sparse
// curves are first completed onto the grid by linear interpolation (constant
// beyond their observed range).
struct NaiveFit {
  Eigen::VectorXd grid;
  Eigen::MatrixXd cov;  // empirical covariance of centered curves
  FpcBasis fpc;
  Eigen::MatrixXd scores;
};
NaiveFit naive_fit(const FunctionalDataset& data, const Eigen::VectorXd& grid,
                   int K);

}  // namespace rbfpca
