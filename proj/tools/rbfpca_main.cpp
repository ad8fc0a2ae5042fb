#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "rbfpca/runner.hpp"

namespace {

using rbfpca::ConfigMap;

// Collects '--flag value' pairs as config overrides so flags and config files
// share one parsing/validation path; merge order makes flags win.
struct Overrides {
  CLI::App* app;
  ConfigMap map;
  std::string config_path;

  explicit Overrides(CLI::App* a) : app(a) {
    app->add_option("--config", config_path,
                    "config file of 'key = value' lines ('#' comments)");
  }
  void opt(const std::string& flag, const std::string& key,
           const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { map.set(key, v); }, help);
  }
  ConfigMap merged() const {
    ConfigMap out;
    if (!config_path.empty()) out = ConfigMap::from_file(config_path);
    out.merge(map);
    return out;
  }
};

void add_model_options(Overrides& o, bool with_seed = true) {
  o.opt("--variant", "variant", "model variant: sn|st|mm");
  o.opt("--P", "P", "basis polynomials");
  o.opt("--K", "K", "retained components (K <= P)");
  o.opt("--prior", "prior",
        "prior covariance: gauss3|minst|matern:<s2>,<rho>|file:<path>");
  o.opt("--support-points", "support_points",
        "working grid size for sparse data");
  o.opt("--tmvn-sweeps", "tmvn_sweeps",
        "gibbs passes per truncated-normal draw");
  o.opt("--particles", "particles", "SMC particle count");
  o.opt("--rcess", "rcess", "annealing step selector in (0,1]");
  o.opt("--resample", "resample", "rESS resampling trigger in [0,1]");
  o.opt("--max-iterations", "max_iterations", "annealing iteration cap");
  if (with_seed) o.opt("--seed", "seed", "RNG seed");
  o.opt("--band-level", "band_level", "credible band level in (0,1)");
  o.opt("--outlier-level", "outlier_level",
        "chi-square level for outlier flags in (0,1)");
}

void add_design_options(Overrides& o) {
  o.opt("--study", "study", "study design 1..5");
  o.opt("--n", "n", "number of curves");
  o.opt("--m", "m", "dense grid size");
  o.opt("--mean", "mean", "mean function: sin2pi|damped-sin|zero");
  o.opt("--cov", "cov", "generating covariance kernel (same syntax as --prior)");
  o.opt("--process", "process", "study-1 process: gaussian|sn|st|half-mix");
  o.opt("--process-df", "process_df", "skew-t process degrees of freedom");
  o.opt("--noise", "noise",
        "noise: none|normal:<s2>|t:<df>|sn:<loc>,<scale>,<shape>|"
        "st:<loc>,<scale>,<shape>,<df>");
  o.opt("--contamination", "contamination", "contamination probability");
  o.opt("--sparsity", "sparsity", "'<n_min>,<n_max>' or 'none'");
  o.opt("--seed", "seed", "RNG seed");
}

void add_output_options(Overrides& o) {
  o.opt("--out", "out", "output directory");
  o.opt("--verbosity", "verbosity", "0 quiet, 1 progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust Bayesian functional principal component analysis"};
  app.require_subcommand(1);

  auto* fit = app.add_subcommand(
      "fit",
      "Fit the model; writes fpca_result.json, outliers.tsv, "
      "diagnostics.ndjson, evidence.txt");
  Overrides fit_o(fit);
  fit_o.opt("--data", "data", "dense or sparse CSV (format sniffed)");
  add_model_options(fit_o);
  fit_o.opt("--threads", "threads",
            "worker threads (0 = all cores, 1 = bit-exact serial)");
  add_output_options(fit_o);

  auto* compare = app.add_subcommand(
      "compare", "Fit several variants on one dataset and rank by evidence");
  Overrides cmp_o(compare);
  cmp_o.opt("--data", "data", "dense or sparse CSV (format sniffed)");
  cmp_o.opt("--variants", "variants", "comma list of variants, at least two");
  add_model_options(cmp_o);
  cmp_o.opt("--threads", "threads",
            "worker threads (0 = all cores, 1 = bit-exact serial)");
  add_output_options(cmp_o);

  auto* detect = app.add_subcommand(
      "detect", "Flag outlying curves from a saved fpca_result.json");
  Overrides det_o(detect);
  det_o.opt("--result", "result", "path to fpca_result.json");
  det_o.opt("--level", "level", "chi-square flagging level in (0,1)");
  det_o.opt("--top-k", "top_k",
            "instead rank the k most outlying curves (ties keep curve order)");
  add_output_options(det_o);

  auto* sim = app.add_subcommand(
      "simulate", "Generate a study dataset plus its truth record");
  Overrides sim_o(sim);
  add_design_options(sim_o);
  add_output_options(sim_o);

  auto* bench = app.add_subcommand(
      "bench",
      "Run (design x replicates): model and naive baseline against truth");
  Overrides ben_o(bench);
  add_design_options(ben_o);  // --seed governs the whole replicate family
  add_model_options(ben_o, /*with_seed=*/false);
  ben_o.opt("--replicates", "replicates", "replicate count");
  ben_o.opt("--threads", "threads",
            "parallel replicates (each fit runs serial)");
  add_output_options(ben_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) {
      rbfpca::FitConfig cfg;
      rbfpca::apply_config(cfg, fit_o.merged());
      return rbfpca::cmd_fit(cfg);
    }
    if (*compare) {
      rbfpca::CompareConfig cfg;
      rbfpca::apply_config(cfg, cmp_o.merged());
      return rbfpca::cmd_compare(cfg);
    }
    if (*detect) {
      rbfpca::DetectConfig cfg;
      rbfpca::apply_config(cfg, det_o.merged());
      return rbfpca::cmd_detect(cfg);
    }
    if (*sim) {
      rbfpca::SimulateConfig cfg;
      rbfpca::apply_config(cfg, sim_o.merged());
      return rbfpca::cmd_simulate(cfg);
    }
    if (*bench) {
      rbfpca::BenchConfig cfg;
      rbfpca::apply_config(cfg, ben_o.merged());
      return rbfpca::cmd_bench(cfg);
    }
  } catch (const rbfpca::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.error_class() == rbfpca::ErrorClass::validation ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
