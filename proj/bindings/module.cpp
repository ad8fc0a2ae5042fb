// Python bindings: datasets, fitting, variant comparison, outlier detection,
// simulation, and benchmarking, mirroring the CLI's configuration keys.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rbfpca/runner.hpp"
#include "rbfpca/special.hpp"

namespace py = pybind11;
using namespace rbfpca;

namespace {

// Keyword arguments reuse the key=value vocabulary of config files and CLI
// flags; every value is rendered through str() and parsed by the same code
// path, so the accepted keys and error messages match the CLI exactly.
ConfigMap kwargs_to_map(const py::kwargs& kwargs) {
  ConfigMap map;
  for (auto item : kwargs)
    map.set(py::cast<std::string>(item.first),
            py::cast<std::string>(py::str(item.second)));
  return map;
}

FitConfig fit_config_from(const py::kwargs& kwargs) {
  FitConfig cfg;
  cfg.verbosity = 0;  // quiet by default when driven as a library
  apply_config(cfg, kwargs_to_map(kwargs));
  return cfg;
}

// What a fit hands back to python: posterior summaries plus enough metadata
// to reproduce the run.
struct PyFitResult {
  std::string variant;
  double log_evidence = 0.0;
  Eigen::VectorXd schedule;
  Eigen::VectorXd grid;
  Eigen::VectorXd mean;
  std::vector<std::string> ids;
  FpcaResult fpca;
  OutlierReport outliers;
  std::uint64_t seed = 0;
  std::string config_digest;
};

PyFitResult summarize(FitOutcome&& outcome) {
  PyFitResult r;
  r.variant = describe(outcome.variant);
  r.log_evidence = outcome.run.log_evidence;
  r.schedule = Eigen::Map<const Eigen::VectorXd>(
      outcome.run.schedule.data(), long(outcome.run.schedule.size()));
  r.grid = outcome.fpca.grid;
  r.mean.resize(r.grid.size());
  for (long j = 0; j < r.grid.size(); ++j) r.mean[j] = outcome.mean.at(r.grid[j]);
  r.ids = std::move(outcome.ids);
  r.fpca = std::move(outcome.fpca);
  r.outliers = std::move(outcome.outliers);
  r.seed = outcome.seed;
  r.config_digest = outcome.config_digest;
  return r;
}

std::vector<bool> flags_of(const OutlierReport& r) {
  return std::vector<bool>(r.flags.begin(), r.flags.end());
}

py::object probabilities_of(const OutlierReport& r) {
  if (r.probabilities.size() == 0) return py::none();
  return py::cast(r.probabilities);
}

std::vector<std::string> ids_of(const FunctionalDataset& d) {
  if (d.dense) return d.ids;
  std::vector<std::string> ids;
  ids.reserve(d.curves.size());
  for (const auto& c : d.curves) ids.push_back(c.id);
  return ids;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Robust Bayesian functional principal component analysis: annealed-SMC "
      "fits of skew-normal / skew-t factor models with posterior covariance "
      "summaries, evidence-based model comparison, and outlier detection.";
  m.attr("__version__") = RBFPCA_VERSION;

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.error_class() == ErrorClass::validation)
        PyErr_SetString(PyExc_ValueError, e.what());
      else
        PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  py::class_<FunctionalDataset>(m, "Dataset",
                                "Functional observations, either one row per "
                                "curve on a shared grid or per-curve "
                                "irregular (t, y) samples.")
      .def_static(
          "dense",
          [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& y,
             std::vector<std::string> ids) {
            return FunctionalDataset::from_dense(grid, y, std::move(ids));
          },
          py::arg("grid"), py::arg("y"),
          py::arg("ids") = std::vector<std::string>{},
          "Curves on a shared grid: y is n x len(grid); ids default to "
          "\"1\"..\"n\".")
      .def_static(
          "sparse",
          [](const std::vector<
              std::tuple<std::string, Eigen::VectorXd, Eigen::VectorXd>>&
                 curves) {
            std::vector<SparseCurve> built;
            built.reserve(curves.size());
            for (const auto& [id, t, y] : curves)
              built.push_back(SparseCurve{id, t, y});
            return FunctionalDataset::from_sparse(std::move(built));
          },
          py::arg("curves"),
          "Irregular curves from (id, t, y) triples; each curve needs at "
          "least 3 measurements.")
      .def_static("load", &load_dataset, py::arg("path"),
                  "Load a CSV, sniffing dense ('t,...') versus sparse "
                  "('curve_id,t,y') layout.")
      .def(
          "save",
          [](const FunctionalDataset& d, const std::string& path) {
            if (d.dense)
              save_dense_csv(path, d);
            else
              save_sparse_csv(path, d);
          },
          py::arg("path"), "Write the matching CSV layout.")
      .def_readonly("dense", &FunctionalDataset::dense)
      .def_readonly("grid", &FunctionalDataset::grid)
      .def_readonly("y", &FunctionalDataset::y)
      .def_property_readonly("ids", &ids_of)
      .def_property_readonly("n_curves", &FunctionalDataset::n_curves)
      .def_property_readonly("n_obs", &FunctionalDataset::n_obs)
      .def_property_readonly(
          "curves",
          [](const FunctionalDataset& d) {
            std::vector<std::tuple<std::string, Eigen::VectorXd,
                                   Eigen::VectorXd>>
                out;
            if (d.dense) {
              for (long i = 0; i < d.y.rows(); ++i)
                out.emplace_back(d.ids[size_t(i)], d.grid,
                                 d.y.row(i).transpose());
            } else {
              for (const auto& c : d.curves) out.emplace_back(c.id, c.t, c.y);
            }
            return out;
          },
          "Uniform per-curve view: a list of (id, t, y) triples.")
      .def("__len__", &FunctionalDataset::n_curves)
      .def("__repr__", [](const FunctionalDataset& d) {
        return "<rbfpca.Dataset " + std::string(d.dense ? "dense" : "sparse") +
               ", " + std::to_string(d.n_curves()) + " curves, " +
               std::to_string(d.n_obs()) + " observations>";
      });

  py::class_<SimTruth>(m, "Truth",
                       "Generating truth of a simulated dataset: mean, "
                       "covariance, KL spectrum, scores, and outlier labels.")
      .def_readonly("grid", &SimTruth::grid)
      .def_readonly("mean", &SimTruth::mean)
      .def_readonly("covariance", &SimTruth::cov)
      .def_readonly("eigenvalues", &SimTruth::lambda)
      .def_readonly("eigenfunctions", &SimTruth::phi)
      .def_readonly("scores", &SimTruth::scores)
      .def_property_readonly("outliers", [](const SimTruth& t) {
        return std::vector<bool>(t.outlier.begin(), t.outlier.end());
      });

  py::class_<FpcaResult>(m, "FpcaSummary",
                         "Posterior covariance surface with credible bands, "
                         "its eigenstructure, and curve scores.")
      .def_readonly("grid", &FpcaResult::grid)
      .def_readonly("covariance", &FpcaResult::cov_mean)
      .def_readonly("covariance_lower", &FpcaResult::cov_lower)
      .def_readonly("covariance_upper", &FpcaResult::cov_upper)
      .def_readonly("eigenvalues", &FpcaResult::eigenvalues)
      .def_readonly("eigenfunctions", &FpcaResult::eigenfunctions)
      .def_readonly("variance_explained", &FpcaResult::var_explained)
      .def_readonly("scores", &FpcaResult::scores)
      .def_readonly("fpc_lower", &FpcaResult::fpc_lower)
      .def_readonly("fpc_upper", &FpcaResult::fpc_upper)
      .def_readonly("band_level", &FpcaResult::band_level);

  py::class_<OutlierReport>(m, "OutlierReport",
                            "Robust Mahalanobis distances over score rows "
                            "with the flagging threshold (on squared "
                            "distance) that produced the flags.")
      .def_readonly("distances", &OutlierReport::distances)
      .def_readonly("threshold", &OutlierReport::threshold)
      .def_readonly("level", &OutlierReport::level)
      .def_property_readonly("flags", &flags_of)
      .def_property_readonly("probabilities", &probabilities_of)
      .def_property_readonly(
          "location",
          [](const OutlierReport& r) { return r.estimator.location; })
      .def_property_readonly("scatter", [](const OutlierReport& r) {
        return r.estimator.scatter;
      });

  py::class_<PyFitResult>(m, "FitResult",
                          "Everything a fit produces: evidence, annealing "
                          "schedule, FPCA summary, and the outlier report.")
      .def_readonly("variant", &PyFitResult::variant)
      .def_readonly("log_evidence", &PyFitResult::log_evidence)
      .def_readonly("schedule", &PyFitResult::schedule)
      .def_readonly("grid", &PyFitResult::grid)
      .def_readonly("mean", &PyFitResult::mean)
      .def_readonly("ids", &PyFitResult::ids)
      .def_readonly("fpca", &PyFitResult::fpca)
      .def_readonly("outliers", &PyFitResult::outliers)
      .def_readonly("seed", &PyFitResult::seed)
      .def_readonly("config_digest", &PyFitResult::config_digest)
      .def("__repr__", [](const PyFitResult& r) {
        return "<rbfpca.FitResult " + r.variant +
               ", log_evidence=" + format_g17(r.log_evidence) + ">";
      });

  py::class_<CompareRow>(m, "CompareRow")
      .def_readonly("variant", &CompareRow::variant)
      .def_readonly("log_evidence", &CompareRow::log_evidence)
      .def_readonly("winner", &CompareRow::winner)
      .def_readonly("error", &CompareRow::error);

  py::class_<BenchRow>(m, "BenchRow")
      .def_readonly("study", &BenchRow::study)
      .def_readonly("replicate", &BenchRow::replicate)
      .def_readonly("method", &BenchRow::method)
      .def_readonly("metric", &BenchRow::metric)
      .def_readonly("value", &BenchRow::value);

  py::class_<NaiveFit>(m, "NaiveResult",
                       "Empirical-covariance baseline on the same grid.")
      .def_readonly("grid", &NaiveFit::grid)
      .def_readonly("covariance", &NaiveFit::cov)
      .def_property_readonly(
          "eigenvalues", [](const NaiveFit& f) { return f.fpc.eigenvalues; })
      .def_property_readonly(
          "eigenfunctions",
          [](const NaiveFit& f) { return f.fpc.eigenfunctions; })
      .def_readonly("scores", &NaiveFit::scores);

  m.def(
      "fit",
      [](const FunctionalDataset& data, const py::kwargs& kwargs) {
        const FitConfig cfg = fit_config_from(kwargs);
        FitOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = run_fit(data, cfg);
        }
        return summarize(std::move(outcome));
      },
      py::arg("data"),
      "Fit the model.  Options are the config keys the CLI accepts "
      "(variant, P, K, prior, support_points, tmvn_sweeps, particles, rcess, "
      "resample, max_iterations, seed, threads, band_level, outlier_level, "
      "verbosity); threads=1 is the bit-exact serial reference.");

  m.def(
      "compare",
      [](const FunctionalDataset& data, std::vector<std::string> variants,
         const py::kwargs& kwargs) {
        CompareConfig cfg;
        cfg.base = fit_config_from(kwargs);
        cfg.variants = std::move(variants);
        py::gil_scoped_release release;
        return run_compare(data, cfg);
      },
      py::arg("data"), py::arg("variants"),
      "Fit each variant on the same data and seed; rows come back sorted by "
      "log evidence (failures last) with the winner marked.");

  m.def(
      "detect",
      [](const Eigen::MatrixXd& scores, std::optional<double> level,
         std::optional<long> top_k) {
        DetectConfig cfg;
        cfg.level = level;
        cfg.top_k = top_k;
        return detect_from_scores(scores, cfg);
      },
      py::arg("scores"), py::arg("level") = std::nullopt,
      py::arg("top_k") = std::nullopt,
      "Flag outlying score rows, either against chi2_quantile(K, level) or "
      "as the top-k ranked squared distances.  Give exactly one of level / "
      "top_k.");

  m.def(
      "simulate",
      [](const py::kwargs& kwargs) {
        SimulateConfig cfg;
        cfg.verbosity = 0;
        apply_config(cfg, kwargs_to_map(kwargs));
        SimData sim;
        {
          py::gil_scoped_release release;
          sim = gen_kl_data(cfg.design);
        }
        return py::make_tuple(sim.data, sim.truth);
      },
      "Generate a (Dataset, Truth) pair.  Options: study (1-5), n, m, mean, "
      "cov, process, process_df, noise, contamination, sparsity ('a,b'), "
      "seed.");

  m.def(
      "bench",
      [](const py::kwargs& kwargs) {
        BenchConfig cfg;
        cfg.verbosity = 0;
        cfg.fit.verbosity = 0;
        apply_config(cfg, kwargs_to_map(kwargs));
        py::gil_scoped_release release;
        return run_bench(cfg);
      },
      "Run (design x replicates), scoring the model and the naive baseline "
      "against the generating truth.  Takes simulate and fit options plus "
      "replicates and threads; replicate r runs on seed + r.");

  m.def(
      "naive",
      [](const FunctionalDataset& data, int K,
         std::optional<Eigen::VectorXd> grid) {
        if (!grid) {
          if (!data.dense)
            throw DomainError("sparse data needs an explicit grid");
          grid = data.grid;
        }
        return naive_fit(data, *grid, K);
      },
      py::arg("data"), py::arg("K"), py::arg("grid") = std::nullopt,
      "Empirical covariance + eigendecomposition baseline; sparse curves are "
      "first interpolated onto the grid.");

  m.def(
      "eigen_fpca",
      [](const Eigen::MatrixXd& cov, const Eigen::VectorXd& grid, int K) {
        auto basis = eigen_fpca(cov, grid, K);
        return py::make_tuple(basis.eigenvalues, basis.eigenfunctions);
      },
      py::arg("cov"), py::arg("grid"), py::arg("K"),
      "Leading (eigenvalues, eigenfunctions) of a covariance surface under "
      "trapezoid quadrature.");

  m.def("chi2_quantile", &chi2_quantile, py::arg("df"), py::arg("p"),
        "Chi-square quantile, the flagging threshold scale.");

  m.def(
      "l2_cov",
      [](const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth,
         std::optional<Eigen::VectorXd> grid) {
        return grid ? metric_l2_cov(est, truth, *grid)
                    : metric_l2_cov(est, truth);
      },
      py::arg("est"), py::arg("truth"), py::arg("grid") = std::nullopt,
      "L2 distance between covariance estimates: Frobenius in index space, "
      "or quadrature-scaled when a grid is given.");

  m.def(
      "pc_error",
      [](const Eigen::VectorXd& est, const Eigen::VectorXd& truth,
         const std::string& kind) {
        if (kind == "mse") return metric_pc_error(est, truth, PcMetric::mse);
        if (kind == "angle")
          return metric_pc_error(est, truth, PcMetric::angle);
        throw DomainError("pc_error kind must be 'mse' or 'angle', got '" +
                          kind + "'");
      },
      py::arg("est"), py::arg("truth"), py::arg("kind") = "mse",
      "Sign- and scale-invariant principal-component recovery error.");
}
