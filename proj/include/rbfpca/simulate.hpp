#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbfpca/basis.hpp"
#include "rbfpca/common.hpp"
#include "rbfpca/dataset.hpp"
#include "rbfpca/rng.hpp"

namespace rbfpca {

// Additive observation noise attached to every measurement.
struct NoiseSpec {
  enum class Kind { none, normal, student_t, skew_normal, skew_t };
  Kind kind = Kind::none;
  double sigma2 = 0.3;                          // normal variance
  double df = 5.0;                              // student_t / skew_t tail
  double loc = 0.0, scale = 1.0, shape = 0.0;   // skew families

  // "none" | "normal:<sigma2>" | "t:<df>" | "sn:<loc>,<scale>,<shape>"
  // | "st:<loc>,<scale>,<shape>,<df>"
  static NoiseSpec parse(const std::string& text);
  std::string describe() const;
  double draw(RngStream& rng) const;
};

// Latent process family for the study-1 settings: the skew variants push the
// Gaussian draw through d |z| + eta with d = 1, and the t variants divide by
// sqrt(chi2_df / df).
enum class ProcessKind { gaussian, skew_normal, skew_t, half_mix };

struct SparsitySpec {
  int n_min = 5, n_max = 10;
};

// One cell of the simulation grid. Studies:
//   1  model-fit comparison: GP / skew process draws, [-1,1]
//   2  dense curves, heavy or skewed noise on every point, [-1,1]
//   3  dense curves, score-replacement outliers, [0,1]
//   4  study 3 plus noise on every point, [0,1]
//   5  sparse curves; contaminated curves get the design noise, clean
//      curves N(0, 0.3), [-1,1]
struct SimDesign {
  int study = 2;
  long n = 100, m = 50;
  std::string mean;          // "sin2pi" | "damped-sin" | "zero"; empty picks
                             // the study default
  PriorCovSpec true_cov;     // data-generating covariance (studies 1/2/5)
  ProcessKind process = ProcessKind::gaussian;  // study 1 only
  double process_df = 5.0;   // skew-t process tail df
  NoiseSpec noise;
  double contamination_p = 0.0;
  std::optional<SparsitySpec> sparsity;  // study 5
  std::uint64_t seed = 0;
};

void validate_design(const SimDesign& design);

// Everything needed to score an estimate without regenerating the data.
struct SimTruth {
  Eigen::VectorXd grid;      // dense generation grid
  Eigen::VectorXd mean;      // mu on the grid
  Eigen::MatrixXd cov;       // signal covariance the generator induces
  Eigen::VectorXd lambda;    // KL spectrum used
  Eigen::MatrixXd phi;       // g x K eigenfunctions used
  Eigen::MatrixXd scores;    // n x K gaussian KL scores
  std::vector<char> outlier; // per-curve contamination labels
};

struct SimData {
  FunctionalDataset data;
  SimTruth truth;
};

// Karhunen-Loeve generator for every study: draws scores, assembles curves,
// adds noise, then applies the design's contamination (studies 3/4) and
// sparsification (study 5). Deterministic given the design.
SimData gen_kl_data(const SimDesign& design);

// Score-replacement contamination: per curve, B_i ~ Bernoulli(p); on success
// the second and third KL scores are redrawn from MVN((20, 25)', I/16) and
// the curve rebuilt in place, keeping its original noise realization.
// Untouched curves stay bit-identical.
void contaminate(SimData& sim, double p, RngStream& rng);

// Random sparse design: n_i ~ DiscreteUniform(n_min, n_max) observation
// times per curve, uniform over the domain (or a random subset of the grid
// when grid_times is set), values linearly interpolated from the dense curve.
FunctionalDataset sparsify(const FunctionalDataset& dense, int n_min, int n_max,
                           RngStream& rng, bool grid_times = false);

// L2 distance between covariance estimates: plain Frobenius in index space
// (the benchmark reporting scale), or quadrature-scaled when a grid is
// supplied.
double metric_l2_cov(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);
double metric_l2_cov(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth,
                     const Eigen::VectorXd& grid);

// Principal-component recovery error. Both inputs are normalized to unit
// length and sign-aligned by inner product first; mse is the mean squared
// pointwise difference, angle the arccos of the absolute inner product.
enum class PcMetric { mse, angle };
double metric_pc_error(const Eigen::VectorXd& est_pc,
                       const Eigen::VectorXd& true_pc, PcMetric kind);

}  // namespace rbfpca
