#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rbfpca/asmc.hpp"
#include "rbfpca/fpca.hpp"
#include "rbfpca/model.hpp"

namespace rbfpca {

struct RobustEstimate {
  Eigen::VectorXd location;  // K
  Eigen::MatrixXd scatter;   // K x K, SPD
};

// High-breakdown location/scatter on score rows: coordinatewise median and
// scaled-MAD diagonal start, then iteratively reweighted mean/covariance with
// Tukey bisquare weights cut at sqrt(chi2_quantile(K, 0.975)), the scatter
// consistency-corrected for the Gaussian model, iterated to relative change
// < 1e-8 (at most 100 passes). Rank-deficient weighted scatter is ridged with
// a warning; an irrecoverably singular one throws SingularScatter.
RobustEstimate robust_location_scatter(const Eigen::MatrixXd& scores);

Eigen::VectorXd mahalanobis_distances(const Eigen::MatrixXd& scores,
                                      const Eigen::VectorXd& location,
                                      const Eigen::MatrixXd& scatter);

struct FlagResult {
  std::vector<char> flags;  // flags[i] == 1 iff distances[i]^2 > threshold
  double threshold = 0.0;   // chi2_quantile(K, level), compared against d^2
};

FlagResult flag_outliers(const Eigen::VectorXd& distances, int K, double level);

struct OutlierReport {
  Eigen::VectorXd distances;
  double threshold = 0.0;
  double level = 0.0;
  std::vector<char> flags;
  Eigen::VectorXd probabilities;  // empty unless per-particle mode ran
  RobustEstimate estimator;
};

// Robust estimation + distances + flagging in one pass over a score matrix.
OutlierReport detect_outliers(const Eigen::MatrixXd& scores, double level);

// Per-curve probability of being flagged: every particle's covariance surface
// is eigendecomposed and used to score and flag all curves; the probability is
// the weighted fraction of particles flagging the curve.
Eigen::VectorXd outlier_probability(const AsmcRun& run, const ModelWorkspace& ws,
                                    double level);

}  // namespace rbfpca
