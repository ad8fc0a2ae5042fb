#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rbfpca/basis.hpp"

namespace rbfpca {

struct SparseCurve {
  std::string id;
  Eigen::VectorXd t, y;  // strictly increasing times
};

// Functional observations on either a shared grid (one row per curve) or
// per-curve irregular time points.
struct FunctionalDataset {
  bool dense = true;
  // dense layout
  Eigen::VectorXd grid;
  Eigen::MatrixXd y;  // n x m
  // sparse layout
  std::vector<SparseCurve> curves;

  std::vector<std::string> ids;
  double lo = 0.0, hi = 0.0;  // pooled time domain

  long n_curves() const { return dense ? y.rows() : static_cast<long>(curves.size()); }
  long n_obs() const;

  static FunctionalDataset from_dense(const Eigen::VectorXd& grid,
                                      const Eigen::MatrixXd& y,
                                      std::vector<std::string> ids = {});
  static FunctionalDataset from_sparse(std::vector<SparseCurve> curves);
};

// CSV formats:
//   dense:  header "t,<t_1>,...,<t_m>", then one "curve_id,y_1,...,y_m" row
//           per curve
//   sparse: header "curve_id,t,y", one observation per row (rows may arrive
//           unsorted; they are sorted per curve, exact duplicates rejected)
FunctionalDataset load_dense_csv(const std::string& path);
FunctionalDataset load_sparse_csv(const std::string& path);
void save_dense_csv(const std::string& path, const FunctionalDataset& data);
void save_sparse_csv(const std::string& path, const FunctionalDataset& data);

// Square matrix with a header row holding the grid times; values are
// symmetrized by averaging on load.
PriorCovSpec load_prior_cov_csv(const std::string& path);
void save_prior_cov_csv(const std::string& path, const Eigen::VectorXd& grid,
                        const Eigen::MatrixXd& cov);

struct MeanEstimate {
  Eigen::VectorXd grid, value;
  double at(double t) const { return interp_linear(grid, value, t); }
};

// Removes the mean function in place: pointwise cross-sectional average on a
// shared grid, gaussian local-linear smoothing of the pooled scatter
// (Silverman bandwidth) for irregular data.
MeanEstimate detrend(FunctionalDataset& data);

}  // namespace rbfpca
