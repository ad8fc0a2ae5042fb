#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rbfpca/basis.hpp"
#include "rbfpca/dataset.hpp"
#include "rbfpca/rng.hpp"

namespace rbfpca {

enum class Variant { sn, st, mm };

Variant parse_variant(const std::string& name);
std::string describe(Variant v);

struct ModelSpec {
  Variant variant = Variant::sn;
  int P = 15;              // basis functions
  int K = 5;               // retained components
  PriorCovSpec prior;      // prior covariance surface
  int support_points = 51; // working grid for irregular data
  int tmvn_sweeps = 5;     // gibbs passes per truncated-normal draw
};

// Data-derived prior constants. R holds squared observation ranges, kappa the
// diagonal of the error-precision prior scale; two_r is the Wishart degrees of
// freedom for the error precision. Irregular data carries per-curve copies.
struct Hyperparameters {
  double nu = 0;           // omega_inv Wishart df, 2K
  double gamma_diag = 10;  // skewness prior variance
  double two_r = 0;
  Eigen::VectorXd R, kappa;
  std::vector<double> two_r_i;
  std::vector<Eigen::VectorXd> R_i, kappa_i;
  int h_R = 0;             // pooled neighbours per range window
};

Hyperparameters derive_hyperparameters(const FunctionalDataset& centered, int K);

// Everything one skew-elliptical component carries: scores, score precision,
// latent half-normal draws, skewness weights, error precision, and the
// heavy-tail mixing weights. Cholesky factors and log-determinants are caches
// kept in sync by whoever writes the corresponding matrix.
struct ComponentState {
  Eigen::MatrixXd beta;             // n x K scores
  Eigen::MatrixXd omega_inv;        // K x K score precision
  Eigen::MatrixXd omega_inv_chol;   // lower factor
  std::vector<Eigen::VectorXd> z;   // per-curve positive latents
  Eigen::VectorXd w;                // per-curve mixing weights (1 for skew-normal)
  Eigen::VectorXd nu_w;             // per-curve tail df (skew-t only, empty otherwise)
  // shared-grid error model
  Eigen::VectorXd d;                // skewness loadings
  Eigen::MatrixXd sigma_inv, sigma_inv_chol;
  double log_det_sigma_inv = 0;
  // per-curve error model
  std::vector<Eigen::VectorXd> d_i;
  std::vector<Eigen::MatrixXd> sigma_inv_i, sigma_inv_chol_i;
  Eigen::VectorXd log_det_sigma_inv_i;
};

enum class ComponentKind { sn = 0, st = 1 };

struct ParticleState {
  std::vector<ComponentState> comp;  // 1 entry, or 2 for the mixture
  std::vector<ComponentKind> kind;
  double pi1 = 1.0;                  // weight of comp[0]
  std::vector<int> tau;              // curve assignments (mixture only)
};

// Immutable per-fit context: centered data, basis/projection products, and
// hyperparameter inverses shared by every particle.
struct ModelWorkspace {
  ModelSpec spec;
  Hyperparameters hyper;
  bool dense_layout = true;
  long n = 0;  // curves
  long m = 0;  // shared grid size (dense layout)

  std::vector<Eigen::VectorXd> y;      // centered observations per curve
  std::vector<Eigen::VectorXd> times;  // observation times per curve
  Eigen::VectorXd s;                   // per-curve sample variances
  std::vector<std::string> ids;

  BasisSystem basis;       // built on the working grid
  PriorProjection proj;    // prior eigenstructure on the working grid
  Eigen::VectorXd L, L_inv;  // shared score-scale spectrum

  Eigen::MatrixXd HU;                  // working-grid design, m x K (dense)
  std::vector<Eigen::MatrixXd> HU_i;   // per-curve designs (sparse)
  Eigen::VectorXd support_grid;        // = basis.grid

  long obs_dim(long i) const { return times[static_cast<size_t>(i)].size(); }
  const Eigen::VectorXd& time_points(long i) const { return times[static_cast<size_t>(i)]; }
  const Eigen::MatrixXd& design(long i) const {
    return dense_layout ? HU : HU_i[static_cast<size_t>(i)];
  }
};

ModelWorkspace build_workspace(const FunctionalDataset& centered, const ModelSpec& spec,
                               const Hyperparameters& hyper);

// Draws a particle from the prior.
ParticleState init_particle(const ModelWorkspace& ws, RngStream& rng);

// Throws when a state violates a structural invariant (non-finite entries,
// non-positive latents or weights, broken factor caches, bad labels).
void validate_state(const ModelWorkspace& ws, const ParticleState& state);

// Mixture label convention: slot 0 is the skew-normal component. Swaps slots
// (and flips assignments) when a state drifts out of convention.
void canonicalize_labels(ParticleState& state);

// Refreshes the cached cholesky factor / log-determinant for a freshly
// written precision matrix.
void refresh_omega_cache(ComponentState& comp);
void refresh_sigma_cache(ComponentState& comp);
void refresh_sigma_cache(ComponentState& comp, long i);

}  // namespace rbfpca
