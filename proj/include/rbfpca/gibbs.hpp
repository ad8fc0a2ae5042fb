#pragma once

#include "rbfpca/model.hpp"
#include "rbfpca/rng.hpp"

namespace rbfpca {

// Metropolis-Hastings bookkeeping for one or more sweeps.
struct SweepDiagnostics {
  long mh_proposals = 0;
  long mh_accepts = 0;
  double acceptance_rate() const {
    return mh_proposals ? double(mh_accepts) / double(mh_proposals) : 0.0;
  }
};

// Annealed full-conditional updates. Each draws from the conditional of the
// tempered target pi_alpha ∝ likelihood^alpha * prior for component slot f;
// curves not assigned to f contribute no likelihood, so their per-curve
// parameters refresh from the prior and they stay out of the shared scatters.
void update_beta(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
                 RngStream& rng);
void update_omega(const ModelWorkspace& ws, ParticleState& state, int f, RngStream& rng);
void update_z(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng);
void update_d(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng);
void update_sigma(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
                  RngStream& rng);
void update_w(const ModelWorkspace& ws, ParticleState& state, int f, double alpha,
              RngStream& rng);
void update_nu_w_mh(const ModelWorkspace& ws, ParticleState& state, int f,
                    RngStream& rng, SweepDiagnostics* diag = nullptr);

// Mixture block: component weight, curve assignments (alpha-tempered component
// densities), then label canonicalization.
void update_mixture_weights(ParticleState& state, RngStream& rng);
void update_assignments(const ModelWorkspace& ws, ParticleState& state, double alpha,
                        RngStream& rng);

// One full systematic scan in the fixed order beta, Omega, z, D, Sigma, w,
// nu_w per component, then the mixture block.
void gibbs_sweep(const ModelWorkspace& ws, ParticleState& state, double alpha,
                 RngStream& rng, SweepDiagnostics* diag = nullptr);

// Complete-data log likelihood log p(y | theta) under the Gaussian layer,
// mixture curves evaluated under their assigned component.
double log_likelihood(const ModelWorkspace& ws, const ParticleState& state);

}  // namespace rbfpca
