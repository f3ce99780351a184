#pragma once

#include <string>

#include "basmu/grid_kernel.hpp"
#include "basmu/mediator_sampler.hpp"
#include "basmu/outcome_sampler.hpp"

namespace basmu {

// Per-draw natural effects. One row per paired posterior draw.
struct EffectChain {
  Mat spatial;  // T x p, alpha_t(s) * beta_t(s)
  Vec scalar;   // T, sum_j spatial(t,j) / p
  Vec nde;      // T, gamma draws
  std::string pairing;  // "cyclic" or "mean_alpha"
};

// Pairs mediator and outcome draws index-wise. The outcome chain sets the
// length; a shorter mediator chain is recycled cyclically. With
// mean_alpha = true every draw uses the posterior-mean alpha field instead.
EffectChain nie_chain(const MediatorChains& med, const OutcomeChains& out,
                      const KernelBasis& basis, bool mean_alpha = false);

// Equal-tailed credible-interval selection over a T x p effect chain.
struct Selection {
  Vec mean, lo, hi;          // p
  Eigen::VectorXi active;    // p, 1 when the CI excludes 0
  int n_active_pos = 0;
  int n_active_neg = 0;
  double sum_nie_pos = 0.0;  // summed posterior-mean NIE over positive actives
  double sum_nie_neg = 0.0;
  double level = 0.95;
};
Selection select_active(const Mat& chain, double level = 0.95);

// Type-7 equal-tailed quantile of a chain.
double quantile(const Vec& values, double prob);

struct EffectSummary {
  Selection voxels;
  double scalar_mean = 0.0, scalar_lo = 0.0, scalar_hi = 0.0;
  double nde_mean = 0.0, nde_lo = 0.0, nde_hi = 0.0;
  double level = 0.95;
  std::string pairing;
};
EffectSummary summarize_effects(const EffectChain& chain, double level = 0.95);

// effects.json (scalar fields) + effects.csv (per-voxel mean, lo, hi, active).
void write_effect_summary(const std::string& dir, const EffectSummary& summary);

}  // namespace basmu
