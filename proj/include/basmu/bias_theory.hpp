#pragma once

#include "basmu/grid_kernel.hpp"
#include "basmu/simulate.hpp"

namespace basmu {

// Finite-n analogues of the limiting moments that drive the asymptotic bias:
// H = n^-1 sum_i theta_E,i theta_E,i', h0 = n^-1 sum_i theta_E,i U0_i, and
// hhat the same with the estimated confounder term.
struct BiasInputs {
  Mat H;        // L x L
  Vec h0;       // L
  Vec hhat;     // L, zero when no estimate was supplied
  double sigma2_M = 1.0;
};

BiasInputs empirical_H_h(const Truth& truth, const Vec& X, const Mat& C,
                         const KernelBasis& basis, const Mat* etahat = nullptr,
                         const Vec* nuhat = nullptr);

// (H + sigma_M^2 I)^{-1} h0
Vec bias_limit_bima(const BiasInputs& inputs);
// (H + sigma_M^2 I)^{-1} (h0 - hhat)
Vec bias_limit_basmu(const BiasInputs& inputs);

// theta_alpha' (Theta_L + sigma_M^2 I)^{-1} Theta_L theta_nu
double freq_bias_limit(const Vec& theta_alpha, const Vec& theta_nu, const Mat& Theta_L,
                       double sigma2_M);

struct IdentifiabilityReport {
  int n = 0;
  int cols = 0;           // 1 + q + k
  int rank = 0;
  double smin = 0.0;
  double smax = 0.0;
  bool full_rank = false;  // smin >= 1e-8 * smax and rank == cols
};

// Rank diagnostics of the outcome design [X, C, extra_cols], where extra_cols
// is either the eta basis-coefficient matrix (low-rank case) or the eta values
// at a sparse support (sparse case).
IdentifiabilityReport identifiability_check(const Vec& X, const Mat& C, const Mat& extra_cols);

}  // namespace basmu
