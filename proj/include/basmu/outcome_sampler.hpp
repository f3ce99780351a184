#pragma once

#include <cstdint>
#include <string>

#include "basmu/grid_kernel.hpp"
#include "basmu/rng.hpp"
#include "basmu/simulate.hpp"

namespace basmu {

enum class OutcomeModel { bima, basmu };

std::string to_string(OutcomeModel m);

struct OutcomeOptions {
  int total_iters = 20000;
  int burnin = -1;  // default: total minus the retained last 10%
  bool mala_beta = false;  // conjugate Gibbs by default
  double mala_step = 0.01;
  double mala_target_accept = 0.574;
  int adapt_interval = 25;
  double p_delta = 0.5;
  double ig_shape = 2.0;
  double ig_scale = 1.0;
  std::uint64_t seed = 1;

  int effective_burnin() const {
    return burnin >= 0 ? burnin : total_iters - total_iters / 10;
  }
};

struct OutcomeChains {
  OutcomeModel model = OutcomeModel::bima;
  Mat theta_beta;  // T x L
  Vec gamma;       // T
  Mat zeta;        // T x q
  Vec sigma2_Y, sigma2_beta, sigma2_gamma, sigma2_zeta;  // T
  Mat nu;          // T x p, basmu only
  Mat delta;       // T x p, basmu only
  Vec sigma2_nu;   // T, basmu only
  int total_iters = 0;
  int burnin = 0;
  double p_delta = 0.5;
  std::uint64_t seed = 0;
  int n = 0, p = 0, L = 0, q = 0;

  int num_draws() const { return static_cast<int>(theta_beta.rows()); }
};

// --- Pieces of the two-stage outcome sweep, exposed for the oracle tests ---

// Posterior moments of theta_beta given the non-mediator residual
// resid_i = Y_i - gamma X_i - zeta'C_i - Uhat_i.
struct ThetaBetaMoments {
  Vec mean;
  Mat cov;
};
ThetaBetaMoments theta_beta_moments(const Mat& Mt, const Vec& resid, const Vec& lambda,
                                    double sigma2_Y, double sigma2_beta);
Vec update_theta_beta(const Mat& Mt, const Vec& resid, const Vec& lambda, double sigma2_Y,
                      double sigma2_beta, Rng& rng);

// Draw of the active nu block given its design matrix (one column per active
// voxel). Uses the auxiliary sampler when columns exceed rows, otherwise the
// rotated conjugate normal.
Vec draw_nu_active(const Mat& design_active, const Vec& y_nu, double sigma2_Y,
                   double sigma2_nu, Rng& rng);

// Full nu update: active entries from draw_nu_active on the delta-selected
// columns of W, inactive entries from the N(0, sigma2_nu) prior.
Vec update_nu_svd(const Mat& W, const Eigen::VectorXi& delta, const Vec& y_nu,
                  double sigma2_Y, double sigma2_nu, Rng& rng);

// Sequential spike-and-slab sweep over delta. Updates delta in place and
// returns the carried residual y_nu - W (nu * delta).
Vec update_delta_seq(const Mat& W, const Vec& y_nu, const Vec& nu, Eigen::VectorXi& delta,
                     double sigma2_Y, double p_delta, Rng& rng);

// --- Full fits ---

OutcomeChains fit_bima(const Dataset& data, const KernelBasis& basis,
                       const OutcomeOptions& opts);
// etahat: n x p posterior-mean individual effects from the mediator stage.
OutcomeChains fit_basmu(const Dataset& data, const KernelBasis& basis, const Mat& etahat,
                        const OutcomeOptions& opts);

void write_outcome_chains(const std::string& dir, const OutcomeChains& chains);
OutcomeChains read_outcome_chains(const std::string& dir);

}  // namespace basmu
