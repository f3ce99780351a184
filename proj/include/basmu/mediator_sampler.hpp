#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "basmu/grid_kernel.hpp"
#include "basmu/rng.hpp"
#include "basmu/simulate.hpp"

namespace basmu {

struct MediatorOptions {
  int total_iters = 1000;
  int burnin = -1;  // default: total minus the retained last 10%
  bool mala_alpha = true;
  double mala_step = 0.05;
  double mala_target_accept = 0.574;
  int adapt_interval = 25;
  double ig_shape = 2.0;
  double ig_scale = 1.0;
  std::uint64_t seed = 1;

  int effective_burnin() const {
    return burnin >= 0 ? burnin : total_iters - total_iters / 10;
  }
};

struct MediatorChains {
  Mat theta_alpha;              // T x L
  std::vector<Mat> theta_xi;    // T entries of q x L
  std::vector<Mat> theta_eta;   // T entries of n x L
  Vec sigma2_M, sigma2_alpha, sigma2_xi, sigma2_eta;  // T
  int total_iters = 0;
  int burnin = 0;
  double alpha_accept_rate = 0.0;  // over retained iterations
  std::uint64_t seed = 0;
  int n = 0, p = 0, L = 0, q = 0;

  int num_draws() const { return static_cast<int>(theta_alpha.rows()); }
};

// Gibbs/MALA sampler for the mediator model in basis space. The exposed
// pieces below operate on an explicit State so tests can drive single updates.
class MediatorSampler {
public:
  struct State {
    Vec theta_alpha;  // L
    Mat theta_xi;     // q x L
    Mat theta_eta;    // n x L
    double sigma2_M = 1.0;
    double sigma2_alpha = 1.0;
    double sigma2_xi = 1.0;
    double sigma2_eta = 1.0;
  };

  MediatorSampler(const Dataset& data, const KernelBasis& basis, MediatorOptions opts);

  MediatorChains run(Rng& rng) const;

  State initial_state() const;

  double alpha_log_posterior(const State& state) const;
  Vec alpha_gradient(const State& state) const;
  // Returns true when the proposal was accepted.
  bool mala_step_alpha(State& state, double step, Rng& rng) const;
  void gibbs_alpha(State& state, Rng& rng) const;
  void update_xi(State& state, Rng& rng) const;
  void update_eta(State& state, Rng& rng) const;
  void update_variances(State& state, Rng& rng) const;

  const Mat& mediator_coeffs() const { return Mt_; }

private:
  Mat alpha_residual(const State& state) const;  // n x L, M~ minus xi and eta terms

  Mat Mt_;       // n x L basis coefficients of M
  Vec X_;
  Mat C_;
  MediatorOptions opts_;
  Vec lambda_;
  int n_ = 0, p_ = 0, L_ = 0, q_ = 0;
  double cell_ = 0.0;
  double Sxx_ = 0.0;
  double ortho_ss_ = 0.0;  // voxel-space sum of squares orthogonal to the basis
};

MediatorChains fit_mediator(const Dataset& data, const KernelBasis& basis,
                            const MediatorOptions& opts);

// etahat(i, s_j) from the posterior mean of the eta coefficients.
Mat posterior_mean_eta(const MediatorChains& chains, const KernelBasis& basis);

void write_mediator_chains(const std::string& dir, const MediatorChains& chains);
MediatorChains read_mediator_chains(const std::string& dir);

}  // namespace basmu
