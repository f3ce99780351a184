#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "basmu/errors.hpp"
#include "basmu/rng.hpp"

namespace basmu::mala {

using Vec = Eigen::VectorXd;

// One Metropolis-adjusted Langevin step on an arbitrary target.
// Proposal: theta' = theta + (step^2/2) grad(theta) + step z.
// Target must provide logpi(theta) and grad(theta).
template <class Target>
bool step(Vec& theta, double step_size, Target&& target, Rng& rng) {
  if (!(step_size > 0.0)) throw argument_error("mala::step: step must be > 0");
  const double s2 = step_size * step_size;
  const Vec g = target.grad(theta);
  if (!g.allFinite()) throw sampler_error("mala::step: non-finite gradient");
  const Vec noise = rng.normal_vec(theta.size());
  const Vec prop = theta + 0.5 * s2 * g + step_size * noise;

  const Vec g_prop = target.grad(prop);
  if (!g_prop.allFinite()) return false;
  const double logpi_cur = target.logpi(theta);
  const double logpi_prop = target.logpi(prop);
  // log q(theta | prop) - log q(prop | theta)
  const double fwd = -(prop - theta - 0.5 * s2 * g).squaredNorm() / (2.0 * s2);
  const double bwd = -(theta - prop - 0.5 * s2 * g_prop).squaredNorm() / (2.0 * s2);
  const double log_ratio = logpi_prop - logpi_cur + bwd - fwd;
  if (std::log(rng.uniform()) <= log_ratio) {
    theta = prop;
    return true;
  }
  return false;
}

// Multiplicative step-size adaptation toward a target acceptance rate,
// applied during burn-in only and frozen afterwards.
struct StepAdapter {
  double step;
  double target_rate;

  void adapt(double observed_rate) {
    step *= std::exp(observed_rate - target_rate);
    step = std::clamp(step, 1e-8, 1e3);
  }
};

}  // namespace basmu::mala
