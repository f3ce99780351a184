#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "basmu/mala.hpp"
#include "basmu/mediator_sampler.hpp"

using namespace basmu;

namespace {

struct TinyInstance {
  KernelBasis basis;
  CaseConfig cfg;
  Dataset data;
  Truth truth;
};

TinyInstance tiny_instance(std::uint64_t seed, int n = 12, int side = 3, int L = 4) {
  TinyInstance t;
  t.basis = eigenbasis(Grid2D(side, side), MaternParams{}, L);
  t.cfg.n1 = t.cfg.n2 = side;
  t.cfg.n = n;
  t.cfg.L = L;
  t.cfg.nu_pattern = NuPattern::dense;
  t.cfg.seed = seed;
  Rng rng(seed);
  t.truth = make_truth(t.cfg, t.basis, rng);
  t.data = simulate_dataset(t.truth, t.cfg, rng);
  return t;
}

double batch_mean_se(const Vec& chain, int n_batches = 20) {
  const int T = static_cast<int>(chain.size());
  const int batch = T / n_batches;
  Vec means(n_batches);
  for (int b = 0; b < n_batches; ++b) means[b] = chain.segment(b * batch, batch).mean();
  const double grand = means.mean();
  const double var = (means.array() - grand).square().sum() / (n_batches - 1);
  return std::sqrt(var / n_batches);
}

}  // namespace

TEST_CASE("alpha gradient matches central finite differences") {
  const TinyInstance t = tiny_instance(101);
  MediatorOptions opts;
  const MediatorSampler sampler(t.data, t.basis, opts);
  MediatorSampler::State state = sampler.initial_state();
  state.sigma2_M = 2.7;
  state.sigma2_alpha = 0.9;
  Rng rng(5);
  state.theta_xi = rng.normal_mat(t.cfg.q, t.cfg.L);
  state.theta_eta = rng.normal_mat(t.cfg.n, t.cfg.L);

  const double h = 1e-5;
  for (int rep = 0; rep < 5; ++rep) {
    state.theta_alpha = rng.normal_vec(t.cfg.L);
    const Vec grad = sampler.alpha_gradient(state);
    for (int l = 0; l < t.cfg.L; ++l) {
      MediatorSampler::State plus = state, minus = state;
      plus.theta_alpha[l] += h;
      minus.theta_alpha[l] -= h;
      const double fd =
          (sampler.alpha_log_posterior(plus) - sampler.alpha_log_posterior(minus)) / (2 * h);
      CHECK(std::abs(grad[l] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("negating the exposure negates the alpha gradient") {
  const TinyInstance t = tiny_instance(103);
  MediatorOptions opts;
  const MediatorSampler pos(t.data, t.basis, opts);
  Dataset flipped = t.data;
  flipped.X = -t.data.X;
  const MediatorSampler neg(flipped, t.basis, opts);

  Rng rng(9);
  MediatorSampler::State state = pos.initial_state();
  state.theta_xi = rng.normal_mat(t.cfg.q, t.cfg.L);
  state.theta_eta = rng.normal_mat(t.cfg.n, t.cfg.L);
  state.theta_alpha = rng.normal_vec(t.cfg.L);

  MediatorSampler::State mirrored = state;
  mirrored.theta_alpha = -state.theta_alpha;
  const Vec g = pos.alpha_gradient(state);
  const Vec g_m = neg.alpha_gradient(mirrored);
  CHECK((g + g_m).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, g.cwiseAbs().maxCoeff()));
}

TEST_CASE("MALA at the conditional mode accepts almost surely as step -> 0") {
  const TinyInstance t = tiny_instance(107);
  MediatorOptions opts;
  const MediatorSampler sampler(t.data, t.basis, opts);
  MediatorSampler::State state = sampler.initial_state();
  Rng rng(3);
  state.theta_eta = rng.normal_mat(t.cfg.n, t.cfg.L);

  // Newton step from zero lands on the Gaussian conditional mode.
  state.theta_alpha.setZero();
  const Vec g0 = sampler.alpha_gradient(state);
  const double v = state.sigma2_M * t.basis.cell_measure();
  const double sxx = t.data.X.squaredNorm();
  for (int l = 0; l < t.cfg.L; ++l) {
    const double prec = sxx / v + 1.0 / (state.sigma2_alpha * t.basis.eigenvalues[l]);
    state.theta_alpha[l] = g0[l] / prec;
  }
  CHECK(sampler.alpha_gradient(state).cwiseAbs().maxCoeff() <= 1e-8);

  int accepted = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    MediatorSampler::State s = state;
    accepted += sampler.mala_step_alpha(s, 1e-6, rng) ? 1 : 0;
  }
  CHECK(accepted >= trials - 1);
}

TEST_CASE("MALA targets a known 2D Gaussian") {
  struct Gaussian2D {
    Eigen::Matrix2d prec;
    Eigen::Vector2d mu;
    double logpi(const Vec& x) const {
      const Eigen::Vector2d d = x - mu;
      return -0.5 * d.dot(prec * d);
    }
    Vec grad(const Vec& x) const { return -(prec * (x - mu)); }
  };
  Gaussian2D target;
  target.mu << 1.0, -2.0;
  Eigen::Matrix2d cov;
  cov << 1.0, 0.3, 0.3, 0.5;
  target.prec = cov.inverse();

  Rng rng(17);
  Vec x = Vec::Zero(2);
  const int total = 60000, burn = 5000;
  Mat draws(total - burn, 2);
  for (int tstep = 0; tstep < total; ++tstep) {
    mala::step(x, 0.55, target, rng);
    if (tstep >= burn) draws.row(tstep - burn) = x.transpose();
  }
  for (int d = 0; d < 2; ++d) {
    const Vec col = draws.col(d);
    const double se = batch_mean_se(col);
    CHECK(std::abs(col.mean() - target.mu[d]) <= 3.0 * se);
  }
  // Covariance entries against the analytic values, batch-means SE on the
  // centered products.
  for (int a = 0; a < 2; ++a)
    for (int b = a; b < 2; ++b) {
      Vec prod = (draws.col(a).array() - target.mu[a]).array() *
                 (draws.col(b).array() - target.mu[b]).array();
      const double se = batch_mean_se(prod);
      CHECK(std::abs(prod.mean() - cov(a, b)) <= 3.0 * se);
    }
}

TEST_CASE("Gibbs full conditionals match the dense joint posterior on a tiny instance") {
  // n = 3, p = 4, L = 2, all hyper-variances fixed; the exact posterior of
  // (theta_alpha, theta_xi, theta_eta) is Gaussian and separable across l.
  const int n = 3, L = 2, side = 2;
  TinyInstance t = tiny_instance(211, n, side, L);
  MediatorOptions opts;
  const MediatorSampler sampler(t.data, t.basis, opts);

  MediatorSampler::State state = sampler.initial_state();
  state.sigma2_M = 1.3;
  state.sigma2_alpha = 0.8;
  state.sigma2_xi = 0.6;
  state.sigma2_eta = 0.9;

  const int q = t.cfg.q;
  const double v = state.sigma2_M * t.basis.cell_measure();
  const Mat Mt = sampler.mediator_coeffs();

  // Dense oracle per basis index: unknowns (alpha_l, xi_{.,l}, eta_{.,l}).
  Mat Z(n, 1 + q + n);
  Z.col(0) = t.data.X;
  Z.middleCols(1, q) = t.data.C;
  Z.rightCols(n) = Mat::Identity(n, n);
  Mat expected(n + q + 1, L);
  for (int l = 0; l < L; ++l) {
    Vec prior_var(1 + q + n);
    prior_var[0] = state.sigma2_alpha * t.basis.eigenvalues[l];
    for (int k = 0; k < q; ++k) prior_var[1 + k] = state.sigma2_xi * t.basis.eigenvalues[l];
    for (int i = 0; i < n; ++i) prior_var[1 + q + i] = state.sigma2_eta * t.basis.eigenvalues[l];
    Mat prec = Z.transpose() * Z / v;
    prec.diagonal() += prior_var.cwiseInverse();
    expected.col(l) = prec.llt().solve(Z.transpose() * Mt.col(l) / v);
  }

  Rng rng(23);
  const int sweeps = 60000, burn = 5000;
  Mat sum_draws = Mat::Zero(1 + q + n, L);
  Mat chain_eta00(sweeps - burn, 1);
  for (int s = 0; s < sweeps; ++s) {
    sampler.gibbs_alpha(state, rng);
    sampler.update_xi(state, rng);
    sampler.update_eta(state, rng);
    if (s >= burn) {
      sum_draws.row(0) += state.theta_alpha.transpose();
      sum_draws.middleRows(1, q) += state.theta_xi;
      sum_draws.bottomRows(n) += state.theta_eta;
      chain_eta00(s - burn, 0) = state.theta_eta(0, 0);
    }
  }
  sum_draws /= (sweeps - burn);

  const double se = batch_mean_se(chain_eta00.col(0));
  for (int l = 0; l < L; ++l)
    for (int r = 0; r < 1 + q + n; ++r)
      CHECK(std::abs(sum_draws(r, l) - expected(r, l)) <= 5.0 * se + 1e-3);
}

TEST_CASE("no exposure information returns the prior for theta_alpha") {
  TinyInstance t = tiny_instance(301, 24, 3, 4);
  t.data.X.setZero();
  MediatorOptions opts;
  opts.total_iters = 6000;
  opts.seed = 31;
  const MediatorChains chains = fit_mediator(t.data, t.basis, opts);
  // Marginally theta_alpha,l ~ N(0, sigma_alpha^2 lambda_l) with
  // sigma_alpha^2 ~ IG(2,1): E|theta| = E[sigma_alpha] sqrt(2 lambda_l / pi),
  // E[sigma_alpha] = Gamma(1.5)/Gamma(2).
  const double e_sigma = std::tgamma(1.5) / std::tgamma(2.0);
  double observed = 0.0, expected = 0.0;
  for (int l = 0; l < chains.L; ++l) {
    observed += chains.theta_alpha.col(l).cwiseAbs().mean();
    expected += e_sigma * std::sqrt(2.0 * t.basis.eigenvalues[l] / M_PI);
  }
  CHECK(observed == doctest::Approx(expected).epsilon(0.4));
}

TEST_CASE("posterior_mean_eta trivial cases") {
  const TinyInstance t = tiny_instance(401, 5, 2, 3);
  MediatorChains chains;
  chains.n = 5;
  chains.p = 4;
  chains.L = 3;
  chains.q = 2;

  SUBCASE("empty chain raises") {
    CHECK_THROWS_AS(posterior_mean_eta(chains, t.basis), argument_error);
  }
  SUBCASE("single draw returns that draw's field") {
    Rng rng(2);
    const Mat draw = rng.normal_mat(5, 3);
    chains.theta_eta.push_back(draw);
    const Mat etahat = posterior_mean_eta(chains, t.basis);
    CHECK((etahat - t.basis.from_coeffs_rows(draw)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("symmetric draws cancel") {
    Rng rng(2);
    const Mat draw = rng.normal_mat(5, 3);
    chains.theta_eta.push_back(draw);
    chains.theta_eta.push_back(-draw);
    CHECK(posterior_mean_eta(chains, t.basis).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero coefficients give a zero field") {
    chains.theta_eta.push_back(Mat::Zero(5, 3));
    CHECK(posterior_mean_eta(chains, t.basis).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("retained variance draws are strictly positive and chains reproducible") {
  const TinyInstance t = tiny_instance(501, 16, 3, 4);
  MediatorOptions opts;
  opts.total_iters = 400;
  opts.seed = 77;
  const MediatorChains a = fit_mediator(t.data, t.basis, opts);
  const MediatorChains b = fit_mediator(t.data, t.basis, opts);
  CHECK(a.num_draws() == 40);
  CHECK(a.sigma2_M.minCoeff() > 0.0);
  CHECK(a.sigma2_alpha.minCoeff() > 0.0);
  CHECK(a.sigma2_xi.minCoeff() > 0.0);
  CHECK(a.sigma2_eta.minCoeff() > 0.0);
  CHECK((a.theta_alpha - b.theta_alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sigma2_M - b.sigma2_M).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.alpha_accept_rate == b.alpha_accept_rate);
}

TEST_CASE("degenerate designs are rejected") {
  TinyInstance t = tiny_instance(601, 6, 2, 3);
  MediatorOptions opts;

  SUBCASE("n < 2") {
    Dataset d;
    d.M = t.data.M.topRows(1);
    d.X = t.data.X.head(1);
    d.C = t.data.C.topRows(1);
    d.Y = t.data.Y.head(1);
    CHECK_THROWS_AS(fit_mediator(d, t.basis, opts), argument_error);
  }
  SUBCASE("constant X with no covariates") {
    Dataset d = t.data;
    d.X.setConstant(1.0);
    d.C.resize(t.cfg.n, 0);
    CHECK_THROWS_AS(fit_mediator(d, t.basis, opts), argument_error);
  }
  SUBCASE("constant X with covariates is allowed") {
    Dataset d = t.data;
    d.X.setZero();
    opts.total_iters = 50;
    CHECK_NOTHROW(fit_mediator(d, t.basis, opts));
  }
}

TEST_CASE("mediator chains round trip through CSV") {
  const TinyInstance t = tiny_instance(701, 8, 2, 3);
  MediatorOptions opts;
  opts.total_iters = 100;
  const MediatorChains chains = fit_mediator(t.data, t.basis, opts);
  const std::string dir = "/tmp/basmu_test_med_chains";
  write_mediator_chains(dir, chains);
  const MediatorChains loaded = read_mediator_chains(dir);
  CHECK((loaded.theta_alpha - chains.theta_alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.sigma2_eta - chains.sigma2_eta).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.theta_xi.size() == chains.theta_xi.size());
  for (size_t i = 0; i < loaded.theta_xi.size(); ++i)
    CHECK((loaded.theta_xi[i] - chains.theta_xi[i]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.burnin == chains.burnin);
  CHECK(loaded.alpha_accept_rate == chains.alpha_accept_rate);
}

TEST_CASE("posterior mean of sigma_M^2 recovers the generative noise at scale") {
  // Full-scale defaults: sigma_M = 2, n = 300, p = 40x40, L = 120.
  const KernelBasis basis = eigenbasis(Grid2D(40, 40), MaternParams{0.2, 2.0}, 120);
  const CaseConfig cfg = CaseConfig::for_case(1, Scale::paper, 19);
  const SimulationResult sim = simulate_case(cfg, basis);
  MediatorOptions opts;
  opts.total_iters = 1000;
  opts.seed = 20;
  const MediatorChains chains = fit_mediator(sim.data, basis, opts);
  CHECK(chains.sigma2_M.mean() == doctest::Approx(4.0).epsilon(0.10));
}
