#include "basmu/mediator_sampler.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "basmu/io.hpp"
#include "basmu/mala.hpp"

namespace basmu {

using nlohmann::json;

namespace {

// MALA target for the alpha block given the current xi/eta residual.
struct AlphaTarget {
  const Mat& resid_base;  // n x L, M~ minus xi and eta terms
  const Vec& X;
  double noise_var;       // sigma_M^2 / p
  Vec prior_var;          // sigma_alpha^2 * lambda_l

  double logpi(const Vec& theta) const {
    const Mat R = resid_base - X * theta.transpose();
    return -R.squaredNorm() / (2.0 * noise_var) -
           0.5 * (theta.array().square() / prior_var.array()).sum();
  }

  Vec grad(const Vec& theta) const {
    const Mat R = resid_base - X * theta.transpose();
    return (R.transpose() * X) / noise_var -
           (theta.array() / prior_var.array()).matrix();
  }
};

}  // namespace

MediatorSampler::MediatorSampler(const Dataset& data, const KernelBasis& basis,
                                 MediatorOptions opts)
    : X_(data.X), C_(data.C), opts_(opts), lambda_(basis.eigenvalues) {
  n_ = static_cast<int>(data.M.rows());
  p_ = static_cast<int>(data.M.cols());
  q_ = static_cast<int>(data.C.cols());
  L_ = basis.L;
  if (p_ != basis.p) throw argument_error("fit_mediator: M columns != basis p");
  if (data.X.size() != n_ || data.Y.size() != n_ || data.C.rows() != n_)
    throw argument_error("fit_mediator: inconsistent data dimensions");
  if (n_ < 2) throw argument_error("fit_mediator: need n >= 2 subjects");
  const bool x_constant = (X_.maxCoeff() - X_.minCoeff()) == 0.0;
  if (x_constant && q_ == 0)
    throw argument_error("fit_mediator: degenerate design, constant X with no covariates");
  if (opts_.total_iters < 10) throw argument_error("fit_mediator: too few iterations");

  cell_ = basis.cell_measure();
  Mt_ = basis.to_coeffs_rows(data.M);
  Sxx_ = X_.squaredNorm();
  ortho_ss_ = 0.0;
  for (int i = 0; i < n_; ++i) {
    const double full = data.M.row(i).squaredNorm();
    const double proj = p_ * Mt_.row(i).squaredNorm();
    ortho_ss_ += std::max(0.0, full - proj);
  }
}

MediatorSampler::State MediatorSampler::initial_state() const {
  State s;
  s.theta_alpha = Vec::Zero(L_);
  s.theta_xi = Mat::Zero(q_, L_);
  s.theta_eta = Mat::Zero(n_, L_);
  return s;
}

Mat MediatorSampler::alpha_residual(const State& state) const {
  return Mt_ - C_ * state.theta_xi - state.theta_eta;
}

double MediatorSampler::alpha_log_posterior(const State& state) const {
  const Mat resid = alpha_residual(state);
  AlphaTarget target{resid, X_, state.sigma2_M * cell_,
                     state.sigma2_alpha * lambda_};
  return target.logpi(state.theta_alpha);
}

Vec MediatorSampler::alpha_gradient(const State& state) const {
  const Mat resid = alpha_residual(state);
  AlphaTarget target{resid, X_, state.sigma2_M * cell_,
                     state.sigma2_alpha * lambda_};
  return target.grad(state.theta_alpha);
}

bool MediatorSampler::mala_step_alpha(State& state, double step, Rng& rng) const {
  const Mat resid = alpha_residual(state);
  AlphaTarget target{resid, X_, state.sigma2_M * cell_,
                     state.sigma2_alpha * lambda_};
  return mala::step(state.theta_alpha, step, target, rng);
}

void MediatorSampler::gibbs_alpha(State& state, Rng& rng) const {
  const double v = state.sigma2_M * cell_;
  const Vec proj = alpha_residual(state).transpose() * X_;
  for (int l = 0; l < L_; ++l) {
    const double prec = Sxx_ / v + 1.0 / (state.sigma2_alpha * lambda_[l]);
    const double mean = proj[l] / v / prec;
    state.theta_alpha[l] = rng.normal(mean, 1.0 / std::sqrt(prec));
  }
}

void MediatorSampler::update_xi(State& state, Rng& rng) const {
  const double v = state.sigma2_M * cell_;
  Mat resid = Mt_ - X_ * state.theta_alpha.transpose() - state.theta_eta -
              C_ * state.theta_xi;
  for (int k = 0; k < q_; ++k) {
    const Vec ck = C_.col(k);
    resid.noalias() += ck * state.theta_xi.row(k);  // exclude covariate k
    const double sck = ck.squaredNorm();
    const Vec proj = resid.transpose() * ck;
    for (int l = 0; l < L_; ++l) {
      const double prec = sck / v + 1.0 / (state.sigma2_xi * lambda_[l]);
      const double mean = proj[l] / v / prec;
      state.theta_xi(k, l) = rng.normal(mean, 1.0 / std::sqrt(prec));
    }
    resid.noalias() -= ck * state.theta_xi.row(k);
  }
}

void MediatorSampler::update_eta(State& state, Rng& rng) const {
  const double v = state.sigma2_M * cell_;
  const Mat resid = Mt_ - X_ * state.theta_alpha.transpose() - C_ * state.theta_xi;
  for (int l = 0; l < L_; ++l) {
    const double var = 1.0 / (1.0 / (state.sigma2_eta * lambda_[l]) + 1.0 / v);
    const double sd = std::sqrt(var);
    const double scale = var / v;
    for (int i = 0; i < n_; ++i)
      state.theta_eta(i, l) = scale * resid(i, l) + sd * rng.normal();
  }
}

void MediatorSampler::update_variances(State& state, Rng& rng) const {
  const double a = opts_.ig_shape, b = opts_.ig_scale;
  const Mat resid = Mt_ - X_ * state.theta_alpha.transpose() - C_ * state.theta_xi -
                    state.theta_eta;
  const double ss_vox = p_ * resid.squaredNorm() + ortho_ss_;
  state.sigma2_M = rng.inv_gamma(a + 0.5 * n_ * p_, b + 0.5 * ss_vox);

  const double ss_alpha = (state.theta_alpha.array().square() / lambda_.array()).sum();
  state.sigma2_alpha = rng.inv_gamma(a + 0.5 * L_, b + 0.5 * ss_alpha);

  double sum_xi = 0.0;
  for (int k = 0; k < q_; ++k)
    sum_xi += (state.theta_xi.row(k).transpose().array().square() / lambda_.array()).sum();
  state.sigma2_xi = rng.inv_gamma(a + 0.5 * q_ * L_, b + 0.5 * sum_xi);

  double sum_eta = 0.0;
  for (int l = 0; l < L_; ++l) sum_eta += state.theta_eta.col(l).squaredNorm() / lambda_[l];
  state.sigma2_eta = rng.inv_gamma(a + 0.5 * n_ * L_, b + 0.5 * sum_eta);
}

MediatorChains MediatorSampler::run(Rng& rng) const {
  const int total = opts_.total_iters;
  const int burnin = opts_.effective_burnin();
  if (burnin < 0 || burnin >= total)
    throw argument_error("fit_mediator: burn-in must lie in [0, total)");
  const int retained = total - burnin;

  MediatorChains chains;
  chains.theta_alpha.resize(retained, L_);
  chains.theta_xi.reserve(retained);
  chains.theta_eta.reserve(retained);
  chains.sigma2_M.resize(retained);
  chains.sigma2_alpha.resize(retained);
  chains.sigma2_xi.resize(retained);
  chains.sigma2_eta.resize(retained);
  chains.total_iters = total;
  chains.burnin = burnin;
  chains.seed = opts_.seed;
  chains.n = n_;
  chains.p = p_;
  chains.L = L_;
  chains.q = q_;

  State state = initial_state();
  mala::StepAdapter adapter{opts_.mala_step, opts_.mala_target_accept};
  int window_accept = 0, window_count = 0;
  int retained_accept = 0, retained_count = 0;

  for (int t = 0; t < total; ++t) {
    if (opts_.mala_alpha) {
      const bool acc = mala_step_alpha(state, adapter.step, rng);
      ++window_count;
      window_accept += acc ? 1 : 0;
      if (t >= burnin) {
        ++retained_count;
        retained_accept += acc ? 1 : 0;
      }
      if (t < burnin && window_count >= opts_.adapt_interval) {
        adapter.adapt(static_cast<double>(window_accept) / window_count);
        window_accept = window_count = 0;
      }
    } else {
      gibbs_alpha(state, rng);
    }
    update_xi(state, rng);
    update_eta(state, rng);
    update_variances(state, rng);

    if (!state.theta_alpha.allFinite() || !std::isfinite(state.sigma2_M))
      throw sampler_error("fit_mediator: non-finite state at iteration " + std::to_string(t));

    if (t >= burnin) {
      const int r = t - burnin;
      chains.theta_alpha.row(r) = state.theta_alpha.transpose();
      chains.theta_xi.push_back(state.theta_xi);
      chains.theta_eta.push_back(state.theta_eta);
      chains.sigma2_M[r] = state.sigma2_M;
      chains.sigma2_alpha[r] = state.sigma2_alpha;
      chains.sigma2_xi[r] = state.sigma2_xi;
      chains.sigma2_eta[r] = state.sigma2_eta;
    }
  }
  chains.alpha_accept_rate =
      retained_count > 0 ? static_cast<double>(retained_accept) / retained_count : 0.0;
  return chains;
}

MediatorChains fit_mediator(const Dataset& data, const KernelBasis& basis,
                            const MediatorOptions& opts) {
  MediatorSampler sampler(data, basis, opts);
  Rng rng(opts.seed);
  return sampler.run(rng);
}

Mat posterior_mean_eta(const MediatorChains& chains, const KernelBasis& basis) {
  if (chains.theta_eta.empty())
    throw argument_error("posterior_mean_eta: empty chain");
  Mat mean = Mat::Zero(chains.n, chains.L);
  for (const Mat& draw : chains.theta_eta) mean += draw;
  mean /= static_cast<double>(chains.theta_eta.size());
  return basis.from_coeffs_rows(mean);
}

void write_mediator_chains(const std::string& dir, const MediatorChains& chains) {
  std::filesystem::create_directories(dir);
  const int T = chains.num_draws();
  const int L = chains.L, q = chains.q;
  std::vector<std::string> header;
  for (int l = 0; l < L; ++l) header.push_back("theta_alpha_" + std::to_string(l + 1));
  for (int k = 0; k < q; ++k)
    for (int l = 0; l < L; ++l)
      header.push_back("theta_xi_" + std::to_string(k + 1) + "_" + std::to_string(l + 1));
  header.insert(header.end(), {"sigma_M2", "sigma_alpha2", "sigma_xi2", "sigma_eta2"});

  Mat table(T, L + q * L + 4);
  for (int t = 0; t < T; ++t) {
    int col = 0;
    table.block(t, col, 1, L) = chains.theta_alpha.row(t);
    col += L;
    for (int k = 0; k < q; ++k, col += L)
      table.block(t, col, 1, L) = chains.theta_xi[t].row(k);
    table(t, col++) = chains.sigma2_M[t];
    table(t, col++) = chains.sigma2_alpha[t];
    table(t, col++) = chains.sigma2_xi[t];
    table(t, col++) = chains.sigma2_eta[t];
  }
  write_csv(dir + "/chains.csv", table, header);

  json meta{{"model", "mediator"},
            {"iterations", chains.total_iters},
            {"burnin", chains.burnin},
            {"alpha_accept_rate", chains.alpha_accept_rate},
            {"seed", chains.seed},
            {"n", chains.n},
            {"p", chains.p},
            {"L", chains.L},
            {"q", chains.q}};
  std::ofstream out(dir + "/meta.json");
  out << meta.dump(2) << '\n';
}

MediatorChains read_mediator_chains(const std::string& dir) {
  std::ifstream meta_in(dir + "/meta.json");
  if (!meta_in) throw argument_error("read_mediator_chains: missing meta.json in " + dir);
  json meta;
  meta_in >> meta;

  MediatorChains chains;
  chains.total_iters = meta.at("iterations").get<int>();
  chains.burnin = meta.at("burnin").get<int>();
  chains.alpha_accept_rate = meta.at("alpha_accept_rate").get<double>();
  chains.seed = meta.at("seed").get<std::uint64_t>();
  chains.n = meta.at("n").get<int>();
  chains.p = meta.at("p").get<int>();
  chains.L = meta.at("L").get<int>();
  chains.q = meta.at("q").get<int>();

  std::vector<std::string> header;
  const Mat table = read_csv(dir + "/chains.csv", &header);
  const int T = static_cast<int>(table.rows());
  const int L = chains.L, q = chains.q;
  if (table.cols() != L + q * L + 4)
    throw argument_error("read_mediator_chains: unexpected column count");
  chains.theta_alpha = table.leftCols(L);
  chains.theta_xi.reserve(T);
  for (int t = 0; t < T; ++t) {
    Mat xi(q, L);
    for (int k = 0; k < q; ++k) xi.row(k) = table.block(t, L + k * L, 1, L);
    chains.theta_xi.push_back(std::move(xi));
  }
  const int base = L + q * L;
  chains.sigma2_M = table.col(base);
  chains.sigma2_alpha = table.col(base + 1);
  chains.sigma2_xi = table.col(base + 2);
  chains.sigma2_eta = table.col(base + 3);
  return chains;
}

}  // namespace basmu
