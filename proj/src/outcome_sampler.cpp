#include "basmu/outcome_sampler.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "basmu/io.hpp"
#include "basmu/mala.hpp"

namespace basmu {

using nlohmann::json;

std::string to_string(OutcomeModel m) {
  return m == OutcomeModel::bima ? "bima" : "basmu";
}

ThetaBetaMoments theta_beta_moments(const Mat& Mt, const Vec& resid, const Vec& lambda,
                                    double sigma2_Y, double sigma2_beta) {
  const int L = static_cast<int>(Mt.cols());
  Mat prec = (Mt.transpose() * Mt) / sigma2_Y;
  for (int l = 0; l < L; ++l) prec(l, l) += 1.0 / (sigma2_beta * lambda[l]);
  Eigen::LLT<Mat> llt(prec);
  if (llt.info() != Eigen::Success)
    throw numeric_error("theta_beta_moments: precision not positive definite");
  ThetaBetaMoments out;
  out.mean = llt.solve(Mt.transpose() * resid / sigma2_Y);
  out.cov = llt.solve(Mat::Identity(L, L));
  return out;
}

namespace {

// Draw from N(prec^{-1} b, prec^{-1}) given the precision and b.
Vec gaussian_draw_from_precision(const Mat& prec, const Vec& b, Rng& rng) {
  Eigen::LLT<Mat> llt(prec);
  if (llt.info() != Eigen::Success)
    throw numeric_error("gaussian draw: precision not positive definite");
  const Vec mean = llt.solve(b);
  const Vec z = rng.normal_vec(b.size());
  return mean + llt.matrixU().solve(z);
}

struct BetaTarget {
  const Mat& design;  // n x L
  const Vec& resid;   // n
  double noise_var;
  Vec prior_var;

  double logpi(const Vec& theta) const {
    return -(resid - design * theta).squaredNorm() / (2.0 * noise_var) -
           0.5 * (theta.array().square() / prior_var.array()).sum();
  }
  Vec grad(const Vec& theta) const {
    return design.transpose() * (resid - design * theta) / noise_var -
           (theta.array() / prior_var.array()).matrix();
  }
};

}  // namespace

Vec update_theta_beta(const Mat& Mt, const Vec& resid, const Vec& lambda, double sigma2_Y,
                      double sigma2_beta, Rng& rng) {
  const int L = static_cast<int>(Mt.cols());
  Mat prec = (Mt.transpose() * Mt) / sigma2_Y;
  for (int l = 0; l < L; ++l) prec(l, l) += 1.0 / (sigma2_beta * lambda[l]);
  return gaussian_draw_from_precision(prec, Mt.transpose() * resid / sigma2_Y, rng);
}

namespace {

// Thin SVD factors of the active design, computed through the Gram matrix of
// the smaller side. Zero singular values keep zero factor columns, which makes
// every downstream formula finite on rank-deficient designs.
struct ThinSvd {
  Vec d;  // r = min(n, m), non-increasing
  Mat U;  // n x r (left factors; only built when needed)
  Mat V;  // m x r
};

ThinSvd thin_svd_gram(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(A.cols());
  const int r = std::min(n, m);
  const bool wide = m > n;

  Mat G = Mat::Zero(r, r);
  if (wide) {
    G.selfadjointView<Eigen::Lower>().rankUpdate(A);  // A A^T
  } else {
    G.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());  // A^T A
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(G);
  if (eig.info() != Eigen::Success) throw numeric_error("draw_nu_active: SVD failed");

  ThinSvd svd;
  svd.d.resize(r);
  Mat W(r, r);  // eigenvectors reordered to non-increasing singular values
  for (int k = 0; k < r; ++k) {
    svd.d[k] = std::sqrt(std::max(0.0, eig.eigenvalues()[r - 1 - k]));
    W.col(k) = eig.eigenvectors().col(r - 1 - k);
  }
  const double tol = svd.d[0] > 0.0 ? 1e-12 * svd.d[0] : 0.0;
  if (wide) {
    svd.U = std::move(W);
    svd.V.resize(m, r);
    for (int k = 0; k < r; ++k)
      svd.V.col(k) = svd.d[k] > tol ? Vec(A.transpose() * svd.U.col(k) / svd.d[k])
                                    : Vec(Vec::Zero(m));
  } else {
    svd.V = std::move(W);
    svd.U.resize(n, r);
    for (int k = 0; k < r; ++k)
      svd.U.col(k) =
          svd.d[k] > tol ? Vec(A * svd.V.col(k) / svd.d[k]) : Vec(Vec::Zero(n));
  }
  return svd;
}

}  // namespace

Vec draw_nu_active(const Mat& design_active, const Vec& y_nu, double sigma2_Y,
                   double sigma2_nu, Rng& rng) {
  const int n = static_cast<int>(design_active.rows());
  const int m = static_cast<int>(design_active.cols());
  if (y_nu.size() != n) throw argument_error("draw_nu_active: residual length != n");

  const ThinSvd svd = thin_svd_gram(design_active);
  const Vec& d = svd.d;

  if (m > n) {
    // Auxiliary-variable sampler for the wide case.
    const double tau2 = sigma2_nu / sigma2_Y;
    const Vec a1 = std::sqrt(sigma2_nu) * rng.normal_vec(m);
    const Vec a2 = std::sqrt(sigma2_Y) * rng.normal_vec(n);
    const Vec ystar = svd.U.transpose() * y_nu;
    Vec t = ystar - d.asDiagonal() * (svd.V.transpose() * a1) - a2;
    t.array() *= tau2 * d.array() / (1.0 + tau2 * d.array().square());
    return a1 + svd.V * t;
  }

  // Narrow case: rotated conjugate normal.
  const Vec ystar = svd.U.transpose() * y_nu;
  Vec draw(m);
  for (int k = 0; k < m; ++k) {
    const double v1 = 1.0 / (d[k] * d[k] / sigma2_Y + 1.0 / sigma2_nu);
    const double e1 = v1 * d[k] * ystar[k] / sigma2_Y;
    draw[k] = rng.normal(e1, std::sqrt(v1));
  }
  return svd.V * draw;
}

Vec update_nu_svd(const Mat& W, const Eigen::VectorXi& delta, const Vec& y_nu,
                  double sigma2_Y, double sigma2_nu, Rng& rng) {
  const int p = static_cast<int>(W.cols());
  if (delta.size() != p) throw argument_error("update_nu_svd: delta length != p");
  std::vector<int> active;
  active.reserve(p);
  for (int j = 0; j < p; ++j)
    if (delta[j] != 0) active.push_back(j);

  Vec nu(p);
  const double sd_prior = std::sqrt(sigma2_nu);
  if (!active.empty()) {
    Mat A(W.rows(), static_cast<int>(active.size()));
    for (size_t k = 0; k < active.size(); ++k) A.col(static_cast<int>(k)) = W.col(active[k]);
    const Vec nu_act = draw_nu_active(A, y_nu, sigma2_Y, sigma2_nu, rng);
    for (size_t k = 0; k < active.size(); ++k) nu[active[k]] = nu_act[static_cast<int>(k)];
  }
  for (int j = 0; j < p; ++j)
    if (delta[j] == 0) nu[j] = sd_prior * rng.normal();
  return nu;
}

Vec update_delta_seq(const Mat& W, const Vec& y_nu, const Vec& nu, Eigen::VectorXi& delta,
                     double sigma2_Y, double p_delta, Rng& rng) {
  const int p = static_cast<int>(W.cols());
  if (nu.size() != p || delta.size() != p)
    throw argument_error("update_delta_seq: nu/delta length != p");
  if (!(p_delta > 0.0) || !(p_delta < 1.0))
    throw argument_error("update_delta_seq: p_delta must be in (0,1)");

  Vec R = y_nu - W * (nu.array() * delta.cast<double>().array()).matrix();
  const double prior_odds = (1.0 - p_delta) / p_delta;
  for (int j = 0; j < p; ++j) {
    Vec R1, R0;
    if (delta[j] == 1) {
      R1 = R;
      R0 = R + W.col(j) * nu[j];
    } else {
      R1 = R - W.col(j) * nu[j];
      R0 = R;
    }
    const double log_l1 = -0.5 / sigma2_Y * R1.squaredNorm();
    const double log_l0 = -0.5 / sigma2_Y * R0.squaredNorm();
    if (!std::isfinite(log_l1) || !std::isfinite(log_l0))
      throw sampler_error("update_delta_seq: non-finite likelihood at voxel " +
                          std::to_string(j));
    const double p1 = 1.0 / (1.0 + std::exp(log_l0 - log_l1) * prior_odds);
    if (rng.uniform() < p1) {
      delta[j] = 1;
      R = std::move(R1);
    } else {
      delta[j] = 0;
      R = std::move(R0);
    }
  }
  return R;
}

namespace {

class OutcomeSampler {
public:
  OutcomeSampler(const Dataset& data, const KernelBasis& basis, OutcomeModel model,
                 const Mat* etahat, OutcomeOptions opts)
      : model_(model), opts_(opts), lambda_(basis.eigenvalues) {
    n_ = static_cast<int>(data.M.rows());
    p_ = static_cast<int>(data.M.cols());
    q_ = static_cast<int>(data.C.cols());
    L_ = basis.L;
    if (p_ != basis.p) throw argument_error("fit_outcome: M columns != basis p");
    if (data.X.size() != n_ || data.Y.size() != n_ || data.C.rows() != n_)
      throw argument_error("fit_outcome: inconsistent data dimensions");
    if (n_ < 2) throw argument_error("fit_outcome: need n >= 2 subjects");
    X_ = data.X;
    C_ = data.C;
    Y_ = data.Y;
    Mt_ = basis.to_coeffs_rows(data.M);
    S_beta_ = Mt_.transpose() * Mt_;
    Sxx_ = X_.squaredNorm();
    Scc_ = C_.transpose() * C_;
    if (model_ == OutcomeModel::basmu) {
      if (etahat == nullptr) throw argument_error("fit_basmu: etahat required");
      if (etahat->rows() != n_ || etahat->cols() != p_)
        throw argument_error("fit_basmu: etahat must be n x p");
      // The confounder design is etahat itself, matching the two-stage
      // algorithm; the cell measure of the model's eta'nu term is absorbed
      // into the scale of nu (and of sigma_nu^2).
      W_ = *etahat;
    }
  }

  OutcomeChains run(Rng& rng) const {
    const int total = opts_.total_iters;
    const int burnin = opts_.effective_burnin();
    if (burnin < 0 || burnin >= total)
      throw argument_error("fit_outcome: burn-in must lie in [0, total)");
    const int retained = total - burnin;
    const bool basmu = model_ == OutcomeModel::basmu;

    OutcomeChains chains;
    chains.model = model_;
    chains.theta_beta.resize(retained, L_);
    chains.gamma.resize(retained);
    chains.zeta.resize(retained, q_);
    chains.sigma2_Y.resize(retained);
    chains.sigma2_beta.resize(retained);
    chains.sigma2_gamma.resize(retained);
    chains.sigma2_zeta.resize(retained);
    if (basmu) {
      chains.nu.resize(retained, p_);
      chains.delta.resize(retained, p_);
      chains.sigma2_nu.resize(retained);
    }
    chains.total_iters = total;
    chains.burnin = burnin;
    chains.p_delta = opts_.p_delta;
    chains.seed = opts_.seed;
    chains.n = n_;
    chains.p = p_;
    chains.L = L_;
    chains.q = q_;

    // Initialization: coefficients 0, variances 1, delta all ones.
    Vec theta_beta = Vec::Zero(L_);
    double gamma = 0.0;
    Vec zeta = Vec::Zero(q_);
    double s2Y = 1.0, s2beta = 1.0, s2gamma = 1.0, s2zeta = 1.0, s2nu = 1.0;
    Vec nu = Vec::Zero(p_);
    Eigen::VectorXi delta = Eigen::VectorXi::Ones(p_);
    Vec uhat = Vec::Zero(n_);

    mala::StepAdapter adapter{opts_.mala_step, opts_.mala_target_accept};
    int window_accept = 0, window_count = 0;
    const double a = opts_.ig_shape, b = opts_.ig_scale;

    for (int t = 0; t < total; ++t) {
      // theta_beta given everything else.
      const Vec resid_beta = Y_ - gamma * X_ - C_ * zeta - uhat;
      if (opts_.mala_beta) {
        BetaTarget target{Mt_, resid_beta, s2Y, s2beta * lambda_};
        const bool acc = mala::step(theta_beta, adapter.step, target, rng);
        ++window_count;
        window_accept += acc ? 1 : 0;
        if (t < burnin && window_count >= opts_.adapt_interval) {
          adapter.adapt(static_cast<double>(window_accept) / window_count);
          window_accept = window_count = 0;
        }
      } else {
        Mat prec = S_beta_ / s2Y;
        for (int l = 0; l < L_; ++l) prec(l, l) += 1.0 / (s2beta * lambda_[l]);
        theta_beta =
            gaussian_draw_from_precision(prec, Mt_.transpose() * resid_beta / s2Y, rng);
      }
      const double ss_beta = (theta_beta.array().square() / lambda_.array()).sum();
      s2beta = rng.inv_gamma(a + 0.5 * L_, b + 0.5 * ss_beta);

      const Vec mediator_term = Mt_ * theta_beta;

      if (basmu) {
        try {
          const Vec y_nu = Y_ - gamma * X_ - C_ * zeta - mediator_term;
          nu = update_nu_svd(W_, delta, y_nu, s2Y, s2nu, rng);
          const Vec R = update_delta_seq(W_, y_nu, nu, delta, s2Y, opts_.p_delta, rng);
          uhat = y_nu - R;
        } catch (const numeric_error& e) {
          throw sampler_error(std::string(e.what()) + " at iteration " + std::to_string(t));
        }
        s2nu = rng.inv_gamma(a + 0.5 * p_, b + 0.5 * nu.squaredNorm());
      }

      // gamma
      {
        const Vec r = Y_ - mediator_term - C_ * zeta - uhat;
        const double prec = Sxx_ / s2Y + 1.0 / s2gamma;
        gamma = rng.normal(X_.dot(r) / s2Y / prec, 1.0 / std::sqrt(prec));
        s2gamma = rng.inv_gamma(a + 0.5, b + 0.5 * gamma * gamma);
      }
      // zeta
      {
        const Vec r = Y_ - mediator_term - gamma * X_ - uhat;
        Mat prec = Scc_ / s2Y;
        prec.diagonal().array() += 1.0 / s2zeta;
        zeta = gaussian_draw_from_precision(prec, C_.transpose() * r / s2Y, rng);
        s2zeta = rng.inv_gamma(a + 0.5 * q_, b + 0.5 * zeta.squaredNorm());
      }
      // sigma_Y^2
      {
        const Vec r = Y_ - mediator_term - gamma * X_ - C_ * zeta - uhat;
        s2Y = rng.inv_gamma(a + 0.5 * n_, b + 0.5 * r.squaredNorm());
      }

      if (!theta_beta.allFinite() || !std::isfinite(s2Y))
        throw sampler_error("fit_outcome: non-finite state at iteration " + std::to_string(t));

      if (t >= burnin) {
        const int r = t - burnin;
        chains.theta_beta.row(r) = theta_beta.transpose();
        chains.gamma[r] = gamma;
        chains.zeta.row(r) = zeta.transpose();
        chains.sigma2_Y[r] = s2Y;
        chains.sigma2_beta[r] = s2beta;
        chains.sigma2_gamma[r] = s2gamma;
        chains.sigma2_zeta[r] = s2zeta;
        if (basmu) {
          chains.nu.row(r) = nu.transpose();
          chains.delta.row(r) = delta.cast<double>().transpose();
          chains.sigma2_nu[r] = s2nu;
        }
      }
    }
    return chains;
  }

private:
  OutcomeModel model_;
  OutcomeOptions opts_;
  Vec lambda_;
  Mat Mt_, S_beta_, C_, Scc_, W_;
  Vec X_, Y_;
  int n_ = 0, p_ = 0, L_ = 0, q_ = 0;
  double Sxx_ = 0.0;
};

}  // namespace

OutcomeChains fit_bima(const Dataset& data, const KernelBasis& basis,
                       const OutcomeOptions& opts) {
  OutcomeSampler sampler(data, basis, OutcomeModel::bima, nullptr, opts);
  Rng rng(opts.seed);
  return sampler.run(rng);
}

OutcomeChains fit_basmu(const Dataset& data, const KernelBasis& basis, const Mat& etahat,
                        const OutcomeOptions& opts) {
  OutcomeSampler sampler(data, basis, OutcomeModel::basmu, &etahat, opts);
  Rng rng(opts.seed);
  return sampler.run(rng);
}

void write_outcome_chains(const std::string& dir, const OutcomeChains& chains) {
  std::filesystem::create_directories(dir);
  const int T = chains.num_draws();
  const int L = chains.L, q = chains.q, p = chains.p;
  const bool basmu = chains.model == OutcomeModel::basmu;

  std::vector<std::string> header;
  for (int l = 0; l < L; ++l) header.push_back("theta_beta_" + std::to_string(l + 1));
  header.push_back("gamma");
  for (int k = 0; k < q; ++k) header.push_back("zeta_" + std::to_string(k + 1));
  header.insert(header.end(), {"sigma_Y2", "sigma_beta2", "sigma_gamma2", "sigma_zeta2"});
  if (basmu) {
    for (int j = 0; j < p; ++j) header.push_back("nu_" + std::to_string(j + 1));
    for (int j = 0; j < p; ++j) header.push_back("delta_" + std::to_string(j + 1));
    header.push_back("sigma_nu2");
  }

  Mat table(T, static_cast<int>(header.size()));
  for (int t = 0; t < T; ++t) {
    int col = 0;
    table.block(t, col, 1, L) = chains.theta_beta.row(t);
    col += L;
    table(t, col++) = chains.gamma[t];
    table.block(t, col, 1, q) = chains.zeta.row(t);
    col += q;
    table(t, col++) = chains.sigma2_Y[t];
    table(t, col++) = chains.sigma2_beta[t];
    table(t, col++) = chains.sigma2_gamma[t];
    table(t, col++) = chains.sigma2_zeta[t];
    if (basmu) {
      table.block(t, col, 1, p) = chains.nu.row(t);
      col += p;
      table.block(t, col, 1, p) = chains.delta.row(t);
      col += p;
      table(t, col++) = chains.sigma2_nu[t];
    }
  }
  write_csv(dir + "/chains.csv", table, header);

  json meta{{"model", to_string(chains.model)},
            {"iterations", chains.total_iters},
            {"burnin", chains.burnin},
            {"p_delta", chains.p_delta},
            {"seed", chains.seed},
            {"n", chains.n},
            {"p", chains.p},
            {"L", chains.L},
            {"q", chains.q}};
  std::ofstream out(dir + "/meta.json");
  out << meta.dump(2) << '\n';
}

OutcomeChains read_outcome_chains(const std::string& dir) {
  std::ifstream meta_in(dir + "/meta.json");
  if (!meta_in) throw argument_error("read_outcome_chains: missing meta.json in " + dir);
  json meta;
  meta_in >> meta;

  OutcomeChains chains;
  const std::string model = meta.at("model").get<std::string>();
  if (model == "bima") {
    chains.model = OutcomeModel::bima;
  } else if (model == "basmu") {
    chains.model = OutcomeModel::basmu;
  } else {
    throw argument_error("read_outcome_chains: unknown model tag " + model);
  }
  chains.total_iters = meta.at("iterations").get<int>();
  chains.burnin = meta.at("burnin").get<int>();
  chains.p_delta = meta.at("p_delta").get<double>();
  chains.seed = meta.at("seed").get<std::uint64_t>();
  chains.n = meta.at("n").get<int>();
  chains.p = meta.at("p").get<int>();
  chains.L = meta.at("L").get<int>();
  chains.q = meta.at("q").get<int>();

  const Mat table = read_csv(dir + "/chains.csv");
  const int L = chains.L, q = chains.q, p = chains.p;
  const bool basmu = chains.model == OutcomeModel::basmu;
  const int expected = L + 1 + q + 4 + (basmu ? 2 * p + 1 : 0);
  if (table.cols() != expected)
    throw argument_error("read_outcome_chains: unexpected column count");

  int col = 0;
  chains.theta_beta = table.middleCols(col, L);
  col += L;
  chains.gamma = table.col(col++);
  chains.zeta = table.middleCols(col, q);
  col += q;
  chains.sigma2_Y = table.col(col++);
  chains.sigma2_beta = table.col(col++);
  chains.sigma2_gamma = table.col(col++);
  chains.sigma2_zeta = table.col(col++);
  if (basmu) {
    chains.nu = table.middleCols(col, p);
    col += p;
    chains.delta = table.middleCols(col, p);
    col += p;
    chains.sigma2_nu = table.col(col++);
  }
  return chains;
}

}  // namespace basmu
