#include "basmu/bias_theory.hpp"

#include <cmath>
#include <string>

namespace basmu {

BiasInputs empirical_H_h(const Truth& truth, const Vec& X, const Mat& C,
                         const KernelBasis& basis, const Mat* etahat, const Vec* nuhat) {
  const int n = static_cast<int>(X.size());
  const int p = basis.p;
  const int q = static_cast<int>(C.cols());
  if (truth.alpha.size() != p || truth.eta.cols() != p || truth.nu.size() != p)
    throw argument_error("empirical_H_h: truth fields do not match basis p");
  if (truth.eta.rows() != n || C.rows() != n)
    throw argument_error("empirical_H_h: X/C/eta row counts disagree");
  if (truth.xi.rows() != q) throw argument_error("empirical_H_h: xi rows != q");

  // Generative mean field of M_i and its basis coefficients.
  Mat E = X * truth.alpha.transpose() + truth.eta;  // n x p
  E.noalias() += C * truth.xi;
  const Mat theta_E = basis.to_coeffs_rows(E);  // n x L

  const double cell = basis.cell_measure();
  const Vec U0 = cell * (truth.eta * truth.nu);

  BiasInputs inputs;
  inputs.sigma2_M = truth.sigma_M * truth.sigma_M;
  inputs.H = theta_E.transpose() * theta_E / static_cast<double>(n);
  inputs.h0 = theta_E.transpose() * U0 / static_cast<double>(n);
  if (etahat != nullptr && nuhat != nullptr) {
    if (etahat->rows() != n || etahat->cols() != p || nuhat->size() != p)
      throw argument_error("empirical_H_h: etahat/nuhat dimensions do not match");
    const Vec Uhat = cell * ((*etahat) * (*nuhat));
    inputs.hhat = theta_E.transpose() * Uhat / static_cast<double>(n);
  } else {
    inputs.hhat = Vec::Zero(basis.L);
  }
  return inputs;
}

namespace {

Vec regularized_solve(const Mat& H, double sigma2_M, const Vec& rhs) {
  if (!(sigma2_M > 0.0)) throw argument_error("bias limit: sigma2_M must be > 0");
  Mat A = H;
  A.diagonal().array() += sigma2_M;
  return A.ldlt().solve(rhs);
}

}  // namespace

Vec bias_limit_bima(const BiasInputs& inputs) {
  if (inputs.h0.isZero(0.0)) return Vec::Zero(inputs.h0.size());
  return regularized_solve(inputs.H, inputs.sigma2_M, inputs.h0);
}

Vec bias_limit_basmu(const BiasInputs& inputs) {
  const Vec diff = inputs.h0 - inputs.hhat;
  if (diff.isZero(0.0)) return Vec::Zero(diff.size());
  return regularized_solve(inputs.H, inputs.sigma2_M, diff);
}

double freq_bias_limit(const Vec& theta_alpha, const Vec& theta_nu, const Mat& Theta_L,
                       double sigma2_M) {
  const Eigen::Index L = theta_alpha.size();
  if (theta_nu.size() != L || Theta_L.rows() != L || Theta_L.cols() != L)
    throw argument_error("freq_bias_limit: dimension mismatch");
  return theta_alpha.dot(regularized_solve(Theta_L, sigma2_M, Theta_L * theta_nu));
}

IdentifiabilityReport identifiability_check(const Vec& X, const Mat& C, const Mat& extra_cols) {
  const int n = static_cast<int>(X.size());
  const int q = static_cast<int>(C.cols());
  const int k = static_cast<int>(extra_cols.cols());
  if (C.rows() != n || extra_cols.rows() != n)
    throw argument_error("identifiability_check: row counts disagree");
  if (n <= 1 + q + k)
    throw argument_error("identifiability_check: precondition n > 1 + q + k violated (n = " +
                         std::to_string(n) + ", 1 + q + k = " + std::to_string(1 + q + k) + ")");

  Mat B(n, 1 + q + k);
  B.col(0) = X;
  B.middleCols(1, q) = C;
  B.rightCols(k) = extra_cols;

  Eigen::BDCSVD<Mat> svd(B);
  const Vec sv = svd.singularValues();
  IdentifiabilityReport report;
  report.n = n;
  report.cols = 1 + q + k;
  report.smax = sv[0];
  report.smin = sv[sv.size() - 1];
  const double tol = 1e-8 * report.smax;
  report.rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++report.rank;
  report.full_rank = report.rank == report.cols && report.smin >= tol;
  return report;
}

}  // namespace basmu
