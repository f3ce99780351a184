#pragma once

#include <string>

#include <Eigen/Dense>

#include "basmu/errors.hpp"

namespace basmu {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Even partition of [0,1]^2 into n1 x n2 cells, each of measure 1/p.
// Locations are the cell centers, stored row-major (row i1, col i2).
struct Grid2D {
  int n1 = 0;
  int n2 = 0;
  Mat locations;  // p x 2

  Grid2D() = default;
  Grid2D(int n1_, int n2_);

  int num_points() const { return n1 * n2; }
  double cell_measure() const { return 1.0 / static_cast<double>(n1 * n2); }
};

struct MaternParams {
  double tau = 0.2;  // smoothness
  double rho = 2.0;  // length scale

  MaternParams() = default;
  MaternParams(double tau_, double rho_) : tau(tau_), rho(rho_) {
    if (!(tau > 0.0) || !(rho > 0.0))
      throw argument_error("MaternParams: tau and rho must be > 0");
  }
};

// Matern correlation at Euclidean distance d, scaled by the length scale.
double matern_cov(double d, const MaternParams& params);

// Truncated Mercer eigensystem of the measure-weighted kernel operator.
// Columns of psi are orthonormal under the cell measure:
//   sum_j psi(j,l) psi(j,l') / p = 1{l = l'}.
struct KernelBasis {
  int p = 0;
  int L = 0;
  Vec eigenvalues;  // L, non-increasing, > 0
  Mat psi;          // p x L

  double cell_measure() const { return 1.0 / static_cast<double>(p); }

  // theta_l = sum_j f_j psi(j,l) / p
  Vec to_coeffs(const Vec& f) const;
  // f_j = sum_l theta_l psi(j,l)
  Vec from_coeffs(const Vec& theta) const;

  // Row-wise versions: each row of F (n x p) maps to a row of the result.
  Mat to_coeffs_rows(const Mat& F) const;
  Mat from_coeffs_rows(const Mat& Theta) const;
};

KernelBasis eigenbasis(const Grid2D& grid, const MaternParams& params, int L);

// Binary serialization: 16-byte header ("KBAS", u32 p, u32 L, u32 reserved),
// eigenvalues as L little-endian f64, psi column-major as p*L f64.
void save_kernel_basis(const KernelBasis& basis, const std::string& path);
KernelBasis load_kernel_basis(const std::string& path);

}  // namespace basmu
