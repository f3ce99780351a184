#include "basmu/grid_kernel.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace basmu {

Grid2D::Grid2D(int n1_, int n2_) : n1(n1_), n2(n2_) {
  if (n1 <= 0 || n2 <= 0) throw argument_error("Grid2D: side lengths must be positive");
  const int p = n1 * n2;
  locations.resize(p, 2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const int idx = i * n2 + j;
      locations(idx, 0) = (i + 0.5) / n1;
      locations(idx, 1) = (j + 0.5) / n2;
    }
  }
}

double matern_cov(double d, const MaternParams& params) {
  if (!std::isfinite(d)) throw argument_error("matern_cov: distance must be finite");
  if (d < 0.0) throw argument_error("matern_cov: distance must be >= 0");
  if (d == 0.0) return 1.0;
  const double tau = params.tau;
  const double z = std::sqrt(2.0 * tau) * d / params.rho;
  if (z < 1e-150) return 1.0;
  return std::pow(2.0, 1.0 - tau) / std::tgamma(tau) * std::pow(z, tau) *
         std::cyl_bessel_k(tau, z);
}

Vec KernelBasis::to_coeffs(const Vec& f) const {
  if (f.size() != p)
    throw argument_error("to_coeffs: field length " + std::to_string(f.size()) +
                         " != p = " + std::to_string(p));
  return cell_measure() * (psi.transpose() * f);
}

Vec KernelBasis::from_coeffs(const Vec& theta) const {
  if (theta.size() != L)
    throw argument_error("from_coeffs: coefficient length " + std::to_string(theta.size()) +
                         " != L = " + std::to_string(L));
  return psi * theta;
}

Mat KernelBasis::to_coeffs_rows(const Mat& F) const {
  if (F.cols() != p) throw argument_error("to_coeffs_rows: column count != p");
  return cell_measure() * (F * psi);
}

Mat KernelBasis::from_coeffs_rows(const Mat& Theta) const {
  if (Theta.cols() != L) throw argument_error("from_coeffs_rows: column count != L");
  return Theta * psi.transpose();
}

KernelBasis eigenbasis(const Grid2D& grid, const MaternParams& params, int L) {
  const int p = grid.num_points();
  if (L <= 0 || L > p)
    throw argument_error("eigenbasis: L must be in [1, p], got L = " + std::to_string(L) +
                         ", p = " + std::to_string(p));

  // Measure-weighted kernel operator K(s_j, s_j') / p.
  Mat K(p, p);
  const double w = grid.cell_measure();
  for (int j = 0; j < p; ++j) {
    K(j, j) = w;
    for (int k = j + 1; k < p; ++k) {
      const double d = (grid.locations.row(j) - grid.locations.row(k)).norm();
      const double v = w * matern_cov(d, params);
      K(j, k) = v;
      K(k, j) = v;
    }
  }

  Eigen::SelfAdjointEigenSolver<Mat> solver(K);
  if (solver.info() != Eigen::Success)
    throw numeric_error("eigenbasis: eigendecomposition failed");

  // Eigen returns ascending order.
  const Vec evals = solver.eigenvalues();
  const double max_eval = evals[p - 1];
  if (evals[0] < -1e-8 * max_eval)
    throw numeric_error("eigenbasis: kernel matrix non-PSD beyond tolerance, min eigenvalue " +
                        std::to_string(evals[0]));

  KernelBasis basis;
  basis.p = p;
  basis.L = L;
  basis.eigenvalues.resize(L);
  basis.psi.resize(p, L);
  const double floor = 1e-12 * max_eval;
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  for (int l = 0; l < L; ++l) {
    const int src = p - 1 - l;
    basis.eigenvalues[l] = std::max(evals[src], floor);
    Vec v = solver.eigenvectors().col(src);
    // Sign convention: first component of non-negligible magnitude positive.
    const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
    for (int j = 0; j < p; ++j) {
      if (std::abs(v[j]) > tol) {
        if (v[j] < 0.0) v = -v;
        break;
      }
    }
    basis.psi.col(l) = sqrt_p * v;
  }
  return basis;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_kernel_basis(const KernelBasis& basis, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw argument_error("save_kernel_basis: cannot open " + path);
  out.write("KBAS", 4);
  write_u32(out, static_cast<std::uint32_t>(basis.p));
  write_u32(out, static_cast<std::uint32_t>(basis.L));
  write_u32(out, 0u);  // reserved
  out.write(reinterpret_cast<const char*>(basis.eigenvalues.data()),
            static_cast<std::streamsize>(sizeof(double)) * basis.L);
  out.write(reinterpret_cast<const char*>(basis.psi.data()),
            static_cast<std::streamsize>(sizeof(double)) * basis.p * basis.L);
  if (!out) throw numeric_error("save_kernel_basis: write failed for " + path);
}

KernelBasis load_kernel_basis(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw argument_error("load_kernel_basis: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "KBAS", 4) != 0)
    throw argument_error("load_kernel_basis: bad magic in " + path);
  KernelBasis basis;
  basis.p = static_cast<int>(read_u32(in));
  basis.L = static_cast<int>(read_u32(in));
  read_u32(in);  // reserved
  if (basis.p <= 0 || basis.L <= 0 || basis.L > basis.p)
    throw argument_error("load_kernel_basis: bad dimensions in " + path);
  basis.eigenvalues.resize(basis.L);
  basis.psi.resize(basis.p, basis.L);
  in.read(reinterpret_cast<char*>(basis.eigenvalues.data()),
          static_cast<std::streamsize>(sizeof(double)) * basis.L);
  in.read(reinterpret_cast<char*>(basis.psi.data()),
          static_cast<std::streamsize>(sizeof(double)) * basis.p * basis.L);
  if (!in) throw argument_error("load_kernel_basis: truncated file " + path);
  return basis;
}

}  // namespace basmu
