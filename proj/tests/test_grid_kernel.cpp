#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "basmu/grid_kernel.hpp"
#include "basmu/rng.hpp"

using namespace basmu;

TEST_CASE("matern_cov at zero distance is 1") {
  CHECK(matern_cov(0.0, MaternParams{0.2, 2.0}) == 1.0);
  CHECK(matern_cov(0.0, MaternParams{1.5, 0.3}) == 1.0);
}

TEST_CASE("matern_cov tau=1/2 reduces to the exponential kernel") {
  const MaternParams params{0.5, 1.0};
  CHECK(matern_cov(1.0, params) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(matern_cov(2.5, params) == doctest::Approx(std::exp(-2.5)).epsilon(1e-12));
}

TEST_CASE("matern_cov matches the high-precision Bessel oracle") {
  // Golden values computed once with mpmath (40 digits), standard Matern
  // C_tau evaluated at d / rho.
  const MaternParams params{0.2, 2.0};
  CHECK(matern_cov(1.0, params) ==
        doctest::Approx(0.41244078189324639594).epsilon(1e-12));
  CHECK(matern_cov(0.05, params) ==
        doctest::Approx(0.81713554695193852057).epsilon(1e-12));
  CHECK(matern_cov(0.7, MaternParams{1.5, 1.0}) ==
        doctest::Approx(0.65813737631658391585).epsilon(1e-12));
}

TEST_CASE("matern_cov rejects bad distances") {
  CHECK_THROWS_AS(matern_cov(std::nan(""), MaternParams{}), argument_error);
  CHECK_THROWS_AS(matern_cov(std::numeric_limits<double>::infinity(), MaternParams{}),
                  argument_error);
  CHECK_THROWS_AS(matern_cov(-0.5, MaternParams{}), argument_error);
}

TEST_CASE("matern_cov values lie in (0, 1]") {
  const MaternParams params{0.2, 2.0};
  for (double d : {0.0, 1e-8, 0.01, 0.3, 1.0, 5.0}) {
    const double v = matern_cov(d, params);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("grid locations are distinct and measures sum to one") {
  const Grid2D grid(4, 5);
  CHECK(grid.num_points() == 20);
  CHECK(grid.cell_measure() * grid.num_points() == doctest::Approx(1.0));
  for (int j = 0; j < grid.num_points(); ++j)
    for (int k = j + 1; k < grid.num_points(); ++k)
      CHECK((grid.locations.row(j) - grid.locations.row(k)).norm() > 0.0);
}

TEST_CASE("eigenbasis on a single-point grid") {
  const Grid2D grid(1, 1);
  const KernelBasis basis = eigenbasis(grid, MaternParams{}, 1);
  CHECK(basis.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(basis.psi(0, 0) * basis.psi(0, 0) * basis.cell_measure() == doctest::Approx(1.0));
}

TEST_CASE("eigenbasis matches the dense eigensolve on a 2x2 grid") {
  const Grid2D grid(2, 2);
  const MaternParams params{0.5, 1.0};
  const KernelBasis basis = eigenbasis(grid, params, 4);

  // Independent check: the returned pairs must satisfy the eigen equations of
  // the weighted kernel matrix, with orthonormal fields and exact
  // reconstruction at full truncation.
  Mat K(4, 4);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k)
      K(j, k) = matern_cov((grid.locations.row(j) - grid.locations.row(k)).norm(), params);
  const Mat Kw = K / 4.0;

  for (int l = 0; l < 4; ++l) {
    const Vec psi_l = basis.psi.col(l);
    CHECK((Kw * psi_l - basis.eigenvalues[l] * psi_l).norm() <= 1e-10);
  }
  for (int l = 1; l < 4; ++l) CHECK(basis.eigenvalues[l] <= basis.eigenvalues[l - 1]);
  const Mat recon = basis.psi * basis.eigenvalues.asDiagonal() * basis.psi.transpose();
  CHECK((K - recon).norm() <= 1e-10);
}

TEST_CASE("orthonormality invariant on the 40x40 grid with L = 120") {
  const Grid2D grid(40, 40);
  const KernelBasis basis = eigenbasis(grid, MaternParams{0.2, 2.0}, 120);
  const Mat gram = basis.cell_measure() * basis.psi.transpose() * basis.psi;
  CHECK((gram - Mat::Identity(120, 120)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(basis.eigenvalues.minCoeff() > 0.0);

  SUBCASE("reconstruction error is non-increasing in L") {
    Mat K(basis.p, basis.p);
    for (int j = 0; j < basis.p; ++j)
      for (int k = 0; k < basis.p; ++k)
        K(j, k) = matern_cov((grid.locations.row(j) - grid.locations.row(k)).norm(),
                             MaternParams{0.2, 2.0});
    double prev = std::numeric_limits<double>::infinity();
    for (int L : {5, 20, 60, 120}) {
      const Mat psi = basis.psi.leftCols(L);
      const Vec lam = basis.eigenvalues.head(L);
      const double err = (K - psi * lam.asDiagonal() * psi.transpose()).norm();
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("to_coeffs recovers basis directions and linear fields") {
  const Grid2D grid(2, 2);
  const KernelBasis basis = eigenbasis(grid, MaternParams{0.5, 1.0}, 4);

  SUBCASE("basis column maps to a unit coefficient vector") {
    const Vec theta = basis.to_coeffs(basis.psi.col(0));
    CHECK(theta[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(theta.tail(3).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("zero field maps to zero") {
    CHECK(basis.to_coeffs(Vec::Zero(4)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("coefficients match direct weighted sums") {
    Rng rng(7);
    const Vec f = rng.normal_vec(4);
    const Vec theta = basis.to_coeffs(f);
    for (int l = 0; l < 4; ++l) {
      double direct = 0.0;
      for (int j = 0; j < 4; ++j) direct += f[j] * basis.psi(j, l) * 0.25;
      CHECK(theta[l] == doctest::Approx(direct).epsilon(1e-12));
    }
  }
  SUBCASE("length mismatch raises") {
    CHECK_THROWS_AS(basis.to_coeffs(Vec::Zero(5)), argument_error);
    CHECK_THROWS_AS(basis.from_coeffs(Vec::Zero(5)), argument_error);
  }
}

TEST_CASE("from_coeffs trivial cases and round trip") {
  const Grid2D grid(2, 2);
  const KernelBasis basis = eigenbasis(grid, MaternParams{0.5, 1.0}, 4);
  CHECK(basis.from_coeffs(Vec::Zero(4)).cwiseAbs().maxCoeff() == 0.0);
  Vec e1 = Vec::Zero(4);
  e1[0] = 1.0;
  CHECK((basis.from_coeffs(e1) - basis.psi.col(0)).cwiseAbs().maxCoeff() <= 1e-14);

  Rng rng(11);
  const Vec theta = rng.normal_vec(4);
  const Vec back = basis.to_coeffs(basis.from_coeffs(theta));
  CHECK((back - theta).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("eigenbasis argument errors") {
  const Grid2D grid(2, 2);
  CHECK_THROWS_AS(eigenbasis(grid, MaternParams{}, 5), argument_error);
  CHECK_THROWS_AS(eigenbasis(grid, MaternParams{}, 0), argument_error);
}

TEST_CASE("kernel basis file round trip") {
  const Grid2D grid(3, 3);
  const KernelBasis basis = eigenbasis(grid, MaternParams{0.2, 2.0}, 5);
  const std::string path =
      (std::filesystem::temp_directory_path() / "basmu_test_basis.kbas").string();
  save_kernel_basis(basis, path);
  const KernelBasis loaded = load_kernel_basis(path);
  CHECK(loaded.p == basis.p);
  CHECK(loaded.L == basis.L);
  CHECK((loaded.eigenvalues - basis.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.psi - basis.psi).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}
