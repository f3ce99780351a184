#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "basmu/effects.hpp"
#include "basmu/io.hpp"

using namespace basmu;

namespace {

// Minimal chain pair over a given basis: outcome draws T_out, mediator T_med.
struct ChainPair {
  MediatorChains med;
  OutcomeChains out;
};

ChainPair make_chains(const KernelBasis& basis, int T_med, int T_out, std::uint64_t seed) {
  ChainPair pair;
  Rng rng(seed);
  pair.med.n = 2;
  pair.med.p = basis.p;
  pair.med.L = basis.L;
  pair.med.q = 1;
  pair.med.theta_alpha = rng.normal_mat(T_med, basis.L);
  pair.out.model = OutcomeModel::bima;
  pair.out.n = 2;
  pair.out.p = basis.p;
  pair.out.L = basis.L;
  pair.out.q = 1;
  pair.out.theta_beta = rng.normal_mat(T_out, basis.L);
  pair.out.gamma = rng.normal_vec(T_out);
  return pair;
}

}  // namespace

TEST_CASE("constant unit fields give scalar NIE exactly 1") {
  const KernelBasis basis = eigenbasis(Grid2D(3, 3), MaternParams{}, 9);
  ChainPair pair = make_chains(basis, 1, 1, 5);
  // alpha = beta = 1 everywhere.
  pair.med.theta_alpha.row(0) = basis.to_coeffs(Vec::Ones(9)).transpose();
  pair.out.theta_beta.row(0) = basis.to_coeffs(Vec::Ones(9)).transpose();
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  CHECK(chain.scalar[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(chain.spatial.row(0).minCoeff() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("zero beta draws give an identically zero effect field") {
  const KernelBasis basis = eigenbasis(Grid2D(2, 2), MaternParams{}, 4);
  ChainPair pair = make_chains(basis, 3, 3, 7);
  pair.out.theta_beta.setZero();
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  CHECK(chain.spatial.cwiseAbs().maxCoeff() == 0.0);
  CHECK(chain.scalar.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar NIE matches the hand-computed weighted dot product") {
  // 3-voxel grid (3x1), full basis: alpha and beta are arbitrary fields.
  const KernelBasis basis = eigenbasis(Grid2D(3, 1), MaternParams{}, 3);
  ChainPair pair = make_chains(basis, 1, 1, 9);
  Vec alpha(3), beta(3);
  alpha << 0.5, -1.2, 2.0;
  beta << 1.5, 0.4, -0.3;
  pair.med.theta_alpha.row(0) = basis.to_coeffs(alpha).transpose();
  pair.out.theta_beta.row(0) = basis.to_coeffs(beta).transpose();
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  const double expected = (0.5 * 1.5 + (-1.2) * 0.4 + 2.0 * (-0.3)) / 3.0;
  CHECK(chain.scalar[0] == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("per-draw-then-average equals voxel-sum linearity to 1e-12") {
  const KernelBasis basis = eigenbasis(Grid2D(3, 3), MaternParams{}, 6);
  const ChainPair pair = make_chains(basis, 10, 40, 11);
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  const double scalar_from_spatial =
      chain.spatial.colwise().mean().sum() * basis.cell_measure();
  CHECK(std::abs(chain.scalar.mean() - scalar_from_spatial) <= 1e-12);
}

TEST_CASE("mediator draws recycle cyclically when the outcome chain is longer") {
  const KernelBasis basis = eigenbasis(Grid2D(2, 2), MaternParams{}, 4);
  ChainPair pair = make_chains(basis, 3, 7, 13);
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  CHECK(chain.spatial.rows() == 7);
  // Draw 3 pairs outcome draw 3 with mediator draw 0.
  const Vec alpha0 = basis.from_coeffs(pair.med.theta_alpha.row(0).transpose());
  const Vec beta3 = basis.from_coeffs(pair.out.theta_beta.row(3).transpose());
  CHECK((chain.spatial.row(3).transpose() - alpha0.cwiseProduct(beta3)).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("mean-alpha pairing uses the posterior mean field everywhere") {
  const KernelBasis basis = eigenbasis(Grid2D(2, 2), MaternParams{}, 4);
  const ChainPair pair = make_chains(basis, 5, 4, 17);
  const EffectChain chain = nie_chain(pair.med, pair.out, basis, true);
  CHECK(chain.pairing == "mean_alpha");
  const Vec alpha_mean =
      basis.from_coeffs(pair.med.theta_alpha.colwise().mean().transpose());
  const Vec beta2 = basis.from_coeffs(pair.out.theta_beta.row(2).transpose());
  CHECK((chain.spatial.row(2).transpose() - alpha_mean.cwiseProduct(beta2))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
}

TEST_CASE("empty chains raise") {
  const KernelBasis basis = eigenbasis(Grid2D(2, 2), MaternParams{}, 4);
  ChainPair pair = make_chains(basis, 3, 3, 19);
  pair.out.theta_beta.resize(0, 4);
  CHECK_THROWS_AS(nie_chain(pair.med, pair.out, basis), argument_error);
}

TEST_CASE("quantile matches a direct sort-based oracle") {
  Rng rng(23);
  const Vec values = rng.normal_vec(100);
  std::vector<double> sorted(values.data(), values.data() + 100);
  std::sort(sorted.begin(), sorted.end());
  for (double prob : {0.0, 0.025, 0.5, 0.975, 1.0}) {
    const double h = 99 * prob;
    const int lo = static_cast<int>(std::floor(h));
    const int hi = std::min(lo + 1, 99);
    const double expected = sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
    CHECK(quantile(values, prob) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("selection basics") {
  SUBCASE("constant positive chain is active positive") {
    Mat chain = Mat::Constant(50, 1, 2.0);
    const Selection sel = select_active(chain);
    CHECK(sel.active[0] == 1);
    CHECK(sel.n_active_pos == 1);
    CHECK(sel.n_active_neg == 0);
    CHECK(sel.sum_nie_pos == doctest::Approx(2.0));
  }
  SUBCASE("a chain symmetric around zero is inactive") {
    Mat chain(100, 1);
    for (int t = 0; t < 50; ++t) {
      chain(t, 0) = 0.1 + 0.01 * t;
      chain(50 + t, 0) = -chain(t, 0);
    }
    CHECK(select_active(chain).active[0] == 0);
  }
  SUBCASE("synthetic 100-draw chain straddling zero is inactive") {
    Rng rng(29);
    Mat chain(100, 1);
    for (int t = 0; t < 100; ++t) chain(t, 0) = rng.normal(0.05, 1.0);
    const Selection sel = select_active(chain, 0.95);
    CHECK(sel.lo[0] < 0.0);
    CHECK(sel.hi[0] > 0.0);
    CHECK(sel.active[0] == 0);
  }
  SUBCASE("level outside (0,1) raises") {
    Mat chain = Mat::Zero(10, 1);
    CHECK_THROWS_AS(select_active(chain, 0.0), argument_error);
    CHECK_THROWS_AS(select_active(chain, 1.0), argument_error);
  }
  SUBCASE("fewer than two draws raises") {
    Mat chain = Mat::Zero(1, 3);
    CHECK_THROWS_AS(select_active(chain), argument_error);
  }
}

TEST_CASE("selection is monotone in the level") {
  Rng rng(31);
  Mat chain(200, 25);
  for (int j = 0; j < 25; ++j) {
    const double mu = rng.normal() * 0.5;
    for (int t = 0; t < 200; ++t) chain(t, j) = rng.normal(mu, 1.0);
  }
  const Selection at95 = select_active(chain, 0.95);
  const Selection at99 = select_active(chain, 0.99);
  for (int j = 0; j < 25; ++j)
    if (at99.active[j] == 1) CHECK(at95.active[j] == 1);
}

TEST_CASE("selection is equivariant under voxel permutation") {
  Rng rng(37);
  Mat chain(80, 10);
  for (int j = 0; j < 10; ++j) {
    const double mu = rng.normal() * 0.4;
    for (int t = 0; t < 80; ++t) chain(t, j) = rng.normal(mu, 0.5);
  }
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[5]);
  Mat permuted(80, 10);
  for (int j = 0; j < 10; ++j) permuted.col(j) = chain.col(perm[j]);
  const Selection base = select_active(chain);
  const Selection after = select_active(permuted);
  for (int j = 0; j < 10; ++j) {
    CHECK(after.active[j] == base.active[perm[j]]);
    CHECK(after.mean[j] == base.mean[perm[j]]);
  }
  CHECK(after.n_active_pos == base.n_active_pos);
  CHECK(after.n_active_neg == base.n_active_neg);
}

TEST_CASE("effect summary files are written with the expected layout") {
  const KernelBasis basis = eigenbasis(Grid2D(2, 2), MaternParams{}, 4);
  const ChainPair pair = make_chains(basis, 6, 6, 41);
  const EffectChain chain = nie_chain(pair.med, pair.out, basis);
  const EffectSummary summary = summarize_effects(chain, 0.95);
  CHECK(summary.scalar_lo <= summary.scalar_mean);
  CHECK(summary.scalar_mean <= summary.scalar_hi);
  CHECK(summary.nde_lo <= summary.nde_mean);
  CHECK(summary.nde_mean <= summary.nde_hi);

  const std::string dir = "/tmp/basmu_test_effects";
  write_effect_summary(dir, summary);
  CHECK(std::filesystem::exists(dir + "/effects.json"));
  std::vector<std::string> header;
  const Mat table = read_csv(dir + "/effects.csv", &header);
  CHECK(header == std::vector<std::string>{"mean", "lo", "hi", "active"});
  CHECK(table.rows() == 4);
  CHECK((table.col(0) - summary.voxels.mean).cwiseAbs().maxCoeff() == 0.0);
}
