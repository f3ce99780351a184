#include "basmu/effects.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "basmu/io.hpp"

namespace basmu {

using nlohmann::json;

EffectChain nie_chain(const MediatorChains& med, const OutcomeChains& out,
                      const KernelBasis& basis, bool mean_alpha) {
  const int T_med = static_cast<int>(med.theta_alpha.rows());
  const int T_out = out.num_draws();
  if (T_med == 0 || T_out == 0) throw argument_error("nie_chain: empty chains");
  if (med.L != out.L || med.p != out.p)
    throw argument_error("nie_chain: mediator and outcome chains disagree on dimensions");
  const int p = basis.p;
  if (p != med.p) throw argument_error("nie_chain: basis does not match chains");

  Vec alpha_mean_field;
  if (mean_alpha) {
    Vec theta_mean = med.theta_alpha.colwise().mean().transpose();
    alpha_mean_field = basis.from_coeffs(theta_mean);
  }

  EffectChain chain;
  chain.pairing = mean_alpha ? "mean_alpha" : "cyclic";
  chain.spatial.resize(T_out, p);
  chain.scalar.resize(T_out);
  chain.nde = out.gamma;
  const double cell = basis.cell_measure();
  for (int t = 0; t < T_out; ++t) {
    const Vec beta_field = basis.from_coeffs(out.theta_beta.row(t).transpose());
    Vec alpha_field = mean_alpha
                          ? alpha_mean_field
                          : basis.from_coeffs(med.theta_alpha.row(t % T_med).transpose());
    chain.spatial.row(t) = alpha_field.cwiseProduct(beta_field).transpose();
    chain.scalar[t] = cell * chain.spatial.row(t).sum();
  }
  return chain;
}

double quantile(const Vec& values, double prob) {
  const int T = static_cast<int>(values.size());
  if (T == 0) throw argument_error("quantile: empty chain");
  if (!(prob >= 0.0) || !(prob <= 1.0)) throw argument_error("quantile: prob outside [0,1]");
  std::vector<double> sorted(values.data(), values.data() + T);
  std::sort(sorted.begin(), sorted.end());
  const double h = (T - 1) * prob;
  const int lo = static_cast<int>(std::floor(h));
  const int hi = std::min(lo + 1, T - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

Selection select_active(const Mat& chain, double level) {
  if (!(level > 0.0) || !(level < 1.0))
    throw argument_error("select_active: level must lie in (0,1)");
  const int T = static_cast<int>(chain.rows());
  const int p = static_cast<int>(chain.cols());
  if (T < 2) throw argument_error("select_active: need at least 2 draws per voxel");

  Selection sel;
  sel.level = level;
  sel.mean.resize(p);
  sel.lo.resize(p);
  sel.hi.resize(p);
  sel.active.resize(p);
  const double tail = (1.0 - level) / 2.0;
  for (int j = 0; j < p; ++j) {
    const Vec col = chain.col(j);
    sel.mean[j] = col.mean();
    sel.lo[j] = quantile(col, tail);
    sel.hi[j] = quantile(col, 1.0 - tail);
    sel.active[j] = (sel.lo[j] > 0.0 || sel.hi[j] < 0.0) ? 1 : 0;
    if (sel.active[j]) {
      if (sel.mean[j] >= 0.0) {
        ++sel.n_active_pos;
        sel.sum_nie_pos += sel.mean[j];
      } else {
        ++sel.n_active_neg;
        sel.sum_nie_neg += sel.mean[j];
      }
    }
  }
  return sel;
}

EffectSummary summarize_effects(const EffectChain& chain, double level) {
  EffectSummary summary;
  summary.level = level;
  summary.pairing = chain.pairing;
  summary.voxels = select_active(chain.spatial, level);
  const double tail = (1.0 - level) / 2.0;
  summary.scalar_mean = chain.scalar.mean();
  summary.scalar_lo = quantile(chain.scalar, tail);
  summary.scalar_hi = quantile(chain.scalar, 1.0 - tail);
  summary.nde_mean = chain.nde.mean();
  summary.nde_lo = quantile(chain.nde, tail);
  summary.nde_hi = quantile(chain.nde, 1.0 - tail);
  return summary;
}

void write_effect_summary(const std::string& dir, const EffectSummary& summary) {
  std::filesystem::create_directories(dir);
  json j{{"scalar_nie", {{"mean", summary.scalar_mean},
                         {"lo", summary.scalar_lo},
                         {"hi", summary.scalar_hi}}},
         {"nde", {{"mean", summary.nde_mean}, {"lo", summary.nde_lo}, {"hi", summary.nde_hi}}},
         {"level", summary.level},
         {"pairing", summary.pairing},
         {"n_active_pos", summary.voxels.n_active_pos},
         {"n_active_neg", summary.voxels.n_active_neg},
         {"sum_nie_pos", summary.voxels.sum_nie_pos},
         {"sum_nie_neg", summary.voxels.sum_nie_neg}};
  std::ofstream out(dir + "/effects.json");
  if (!out) throw argument_error("write_effect_summary: cannot open " + dir + "/effects.json");
  out << j.dump(2) << '\n';

  const int p = static_cast<int>(summary.voxels.mean.size());
  Mat table(p, 4);
  table.col(0) = summary.voxels.mean;
  table.col(1) = summary.voxels.lo;
  table.col(2) = summary.voxels.hi;
  table.col(3) = summary.voxels.active.cast<double>();
  write_csv(dir + "/effects.csv", table, {"mean", "lo", "hi", "active"});
}

}  // namespace basmu
