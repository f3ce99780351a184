#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "basmu/simulate.hpp"

namespace basmu {

struct BenchOptions {
  int reps = 20;
  int jobs = 1;
  Scale scale = Scale::desk;
  int mediator_iters = -1;  // default by scale: desk 500, paper 1000
  int outcome_iters = -1;   // default by scale: desk 4000, paper 20000
  double level = 0.95;

  int effective_mediator_iters() const {
    return mediator_iters > 0 ? mediator_iters : (scale == Scale::desk ? 500 : 1000);
  }
  int effective_outcome_iters() const {
    return outcome_iters > 0 ? outcome_iters : (scale == Scale::desk ? 4000 : 20000);
  }
};

struct MethodStats {
  double nie_bias = 0.0, nie_var = 0.0, nie_mse = 0.0;
  double nde_bias = 0.0, nde_var = 0.0, nde_mse = 0.0;
  Vec beta_bias;  // p, mean point-estimate error per voxel
  Vec beta_mse;   // p
};

struct StageTimings {
  double simulate_s = 0.0;
  double mediator_s = 0.0;
  double bima_s = 0.0;
  double basmu_s = 0.0;
};

struct BenchReport {
  CaseConfig cfg;
  int reps_requested = 0;
  int reps_completed = 0;
  std::vector<std::uint64_t> seeds;            // per completed replication
  std::vector<std::string> failures;           // messages of failed replications
  double truth_nie = 0.0;
  double truth_nde = 0.0;
  MethodStats bima;
  MethodStats basmu;
  // Per-replication point estimates, kept for downstream checks.
  std::vector<double> nie_bima, nie_basmu, nde_bima, nde_basmu;
  StageTimings mean_timings;  // informational, excluded from report.json
};

// Runs simulate -> fit_mediator -> etahat -> fit_bima / fit_basmu -> effects
// for each replication seed and aggregates bias/variance/MSE against the
// recorded truth. Variance uses the 1/R population convention so that
// MSE = bias^2 + variance holds exactly.
BenchReport run_case(const CaseConfig& cfg, const BenchOptions& opts);

// report.json is deterministic for a fixed (cfg, seeds); stage timings go to
// a separate timing.json.
void write_bench_report(const std::string& path, const BenchReport& report);
BenchReport read_bench_report(const std::string& path);

// Combined CSV rows (case, method, metric, value) plus a plain-text table of
// the scalar-NIE metrics per case and method.
struct SummaryArtifact {
  std::string csv;
  std::string text;
};
SummaryArtifact summarize(const std::vector<BenchReport>& reports);

}  // namespace basmu
