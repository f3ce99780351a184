#include "basmu/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "basmu/effects.hpp"
#include "basmu/mediator_sampler.hpp"
#include "basmu/outcome_sampler.hpp"

namespace basmu {

using nlohmann::json;

namespace {

struct RepResult {
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  double nie_bima = 0.0, nie_basmu = 0.0;
  double nde_bima = 0.0, nde_basmu = 0.0;
  Vec beta_bima, beta_basmu;  // posterior-mean beta fields
  StageTimings timings;
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

RepResult run_replication(const CaseConfig& cfg, const KernelBasis& basis,
                          const BenchOptions& opts, std::uint64_t seed) {
  RepResult res;
  res.seed = seed;
  try {
    CaseConfig rep_cfg = cfg;
    rep_cfg.seed = seed;

    double t0 = now_s();
    const SimulationResult sim = simulate_case(rep_cfg, basis);
    res.timings.simulate_s = now_s() - t0;

    MediatorOptions med_opts;
    med_opts.total_iters = opts.effective_mediator_iters();
    med_opts.seed = seed * 1000003ULL + 1;
    t0 = now_s();
    const MediatorChains med = fit_mediator(sim.data, basis, med_opts);
    const Mat etahat = posterior_mean_eta(med, basis);
    res.timings.mediator_s = now_s() - t0;

    OutcomeOptions out_opts;
    out_opts.total_iters = opts.effective_outcome_iters();
    out_opts.seed = seed * 1000003ULL + 2;
    t0 = now_s();
    const OutcomeChains bima = fit_bima(sim.data, basis, out_opts);
    res.timings.bima_s = now_s() - t0;

    out_opts.seed = seed * 1000003ULL + 3;
    t0 = now_s();
    const OutcomeChains basmu = fit_basmu(sim.data, basis, etahat, out_opts);
    res.timings.basmu_s = now_s() - t0;

    const EffectChain chain_bima = nie_chain(med, bima, basis);
    const EffectChain chain_basmu = nie_chain(med, basmu, basis);
    res.nie_bima = chain_bima.scalar.mean();
    res.nie_basmu = chain_basmu.scalar.mean();
    res.nde_bima = chain_bima.nde.mean();
    res.nde_basmu = chain_basmu.nde.mean();

    const Vec beta_mean_bima = bima.theta_beta.colwise().mean().transpose();
    const Vec beta_mean_basmu = basmu.theta_beta.colwise().mean().transpose();
    res.beta_bima = basis.from_coeffs(beta_mean_bima);
    res.beta_basmu = basis.from_coeffs(beta_mean_basmu);
    res.ok = true;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

MethodStats aggregate(const std::vector<double>& nie, const std::vector<double>& nde,
                      const std::vector<Vec>& beta, double truth_nie, double truth_nde,
                      const Vec& truth_beta) {
  MethodStats stats;
  const int R = static_cast<int>(nie.size());
  if (R == 0) return stats;
  const double inv = 1.0 / R;

  double nie_mean = 0.0, nde_mean = 0.0, nie_mse = 0.0, nde_mse = 0.0;
  for (int r = 0; r < R; ++r) {
    nie_mean += nie[r];
    nde_mean += nde[r];
    nie_mse += (nie[r] - truth_nie) * (nie[r] - truth_nie);
    nde_mse += (nde[r] - truth_nde) * (nde[r] - truth_nde);
  }
  nie_mean *= inv;
  nde_mean *= inv;
  stats.nie_bias = nie_mean - truth_nie;
  stats.nde_bias = nde_mean - truth_nde;
  stats.nie_mse = nie_mse * inv;
  stats.nde_mse = nde_mse * inv;
  double nie_var = 0.0, nde_var = 0.0;
  for (int r = 0; r < R; ++r) {
    nie_var += (nie[r] - nie_mean) * (nie[r] - nie_mean);
    nde_var += (nde[r] - nde_mean) * (nde[r] - nde_mean);
  }
  stats.nie_var = nie_var * inv;
  stats.nde_var = nde_var * inv;

  const int p = static_cast<int>(truth_beta.size());
  stats.beta_bias = Vec::Zero(p);
  stats.beta_mse = Vec::Zero(p);
  for (int r = 0; r < R; ++r) {
    const Vec err = beta[r] - truth_beta;
    stats.beta_bias += err;
    stats.beta_mse += err.cwiseProduct(err);
  }
  stats.beta_bias *= inv;
  stats.beta_mse *= inv;
  return stats;
}

}  // namespace

BenchReport run_case(const CaseConfig& cfg, const BenchOptions& opts) {
  if (opts.reps < 1) throw argument_error("run_case: reps must be >= 1");
  const Grid2D grid(cfg.n1, cfg.n2);
  const KernelBasis basis = eigenbasis(grid, MaternParams{}, cfg.L);

  std::vector<RepResult> results(opts.reps);
  std::atomic<int> next{0};
  const int jobs = std::max(1, opts.jobs);
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= opts.reps) break;
      results[r] = run_replication(cfg, basis, opts, cfg.seed + static_cast<std::uint64_t>(r));
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BenchReport report;
  report.cfg = cfg;
  report.reps_requested = opts.reps;

  Rng truth_rng(cfg.seed);
  const Truth truth = make_truth(cfg, basis, truth_rng);
  report.truth_nie = truth.scalar_nie();
  report.truth_nde = truth.gamma;

  std::vector<Vec> beta_bima, beta_basmu;
  int timed = 0;
  for (const RepResult& res : results) {
    if (!res.ok) {
      report.failures.push_back("seed " + std::to_string(res.seed) + ": " + res.error);
      continue;
    }
    report.seeds.push_back(res.seed);
    report.nie_bima.push_back(res.nie_bima);
    report.nie_basmu.push_back(res.nie_basmu);
    report.nde_bima.push_back(res.nde_bima);
    report.nde_basmu.push_back(res.nde_basmu);
    beta_bima.push_back(res.beta_bima);
    beta_basmu.push_back(res.beta_basmu);
    report.mean_timings.simulate_s += res.timings.simulate_s;
    report.mean_timings.mediator_s += res.timings.mediator_s;
    report.mean_timings.bima_s += res.timings.bima_s;
    report.mean_timings.basmu_s += res.timings.basmu_s;
    ++timed;
  }
  report.reps_completed = timed;
  if (timed > 0) {
    report.mean_timings.simulate_s /= timed;
    report.mean_timings.mediator_s /= timed;
    report.mean_timings.bima_s /= timed;
    report.mean_timings.basmu_s /= timed;
  }

  report.bima = aggregate(report.nie_bima, report.nde_bima, beta_bima, report.truth_nie,
                          report.truth_nde, truth.beta);
  report.basmu = aggregate(report.nie_basmu, report.nde_basmu, beta_basmu, report.truth_nie,
                           report.truth_nde, truth.beta);
  return report;
}

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& a) {
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

json stats_to_json(const MethodStats& s) {
  return json{{"nie_bias", s.nie_bias}, {"nie_var", s.nie_var}, {"nie_mse", s.nie_mse},
              {"nde_bias", s.nde_bias}, {"nde_var", s.nde_var}, {"nde_mse", s.nde_mse},
              {"beta_bias", vec_to_json(s.beta_bias)}, {"beta_mse", vec_to_json(s.beta_mse)}};
}

MethodStats stats_from_json(const json& j) {
  MethodStats s;
  s.nie_bias = j.at("nie_bias").get<double>();
  s.nie_var = j.at("nie_var").get<double>();
  s.nie_mse = j.at("nie_mse").get<double>();
  s.nde_bias = j.at("nde_bias").get<double>();
  s.nde_var = j.at("nde_var").get<double>();
  s.nde_mse = j.at("nde_mse").get<double>();
  s.beta_bias = vec_from_json(j.at("beta_bias"));
  s.beta_mse = vec_from_json(j.at("beta_mse"));
  return s;
}

}  // namespace

void write_bench_report(const std::string& path, const BenchReport& report) {
  json j;
  j["config"] = json{{"case_id", report.cfg.case_id}, {"n1", report.cfg.n1},
                     {"n2", report.cfg.n2},           {"n", report.cfg.n},
                     {"q", report.cfg.q},             {"L", report.cfg.L},
                     {"sigma_eta", report.cfg.sigma_eta}, {"sigma_M", report.cfg.sigma_M},
                     {"sigma_Y", report.cfg.sigma_Y},
                     {"nu_pattern", to_string(report.cfg.nu_pattern)},
                     {"nu_scale", report.cfg.nu_scale},
                     {"nu_scale_sparse", report.cfg.nu_scale_sparse},
                     {"seed", report.cfg.seed}};
  j["reps_requested"] = report.reps_requested;
  j["reps_completed"] = report.reps_completed;
  j["seeds"] = report.seeds;
  j["failures"] = report.failures;
  j["truth_nie"] = report.truth_nie;
  j["truth_nde"] = report.truth_nde;
  j["bima"] = stats_to_json(report.bima);
  j["basmu"] = stats_to_json(report.basmu);
  j["nie_bima"] = report.nie_bima;
  j["nie_basmu"] = report.nie_basmu;
  j["nde_bima"] = report.nde_bima;
  j["nde_basmu"] = report.nde_basmu;
  std::ofstream out(path);
  if (!out) throw argument_error("write_bench_report: cannot open " + path);
  out << j.dump(2) << '\n';

  json timing{{"simulate_s", report.mean_timings.simulate_s},
              {"mediator_s", report.mean_timings.mediator_s},
              {"bima_s", report.mean_timings.bima_s},
              {"basmu_s", report.mean_timings.basmu_s}};
  std::ofstream tout(path + ".timing.json");
  tout << timing.dump(2) << '\n';
}

BenchReport read_bench_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw argument_error("read_bench_report: cannot open " + path);
  json j;
  in >> j;
  BenchReport report;
  const json& c = j.at("config");
  report.cfg.case_id = c.at("case_id").get<int>();
  report.cfg.n1 = c.at("n1").get<int>();
  report.cfg.n2 = c.at("n2").get<int>();
  report.cfg.n = c.at("n").get<int>();
  report.cfg.q = c.at("q").get<int>();
  report.cfg.L = c.at("L").get<int>();
  report.cfg.sigma_eta = c.at("sigma_eta").get<double>();
  report.cfg.sigma_M = c.at("sigma_M").get<double>();
  report.cfg.sigma_Y = c.at("sigma_Y").get<double>();
  report.cfg.nu_pattern = nu_pattern_from_string(c.at("nu_pattern").get<std::string>());
  report.cfg.nu_scale = c.at("nu_scale").get<double>();
  report.cfg.nu_scale_sparse = c.at("nu_scale_sparse").get<double>();
  report.cfg.seed = c.at("seed").get<std::uint64_t>();
  report.reps_requested = j.at("reps_requested").get<int>();
  report.reps_completed = j.at("reps_completed").get<int>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  report.failures = j.at("failures").get<std::vector<std::string>>();
  report.truth_nie = j.at("truth_nie").get<double>();
  report.truth_nde = j.at("truth_nde").get<double>();
  report.bima = stats_from_json(j.at("bima"));
  report.basmu = stats_from_json(j.at("basmu"));
  report.nie_bima = j.at("nie_bima").get<std::vector<double>>();
  report.nie_basmu = j.at("nie_basmu").get<std::vector<double>>();
  report.nde_bima = j.at("nde_bima").get<std::vector<double>>();
  report.nde_basmu = j.at("nde_basmu").get<std::vector<double>>();
  return report;
}

SummaryArtifact summarize(const std::vector<BenchReport>& reports) {
  if (reports.empty()) throw argument_error("summarize: need at least one report");
  for (size_t i = 1; i < reports.size(); ++i) {
    for (size_t k = 0; k < i; ++k) {
      const CaseConfig& a = reports[i].cfg;
      const CaseConfig& b = reports[k].cfg;
      if (a.case_id == b.case_id &&
          (a.n != b.n || a.sigma_eta != b.sigma_eta || a.sigma_M != b.sigma_M))
        throw argument_error("summarize: conflicting configs for case " +
                             std::to_string(a.case_id));
    }
  }

  std::ostringstream csv;
  csv << "case,method,metric,value\n";
  char buf[32];
  auto emit = [&](int case_id, const char* method, const char* metric, double value) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    csv << case_id << ',' << method << ',' << metric << ',' << buf << '\n';
  };
  for (const BenchReport& r : reports) {
    emit(r.cfg.case_id, "bima", "bias", r.bima.nie_bias);
    emit(r.cfg.case_id, "bima", "var", r.bima.nie_var);
    emit(r.cfg.case_id, "bima", "mse", r.bima.nie_mse);
    emit(r.cfg.case_id, "basmu", "bias", r.basmu.nie_bias);
    emit(r.cfg.case_id, "basmu", "var", r.basmu.nie_var);
    emit(r.cfg.case_id, "basmu", "mse", r.basmu.nie_mse);
  }

  std::ostringstream text;
  text << "Scalar NIE over replications\n";
  text << "case  pattern            BIMA                    BASMU\n";
  text << "                        bias     var     mse    bias     var     mse\n";
  for (const BenchReport& r : reports) {
    char line[256];
    std::snprintf(line, sizeof(line), "%4d  %-8s  %8.3f %7.3f %7.3f %7.3f %7.3f %7.3f\n",
                  r.cfg.case_id, to_string(r.cfg.nu_pattern).c_str(), r.bima.nie_bias,
                  r.bima.nie_var, r.bima.nie_mse, r.basmu.nie_bias, r.basmu.nie_var,
                  r.basmu.nie_mse);
    text << line;
  }
  text << "\nScalar NDE over replications\n";
  for (const BenchReport& r : reports) {
    char line[256];
    std::snprintf(line, sizeof(line), "%4d  %-8s  %8.3f %7.3f %7.3f %7.3f %7.3f %7.3f\n",
                  r.cfg.case_id, to_string(r.cfg.nu_pattern).c_str(), r.bima.nde_bias,
                  r.bima.nde_var, r.bima.nde_mse, r.basmu.nde_bias, r.basmu.nde_var,
                  r.basmu.nde_mse);
    text << line;
  }
  return SummaryArtifact{csv.str(), text.str()};
}

}  // namespace basmu
