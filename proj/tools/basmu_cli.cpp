#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "basmu/bench.hpp"
#include "basmu/bias_theory.hpp"
#include "basmu/effects.hpp"
#include "basmu/io.hpp"
#include "basmu/mediator_sampler.hpp"
#include "basmu/outcome_sampler.hpp"
#include "basmu/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

basmu::Scale parse_scale(const std::string& s) {
  if (s == "desk") return basmu::Scale::desk;
  if (s == "paper") return basmu::Scale::paper;
  throw basmu::argument_error("scale must be 'desk' or 'paper', got " + s);
}

basmu::KernelBasis basis_for_config(const basmu::CaseConfig& cfg) {
  const basmu::Grid2D grid(cfg.n1, cfg.n2);
  return basmu::eigenbasis(grid, basmu::MaternParams{}, cfg.L);
}

int cmd_simulate(int case_id, std::uint64_t seed, const std::string& out_dir,
                 const std::string& scale, const std::string& config_path) {
  basmu::CaseConfig cfg = basmu::CaseConfig::for_case(case_id, parse_scale(scale), seed);
  if (!config_path.empty()) cfg = basmu::apply_config_overrides(cfg, config_path);
  const basmu::KernelBasis basis = basis_for_config(cfg);
  const basmu::SimulationResult sim = basmu::simulate_case(cfg, basis);
  fs::create_directories(out_dir);
  basmu::write_dataset(out_dir, sim.data);
  basmu::write_truth(out_dir + "/truth.json", sim.truth, cfg);
  basmu::save_kernel_basis(basis, out_dir + "/basis.kbas");
  std::cout << "wrote dataset (n=" << cfg.n << ", p=" << cfg.num_voxels() << ") to " << out_dir
            << "\n";
  return 0;
}

int cmd_fit_mediator(const std::string& data_dir, const std::string& basis_path, int iters,
                     const std::string& out_dir, std::uint64_t seed, bool gibbs_alpha) {
  const basmu::Dataset data = basmu::read_dataset(data_dir);
  const basmu::KernelBasis basis = basmu::load_kernel_basis(basis_path);
  basmu::MediatorOptions opts;
  opts.total_iters = iters;
  opts.seed = seed;
  opts.mala_alpha = !gibbs_alpha;
  const basmu::MediatorChains chains = basmu::fit_mediator(data, basis, opts);
  basmu::write_mediator_chains(out_dir, chains);
  const basmu::Mat etahat = basmu::posterior_mean_eta(chains, basis);
  basmu::write_csv(out_dir + "/etahat.csv", etahat);
  fs::copy_file(basis_path, out_dir + "/basis.kbas", fs::copy_options::overwrite_existing);
  std::cout << "mediator chains: " << chains.num_draws() << " retained draws, alpha accept "
            << chains.alpha_accept_rate << "\n";
  return 0;
}

int cmd_fit_outcome(const std::string& model, const std::string& data_dir,
                    const std::string& etahat_path, const std::string& basis_path, int iters,
                    const std::string& out_dir, std::uint64_t seed) {
  const basmu::Dataset data = basmu::read_dataset(data_dir);
  const basmu::KernelBasis basis = basmu::load_kernel_basis(basis_path);
  basmu::OutcomeOptions opts;
  opts.total_iters = iters;
  opts.seed = seed;
  basmu::OutcomeChains chains;
  if (model == "bima") {
    chains = basmu::fit_bima(data, basis, opts);
  } else if (model == "basmu") {
    if (etahat_path.empty())
      throw basmu::argument_error("fit-outcome: --etahat is required for model basmu");
    const basmu::Mat etahat = basmu::read_csv(etahat_path);
    chains = basmu::fit_basmu(data, basis, etahat, opts);
  } else {
    throw basmu::argument_error("fit-outcome: model must be bima or basmu, got " + model);
  }
  basmu::write_outcome_chains(out_dir, chains);
  fs::copy_file(basis_path, out_dir + "/basis.kbas", fs::copy_options::overwrite_existing);
  if (chains.model == basmu::OutcomeModel::basmu) {
    // Posterior mean of nu * delta per voxel, in sampler units.
    const basmu::Vec nuhat =
        (chains.nu.array() * chains.delta.array()).colwise().mean().transpose();
    basmu::write_csv(out_dir + "/nuhat.csv", nuhat);
  }
  std::cout << model << " chains: " << chains.num_draws() << " retained draws\n";
  return 0;
}

int cmd_effects(const std::string& med_dir, const std::string& out_dir,
                const std::string& dest_dir, const std::string& basis_path, double level,
                bool mean_alpha) {
  const basmu::MediatorChains med = basmu::read_mediator_chains(med_dir);
  const basmu::OutcomeChains out = basmu::read_outcome_chains(out_dir);
  std::string bpath = basis_path;
  if (bpath.empty()) bpath = out_dir + "/basis.kbas";
  const basmu::KernelBasis basis = basmu::load_kernel_basis(bpath);
  const basmu::EffectChain chain = basmu::nie_chain(med, out, basis, mean_alpha);
  const basmu::EffectSummary summary = basmu::summarize_effects(chain, level);
  const std::string dest = dest_dir.empty() ? out_dir : dest_dir;
  basmu::write_effect_summary(dest, summary);
  std::cout << "scalar NIE " << summary.scalar_mean << " [" << summary.scalar_lo << ", "
            << summary.scalar_hi << "], NDE " << summary.nde_mean << ", active voxels "
            << summary.voxels.n_active_pos + summary.voxels.n_active_neg << "\n";
  return 0;
}

int cmd_bias_limit(const std::string& truth_path, const std::string& basis_path,
                   const std::string& data_dir, const std::string& etahat_path,
                   const std::string& nuhat_path, const std::string& out_path) {
  basmu::CaseConfig cfg;
  const basmu::Truth truth = basmu::read_truth(truth_path, &cfg);
  const basmu::KernelBasis basis = basmu::load_kernel_basis(basis_path);

  basmu::Vec X;
  basmu::Mat C;
  if (!data_dir.empty()) {
    const basmu::Dataset data = basmu::read_dataset(data_dir);
    X = data.X;
    C = data.C;
  } else {
    // Regenerate covariates deterministically from the recorded config.
    const basmu::SimulationResult sim = basmu::simulate_case(cfg, basis);
    X = sim.data.X;
    C = sim.data.C;
  }

  basmu::Mat etahat;
  basmu::Vec nuhat;
  const bool have_hat = !etahat_path.empty() && !nuhat_path.empty();
  if (have_hat) {
    etahat = basmu::read_csv(etahat_path);
    const basmu::Mat nu_table = basmu::read_csv(nuhat_path);
    // The sampler parameterizes the confounder term as etahat'nu without the
    // cell measure; rescale to the model's per-measure units.
    nuhat = nu_table.col(0) * static_cast<double>(basis.p);
  }

  const basmu::BiasInputs inputs = basmu::empirical_H_h(
      truth, X, C, basis, have_hat ? &etahat : nullptr, have_hat ? &nuhat : nullptr);
  const basmu::Vec limit = basmu::bias_limit_bima(inputs);

  // Finite-n analogues on nested subsamples.
  json by_n = json::array();
  const int n = static_cast<int>(X.size());
  for (int sub : {n / 2, n}) {
    if (sub < 2) continue;
    basmu::Truth sub_truth = truth;
    sub_truth.eta = truth.eta.topRows(sub);
    const basmu::BiasInputs sub_inputs =
        basmu::empirical_H_h(sub_truth, X.head(sub), C.topRows(sub), basis);
    const basmu::Vec sub_limit = basmu::bias_limit_bima(sub_inputs);
    by_n.push_back(json{{"n", sub}, {"bias_norm", sub_limit.norm()}});
  }

  const basmu::Mat theta_eta = basis.to_coeffs_rows(truth.eta);
  const basmu::Mat Theta_L = theta_eta.transpose() * theta_eta / static_cast<double>(n);
  const double freq = basmu::freq_bias_limit(basis.to_coeffs(truth.alpha),
                                             basis.to_coeffs(truth.nu), Theta_L,
                                             truth.sigma_M * truth.sigma_M);
  const double shrinkage = truth.sigma_eta * truth.sigma_eta /
                           (truth.sigma_eta * truth.sigma_eta + truth.sigma_M * truth.sigma_M);

  const basmu::IdentifiabilityReport ident =
      basmu::identifiability_check(X, C, theta_eta);

  json report;
  report["limit_vector"] = std::vector<double>(limit.data(), limit.data() + limit.size());
  if (have_hat) {
    const basmu::Vec corrected = basmu::bias_limit_basmu(inputs);
    report["limit_vector_corrected"] =
        std::vector<double>(corrected.data(), corrected.data() + corrected.size());
  }
  report["empirical_bias_by_n"] = by_n;
  report["freq_limit_scalar"] = freq;
  report["shrinkage_factor"] = shrinkage;
  report["identifiability"] = json{{"rank", ident.rank},
                                   {"cols", ident.cols},
                                   {"smin", ident.smin},
                                   {"smax", ident.smax},
                                   {"full_rank", ident.full_rank}};
  const std::string path = out_path.empty() ? "bias_report.json" : out_path;
  std::ofstream out(path);
  if (!out) throw basmu::argument_error("bias-limit: cannot open " + path);
  out << report.dump(2) << '\n';
  std::cout << "bias limit norm " << limit.norm() << ", freq limit " << freq
            << ", shrinkage " << shrinkage << "\n";
  return 0;
}

int cmd_bench(int case_id, int reps, const std::string& scale, int jobs, std::uint64_t seed,
              const std::string& config_path, const std::string& out_path) {
  basmu::CaseConfig cfg = basmu::CaseConfig::for_case(case_id, parse_scale(scale), seed);
  if (!config_path.empty()) cfg = basmu::apply_config_overrides(cfg, config_path);
  basmu::BenchOptions opts;
  opts.reps = reps;
  opts.jobs = jobs;
  opts.scale = parse_scale(scale);
  const basmu::BenchReport report = basmu::run_case(cfg, opts);
  basmu::write_bench_report(out_path, report);
  const basmu::SummaryArtifact table = basmu::summarize({report});
  std::cout << table.text;
  if (!report.failures.empty())
    std::cout << report.failures.size() << " replication(s) failed\n";
  return 0;
}

int cmd_summarize(const std::vector<std::string>& report_paths, const std::string& csv_path,
                  const std::string& text_path) {
  std::vector<basmu::BenchReport> reports;
  for (const std::string& path : report_paths)
    reports.push_back(basmu::read_bench_report(path));
  const basmu::SummaryArtifact artifact = basmu::summarize(reports);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw basmu::argument_error("summarize: cannot open " + csv_path);
    out << artifact.csv;
  } else {
    std::cout << artifact.csv;
  }
  if (!text_path.empty()) {
    std::ofstream out(text_path);
    out << artifact.text;
  } else {
    std::cout << artifact.text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian structured mediation analysis with unobserved confounders"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset for one case");
  int case_id = 1;
  std::uint64_t seed = 1;
  std::string out_dir, scale = "desk", config_path;
  sim->add_option("--case", case_id, "Case id 1-6")->required();
  sim->add_option("--seed", seed, "Seed");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--scale", scale, "desk or paper");
  sim->add_option("--config", config_path, "JSON file overriding CaseConfig fields");

  // fit-mediator
  auto* fm = app.add_subcommand("fit-mediator", "Posterior sampling for the mediator model");
  std::string fm_data, fm_basis, fm_out;
  int fm_iters = 1000;
  std::uint64_t fm_seed = 1;
  bool fm_gibbs = false;
  fm->add_option("--data", fm_data, "Dataset directory")->required();
  fm->add_option("--basis", fm_basis, "Kernel basis file")->required();
  fm->add_option("--iters", fm_iters, "Total iterations");
  fm->add_option("--out", fm_out, "Output directory")->required();
  fm->add_option("--seed", fm_seed, "Seed");
  fm->add_flag("--gibbs-alpha", fm_gibbs, "Use conjugate Gibbs for alpha instead of MALA");

  // fit-outcome
  auto* fo = app.add_subcommand("fit-outcome", "Posterior sampling for the outcome model");
  std::string fo_model, fo_data, fo_etahat, fo_basis, fo_out;
  int fo_iters = 20000;
  std::uint64_t fo_seed = 1;
  fo->add_option("--model", fo_model, "bima or basmu")->required();
  fo->add_option("--data", fo_data, "Dataset directory")->required();
  fo->add_option("--etahat", fo_etahat, "etahat.csv from the mediator stage (basmu)");
  fo->add_option("--basis", fo_basis, "Kernel basis file")->required();
  fo->add_option("--iters", fo_iters, "Total iterations");
  fo->add_option("--out", fo_out, "Output directory")->required();
  fo->add_option("--seed", fo_seed, "Seed");

  // effects
  auto* ef = app.add_subcommand("effects", "NIE/NDE summaries from paired chains");
  std::string ef_med, ef_out, ef_dest, ef_basis;
  double ef_level = 0.95;
  bool ef_mean_alpha = false;
  ef->add_option("--med", ef_med, "Mediator chains directory")->required();
  ef->add_option("--out", ef_out, "Outcome chains directory")->required();
  ef->add_option("--dest", ef_dest, "Destination directory (default: outcome dir)");
  ef->add_option("--basis", ef_basis, "Kernel basis file (default: outcome dir basis.kbas)");
  ef->add_option("--level", ef_level, "Credible level");
  ef->add_flag("--mean-alpha", ef_mean_alpha, "Pair with the posterior-mean alpha field");

  // bias-limit
  auto* bl = app.add_subcommand("bias-limit", "Closed-form asymptotic bias evaluation");
  std::string bl_truth, bl_basis, bl_data, bl_etahat, bl_nuhat, bl_out;
  bl->add_option("--truth", bl_truth, "truth.json")->required();
  bl->add_option("--basis", bl_basis, "Kernel basis file")->required();
  bl->add_option("--data", bl_data, "Dataset directory for X/C (default: regenerate)");
  bl->add_option("--etahat", bl_etahat, "etahat.csv for the corrected limit");
  bl->add_option("--nu", bl_nuhat, "nu estimate CSV (one column)");
  bl->add_option("--out", bl_out, "Report path (default bias_report.json)");

  // bench
  auto* be = app.add_subcommand("bench", "Run one case end to end over replications");
  int be_case = 1, be_reps = 20, be_jobs = 1;
  std::string be_scale = "desk", be_config, be_out = "report.json";
  std::uint64_t be_seed = 1;
  be->add_option("--case", be_case, "Case id 1-6")->required();
  be->add_option("--reps", be_reps, "Replications");
  be->add_option("--scale", be_scale, "desk or paper");
  be->add_option("--jobs", be_jobs, "Worker threads");
  be->add_option("--seed", be_seed, "Seed block base");
  be->add_option("--config", be_config, "JSON file overriding CaseConfig fields");
  be->add_option("--out", be_out, "Report path");

  // summarize
  auto* su = app.add_subcommand("summarize", "Combine bench reports into a table");
  std::vector<std::string> su_reports;
  std::string su_csv, su_text;
  su->add_option("--reports", su_reports, "Bench report JSON files")->required();
  su->add_option("--csv", su_csv, "Combined CSV path (default: stdout)");
  su->add_option("--text", su_text, "Plain-text table path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(case_id, seed, out_dir, scale, config_path);
    if (*fm) return cmd_fit_mediator(fm_data, fm_basis, fm_iters, fm_out, fm_seed, fm_gibbs);
    if (*fo)
      return cmd_fit_outcome(fo_model, fo_data, fo_etahat, fo_basis, fo_iters, fo_out, fo_seed);
    if (*ef) return cmd_effects(ef_med, ef_out, ef_dest, ef_basis, ef_level, ef_mean_alpha);
    if (*bl) return cmd_bias_limit(bl_truth, bl_basis, bl_data, bl_etahat, bl_nuhat, bl_out);
    if (*be) return cmd_bench(be_case, be_reps, be_scale, be_jobs, be_seed, be_config, be_out);
    if (*su) return cmd_summarize(su_reports, su_csv, su_text);
  } catch (const basmu::argument_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const basmu::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
