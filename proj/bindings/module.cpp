#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "basmu/bench.hpp"
#include "basmu/bias_theory.hpp"
#include "basmu/effects.hpp"
#include "basmu/grid_kernel.hpp"
#include "basmu/mediator_sampler.hpp"
#include "basmu/outcome_sampler.hpp"
#include "basmu/simulate.hpp"

namespace py = pybind11;
using namespace basmu;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian structured mediation analysis with unobserved confounders";

  py::register_exception<argument_error>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<numeric_error>(m, "NumericError", PyExc_RuntimeError);

  // --- grid and kernel basis ---
  py::class_<Grid2D>(m, "Grid2D")
      .def(py::init<int, int>(), py::arg("n1"), py::arg("n2"))
      .def_readonly("n1", &Grid2D::n1)
      .def_readonly("n2", &Grid2D::n2)
      .def_readonly("locations", &Grid2D::locations)
      .def_property_readonly("num_points", &Grid2D::num_points)
      .def_property_readonly("cell_measure", &Grid2D::cell_measure);

  py::class_<MaternParams>(m, "MaternParams")
      .def(py::init<double, double>(), py::arg("tau") = 0.2, py::arg("rho") = 2.0)
      .def_readwrite("tau", &MaternParams::tau)
      .def_readwrite("rho", &MaternParams::rho);

  py::class_<KernelBasis>(m, "KernelBasis")
      .def_readonly("p", &KernelBasis::p)
      .def_readonly("L", &KernelBasis::L)
      .def_readonly("eigenvalues", &KernelBasis::eigenvalues)
      .def_readonly("psi", &KernelBasis::psi)
      .def("to_coeffs", &KernelBasis::to_coeffs, py::arg("field"))
      .def("from_coeffs", &KernelBasis::from_coeffs, py::arg("coeffs"))
      .def("to_coeffs_rows", &KernelBasis::to_coeffs_rows, py::arg("fields"))
      .def("from_coeffs_rows", &KernelBasis::from_coeffs_rows, py::arg("coeffs"));

  m.def("matern_cov", &matern_cov, py::arg("d"), py::arg("params"));
  m.def("eigenbasis", &eigenbasis, py::arg("grid"), py::arg("params"), py::arg("L"));
  m.def("save_kernel_basis", &save_kernel_basis, py::arg("basis"), py::arg("path"));
  m.def("load_kernel_basis", &load_kernel_basis, py::arg("path"));

  // --- simulation ---
  py::enum_<NuPattern>(m, "NuPattern")
      .value("dense", NuPattern::dense)
      .value("sparse", NuPattern::sparse)
      .value("zero", NuPattern::zero);

  py::enum_<Scale>(m, "Scale").value("desk", Scale::desk).value("paper", Scale::paper);

  py::class_<CaseConfig>(m, "CaseConfig")
      .def(py::init<>())
      .def_static("for_case", &CaseConfig::for_case, py::arg("case_id"), py::arg("scale"),
                  py::arg("seed") = 1)
      .def_readwrite("case_id", &CaseConfig::case_id)
      .def_readwrite("n1", &CaseConfig::n1)
      .def_readwrite("n2", &CaseConfig::n2)
      .def_readwrite("n", &CaseConfig::n)
      .def_readwrite("q", &CaseConfig::q)
      .def_readwrite("L", &CaseConfig::L)
      .def_readwrite("sigma_eta", &CaseConfig::sigma_eta)
      .def_readwrite("sigma_M", &CaseConfig::sigma_M)
      .def_readwrite("sigma_Y", &CaseConfig::sigma_Y)
      .def_readwrite("nu_pattern", &CaseConfig::nu_pattern)
      .def_readwrite("nu_scale", &CaseConfig::nu_scale)
      .def_readwrite("nu_scale_sparse", &CaseConfig::nu_scale_sparse)
      .def_readwrite("seed", &CaseConfig::seed)
      .def_property_readonly("num_voxels", &CaseConfig::num_voxels);

  py::class_<Truth>(m, "Truth")
      .def_readonly("alpha", &Truth::alpha)
      .def_readonly("beta", &Truth::beta)
      .def_readonly("nu", &Truth::nu)
      .def_readonly("eta", &Truth::eta)
      .def_readonly("xi", &Truth::xi)
      .def_readonly("gamma", &Truth::gamma)
      .def_readonly("zeta", &Truth::zeta)
      .def_readonly("sigma_M", &Truth::sigma_M)
      .def_readonly("sigma_Y", &Truth::sigma_Y)
      .def_readonly("sigma_eta", &Truth::sigma_eta)
      .def("scalar_nie", &Truth::scalar_nie);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("M", &Dataset::M)
      .def_readwrite("X", &Dataset::X)
      .def_readwrite("C", &Dataset::C)
      .def_readwrite("Y", &Dataset::Y);

  m.def(
      "simulate_case",
      [](const CaseConfig& cfg, const KernelBasis& basis) {
        const SimulationResult r = simulate_case(cfg, basis);
        return py::make_tuple(r.truth, r.data);
      },
      py::arg("config"), py::arg("basis"));
  m.def("write_dataset", &write_dataset, py::arg("dir"), py::arg("data"));
  m.def("read_dataset", &read_dataset, py::arg("dir"));

  // --- mediator model ---
  py::class_<MediatorOptions>(m, "MediatorOptions")
      .def(py::init<>())
      .def_readwrite("total_iters", &MediatorOptions::total_iters)
      .def_readwrite("burnin", &MediatorOptions::burnin)
      .def_readwrite("mala_alpha", &MediatorOptions::mala_alpha)
      .def_readwrite("mala_step", &MediatorOptions::mala_step)
      .def_readwrite("mala_target_accept", &MediatorOptions::mala_target_accept)
      .def_readwrite("seed", &MediatorOptions::seed);

  py::class_<MediatorChains>(m, "MediatorChains")
      .def_readonly("theta_alpha", &MediatorChains::theta_alpha)
      .def_readonly("sigma2_M", &MediatorChains::sigma2_M)
      .def_readonly("sigma2_alpha", &MediatorChains::sigma2_alpha)
      .def_readonly("sigma2_xi", &MediatorChains::sigma2_xi)
      .def_readonly("sigma2_eta", &MediatorChains::sigma2_eta)
      .def_readonly("alpha_accept_rate", &MediatorChains::alpha_accept_rate)
      .def_readonly("total_iters", &MediatorChains::total_iters)
      .def_readonly("burnin", &MediatorChains::burnin)
      .def_property_readonly("num_draws", &MediatorChains::num_draws);

  m.def("fit_mediator", &fit_mediator, py::arg("data"), py::arg("basis"), py::arg("options"),
        py::call_guard<py::gil_scoped_release>());
  m.def("posterior_mean_eta", &posterior_mean_eta, py::arg("chains"), py::arg("basis"));
  m.def("write_mediator_chains", &write_mediator_chains, py::arg("dir"), py::arg("chains"));
  m.def("read_mediator_chains", &read_mediator_chains, py::arg("dir"));

  // --- outcome models ---
  py::enum_<OutcomeModel>(m, "OutcomeModel")
      .value("bima", OutcomeModel::bima)
      .value("basmu", OutcomeModel::basmu);

  py::class_<OutcomeOptions>(m, "OutcomeOptions")
      .def(py::init<>())
      .def_readwrite("total_iters", &OutcomeOptions::total_iters)
      .def_readwrite("burnin", &OutcomeOptions::burnin)
      .def_readwrite("mala_beta", &OutcomeOptions::mala_beta)
      .def_readwrite("p_delta", &OutcomeOptions::p_delta)
      .def_readwrite("seed", &OutcomeOptions::seed);

  py::class_<OutcomeChains>(m, "OutcomeChains")
      .def_readonly("model", &OutcomeChains::model)
      .def_readonly("theta_beta", &OutcomeChains::theta_beta)
      .def_readonly("gamma", &OutcomeChains::gamma)
      .def_readonly("zeta", &OutcomeChains::zeta)
      .def_readonly("sigma2_Y", &OutcomeChains::sigma2_Y)
      .def_readonly("sigma2_beta", &OutcomeChains::sigma2_beta)
      .def_readonly("nu", &OutcomeChains::nu)
      .def_readonly("delta", &OutcomeChains::delta)
      .def_readonly("sigma2_nu", &OutcomeChains::sigma2_nu)
      .def_property_readonly("num_draws", &OutcomeChains::num_draws);

  m.def("fit_bima", &fit_bima, py::arg("data"), py::arg("basis"), py::arg("options"),
        py::call_guard<py::gil_scoped_release>());
  m.def("fit_basmu", &fit_basmu, py::arg("data"), py::arg("basis"), py::arg("etahat"),
        py::arg("options"), py::call_guard<py::gil_scoped_release>());
  m.def("write_outcome_chains", &write_outcome_chains, py::arg("dir"), py::arg("chains"));
  m.def("read_outcome_chains", &read_outcome_chains, py::arg("dir"));

  // Algorithm pieces, mainly for cross-checking against external oracles.
  m.def(
      "update_nu_svd",
      [](const Mat& W, const Eigen::VectorXi& delta, const Vec& y_nu, double s2Y, double s2nu,
         std::uint64_t seed) {
        Rng rng(seed);
        return update_nu_svd(W, delta, y_nu, s2Y, s2nu, rng);
      },
      py::arg("W"), py::arg("delta"), py::arg("y_nu"), py::arg("sigma2_Y"),
      py::arg("sigma2_nu"), py::arg("seed"));
  m.def(
      "update_delta_seq",
      [](const Mat& W, const Vec& y_nu, const Vec& nu, Eigen::VectorXi delta, double s2Y,
         double p_delta, std::uint64_t seed) {
        Rng rng(seed);
        const Vec resid = update_delta_seq(W, y_nu, nu, delta, s2Y, p_delta, rng);
        return py::make_tuple(delta, resid);
      },
      py::arg("W"), py::arg("y_nu"), py::arg("nu"), py::arg("delta"), py::arg("sigma2_Y"),
      py::arg("p_delta"), py::arg("seed"));
  m.def(
      "theta_beta_moments",
      [](const Mat& Mt, const Vec& resid, const Vec& lambda, double s2Y, double s2beta) {
        const ThetaBetaMoments mom = theta_beta_moments(Mt, resid, lambda, s2Y, s2beta);
        return py::make_tuple(mom.mean, mom.cov);
      },
      py::arg("Mt"), py::arg("resid"), py::arg("lambda"), py::arg("sigma2_Y"),
      py::arg("sigma2_beta"));

  // --- effects ---
  py::class_<EffectChain>(m, "EffectChain")
      .def_readonly("spatial", &EffectChain::spatial)
      .def_readonly("scalar", &EffectChain::scalar)
      .def_readonly("nde", &EffectChain::nde)
      .def_readonly("pairing", &EffectChain::pairing);

  py::class_<Selection>(m, "Selection")
      .def_readonly("mean", &Selection::mean)
      .def_readonly("lo", &Selection::lo)
      .def_readonly("hi", &Selection::hi)
      .def_readonly("active", &Selection::active)
      .def_readonly("n_active_pos", &Selection::n_active_pos)
      .def_readonly("n_active_neg", &Selection::n_active_neg)
      .def_readonly("sum_nie_pos", &Selection::sum_nie_pos)
      .def_readonly("sum_nie_neg", &Selection::sum_nie_neg);

  py::class_<EffectSummary>(m, "EffectSummary")
      .def_readonly("voxels", &EffectSummary::voxels)
      .def_readonly("scalar_mean", &EffectSummary::scalar_mean)
      .def_readonly("scalar_lo", &EffectSummary::scalar_lo)
      .def_readonly("scalar_hi", &EffectSummary::scalar_hi)
      .def_readonly("nde_mean", &EffectSummary::nde_mean)
      .def_readonly("nde_lo", &EffectSummary::nde_lo)
      .def_readonly("nde_hi", &EffectSummary::nde_hi)
      .def_readonly("level", &EffectSummary::level)
      .def_readonly("pairing", &EffectSummary::pairing);

  m.def("nie_chain", &nie_chain, py::arg("mediator_chains"), py::arg("outcome_chains"),
        py::arg("basis"), py::arg("mean_alpha") = false);
  m.def("select_active", &select_active, py::arg("chain"), py::arg("level") = 0.95);
  m.def("summarize_effects", &summarize_effects, py::arg("chain"), py::arg("level") = 0.95);
  m.def("write_effect_summary", &write_effect_summary, py::arg("dir"), py::arg("summary"));

  // --- asymptotic bias ---
  py::class_<BiasInputs>(m, "BiasInputs")
      .def_readonly("H", &BiasInputs::H)
      .def_readonly("h0", &BiasInputs::h0)
      .def_readonly("hhat", &BiasInputs::hhat)
      .def_readonly("sigma2_M", &BiasInputs::sigma2_M);

  m.def(
      "empirical_H_h",
      [](const Truth& truth, const Vec& X, const Mat& C, const KernelBasis& basis,
         py::object etahat, py::object nuhat) {
        if (etahat.is_none() || nuhat.is_none())
          return empirical_H_h(truth, X, C, basis);
        const Mat eh = etahat.cast<Mat>();
        const Vec nh = nuhat.cast<Vec>();
        return empirical_H_h(truth, X, C, basis, &eh, &nh);
      },
      py::arg("truth"), py::arg("X"), py::arg("C"), py::arg("basis"),
      py::arg("etahat") = py::none(), py::arg("nuhat") = py::none());
  m.def("bias_limit_bima", &bias_limit_bima, py::arg("inputs"));
  m.def("bias_limit_basmu", &bias_limit_basmu, py::arg("inputs"));
  m.def("freq_bias_limit", &freq_bias_limit, py::arg("theta_alpha"), py::arg("theta_nu"),
        py::arg("Theta_L"), py::arg("sigma2_M"));

  py::class_<IdentifiabilityReport>(m, "IdentifiabilityReport")
      .def_readonly("n", &IdentifiabilityReport::n)
      .def_readonly("cols", &IdentifiabilityReport::cols)
      .def_readonly("rank", &IdentifiabilityReport::rank)
      .def_readonly("smin", &IdentifiabilityReport::smin)
      .def_readonly("smax", &IdentifiabilityReport::smax)
      .def_readonly("full_rank", &IdentifiabilityReport::full_rank);
  m.def("identifiability_check", &identifiability_check, py::arg("X"), py::arg("C"),
        py::arg("extra_cols"));

  // --- benchmark harness ---
  py::class_<BenchOptions>(m, "BenchOptions")
      .def(py::init<>())
      .def_readwrite("reps", &BenchOptions::reps)
      .def_readwrite("jobs", &BenchOptions::jobs)
      .def_readwrite("scale", &BenchOptions::scale)
      .def_readwrite("mediator_iters", &BenchOptions::mediator_iters)
      .def_readwrite("outcome_iters", &BenchOptions::outcome_iters);

  py::class_<MethodStats>(m, "MethodStats")
      .def_readonly("nie_bias", &MethodStats::nie_bias)
      .def_readonly("nie_var", &MethodStats::nie_var)
      .def_readonly("nie_mse", &MethodStats::nie_mse)
      .def_readonly("nde_bias", &MethodStats::nde_bias)
      .def_readonly("nde_var", &MethodStats::nde_var)
      .def_readonly("nde_mse", &MethodStats::nde_mse)
      .def_readonly("beta_bias", &MethodStats::beta_bias)
      .def_readonly("beta_mse", &MethodStats::beta_mse);

  py::class_<BenchReport>(m, "BenchReport")
      .def_readonly("cfg", &BenchReport::cfg)
      .def_readonly("reps_requested", &BenchReport::reps_requested)
      .def_readonly("reps_completed", &BenchReport::reps_completed)
      .def_readonly("failures", &BenchReport::failures)
      .def_readonly("truth_nie", &BenchReport::truth_nie)
      .def_readonly("truth_nde", &BenchReport::truth_nde)
      .def_readonly("bima", &BenchReport::bima)
      .def_readonly("basmu", &BenchReport::basmu)
      .def_readonly("nie_bima", &BenchReport::nie_bima)
      .def_readonly("nie_basmu", &BenchReport::nie_basmu);

  m.def("run_case", &run_case, py::arg("config"), py::arg("options"),
        py::call_guard<py::gil_scoped_release>());
  m.def("write_bench_report", &write_bench_report, py::arg("path"), py::arg("report"));
  m.def("read_bench_report", &read_bench_report, py::arg("path"));
}
