#include "basmu/simulate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "basmu/io.hpp"

namespace basmu {

using nlohmann::json;

NuPattern nu_pattern_from_string(const std::string& s) {
  if (s == "dense") return NuPattern::dense;
  if (s == "sparse") return NuPattern::sparse;
  if (s == "zero") return NuPattern::zero;
  throw argument_error("unknown nu pattern: " + s);
}

std::string to_string(NuPattern p) {
  switch (p) {
    case NuPattern::dense: return "dense";
    case NuPattern::sparse: return "sparse";
    case NuPattern::zero: return "zero";
  }
  return "?";
}

CaseConfig CaseConfig::for_case(int case_id, Scale scale, std::uint64_t seed) {
  if (case_id < 1 || case_id > 6)
    throw argument_error("case id must be in 1..6, got " + std::to_string(case_id));
  CaseConfig cfg;
  cfg.case_id = case_id;
  cfg.seed = seed;
  if (scale == Scale::paper) {
    cfg.n1 = cfg.n2 = 40;
    cfg.n = 300;
    cfg.L = 120;
  } else {
    cfg.n1 = cfg.n2 = 20;
    cfg.n = 150;
    cfg.L = 40;
  }
  switch (case_id) {
    case 1: cfg.nu_pattern = NuPattern::dense; break;
    case 2: cfg.nu_pattern = NuPattern::sparse; break;
    case 3: cfg.nu_pattern = NuPattern::zero; break;
    case 4:
      cfg.nu_pattern = NuPattern::sparse;
      cfg.n *= 2;
      break;
    case 5:
      cfg.nu_pattern = NuPattern::dense;
      cfg.sigma_eta = 1.0;
      break;
    case 6:
      cfg.nu_pattern = NuPattern::dense;
      cfg.sigma_M = 4.0;
      break;
  }
  return cfg;
}

namespace {

// Plateau with a logistic edge: ~1 inside radius r around c, ~0 outside.
double blob(double x, double y, double cx, double cy, double r, double edge) {
  const double d = std::hypot(x - cx, y - cy);
  return 1.0 / (1.0 + std::exp((d - r) / edge));
}

// The raw signal patterns are compressed onto the leading kernel modes so the
// recorded truth lives where the GP prior and the sample size can actually
// identify it; the rescaling keeps the original peak amplitude.
Vec compress_to_leading_modes(const Vec& f, const KernelBasis& basis, int keep) {
  Vec theta = basis.to_coeffs(f);
  if (keep < basis.L) theta.tail(basis.L - keep).setZero();
  Vec g = basis.from_coeffs(theta);
  const double peak_f = f.cwiseAbs().maxCoeff();
  const double peak_g = g.cwiseAbs().maxCoeff();
  if (peak_g > 0.0) g *= peak_f / peak_g;
  return g;
}

Vec alpha_field(const Grid2D& grid, const KernelBasis& basis) {
  const int p = grid.num_points();
  Vec f(p);
  for (int j = 0; j < p; ++j) {
    const double x = grid.locations(j, 0), y = grid.locations(j, 1);
    f[j] = 2.0 * blob(x, y, 0.30, 0.35, 0.22, 0.08) + 1.2 * blob(x, y, 0.72, 0.70, 0.16, 0.06);
  }
  return compress_to_leading_modes(f, basis, std::min(16, basis.L));
}

Vec beta_field(const Grid2D& grid, const KernelBasis& basis) {
  const int p = grid.num_points();
  Vec f(p);
  for (int j = 0; j < p; ++j) {
    const double x = grid.locations(j, 0), y = grid.locations(j, 1);
    f[j] = 2.0 * blob(x, y, 0.40, 0.45, 0.22, 0.08) - 1.2 * blob(x, y, 0.75, 0.25, 0.16, 0.06);
  }
  return compress_to_leading_modes(f, basis, std::min(16, basis.L));
}

// Dense nu: low-dimensional basis coefficients mapped back to the grid. The
// mass sits on modes 2-4 with signs matched to alpha's coefficients, so the
// omitted-confounder direction overlaps the exposure effect and its
// absorption into beta grows with sigma_eta.
Vec dense_nu(const Vec& alpha, const KernelBasis& basis, double scale) {
  const Vec theta_alpha = basis.to_coeffs(alpha);
  Vec theta = Vec::Zero(basis.L);
  for (int l = 1; l < std::min(4, basis.L); ++l)
    theta[l] = 6.5 * (theta_alpha[l] >= 0.0 ? 1.0 : -1.0);
  return scale * basis.from_coeffs(theta);
}

// Sparse nu: 30 voxels split into a positive and a negative contiguous block.
// The positive block sits inside the main alpha bump so the omitted-confounder
// direction overlaps the exposure effect.
Vec sparse_nu(const Grid2D& grid, double scale) {
  Vec nu = Vec::Zero(grid.num_points());
  auto fill_block = [&](double x0, double y0, int rows, int cols, double value) {
    const int i0 = static_cast<int>(std::lround(x0 * grid.n1));
    const int j0 = static_cast<int>(std::lround(y0 * grid.n2));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int ii = std::min(grid.n1 - 1, i0 + i);
        const int jj = std::min(grid.n2 - 1, j0 + j);
        nu[ii * grid.n2 + jj] = value;
      }
  };
  fill_block(0.24, 0.28, 5, 4, scale);
  fill_block(0.08, 0.78, 5, 2, -scale);
  return nu;
}

}  // namespace

Truth make_truth(const CaseConfig& cfg, const KernelBasis& basis, Rng& rng) {
  const int p = cfg.num_voxels();
  if (basis.p != p)
    throw argument_error("make_truth: basis built on p = " + std::to_string(basis.p) +
                         ", config has p = " + std::to_string(p));
  const Grid2D grid(cfg.n1, cfg.n2);

  Truth truth;
  truth.sigma_M = cfg.sigma_M;
  truth.sigma_Y = cfg.sigma_Y;
  truth.sigma_eta = cfg.sigma_eta;
  truth.gamma = 0.5;
  truth.zeta.resize(cfg.q);
  for (int k = 0; k < cfg.q; ++k) truth.zeta[k] = (k % 2 == 0) ? 0.3 : -0.3;

  truth.alpha = alpha_field(grid, basis);
  truth.beta = beta_field(grid, basis);

  switch (cfg.nu_pattern) {
    case NuPattern::dense: truth.nu = dense_nu(truth.alpha, basis, cfg.nu_scale); break;
    case NuPattern::sparse: truth.nu = sparse_nu(grid, cfg.nu_scale_sparse); break;
    case NuPattern::zero: truth.nu = Vec::Zero(p); break;
  }

  // xi: smooth low-amplitude GP draws, one field per covariate.
  const Vec sd_xi = (0.25 * basis.eigenvalues.array()).sqrt();
  Mat theta_xi(cfg.q, basis.L);
  for (int k = 0; k < cfg.q; ++k)
    for (int l = 0; l < basis.L; ++l) theta_xi(k, l) = sd_xi[l] * rng.normal();
  truth.xi = basis.from_coeffs_rows(theta_xi);

  // eta_i ~ GP(0, sigma_eta^2 kappa) through basis coefficients.
  const Vec sd_eta = (cfg.sigma_eta * cfg.sigma_eta * basis.eigenvalues.array()).sqrt();
  Mat theta_eta(cfg.n, basis.L);
  for (int i = 0; i < cfg.n; ++i)
    for (int l = 0; l < basis.L; ++l) theta_eta(i, l) = sd_eta[l] * rng.normal();
  truth.eta = basis.from_coeffs_rows(theta_eta);

  return truth;
}

Dataset simulate_dataset(const Truth& truth, const CaseConfig& cfg, Rng& rng) {
  const int n = cfg.n;
  const int p = cfg.num_voxels();
  const int q = cfg.q;
  if (truth.alpha.size() != p || truth.beta.size() != p || truth.nu.size() != p ||
      truth.eta.rows() != n || truth.eta.cols() != p || truth.xi.rows() != q ||
      truth.zeta.size() != q)
    throw argument_error("simulate_dataset: truth dimensions do not match config");

  Dataset data;
  data.X.resize(n);
  for (int i = 0; i < n; ++i) data.X[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  data.C.resize(n, q);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k)
      data.C(i, k) = (k % 2 == 0) ? rng.normal() : (rng.bernoulli(0.5) ? 1.0 : 0.0);

  data.M.resize(n, p);
  for (int i = 0; i < n; ++i) {
    Vec mean = truth.alpha * data.X[i] + truth.eta.row(i).transpose();
    for (int k = 0; k < q; ++k) mean += truth.xi.row(k).transpose() * data.C(i, k);
    for (int j = 0; j < p; ++j) data.M(i, j) = mean[j] + truth.sigma_M * rng.normal();
  }

  const double cell = 1.0 / static_cast<double>(p);
  data.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    double y = cell * data.M.row(i).dot(truth.beta);
    y += truth.gamma * data.X[i];
    y += data.C.row(i).dot(truth.zeta);
    y += cell * truth.eta.row(i).dot(truth.nu);
    y += truth.sigma_Y * rng.normal();
    data.Y[i] = y;
  }
  return data;
}

SimulationResult simulate_case(const CaseConfig& cfg, const KernelBasis& basis) {
  Rng rng(cfg.seed);
  SimulationResult out;
  out.truth = make_truth(cfg, basis, rng);
  out.data = simulate_dataset(out.truth, cfg, rng);
  return out;
}

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vec vec_from_json(const json& a) {
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Mat mat_from_json(const json& rows) {
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}

json config_to_json(const CaseConfig& cfg) {
  return json{{"case_id", cfg.case_id}, {"n1", cfg.n1},       {"n2", cfg.n2},
              {"n", cfg.n},             {"q", cfg.q},         {"L", cfg.L},
              {"sigma_eta", cfg.sigma_eta}, {"sigma_M", cfg.sigma_M}, {"sigma_Y", cfg.sigma_Y},
              {"nu_pattern", to_string(cfg.nu_pattern)}, {"nu_scale", cfg.nu_scale},
              {"nu_scale_sparse", cfg.nu_scale_sparse}, {"seed", cfg.seed}};
}

CaseConfig config_from_json(const json& j) {
  CaseConfig cfg;
  cfg.case_id = j.value("case_id", cfg.case_id);
  cfg.n1 = j.value("n1", cfg.n1);
  cfg.n2 = j.value("n2", cfg.n2);
  cfg.n = j.value("n", cfg.n);
  cfg.q = j.value("q", cfg.q);
  cfg.L = j.value("L", cfg.L);
  cfg.sigma_eta = j.value("sigma_eta", cfg.sigma_eta);
  cfg.sigma_M = j.value("sigma_M", cfg.sigma_M);
  cfg.sigma_Y = j.value("sigma_Y", cfg.sigma_Y);
  if (j.contains("nu_pattern")) cfg.nu_pattern = nu_pattern_from_string(j["nu_pattern"]);
  cfg.nu_scale = j.value("nu_scale", cfg.nu_scale);
  cfg.nu_scale_sparse = j.value("nu_scale_sparse", cfg.nu_scale_sparse);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  write_csv(dir + "/M.csv", data.M);
  write_csv(dir + "/X.csv", data.X);
  write_csv(dir + "/C.csv", data.C);
  write_csv(dir + "/Y.csv", data.Y);
}

Dataset read_dataset(const std::string& dir) {
  Dataset data;
  data.M = read_csv(dir + "/M.csv");
  data.X = read_csv(dir + "/X.csv");
  data.C = read_csv(dir + "/C.csv");
  data.Y = read_csv(dir + "/Y.csv");
  if (data.X.rows() != data.M.rows() || data.Y.rows() != data.M.rows() ||
      data.C.rows() != data.M.rows())
    throw argument_error("read_dataset: inconsistent row counts in " + dir);
  return data;
}

void write_truth(const std::string& path, const Truth& truth, const CaseConfig& cfg) {
  json j;
  j["config"] = config_to_json(cfg);
  j["alpha"] = vec_to_json(truth.alpha);
  j["beta"] = vec_to_json(truth.beta);
  j["nu"] = vec_to_json(truth.nu);
  j["eta"] = mat_to_json(truth.eta);
  j["xi"] = mat_to_json(truth.xi);
  j["gamma"] = truth.gamma;
  j["zeta"] = vec_to_json(truth.zeta);
  j["sigma_M"] = truth.sigma_M;
  j["sigma_Y"] = truth.sigma_Y;
  j["sigma_eta"] = truth.sigma_eta;
  std::ofstream out(path);
  if (!out) throw argument_error("write_truth: cannot open " + path);
  out << j.dump() << '\n';
}

Truth read_truth(const std::string& path, CaseConfig* cfg) {
  std::ifstream in(path);
  if (!in) throw argument_error("read_truth: cannot open " + path);
  json j;
  in >> j;
  Truth truth;
  truth.alpha = vec_from_json(j.at("alpha"));
  truth.beta = vec_from_json(j.at("beta"));
  truth.nu = vec_from_json(j.at("nu"));
  truth.eta = mat_from_json(j.at("eta"));
  truth.xi = mat_from_json(j.at("xi"));
  truth.gamma = j.at("gamma").get<double>();
  truth.zeta = vec_from_json(j.at("zeta"));
  truth.sigma_M = j.at("sigma_M").get<double>();
  truth.sigma_Y = j.at("sigma_Y").get<double>();
  truth.sigma_eta = j.at("sigma_eta").get<double>();
  if (cfg && j.contains("config")) *cfg = config_from_json(j["config"]);
  return truth;
}

CaseConfig apply_config_overrides(const CaseConfig& base, const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw argument_error("config file not found: " + json_path);
  json j;
  in >> j;
  json merged = config_to_json(base);
  for (auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw argument_error("unknown config key: " + key);
    merged[key] = value;
  }
  return config_from_json(merged);
}

}  // namespace basmu
