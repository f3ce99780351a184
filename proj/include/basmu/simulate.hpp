#pragma once

#include <cstdint>
#include <string>

#include "basmu/grid_kernel.hpp"
#include "basmu/rng.hpp"

namespace basmu {

enum class NuPattern { dense, sparse, zero };

NuPattern nu_pattern_from_string(const std::string& s);
std::string to_string(NuPattern p);

enum class Scale { desk, paper };

// Generative settings for one simulation case. Cases 1-6 vary the nu pattern,
// sigma_eta, sigma_M and n around the base configuration.
struct CaseConfig {
  int case_id = 1;
  int n1 = 20;
  int n2 = 20;
  int n = 150;
  int q = 2;
  int L = 40;
  double sigma_eta = 0.5;
  double sigma_M = 2.0;
  double sigma_Y = 0.5;
  NuPattern nu_pattern = NuPattern::dense;
  double nu_scale = 1.0;        // dense-field amplitude
  double nu_scale_sparse = 30.0;  // magnitude of the sparse block values
  std::uint64_t seed = 1;

  int num_voxels() const { return n1 * n2; }

  static CaseConfig for_case(int case_id, Scale scale, std::uint64_t seed = 1);
};

struct Truth {
  Vec alpha;   // p
  Vec beta;    // p
  Vec nu;      // p
  Mat eta;     // n x p
  Mat xi;      // q x p
  double gamma = 0.5;
  Vec zeta;    // q
  double sigma_M = 2.0;
  double sigma_Y = 0.5;
  double sigma_eta = 0.5;

  // Scalar NIE implied by the fields: sum_j alpha_j beta_j / p.
  double scalar_nie() const { return alpha.dot(beta) / static_cast<double>(alpha.size()); }
};

struct Dataset {
  Mat M;  // n x p
  Vec X;  // n
  Mat C;  // n x q
  Vec Y;  // n
};

Truth make_truth(const CaseConfig& cfg, const KernelBasis& basis, Rng& rng);
Dataset simulate_dataset(const Truth& truth, const CaseConfig& cfg, Rng& rng);

// Seeds an Rng from cfg.seed and runs make_truth + simulate_dataset.
struct SimulationResult {
  Truth truth;
  Dataset data;
};
SimulationResult simulate_case(const CaseConfig& cfg, const KernelBasis& basis);

// Dataset directory layout: M.csv, X.csv, C.csv, Y.csv, truth.json.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);
void write_truth(const std::string& path, const Truth& truth, const CaseConfig& cfg);
Truth read_truth(const std::string& path, CaseConfig* cfg = nullptr);

// Applies overrides from a JSON object with keys mirroring CaseConfig fields.
CaseConfig apply_config_overrides(const CaseConfig& base, const std::string& json_path);

}  // namespace basmu
