#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace basmu {

// Plain numeric CSV, '%.17g' formatting so a write/read round trip is exact.
void write_csv(const std::string& path, const Eigen::MatrixXd& m,
               const std::vector<std::string>& header = {});

// Reads a numeric CSV; a single non-numeric first line is treated as a header
// and skipped (returned through `header` when provided).
Eigen::MatrixXd read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

}  // namespace basmu
