#pragma once

#include <stdexcept>
#include <string>

namespace basmu {

// Bad caller input: dimension mismatches, out-of-range options, unreadable
// files. Maps to CLI exit code 2.
class argument_error : public std::invalid_argument {
public:
  explicit argument_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure inside a computation (non-PSD kernel, SVD breakdown).
// Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure raised by an MCMC sweep; message carries the iteration.
class sampler_error : public numeric_error {
public:
  explicit sampler_error(const std::string& msg) : numeric_error(msg) {}
};

}  // namespace basmu
