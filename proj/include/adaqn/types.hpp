#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaqn {

/// Flat parameter vector. All optimizer-state arithmetic is double precision.
using ParamVector = std::vector<double>;
using GradVector = std::vector<double>;

using Index = std::size_t;
using Batch = std::span<const Index>;

/// Invalid configuration or mismatched dimensions. Harness exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN/Inf showed up somewhere it must not. Harness exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File or stream failure. Harness exit code 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ConfigError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                      " vs " + std::to_string(b) + ")");
}

}  // namespace adaqn
