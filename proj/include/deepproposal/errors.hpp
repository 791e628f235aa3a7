#pragma once

#include <stdexcept>
#include <string>

namespace dp {

// Corrupt or inconsistent input data (bad files, non-finite values, broken manifests).
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Wiring mistakes: dimension mismatches, missing models, bad thresholds.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometric input too small / empty after clamping.
class degenerate_error : public std::runtime_error {
 public:
  explicit degenerate_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Lookup outside a map or table.
class bounds_error : public std::runtime_error {
 public:
  explicit bounds_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dp
