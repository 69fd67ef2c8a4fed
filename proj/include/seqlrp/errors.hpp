#pragma once

#include <stdexcept>
#include <string>

namespace seqlrp {

// Shape disagreement between operands. The message names both shapes.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// A propagation denominator was exactly zero while epsilon was zero.
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

// A non-finite value appeared where the contract requires finite output.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input: files, token ids, configs.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seqlrp
