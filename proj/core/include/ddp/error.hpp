#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddp {

/// Bad input: out-of-range parameters, malformed files, shape mismatches.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A combinatorial search refused to run because it exceeds its guard.
class GuardError : public std::runtime_error {
 public:
  GuardError(const std::string& what, double candidates)
      : std::runtime_error(what), candidates_(candidates) {}
  double candidates() const noexcept { return candidates_; }

 private:
  double candidates_;
};

/// A loss or gradient became non-finite during optimization.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ddp
