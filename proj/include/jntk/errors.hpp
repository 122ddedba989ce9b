#pragma once

#include <stdexcept>
#include <string>

namespace jntk {

// Invalid input: wrong shapes, non-unit inputs, bad enum strings, bad config.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical procedure failed: non-convergence, non-PSD beyond tolerance,
// non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The JNTK Gram fails the minimum-eigenvalue condition needed to solve the
// kernel regression problem.
class AssumptionViolation : public std::runtime_error {
 public:
  AssumptionViolation(const std::string& what, double min_eig, double threshold)
      : std::runtime_error(what), min_eig_(min_eig), threshold_(threshold) {}

  double min_eig() const { return min_eig_; }
  double threshold() const { return threshold_; }

 private:
  double min_eig_;
  double threshold_;
};

// Malformed dataset file (non-numeric cell, constant column, ...).
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jntk
