#pragma once

#include <stdexcept>
#include <string>

namespace motionseg {

// Exception hierarchy. The CLI maps each family onto an exit code:
// InvalidArgument -> 2, FormatError -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IllConditioned : public NumericalError {
 public:
  IllConditioned(const std::string& what, int region)
      : NumericalError(what + " (region " + std::to_string(region) + ")"), region_(region) {}
  int region() const { return region_; }

 private:
  int region_;
};

class OracleCapacity : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EstimationFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class Divergence : public NumericalError {
 public:
  Divergence(const std::string& what, int iteration)
      : NumericalError(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace motionseg
