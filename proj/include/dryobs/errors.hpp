#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace dryobs {

/// Bad input to a library call (dimensions, counts, masks, ranges).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mismatch between objects that must share a grid or basis.
class DimensionError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A configuration that cannot run as requested (e.g. unstable time step).
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base of all failures that originate in the numerics.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State outside the admissible range of the material model.
class DomainError : public NumericalError {
 public:
  DomainError(const std::string& what, long cell) : NumericalError(what), cell_(cell) {}
  long cell() const { return cell_; }

 private:
  long cell_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, double time) : NumericalError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Step size underflow in the adaptive integrator.
class StiffnessError : public NumericalError {
 public:
  StiffnessError(const std::string& what, double time) : NumericalError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Iteration that did not reach its tolerance; carries the best iterate.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
      : NumericalError(what), best_(std::move(best)), residual_(residual) {}
  const Eigen::VectorXd& best_state() const { return best_; }
  double residual() const { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

class DegenerateSnapshotError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A Gramian response that did not settle within the sampled horizon.
class SteadyStateError : public NumericalError {
 public:
  SteadyStateError(const std::string& what, int d, int l, int i)
      : NumericalError(what), d_(d), l_(l), i_(i) {}
  int magnitude_index() const { return d_; }
  int direction_index() const { return l_; }
  int coordinate_index() const { return i_; }

 private:
  int d_, l_, i_;
};

class NumericalDegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dryobs
