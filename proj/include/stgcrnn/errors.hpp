#pragma once

#include <stdexcept>
#include <string>

namespace stgcrnn {

/// Base class for every error the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible with the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

/// A documented precondition was violated (non-scalar loss, missing
/// teacher-forcing targets, empty record, ...).
struct ContractError : Error {
  using Error::Error;
};

/// Division by a zero degree while normalizing a graph operator.
struct DivisionDomainError : Error {
  using Error::Error;
};

/// All pairwise distances identical; the Gaussian kernel width is undefined.
struct DegenerateGraphError : Error {
  using Error::Error;
};

/// Thresholding left a node without any neighbor.
struct IsolatedNodeError : Error {
  IsolatedNodeError(const std::string& msg, std::string node)
      : Error(msg), node_id(std::move(node)) {}
  std::string node_id;
};

/// Power iteration failed to converge; carries the last Rayleigh quotient.
struct EigenEstimationError : Error {
  EigenEstimationError(const std::string& msg, double estimate)
      : Error(msg), last_estimate(estimate) {}
  double last_estimate;
};

/// Two forward passes of a supposedly pure function disagreed.
struct DeterminismError : Error {
  using Error::Error;
};

/// A NaN gradient reached the optimizer; the step was refused.
struct PoisonedStateError : Error {
  using Error::Error;
};

/// Factor groups disagree on timestamps or node sets.
struct AlignmentError : Error {
  using Error::Error;
};

/// A station falls outside the declared spatial bounds.
struct BoundsError : Error {
  using Error::Error;
};

/// A metric has no defined value on the given inputs.
struct UndefinedMetricError : Error {
  using Error::Error;
};

/// Invalid or inconsistent configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// File or format problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace stgcrnn
