#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace apbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when caller-supplied arguments violate a precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative numerical routine fails to reach its tolerance
/// or a factorization breaks down.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace detail
}  // namespace apbm
