#pragma once

#include <cmath>
#include <cstddef>

#include "apbm/common.hpp"

namespace apbm {

struct PowerIterationResult {
  double eigenvalue = 0.0;  // Rayleigh quotient at the last iterate
  Vector eigenvector;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Dominant eigenvalue of a symmetric positive semidefinite operator.
///
/// `apply(v, out)` must write the operator applied to `v` into `out`. The
/// iteration stops once the Rayleigh quotient changes by at most
/// `rel_tol` relative between consecutive sweeps. A zero operator is detected
/// and reported as converged with eigenvalue 0.
template <typename Apply>
PowerIterationResult power_iteration(Apply&& apply, const Vector& start, double rel_tol,
                                     std::size_t max_iterations) {
  PowerIterationResult res;
  Vector v = start;
  double nrm = v.norm();
  if (nrm == 0.0 || !std::isfinite(nrm)) {
    v = Vector::Ones(start.size());
    nrm = v.norm();
  }
  v /= nrm;
  Vector w(v.size());
  double prev = 0.0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    apply(v, w);
    const double rq = v.dot(w);
    const double wn = w.norm();
    res.iterations = it;
    res.eigenvalue = rq;
    if (wn == 0.0) {
      res.eigenvector = v;
      res.converged = true;
      return res;
    }
    v = w / wn;
    if (it > 1 && std::abs(rq - prev) <= rel_tol * std::abs(rq)) {
      res.converged = true;
      break;
    }
    prev = rq;
  }
  res.eigenvector = std::move(v);
  return res;
}

}  // namespace apbm
