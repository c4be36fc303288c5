#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "apbm/common.hpp"
#include "apbm/power_iteration.hpp"

namespace apbm {

// ---------------------------------------------------------------------------
// Euclidean projection onto the unit simplex {l >= 0, sum(l) = 1}.
//
// Condat's pivoting algorithm: a single pass maintains a candidate active set
// and running threshold, followed by a short cleanup loop. Expected O(M).
// ---------------------------------------------------------------------------
inline Vector project_simplex(const Vector& v) {
  const auto M = v.size();
  detail::require(M >= 1, "cannot project an empty vector onto the simplex");
  if (!v.allFinite()) throw InvalidArgument("simplex projection input must be finite");

  // Points already on the simplex (up to summation rounding) are fixed points.
  if ((v.array() >= 0.0).all()) {
    const double s = v.sum();
    if (std::abs(s - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(M))
      return v;
  }

  std::vector<double> active;
  std::vector<double> parked;
  active.reserve(static_cast<std::size_t>(std::min<Eigen::Index>(M, 64)));
  active.push_back(v[0]);
  double rho = v[0] - 1.0;
  for (Eigen::Index i = 1; i < M; ++i) {
    const double yi = v[i];
    if (yi > rho) {
      rho += (yi - rho) / static_cast<double>(active.size() + 1);
      if (rho > yi - 1.0) {
        active.push_back(yi);
      } else {
        parked.insert(parked.end(), active.begin(), active.end());
        active.clear();
        active.push_back(yi);
        rho = yi - 1.0;
      }
    }
  }
  for (double yi : parked) {
    if (yi > rho) {
      active.push_back(yi);
      rho += (yi - rho) / static_cast<double>(active.size());
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < active.size();) {
      const double yi = active[i];
      if (yi <= rho) {
        active[i] = active.back();
        active.pop_back();
        rho += (rho - yi) / static_cast<double>(active.size());
        changed = true;
      } else {
        ++i;
      }
    }
  }

  Vector out = (v.array() - rho).max(0.0).matrix();
  const double s = out.sum();
  if (s > 0.0) {
    out /= s;
  } else {
    // Only reachable through catastrophic rounding; fall back to the argmax vertex.
    out.setZero();
    Eigen::Index idx = 0;
    v.maxCoeff(&idx);
    out[idx] = 1.0;
  }
  return out;
}

/// x = y - step * A^T lambda.
inline Vector recover_primal(const Matrix& A, const Vector& lambda, const Vector& y, double step) {
  detail::require(A.rows() == lambda.size(), "lambda length must equal the number of cuts");
  detail::require(A.cols() == y.size(), "center length must equal the cut dimension");
  Vector x = y;
  x.noalias() -= step * (A.transpose() * lambda);
  return x;
}

struct DualOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 50000;
  /// FISTA with gradient-based adaptive restart instead of plain projected ascent.
  bool accelerated = true;
  /// Called with every accepted dual iterate (plain and accelerated modes).
  std::function<void(const Vector&)> on_iterate;
};

struct DualResult {
  Vector lambda;
  Vector x;
  std::size_t iterations = 0;
  /// max(projected-gradient mapping norm, complementarity gap) at lambda.
  double kkt_residual = 0.0;
  /// False when the iteration cap was hit with kkt_residual > 10 * tolerance.
  bool converged = true;
};

/// Dual objective q(l) = -(step/2)||A^T l||^2 + <l, A y + b>.
inline double dual_objective(const Matrix& A, const Vector& b, const Vector& y, double step,
                             const Vector& lambda) {
  const Vector atl = A.transpose() * lambda;
  return -0.5 * step * atl.squaredNorm() + lambda.dot(A * y + b);
}

/// max_i <a_i, x> + b_i + ||x - y||^2 / (2 step).
inline double primal_objective(const Matrix& A, const Vector& b, const Vector& y, double step,
                               const Vector& x) {
  return (A * x + b).maxCoeff() + 0.5 * (x - y).squaredNorm() / step;
}

/// Solves min_x max_i{<a_i,x> + b_i} + ||x - y||^2 / (2 step) through its dual
/// over the unit simplex. All work after forming the Gram matrix A A^T is O(M^2)
/// per iteration.
class DualSolver {
 public:
  DualResult solve(const Matrix& A, const Vector& b, const Vector& y, double step,
                   const DualOptions& opts = {}, const Vector* warm = nullptr) {
    const auto M = A.rows();
    detail::require(M >= 1, "dual solve needs at least one cut");
    detail::require(b.size() == M, "intercept length must equal the number of cuts");
    detail::require(A.cols() == y.size(), "center length must equal the cut dimension");
    detail::require(step > 0.0 && std::isfinite(step), "proximal step must be positive");
    detail::require(opts.tolerance > 0.0, "dual tolerance must be positive");

    DualResult res;
    if (M == 1) {
      res.lambda = Vector::Ones(1);
      res.x = recover_primal(A, res.lambda, y, step);
      if (opts.on_iterate) opts.on_iterate(res.lambda);
      return res;
    }

    gram_.noalias() = A * A.transpose();
    linear_.noalias() = A * y;
    linear_ += b;

    const double lip = step * dominant_gram_eigenvalue();
    const double s = lip > 0.0 ? 1.0 / lip : 1.0;

    Vector lambda;
    if (warm != nullptr) {
      detail::require(warm->size() == M, "warm start length must equal the number of cuts");
      lambda = project_simplex(*warm);
    } else {
      lambda = Vector::Constant(M, 1.0 / static_cast<double>(M));
    }

    auto gradient = [&](const Vector& l) -> Vector { return linear_ - step * (gram_ * l); };

    std::size_t it = 0;
    double mapping = std::numeric_limits<double>::infinity();
    if (!opts.accelerated) {
      while (it < opts.max_iterations) {
        Vector next = project_simplex(lambda + s * gradient(lambda));
        mapping = (next - lambda).norm() / s;
        lambda = std::move(next);
        ++it;
        if (opts.on_iterate) opts.on_iterate(lambda);
        if (mapping <= opts.tolerance) break;
      }
    } else {
      Vector z = lambda;
      double theta = 1.0;
      while (it < opts.max_iterations) {
        Vector next = project_simplex(z + s * gradient(z));
        mapping = (next - z).norm() / s;
        ++it;
        if (mapping <= opts.tolerance) {
          lambda = std::move(next);
          if (opts.on_iterate) opts.on_iterate(lambda);
          break;
        }
        const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        if ((z - next).dot(next - lambda) > 0.0) {
          theta = 1.0;
          z = next;
        } else {
          z = next + ((theta - 1.0) / theta_next) * (next - lambda);
          theta = theta_next;
        }
        lambda = std::move(next);
        if (opts.on_iterate) opts.on_iterate(lambda);
      }
    }

    res.lambda = lambda;
    res.x = recover_primal(A, lambda, y, step);
    res.iterations = it;

    // KKT residual at the returned point.
    const Vector g = gradient(lambda);
    const double final_mapping = (project_simplex(lambda + s * g) - lambda).norm() / s;
    const double top = g.maxCoeff();
    const double gap = lambda.dot((Vector::Constant(M, top) - g));
    res.kkt_residual = std::max(final_mapping, std::max(gap, 0.0));
    res.converged = !(it >= opts.max_iterations && res.kkt_residual > 10.0 * opts.tolerance);
    return res;
  }

 private:
  // Largest eigenvalue of the Gram matrix by power iteration, warm-started
  // from the previous call when the size matches. Falls back to the trace
  // (an upper bound) if the sweep cap is hit.
  double dominant_gram_eigenvalue() {
    const auto M = gram_.rows();
    if (power_vec_.size() != M) power_vec_ = Vector::Ones(M);
    auto apply = [&](const Vector& v, Vector& out) { out.noalias() = gram_ * v; };
    auto pi = power_iteration(apply, power_vec_, 1e-12, 500);
    if (pi.eigenvector.allFinite()) power_vec_ = pi.eigenvector;
    if (!pi.converged) return gram_.trace();
    return std::max(pi.eigenvalue, 0.0);
  }

  Matrix gram_;
  Vector linear_;
  Vector power_vec_;
};

inline DualResult dual_solve(const Matrix& A, const Vector& b, const Vector& y, double step,
                             const DualOptions& opts = {}, const Vector* warm = nullptr) {
  DualSolver solver;
  return solver.solve(A, b, y, step, opts, warm);
}

// ---------------------------------------------------------------------------
// Exhaustive active-set oracle for small bundles, independent of dual_solve.
//
// For every nonempty support S it solves
//   step * G_SS l_S + theta 1 = A_S y + b_S,   1^T l_S = 1
// and accepts the candidate when l_S >= 0 and no cut outside S exceeds theta.
// Among accepted candidates the lowest primal objective wins, then the
// smallest support.
// ---------------------------------------------------------------------------
inline Vector qp_oracle_small(const Matrix& A, const Vector& b, const Vector& y, double step) {
  const auto M = A.rows();
  detail::require(M >= 1 && M <= 12, "qp_oracle_small supports 1 <= M <= 12 cuts");
  detail::require(b.size() == M && A.cols() == y.size(), "qp_oracle_small dimension mismatch");
  detail::require(step > 0.0, "proximal step must be positive");

  const Matrix G = A * A.transpose();
  const Vector c = A * y + b;
  const double scale = 1.0 + c.cwiseAbs().maxCoeff();

  std::optional<Vector> best;
  double best_obj = std::numeric_limits<double>::infinity();
  int best_support = std::numeric_limits<int>::max();

  for (unsigned mask = 1; mask < (1u << M); ++mask) {
    std::vector<Eigen::Index> S;
    for (Eigen::Index i = 0; i < M; ++i)
      if (mask & (1u << i)) S.push_back(i);
    const auto s = static_cast<Eigen::Index>(S.size());
    Matrix K = Matrix::Zero(s + 1, s + 1);
    Vector rhs(s + 1);
    for (Eigen::Index r = 0; r < s; ++r) {
      for (Eigen::Index q = 0; q < s; ++q) K(r, q) = step * G(S[r], S[q]);
      K(r, s) = 1.0;
      K(s, r) = 1.0;
      rhs[r] = c[S[r]];
    }
    rhs[s] = 1.0;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(K);
    const Vector sol = cod.solve(rhs);
    if (!sol.allFinite()) continue;
    if ((K * sol - rhs).norm() > 1e-9 * scale) continue;

    Vector lambda = Vector::Zero(M);
    bool nonneg = true;
    for (Eigen::Index r = 0; r < s; ++r) {
      if (sol[r] < -1e-12) nonneg = false;
      lambda[S[r]] = std::max(sol[r], 0.0);
    }
    if (!nonneg) continue;
    lambda /= lambda.sum();

    const Vector x = recover_primal(A, lambda, y, step);
    const Vector vals = A * x + b;
    const double top = vals.maxCoeff();
    double support_max = -std::numeric_limits<double>::infinity();
    for (auto i : S) support_max = std::max(support_max, vals[i]);
    if (top > support_max + 1e-9 * scale) continue;

    const double obj = primal_objective(A, b, y, step, x);
    const bool better = obj < best_obj - 1e-14 * (1.0 + std::abs(obj)) ||
                        (obj <= best_obj + 1e-14 * (1.0 + std::abs(obj)) &&
                         static_cast<int>(s) < best_support);
    if (!best || better) {
      best = x;
      best_obj = obj;
      best_support = static_cast<int>(s);
    }
  }
  if (!best) throw NumericalError("qp_oracle_small found no KKT-consistent active set");
  return *best;
}

}  // namespace apbm
