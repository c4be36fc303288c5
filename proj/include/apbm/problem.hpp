#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "apbm/common.hpp"
#include "apbm/power_iteration.hpp"

namespace apbm {

/// Value/gradient oracle of a convex, L-smooth objective on R^n.
///
/// Immutable after construction; `value_grad` may be called concurrently as
/// long as the wrapped evaluator is itself reentrant.
class ProblemOracle {
 public:
  /// Writes the gradient at `x` into `grad` (already sized n) and returns f(x).
  using Evaluator = std::function<double(const Vector& x, Vector& grad)>;

  ProblemOracle(std::size_t dimension, Evaluator evaluator, double smoothness,
                std::optional<double> f_star = std::nullopt,
                std::optional<Vector> x_star = std::nullopt)
      : n_(dimension),
        eval_(std::move(evaluator)),
        L_(smoothness),
        f_star_(f_star),
        x_star_(std::move(x_star)) {
    detail::require(n_ >= 1, "oracle dimension must be positive");
    detail::require(static_cast<bool>(eval_), "oracle evaluator is empty");
    detail::require(L_ > 0.0 && std::isfinite(L_), "smoothness constant L must be positive");
    if (x_star_) {
      detail::require(static_cast<std::size_t>(x_star_->size()) == n_,
                      "reference optimum has wrong dimension");
    }
  }

  std::size_t dimension() const { return n_; }
  double smoothness() const { return L_; }
  const std::optional<double>& f_star() const { return f_star_; }
  const std::optional<Vector>& x_star() const { return x_star_; }

  double value_grad(const Vector& x, Vector& grad) const {
    detail::require(static_cast<std::size_t>(x.size()) == n_, "point has wrong dimension");
    grad.resize(static_cast<Eigen::Index>(n_));
    return eval_(x, grad);
  }

  std::pair<double, Vector> value_grad(const Vector& x) const {
    Vector g;
    const double f = value_grad(x, g);
    return {f, std::move(g)};
  }

  double value(const Vector& x) const {
    Vector g;
    return value_grad(x, g);
  }

 private:
  std::size_t n_;
  Evaluator eval_;
  double L_;
  std::optional<double> f_star_;
  std::optional<Vector> x_star_;
};

// ---------------------------------------------------------------------------
// Reproducible normal variates.
//
// Instances are generated from std::mt19937_64 (whose output sequence is fixed
// by the C++ standard) seeded with the 64-bit instance seed. Each pair of
// 64-bit draws (r1, r2) is mapped to uniforms u_i = ((r_i >> 11) + 1) * 2^-53
// in (0, 1] and then to two standard normals with the Box-Muller transform
//   z1 = sqrt(-2 ln u1) cos(2 pi u2),  z2 = sqrt(-2 ln u1) sin(2 pi u2),
// consumed in that order. std::normal_distribution is avoided because its
// algorithm is implementation-defined.
// ---------------------------------------------------------------------------
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform in (0, 1] with 53 random bits.
  double uniform() {
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return static_cast<double>((engine_() >> 11) + 1) * scale;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline constexpr double kSpectralTolerance = 1e-10;
inline constexpr std::size_t kSpectralMaxIterations = 10000;

/// ||E||^2 / N, with the spectral norm from power iteration on E^T E.
inline double smoothness_constant(const Matrix& E, double rel_tol = kSpectralTolerance,
                                  std::size_t max_iterations = kSpectralMaxIterations) {
  detail::require(E.rows() >= 1 && E.cols() >= 1, "matrix must be non-empty");
  NormalStream rs(0x5eed5eedULL);
  Vector start(E.cols());
  for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = 1.0 + 0.1 * rs.next();
  Vector tmp(E.rows());
  auto apply = [&](const Vector& v, Vector& out) {
    tmp.noalias() = E * v;
    out.noalias() = E.transpose() * tmp;
  };
  const auto res = power_iteration(apply, start, rel_tol, max_iterations);
  if (!res.converged) {
    throw NumericalError("power iteration for ||E||^2 did not converge in " +
                         std::to_string(max_iterations) + " iterations");
  }
  return res.eigenvalue / static_cast<double>(E.rows());
}

/// Least-squares test problem f(x) = ||E x - w||^2 / (2N).
///
/// L, x* and f* are computed once at construction.
class LeastSquaresInstance {
 public:
  /// Draws E (row by row) and then w i.i.d. standard normal from NormalStream(seed).
  static LeastSquaresInstance generate(std::size_t N, std::size_t n, std::uint64_t seed) {
    detail::require(N >= 1 && n >= 1, "least squares sizes must be positive");
    NormalStream rs(seed);
    Matrix E(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < E.rows(); ++i)
      for (Eigen::Index j = 0; j < E.cols(); ++j) E(i, j) = rs.next();
    Vector w(static_cast<Eigen::Index>(N));
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rs.next();
    return LeastSquaresInstance(std::move(E), std::move(w), seed);
  }

  LeastSquaresInstance(Matrix E, Vector w, std::uint64_t seed = 0)
      : E_(std::move(E)), w_(std::move(w)), seed_(seed) {
    detail::require(E_.rows() >= 1 && E_.cols() >= 1, "E must be non-empty");
    detail::require(E_.rows() == w_.size(), "E and w have mismatched row counts");
    detail::require(E_.allFinite() && w_.allFinite(), "E and w must be finite");
    L_ = smoothness_constant(E_);
    solve_reference();
  }

  std::size_t samples() const { return static_cast<std::size_t>(E_.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(E_.cols()); }
  std::uint64_t seed() const { return seed_; }
  const Matrix& E() const { return E_; }
  const Vector& w() const { return w_; }
  double smoothness() const { return L_; }
  double optimal_value() const { return f_star_; }
  const Vector& optimal_point() const { return x_star_; }

  double value_grad(const Vector& x, Vector& grad) const {
    const double inv_n = 1.0 / static_cast<double>(E_.rows());
    Vector r = E_ * x - w_;
    grad.noalias() = E_.transpose() * r;
    grad *= inv_n;
    return 0.5 * inv_n * r.squaredNorm();
  }

  double value(const Vector& x) const {
    return 0.5 * (E_ * x - w_).squaredNorm() / static_cast<double>(E_.rows());
  }

 private:
  // Minimum-norm solution of the normal equations E^T E x = E^T w via a
  // complete orthogonal decomposition of E, which avoids squaring cond(E).
  void solve_reference() {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(E_);
    x_star_ = cod.solve(w_);
    if (!x_star_.allFinite()) {
      Matrix H = E_.transpose() * E_;
      H.diagonal().array() += 1e-12;
      Eigen::LLT<Matrix> llt(H);
      if (llt.info() != Eigen::Success) throw NumericalError("normal equations factorization failed");
      x_star_ = llt.solve(E_.transpose() * w_);
      if (!x_star_.allFinite()) throw NumericalError("normal equations solve produced non-finite values");
    }
    f_star_ = value(x_star_);
  }

  Matrix E_;
  Vector w_;
  std::uint64_t seed_;
  double L_ = 0.0;
  double f_star_ = 0.0;
  Vector x_star_;
};

inline LeastSquaresInstance least_squares_new(std::size_t N, std::size_t n, std::uint64_t seed) {
  return LeastSquaresInstance::generate(N, n, seed);
}

inline double smoothness_constant(const LeastSquaresInstance& inst) { return inst.smoothness(); }
inline double optimal_value(const LeastSquaresInstance& inst) { return inst.optimal_value(); }

/// Wraps a shared instance as an oracle carrying L, f* and x*.
inline ProblemOracle make_oracle(std::shared_ptr<const LeastSquaresInstance> inst) {
  const auto n = inst->dimension();
  const double L = inst->smoothness();
  const double fs = inst->optimal_value();
  Vector xs = inst->optimal_point();
  return ProblemOracle(
      n, [inst = std::move(inst)](const Vector& x, Vector& g) { return inst->value_grad(x, g); }, L,
      fs, std::move(xs));
}

// ---------------------------------------------------------------------------
// Sampled checks of the oracle assumptions.
// ---------------------------------------------------------------------------

struct SampledCheck {
  std::size_t samples = 0;
  double worst = 0.0;  // largest observed violation (<= 0 means satisfied)
  bool passed = true;
};

/// ||grad f(x) - grad f(y)|| <= (1 + 1e-8) L ||x - y|| on random pairs.
inline SampledCheck check_lipschitz_gradient(const ProblemOracle& f, std::size_t pairs,
                                             std::uint64_t seed, double radius = 1.0) {
  NormalStream rs(seed);
  const auto n = static_cast<Eigen::Index>(f.dimension());
  SampledCheck out;
  out.worst = -std::numeric_limits<double>::infinity();
  Vector x(n), y(n), gx, gy;
  for (std::size_t s = 0; s < pairs; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = radius * rs.next();
      y[i] = radius * rs.next();
    }
    f.value_grad(x, gx);
    f.value_grad(y, gy);
    const double lhs = (gx - gy).norm();
    const double rhs = (1.0 + 1e-8) * f.smoothness() * (x - y).norm();
    out.worst = std::max(out.worst, lhs - rhs);
    ++out.samples;
  }
  out.passed = out.worst <= 0.0;
  return out;
}

/// f(y) >= f(x) + <grad f(x), y - x> - 1e-8 (1 + |f(x)|) on random pairs.
inline SampledCheck check_convexity(const ProblemOracle& f, std::size_t pairs, std::uint64_t seed,
                                    double radius = 1.0) {
  NormalStream rs(seed);
  const auto n = static_cast<Eigen::Index>(f.dimension());
  SampledCheck out;
  out.worst = -std::numeric_limits<double>::infinity();
  Vector x(n), y(n), gx, gy;
  for (std::size_t s = 0; s < pairs; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = radius * rs.next();
      y[i] = radius * rs.next();
    }
    const double fx = f.value_grad(x, gx);
    const double fy = f.value_grad(y, gy);
    const double violation = (fx + gx.dot(y - x) - 1e-8 * (1.0 + std::abs(fx))) - fy;
    out.worst = std::max(out.worst, violation);
    ++out.samples;
  }
  out.passed = out.worst <= 0.0;
  return out;
}

}  // namespace apbm
