#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "apbm/common.hpp"
#include "apbm/models.hpp"
#include "apbm/problem.hpp"
#include "apbm/solvers.hpp"

namespace apbm {

/// 2 L R2 / (k + 1)^2 with R2 = ||x0 - x*||^2.
inline double theoretical_bound(std::size_t k, double L, double R2) {
  detail::require(L > 0.0 && R2 >= 0.0, "theoretical_bound needs L > 0 and R2 >= 0");
  const double kp1 = static_cast<double>(k) + 1.0;
  return 2.0 * L * R2 / (kp1 * kp1);
}

/// L R2 / (2 t^2), the bound in terms of the actual momentum coefficient.
inline double momentum_bound(double t, double L, double R2) { return L * R2 / (2.0 * t * t); }

inline constexpr double kBoundRelSlack = 1e-6;
inline constexpr double kBoundAbsSlack = 1e-9;

struct BoundCheck {
  std::size_t checked = 0;
  bool passed = true;
  std::optional<std::size_t> first_violation;
  double worst_excess = -std::numeric_limits<double>::infinity();  // residual - slackened bound

  void observe(std::size_t k, double residual, double bound) {
    ++checked;
    const double excess = residual - (bound * (1.0 + kBoundRelSlack) + kBoundAbsSlack);
    worst_excess = std::max(worst_excess, excess);
    if (excess > 0.0 && passed) {
      passed = false;
      first_violation = k;
    }
  }
};

struct BoundVerdict {
  BoundCheck corollary;  // residual vs 2 L R2 / (k+1)^2, k >= 0
  BoundCheck theorem;    // residual vs L R2 / (2 t_k^2), k >= 1
  bool passed() const { return corollary.passed && theorem.passed; }
};

/// Observer checking both convergence bounds at every iteration.
class BoundMonitor {
 public:
  BoundMonitor(const ProblemOracle& oracle, const Vector& x0) : L_(oracle.smoothness()) {
    detail::require(oracle.f_star().has_value() && oracle.x_star().has_value(),
                    "bound checks need a reference optimum");
    f_star_ = *oracle.f_star();
    R2_ = (x0 - *oracle.x_star()).squaredNorm();
  }

  void operator()(const SolverState& s) {
    const double residual = s.fx - f_star_;
    verdict_.corollary.observe(s.k, residual, theoretical_bound(s.k, L_, R2_));
    if (s.k >= 1) verdict_.theorem.observe(s.k, residual, momentum_bound(s.t_iterate, L_, R2_));
  }

  const BoundVerdict& verdict() const { return verdict_; }
  double R2() const { return R2_; }

 private:
  double L_;
  double f_star_ = 0.0;
  double R2_ = 0.0;
  BoundVerdict verdict_;
};

/// Bound checks are only meaningful for APBM at gamma = 1/L without restart.
inline bool bounds_apply(const SolverConfig& cfg) {
  return cfg.algorithm == Algorithm::APBM && cfg.alpha == 1.0 && !cfg.restart_period;
}

// ---------------------------------------------------------------------------
// Model invariants along a bundle-method run: minorant, domination of the
// newest cut, convexity, exactness at retained sample points, and validity of
// the two-cut aggregate.
// ---------------------------------------------------------------------------
struct ModelInvariantReport {
  std::size_t minorant_samples = 0;
  std::size_t lower_cut_samples = 0;
  std::size_t convexity_samples = 0;
  std::size_t exactness_samples = 0;
  std::size_t aggregate_samples = 0;
  double minorant_worst = -std::numeric_limits<double>::infinity();
  double lower_cut_worst = -std::numeric_limits<double>::infinity();
  double convexity_worst = -std::numeric_limits<double>::infinity();
  double exactness_worst = 0.0;   // relative
  double aggregate_worst = 0.0;   // relative

  bool passed() const {
    return minorant_worst <= 0.0 && lower_cut_worst <= 0.0 && convexity_worst <= 0.0 &&
           exactness_worst <= 1e-10 && aggregate_worst <= 1e-10;
  }

  std::string summary() const {
    std::ostringstream os;
    os << "minorant " << minorant_samples << " pts worst " << minorant_worst << "; lower-cut "
       << lower_cut_samples << " pts worst " << lower_cut_worst << "; convexity " << convexity_samples
       << " pts worst " << convexity_worst << "; exactness " << exactness_samples << " pts worst rel "
       << exactness_worst << "; aggregate " << aggregate_samples << " checks worst rel "
       << aggregate_worst;
    return os.str();
  }
};

class ModelInvariantMonitor {
 public:
  /// `points_per_step` random points are drawn for each sampled check after
  /// every update; their spread follows the distance from x0 to x*.
  ModelInvariantMonitor(const ProblemOracle& oracle, const Vector& x0, std::size_t points_per_step,
                        std::uint64_t seed)
      : oracle_(&oracle), per_step_(points_per_step), rs_(seed) {
    scale_ = 1.0;
    if (oracle.x_star()) scale_ = std::max(1e-3, (x0 - *oracle.x_star()).norm());
  }

  void operator()(const SolverState& s) {
    if (!s.bundle || s.bundle->empty() || !s.last_prox) {
      if (s.bundle) previous_ = *s.bundle;
      return;
    }
    const Bundle& bundle = *s.bundle;
    const Vector& center = s.last_prox->center;  // point of the newest cut
    const auto newest = bundle.cuts().back().id;
    points_[newest] = center;

    Vector gc;
    const double fc = oracle_->value_grad(center, gc);
    const auto n = center.size();

    for (std::size_t i = 0; i < per_step_; ++i) {
      const Vector x = sample(center, n, i);
      Vector gx;
      const double fx = oracle_->value_grad(x, gx);
      const double mx = bundle.eval(x);
      report_.minorant_worst = std::max(report_.minorant_worst, mx - fx - 1e-9 * (1.0 + std::abs(fx)));
      ++report_.minorant_samples;

      const double cut = fc + gc.dot(x - center);
      report_.lower_cut_worst = std::max(report_.lower_cut_worst, cut - 1e-9 - mx);
      ++report_.lower_cut_samples;

      const Vector z = sample(center, n, i + per_step_);
      const double lam = rs_.uniform();
      const double lhs = bundle.eval(lam * x + (1.0 - lam) * z);
      const double rhs = lam * mx + (1.0 - lam) * bundle.eval(z);
      report_.convexity_worst = std::max(report_.convexity_worst, lhs - rhs - 1e-9);
      ++report_.convexity_samples;
    }

    for (const auto& c : bundle.cuts()) {
      auto it = points_.find(c.id);
      if (it == points_.end()) continue;  // aggregate cuts have no sample point
      const double fy = oracle_->value(it->second);
      const double my = bundle.eval(it->second);
      report_.exactness_worst =
          std::max(report_.exactness_worst, std::abs(my - fy) / (1.0 + std::abs(fy)));
      ++report_.exactness_samples;
    }
    for (auto it = points_.begin(); it != points_.end();) {
      const bool alive = std::any_of(bundle.cuts().begin(), bundle.cuts().end(),
                                     [&](const Cut& c) { return c.id == it->first; });
      it = alive ? std::next(it) : points_.erase(it);
    }

    if (bundle.variant() == ModelVariant::TwoCut && bundle.cuts().size() == 2 && previous_ &&
        !previous_->empty() && previous_point_) {
      const double before = previous_->eval(*previous_point_);
      const double after = bundle.cuts().front()(*previous_point_);
      report_.aggregate_worst =
          std::max(report_.aggregate_worst, std::abs(after - before) / (1.0 + std::abs(before)));
      ++report_.aggregate_samples;
    }
    previous_ = bundle;
    previous_point_ = s.last_prox->point;
  }

  const ModelInvariantReport& report() const { return report_; }

 private:
  Vector sample(const Vector& center, Eigen::Index n, std::size_t i) {
    // Alternate between a tight cloud around the newest sample point and a wide one.
    const double radius = (i % 2 == 0 ? 0.1 : 2.0) * scale_ / std::sqrt(static_cast<double>(n));
    Vector x(n);
    for (Eigen::Index j = 0; j < n; ++j) x[j] = center[j] + radius * rs_.next();
    return x;
  }

  const ProblemOracle* oracle_;
  std::size_t per_step_;
  NormalStream rs_;
  double scale_;
  std::map<std::uint64_t, Vector> points_;
  std::optional<Bundle> previous_;
  std::optional<Vector> previous_point_;
  ModelInvariantReport report_;
};

}  // namespace apbm
