#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "apbm/common.hpp"
#include "apbm/models.hpp"
#include "apbm/problem.hpp"
#include "apbm/subproblem.hpp"
#include "apbm/trace.hpp"

namespace apbm {

enum class Algorithm { GD, AGD, PBM, APBM };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::GD: return "gd";
    case Algorithm::AGD: return "agd";
    case Algorithm::PBM: return "pbm";
    case Algorithm::APBM: return "apbm";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view tag) {
  if (tag == "gd") return Algorithm::GD;
  if (tag == "agd") return Algorithm::AGD;
  if (tag == "pbm") return Algorithm::PBM;
  if (tag == "apbm") return Algorithm::APBM;
  throw InvalidArgument("unknown algorithm '" + std::string(tag) + "'");
}

inline bool is_bundle_method(Algorithm a) { return a == Algorithm::PBM || a == Algorithm::APBM; }
inline bool is_accelerated(Algorithm a) { return a == Algorithm::AGD || a == Algorithm::APBM; }

struct BundleConfig {
  ModelVariant variant = ModelVariant::CuttingPlane;
  std::size_t capacity = 15;
  /// Lower bound on f for the Polyak variants; defaults to the oracle's f*.
  std::optional<double> floor;
};

struct SolverConfig {
  Algorithm algorithm = Algorithm::APBM;
  std::optional<BundleConfig> bundle;
  double alpha = 1.0;  // step gamma = alpha / L
  std::size_t max_iterations = 2000;
  std::optional<std::size_t> restart_period;
  double dual_tolerance = 1e-10;
  std::size_t dual_max_iterations = 50000;
  bool dual_accelerated = true;
  std::optional<double> grad_tolerance;
  std::size_t record_every = 1;

  void validate() const {
    detail::require(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
    detail::require(record_every >= 1, "record_every must be at least 1");
    detail::require(dual_tolerance > 0.0, "dual tolerance must be positive");
    if (is_bundle_method(algorithm)) {
      detail::require(bundle.has_value(), std::string(to_string(algorithm)) +
                                              " requires bundle parameters");
      detail::require(bundle->capacity >= 1, "bundle capacity m must be at least 1");
      if (!uses_floor(bundle->variant))
        detail::require(!bundle->floor.has_value(), "floor is only valid for the Polyak variants");
    } else {
      detail::require(!bundle.has_value(), std::string(to_string(algorithm)) +
                                               " does not take bundle parameters");
    }
    if (restart_period) {
      detail::require(is_accelerated(algorithm), "restart is only valid for agd and apbm");
      detail::require(*restart_period >= 1, "restart period must be positive");
    }
    if (grad_tolerance) detail::require(*grad_tolerance > 0.0, "gradient tolerance must be positive");
  }

  SolverConfig with_alpha(double a) const {
    SolverConfig c = *this;
    c.alpha = a;
    return c;
  }
};

inline SolverConfig make_config(Algorithm algorithm, double alpha = 1.0,
                                std::optional<BundleConfig> bundle = std::nullopt) {
  SolverConfig c;
  c.algorithm = algorithm;
  c.alpha = alpha;
  if (is_bundle_method(algorithm)) c.bundle = bundle.value_or(BundleConfig{});
  return c;
}

/// t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
inline double momentum_coefficient(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

/// x + ((t - 1) / t_next) (x - x_prev).
inline Vector extrapolate(const Vector& x, const Vector& x_prev, double t, double t_next) {
  const double beta = (t - 1.0) / t_next;
  if (beta == 0.0) return x;
  return x + beta * (x - x_prev);
}

/// Solver state between outer iterations. After iteration k:
/// x = x^k, x_prev = x^{k-1}, t_iterate = t_k, and (y, t) = (y^{k+1}, t_{k+1})
/// are ready for the next step.
struct SolverState {
  std::size_t k = 0;
  Vector x;
  Vector x_prev;
  Vector y;
  double t = 1.0;
  double t_iterate = 1.0;
  double gamma = 0.0;
  std::optional<Bundle> bundle;
  std::optional<ProxStep> last_prox;
  std::size_t oracle_calls = 0;
  std::size_t inner_iterations = 0;
  std::size_t dual_cap_hits = 0;

  // Oracle information at x (x^k), refreshed every iteration.
  double fx = 0.0;
  Vector gx;

  // Dual weights of the last subproblem, keyed by cut id.
  std::vector<std::uint64_t> dual_ids;
  Vector dual_lambda;
  DualSolver dual;

  bool diverged = false;
};

/// Resolves the floor default and rejects floors above a known optimum.
inline std::optional<BundleConfig> resolve_bundle(const SolverConfig& cfg, const ProblemOracle& oracle) {
  if (!cfg.bundle) return std::nullopt;
  BundleConfig b = *cfg.bundle;
  if (uses_floor(b.variant)) {
    if (!b.floor) {
      if (!oracle.f_star())
        throw InvalidArgument("Polyak variants need a floor when the optimal value is unknown");
      b.floor = *oracle.f_star();
    } else if (oracle.f_star() && *b.floor > *oracle.f_star()) {
      throw InvalidArgument("floor exceeds the known optimal value; the model would not be a minorant");
    }
  }
  return b;
}

inline SolverState init_state(const SolverConfig& cfg, const ProblemOracle& oracle, const Vector& x0) {
  cfg.validate();
  detail::require(static_cast<std::size_t>(x0.size()) == oracle.dimension(),
                  "initial point has wrong dimension");
  SolverState s;
  s.x = x0;
  s.x_prev = x0;
  s.y = x0;
  s.t = 1.0;
  s.t_iterate = 1.0;
  s.gamma = cfg.alpha / oracle.smoothness();
  if (auto b = resolve_bundle(cfg, oracle)) s.bundle.emplace(b->variant, b->capacity, b->floor);
  s.fx = oracle.value_grad(s.x, s.gx);
  s.diverged = !std::isfinite(s.fx) || !s.gx.allFinite();
  return s;
}

/// Fixed restart: discard momentum, keep the bundle.
inline void restart(SolverState& s) {
  s.t = 1.0;
  s.y = s.x;
  s.x_prev = s.x;
}

namespace detail {

inline Vector warm_weights(const SolverState& s, const std::vector<std::uint64_t>& ids) {
  Vector w = Vector::Zero(static_cast<Eigen::Index>(ids.size()));
  if (s.dual_ids.empty()) return w;
  std::unordered_map<std::uint64_t, double> prev;
  for (std::size_t i = 0; i < s.dual_ids.size(); ++i)
    prev.emplace(s.dual_ids[i], s.dual_lambda[static_cast<Eigen::Index>(i)]);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = prev.find(ids[i]);
    if (it != prev.end()) w[static_cast<Eigen::Index>(i)] = it->second;
  }
  return w;
}

// Updates the bundle with (f, g) at `center` and returns the proximal point.
inline Vector bundle_prox(SolverState& s, const SolverConfig& cfg, const Vector& center, double fc,
                          const Vector& gc) {
  const ProxStep* prev = s.last_prox ? &*s.last_prox : nullptr;
  s.bundle->update(center, fc, gc, prev);
  CutSystem qp = s.bundle->export_qp();
  Vector warm = warm_weights(s, qp.ids);
  DualOptions opts;
  opts.tolerance = cfg.dual_tolerance;
  opts.max_iterations = cfg.dual_max_iterations;
  opts.accelerated = cfg.dual_accelerated;
  DualResult r = s.dual.solve(qp.A, qp.b, center, s.gamma, opts, warm.sum() > 0.0 ? &warm : nullptr);
  s.inner_iterations += r.iterations;
  if (!r.converged) ++s.dual_cap_hits;
  s.dual_ids = std::move(qp.ids);
  s.dual_lambda = std::move(r.lambda);
  s.last_prox = ProxStep{center, r.x, s.gamma};
  return std::move(r.x);
}

}  // namespace detail

/// One outer iteration. Returns false if the run diverged.
inline bool step(SolverState& s, const SolverConfig& cfg, const ProblemOracle& oracle) {
  if (s.diverged) return false;
  Vector next;
  switch (cfg.algorithm) {
    case Algorithm::GD:
      // s.gx is the gradient at the current iterate.
      next = s.x - s.gamma * s.gx;
      ++s.oracle_calls;
      break;
    case Algorithm::PBM:
      next = detail::bundle_prox(s, cfg, s.x, s.fx, s.gx);
      ++s.oracle_calls;
      break;
    case Algorithm::AGD:
    case Algorithm::APBM: {
      Vector gy;
      const double fy = oracle.value_grad(s.y, gy);
      ++s.oracle_calls;
      if (!std::isfinite(fy) || !gy.allFinite()) {
        s.diverged = true;
        return false;
      }
      if (cfg.algorithm == Algorithm::AGD) {
        next = s.y - s.gamma * gy;
      } else {
        next = detail::bundle_prox(s, cfg, s.y, fy, gy);
      }
      break;
    }
  }

  ++s.k;
  s.x_prev = std::move(s.x);
  s.x = std::move(next);
  if (is_accelerated(cfg.algorithm)) {
    const double t_next = momentum_coefficient(s.t);
    s.y = extrapolate(s.x, s.x_prev, s.t, t_next);
    s.t_iterate = s.t;
    s.t = t_next;
    if (cfg.restart_period && s.k % *cfg.restart_period == 0) restart(s);
  }
  if (!s.x.allFinite()) {
    s.diverged = true;
    return false;
  }
  s.fx = oracle.value_grad(s.x, s.gx);
  if (!std::isfinite(s.fx) || !s.gx.allFinite()) {
    s.diverged = true;
    return false;
  }
  return true;
}

/// Called after initialization (k = 0) and after every outer iteration.
using IterationObserver = std::function<void(const SolverState&)>;

inline Trace run(const SolverConfig& cfg, const ProblemOracle& oracle, const Vector& x0,
                 const IterationObserver& observer = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  SolverState s = init_state(cfg, oracle, x0);
  const double f_star = oracle.f_star().value_or(std::numeric_limits<double>::quiet_NaN());
  const double blowup = 1e12 * (1.0 + std::abs(s.fx));

  Trace trace;
  auto record = [&](RunStatus status) {
    TraceRecord r;
    r.k = s.k;
    r.f_value = s.fx;
    r.residual = status == RunStatus::Diverged ? std::numeric_limits<double>::infinity() : s.fx - f_star;
    r.grad_norm = s.gx.size() ? s.gx.norm() : std::numeric_limits<double>::quiet_NaN();
    r.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    r.inner_iters = s.inner_iterations;
    r.status = status;
    trace.records.push_back(r);
  };

  RunStatus status = RunStatus::Running;
  if (s.diverged) status = RunStatus::Diverged;
  else if (cfg.grad_tolerance && s.gx.norm() <= *cfg.grad_tolerance) status = RunStatus::Converged;
  if (observer) observer(s);

  while (status == RunStatus::Running && s.k < cfg.max_iterations) {
    if (s.k % cfg.record_every == 0) record(RunStatus::Running);
    const bool ok = step(s, cfg, oracle);
    if (!ok || s.fx > blowup) {
      s.diverged = true;
      status = RunStatus::Diverged;
      break;
    }
    if (observer) observer(s);
    if (cfg.grad_tolerance && s.gx.norm() <= *cfg.grad_tolerance) status = RunStatus::Converged;
  }
  if (status == RunStatus::Running) status = RunStatus::Capped;
  if (!trace.records.empty() && trace.records.back().k == s.k) trace.records.pop_back();
  record(status);

  trace.status = status;
  trace.iterations = s.k;
  trace.oracle_calls = s.oracle_calls;
  trace.inner_iterations = s.inner_iterations;
  trace.dual_cap_hits = s.dual_cap_hits;
  trace.final_x = s.x;
  return trace;
}

}  // namespace apbm
