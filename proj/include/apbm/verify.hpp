#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "apbm/bench.hpp"
#include "apbm/invariants.hpp"
#include "apbm/models.hpp"
#include "apbm/problem.hpp"
#include "apbm/solvers.hpp"
#include "apbm/subproblem.hpp"

namespace apbm {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckOutcome> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

/// Every model configuration the bound checks cover, with Polyak floors at f*.
inline std::vector<BundleConfig> bound_check_models() {
  return {
      {ModelVariant::Polyak, 1, std::nullopt},
      {ModelVariant::CuttingPlane, 1, std::nullopt},
      {ModelVariant::CuttingPlane, 5, std::nullopt},
      {ModelVariant::CuttingPlane, 15, std::nullopt},
      {ModelVariant::PolyakCuttingPlane, 5, std::nullopt},
      {ModelVariant::TwoCut, 1, std::nullopt},
  };
}

namespace detail {

template <typename Fn>
CheckOutcome timed(std::string name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  CheckOutcome out{std::move(name), false, {}, 0.0};
  try {
    auto [ok, detail] = fn();
    out.passed = ok;
    out.detail = std::move(detail);
  } catch (const std::exception& e) {
    out.passed = false;
    out.detail = std::string("exception: ") + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace detail

/// Both convergence bounds for APBM at alpha = 1 over instances x seeds x models.
inline CheckOutcome check_convergence_bounds(
    const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
    const std::vector<std::uint64_t>& seeds, std::size_t iters) {
  return detail::timed("convergence-bounds", [&]() -> std::pair<bool, std::string> {
    std::size_t runs = 0, points = 0;
    double worst_cor = -std::numeric_limits<double>::infinity();
    double worst_thm = worst_cor;
    std::ostringstream failures;
    bool ok = true;
    for (auto [N, n] : sizes) {
      for (auto seed : seeds) {
        auto inst = build_instance({"least_squares", N, n, seed});
        const ProblemOracle oracle = make_oracle(inst);
        const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(n));
        for (const auto& model : bound_check_models()) {
          SolverConfig cfg = make_config(Algorithm::APBM, 1.0, model);
          cfg.max_iterations = iters;
          cfg.record_every = iters;
          BoundMonitor monitor(oracle, x0);
          const Trace t = run(cfg, oracle, x0, std::ref(monitor));
          const auto& v = monitor.verdict();
          ++runs;
          points += v.corollary.checked;
          worst_cor = std::max(worst_cor, v.corollary.worst_excess);
          worst_thm = std::max(worst_thm, v.theorem.worst_excess);
          if (!v.passed() || t.status == RunStatus::Diverged || v.corollary.checked != iters + 1) {
            ok = false;
            failures << " [" << N << "x" << n << " seed " << seed << " " << config_label(cfg);
            if (v.corollary.first_violation) failures << " corollary@k=" << *v.corollary.first_violation;
            if (v.theorem.first_violation) failures << " theorem@k=" << *v.theorem.first_violation;
            failures << " status=" << to_string(t.status) << "]";
          }
        }
      }
    }
    std::ostringstream os;
    os << runs << " runs, " << points << " iterates; worst excess corollary " << worst_cor
       << ", theorem " << worst_thm << failures.str();
    return {ok, os.str()};
  });
}

/// Per-iterate distance between two solver configurations run side by side.
inline double max_stepwise_gap(const ProblemOracle& oracle, const SolverConfig& a,
                               const SolverConfig& b, std::size_t iters) {
  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(oracle.dimension()));
  std::vector<Vector> xs_a, xs_b;
  SolverConfig ca = a, cb = b;
  ca.max_iterations = cb.max_iterations = iters;
  ca.record_every = cb.record_every = iters;
  run(ca, oracle, x0, [&](const SolverState& s) { xs_a.push_back(s.x); });
  run(cb, oracle, x0, [&](const SolverState& s) { xs_b.push_back(s.x); });
  if (xs_a.size() != xs_b.size()) return std::numeric_limits<double>::infinity();
  double gap = 0.0;
  for (std::size_t i = 0; i < xs_a.size(); ++i) gap = std::max(gap, (xs_a[i] - xs_b[i]).norm());
  return gap;
}

/// APBM(cutting-plane, m=1) vs AGD and PBM(m=1) vs GD.
inline CheckOutcome check_reductions(std::size_t N, std::size_t n, std::uint64_t seed,
                                     std::size_t iters) {
  return detail::timed("reductions", [&]() -> std::pair<bool, std::string> {
    auto inst = build_instance({"least_squares", N, n, seed});
    const ProblemOracle oracle = make_oracle(inst);
    const BundleConfig single{ModelVariant::CuttingPlane, 1, std::nullopt};
    const double accel = max_stepwise_gap(oracle, make_config(Algorithm::APBM, 1.0, single),
                                          make_config(Algorithm::AGD, 1.0), iters);
    const double plain = max_stepwise_gap(oracle, make_config(Algorithm::PBM, 1.0, single),
                                          make_config(Algorithm::GD, 1.0), iters);
    std::ostringstream os;
    os << iters << " steps on " << N << "x" << n << ": max |x_apbm - x_agd| = " << accel
       << ", max |x_pbm - x_gd| = " << plain;
    return {accel <= 1e-10 && plain <= 1e-10, os.str()};
  });
}

struct RandomDualInstance {
  Matrix A;
  Vector b;
  Vector y;
  double step = 1.0;
};

/// M in [1, max_cuts], n in [1, max_dim], Gaussian data, step in [0.1, 2].
inline RandomDualInstance random_dual_instance(NormalStream& rs, std::size_t max_cuts,
                                               std::size_t max_dim) {
  const auto M = static_cast<Eigen::Index>(1 + static_cast<std::size_t>(rs.uniform() * max_cuts) % max_cuts);
  const auto n = static_cast<Eigen::Index>(1 + static_cast<std::size_t>(rs.uniform() * max_dim) % max_dim);
  RandomDualInstance d{Matrix(M, n), Vector(M), Vector(n), 0.1 + 1.9 * rs.uniform()};
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d.A(i, j) = rs.next();
  for (Eigen::Index i = 0; i < M; ++i) d.b[i] = rs.next();
  for (Eigen::Index j = 0; j < n; ++j) d.y[j] = rs.next();
  return d;
}

/// dual_solve vs qp_oracle_small, simplex feasibility, and ascent monotonicity.
inline CheckOutcome check_dual_solver(std::size_t instances, std::uint64_t seed) {
  return detail::timed("dual-solver", [&]() -> std::pair<bool, std::string> {
    NormalStream rs(seed);
    double worst_dx = 0.0, worst_sum = 0.0, worst_drop = 0.0;
    bool negative = false;
    for (std::size_t k = 0; k < instances; ++k) {
      const auto d = random_dual_instance(rs, 5, 8);
      DualOptions opts;
      opts.tolerance = 1e-12;
      const DualResult r = dual_solve(d.A, d.b, d.y, d.step, opts);
      const Vector xo = qp_oracle_small(d.A, d.b, d.y, d.step);
      worst_dx = std::max(worst_dx, (r.x - xo).norm());
      worst_sum = std::max(worst_sum, std::abs(r.lambda.sum() - 1.0));
      if ((r.lambda.array() < 0.0).any()) negative = true;

      DualOptions plain;
      plain.tolerance = 1e-12;
      plain.accelerated = false;
      plain.max_iterations = 2000;
      double prev = -std::numeric_limits<double>::infinity();
      plain.on_iterate = [&](const Vector& l) {
        const double q = dual_objective(d.A, d.b, d.y, d.step, l);
        worst_drop = std::max(worst_drop, prev - q);
        prev = q;
      };
      dual_solve(d.A, d.b, d.y, d.step, plain);
    }
    std::ostringstream os;
    os << instances << " instances: max |dx| = " << worst_dx << ", max |sum-1| = " << worst_sum
       << ", negative weights = " << (negative ? "yes" : "no") << ", max ascent drop = " << worst_drop;
    return {worst_dx <= 1e-8 && worst_sum <= 1e-12 && !negative && worst_drop <= 1e-12, os.str()};
  });
}

/// t_k >= (k+1)/2 and t_{k+1}(t_{k+1} - 1) = t_k^2 for k up to `count`.
inline CheckOutcome check_momentum_sequence(std::size_t count) {
  return detail::timed("momentum-sequence", [&]() -> std::pair<bool, std::string> {
    double t = 1.0;
    double worst_rel = 0.0;
    std::size_t bound_failures = 0;
    for (std::size_t k = 1; k <= count; ++k) {
      if (t < 0.5 * static_cast<double>(k + 1)) ++bound_failures;
      const double next = momentum_coefficient(t);
      worst_rel = std::max(worst_rel, std::abs(next * (next - 1.0) - t * t) / (t * t));
      t = next;
    }
    std::ostringstream os;
    os << count << " terms: lower-bound failures " << bound_failures << ", max recurrence rel err "
       << worst_rel;
    return {bound_failures == 0 && worst_rel <= 1e-9, os.str()};
  });
}

/// Minorant, lower-cut, convexity, exactness and aggregate checks along APBM
/// runs, one per model variant.
inline CheckOutcome check_model_invariants(std::size_t N, std::size_t n, std::uint64_t seed,
                                           std::size_t iters, std::size_t points_per_step) {
  return detail::timed("model-invariants", [&]() -> std::pair<bool, std::string> {
    auto inst = build_instance({"least_squares", N, n, seed});
    const ProblemOracle oracle = make_oracle(inst);
    const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(n));
    bool ok = true;
    std::ostringstream os;
    for (const auto& model : bound_check_models()) {
      SolverConfig cfg = make_config(Algorithm::APBM, 1.0, model);
      cfg.max_iterations = iters;
      cfg.record_every = iters;
      ModelInvariantMonitor monitor(oracle, x0, points_per_step, seed * 7919 + 17);
      run(cfg, oracle, x0, std::ref(monitor));
      const auto& rep = monitor.report();
      const bool enough = rep.minorant_samples >= 1000 && rep.lower_cut_samples >= 1000 &&
                          rep.convexity_samples >= 1000;
      ok = ok && rep.passed() && enough;
      os << " [" << config_label(cfg) << ": " << (rep.passed() && enough ? "ok" : "FAIL") << "; "
         << rep.summary() << "]";
    }
    return {ok, os.str()};
  });
}

/// Sampled smoothness/convexity, f* as a lower bound, and gradient vs central differences.
inline CheckOutcome check_oracle(std::size_t N, std::size_t n, std::uint64_t seed) {
  return detail::timed("oracle-assumptions", [&]() -> std::pair<bool, std::string> {
    auto inst = build_instance({"least_squares", N, n, seed});
    const ProblemOracle oracle = make_oracle(inst);
    const double radius = 1.0 + inst->optimal_point().norm() / std::sqrt(static_cast<double>(n));
    const auto lip = check_lipschitz_gradient(oracle, 100, seed + 1, radius);
    const auto cvx = check_convexity(oracle, 100, seed + 2, radius);

    NormalStream rs(seed + 3);
    const double fs = inst->optimal_value();
    double worst_floor = -std::numeric_limits<double>::infinity();
    Vector x(static_cast<Eigen::Index>(n));
    for (int s = 0; s < 1000; ++s) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = radius * rs.next();
      worst_floor = std::max(worst_floor, -(inst->value(x) - fs) - 1e-9 * (1.0 + std::abs(fs)));
    }

    double worst_fd = 0.0;
    Vector d(x.size()), g;
    for (int s = 0; s < 20; ++s) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = radius * rs.next();
        d[i] = rs.next();
      }
      d.normalize();
      oracle.value_grad(x, g);
      const double h = 1e-5 * (1.0 + x.norm());
      const double fd = (inst->value(x + h * d) - inst->value(x - h * d)) / (2.0 * h);
      const double an = g.dot(d);
      worst_fd = std::max(worst_fd, std::abs(fd - an) / std::max(1.0, std::abs(an)));
    }
    std::ostringstream os;
    os << N << "x" << n << " seed " << seed << ": lipschitz worst " << lip.worst << ", convexity worst "
       << cvx.worst << ", floor worst " << worst_floor << ", fd rel err " << worst_fd;
    return {lip.passed && cvx.passed && worst_floor <= 0.0 && worst_fd <= 1e-6, os.str()};
  });
}

struct VerifyOptions {
  bool quick = false;
};

/// The invariant suite behind the `verify` subcommand.
inline VerifyReport run_verify(const VerifyOptions& opt, std::ostream* log = nullptr) {
  VerifyReport rep;
  auto add = [&](CheckOutcome c) {
    if (log) {
      *log << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.seconds << " s): " << c.detail
           << '\n';
    }
    rep.checks.push_back(std::move(c));
  };
  if (opt.quick) {
    add(check_oracle(50, 50, 1));
    add(check_momentum_sequence(100000));
    add(check_dual_solver(50, 2024));
    add(check_reductions(50, 50, 1, 200));
    add(check_convergence_bounds({{50, 50}}, {1, 2}, 500));
    add(check_model_invariants(50, 50, 1, 100, 10));
  } else {
    add(check_oracle(100, 100, 1));
    add(check_oracle(200, 100, 2));
    add(check_momentum_sequence(1000000));
    add(check_dual_solver(200, 2024));
    add(check_reductions(100, 100, 1, 500));
    add(check_convergence_bounds({{50, 50}, {100, 100}, {200, 100}}, {1, 2, 3}, 2000));
    add(check_model_invariants(50, 50, 1, 200, 5));
  }
  return rep;
}

}  // namespace apbm
