#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "apbm/common.hpp"
#include "apbm/invariants.hpp"
#include "apbm/problem.hpp"
#include "apbm/solvers.hpp"
#include "apbm/trace.hpp"

namespace apbm {

// ---------------------------------------------------------------------------
// Instance and config serialization
// ---------------------------------------------------------------------------

struct InstanceSpec {
  std::string kind = "least_squares";
  std::size_t N = 800;
  std::size_t n = 800;
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const InstanceSpec& s) {
  j = nlohmann::json{{"kind", s.kind}, {"N", s.N}, {"n", s.n}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, InstanceSpec& s) {
  s.kind = j.value("kind", std::string("least_squares"));
  if (s.kind != "least_squares") throw InvalidArgument("unsupported instance kind '" + s.kind + "'");
  j.at("N").get_to(s.N);
  j.at("n").get_to(s.n);
  j.at("seed").get_to(s.seed);
  detail::require(s.N >= 1 && s.n >= 1, "instance sizes must be positive");
}

inline std::shared_ptr<const LeastSquaresInstance> build_instance(const InstanceSpec& spec) {
  detail::require(spec.kind == "least_squares", "unsupported instance kind '" + spec.kind + "'");
  return std::make_shared<const LeastSquaresInstance>(
      LeastSquaresInstance::generate(spec.N, spec.n, spec.seed));
}

inline void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = nlohmann::json{{"algorithm", std::string(to_string(c.algorithm))},
                     {"alpha", c.alpha},
                     {"max_iterations", c.max_iterations},
                     {"dual_tolerance", c.dual_tolerance},
                     {"dual_max_iterations", c.dual_max_iterations},
                     {"dual_accelerated", c.dual_accelerated},
                     {"record_every", c.record_every}};
  if (c.bundle) {
    j["model"] = std::string(to_string(c.bundle->variant));
    j["m"] = c.bundle->capacity;
    if (c.bundle->floor) j["floor"] = *c.bundle->floor;
  }
  if (c.restart_period) j["restart_period"] = *c.restart_period;
  if (c.grad_tolerance) j["grad_tolerance"] = *c.grad_tolerance;
}

inline void from_json(const nlohmann::json& j, SolverConfig& c) {
  c = SolverConfig{};
  c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  c.alpha = j.value("alpha", 1.0);
  c.max_iterations = j.value("max_iterations", std::size_t{2000});
  c.dual_tolerance = j.value("dual_tolerance", 1e-10);
  c.dual_max_iterations = j.value("dual_max_iterations", std::size_t{50000});
  c.dual_accelerated = j.value("dual_accelerated", true);
  c.record_every = j.value("record_every", std::size_t{1});
  if (is_bundle_method(c.algorithm)) {
    BundleConfig b;
    b.variant = parse_model_variant(j.value("model", std::string("cutting-plane")));
    b.capacity = j.value("m", std::size_t{15});
    if (j.contains("floor")) b.floor = j.at("floor").get<double>();
    c.bundle = b;
  }
  if (j.contains("restart_period")) c.restart_period = j.at("restart_period").get<std::size_t>();
  if (j.contains("grad_tolerance")) c.grad_tolerance = j.at("grad_tolerance").get<double>();
  c.validate();
}

/// Short human-readable tag such as "apbm-cutting-plane-m15".
inline std::string config_label(const SolverConfig& c) {
  std::string s(to_string(c.algorithm));
  if (c.bundle) {
    s += "-";
    s += to_string(c.bundle->variant);
    if (c.bundle->variant != ModelVariant::Polyak && c.bundle->variant != ModelVariant::TwoCut)
      s += "-m" + std::to_string(c.bundle->capacity);
  }
  if (c.restart_period) s += "-restart" + std::to_string(*c.restart_period);
  return s;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument("malformed number '" + std::string(s) + "' in CSV");
  return v;
}

inline std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument("malformed integer '" + std::string(s) + "' in CSV");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline constexpr std::string_view kTraceHeader = "k,f,residual,grad_norm,elapsed_ms,inner_iters,status";
inline constexpr std::string_view kSweepHeader = "algorithm,m,alpha,final_residual,status";
inline constexpr std::string_view kDivergedSentinel = "diverged";

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& records) {
  os << kTraceHeader << '\n';
  for (const auto& r : records) {
    os << r.k << ',' << detail::format_double(r.f_value) << ',';
    if (r.status == RunStatus::Diverged) os << kDivergedSentinel;
    else os << detail::format_double(r.residual);
    os << ',' << detail::format_double(r.grad_norm) << ',' << detail::format_double(r.elapsed_ms)
       << ',' << r.inner_iters << ',' << to_string(r.status) << '\n';
  }
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader)
    throw InvalidArgument("trace CSV header mismatch");
  std::vector<TraceRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 7) throw InvalidArgument("trace CSV row has wrong column count");
    TraceRecord r;
    r.k = detail::parse_size(cells[0]);
    r.f_value = detail::parse_double(cells[1]);
    r.residual = cells[2] == kDivergedSentinel ? std::numeric_limits<double>::infinity()
                                               : detail::parse_double(cells[2]);
    r.grad_norm = detail::parse_double(cells[3]);
    r.elapsed_ms = detail::parse_double(cells[4]);
    r.inner_iters = detail::parse_size(cells[5]);
    r.status = parse_run_status(cells[6]);
    out.push_back(r);
  }
  return out;
}

struct SweepRecord {
  Algorithm algorithm = Algorithm::GD;
  std::size_t m = 0;  // 0 for the gradient methods
  double alpha = 1.0;
  std::optional<double> final_residual;  // empty when the run diverged
  RunStatus status = RunStatus::Capped;
};

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  os << kSweepHeader << '\n';
  for (const auto& r : records) {
    os << to_string(r.algorithm) << ',' << r.m << ',' << detail::format_double(r.alpha) << ',';
    if (r.final_residual) os << detail::format_double(*r.final_residual);
    else os << kDivergedSentinel;
    os << ',' << to_string(r.status) << '\n';
  }
}

inline std::vector<SweepRecord> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSweepHeader) throw InvalidArgument("sweep CSV header mismatch");
  std::vector<SweepRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 5) throw InvalidArgument("sweep CSV row has wrong column count");
    SweepRecord r;
    r.algorithm = parse_algorithm(cells[0]);
    r.m = detail::parse_size(cells[1]);
    r.alpha = detail::parse_double(cells[2]);
    if (cells[3] != kDivergedSentinel) r.final_residual = detail::parse_double(cells[3]);
    r.status = parse_run_status(cells[4]);
    out.push_back(r);
  }
  return out;
}

/// Residual clamped from below for log-scale plotting.
inline double plot_residual(double residual) { return std::max(residual, 1e-16); }

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// GD, PBM(m), AGD, APBM(m) with cutting-plane bundles.
inline std::vector<SolverConfig> standard_quartet(std::size_t m = 15, double alpha = 1.0) {
  BundleConfig cp{ModelVariant::CuttingPlane, m, std::nullopt};
  return {make_config(Algorithm::GD, alpha), make_config(Algorithm::PBM, alpha, cp),
          make_config(Algorithm::AGD, alpha), make_config(Algorithm::APBM, alpha, cp)};
}

inline std::vector<double> alpha_grid(double lo = 0.25, double hi = 4.0, double step = 0.25) {
  detail::require(lo > 0.0, "alpha grid must be strictly positive");
  detail::require(step > 0.0 && hi >= lo, "alpha grid needs step > 0 and max >= min");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

struct ExperimentRun {
  std::string label;
  SolverConfig config;
  Trace trace;
  std::optional<BoundVerdict> bounds;  // present only where the bounds apply
};

/// Runs every config for `iters` iterations from a shared x0 (zero by default).
inline std::vector<ExperimentRun> convergence_experiment(const ProblemOracle& oracle,
                                                         const std::vector<SolverConfig>& configs,
                                                         std::size_t iters,
                                                         std::optional<Vector> x0 = std::nullopt) {
  const Vector start = x0.value_or(Vector::Zero(static_cast<Eigen::Index>(oracle.dimension())));
  std::vector<ExperimentRun> out;
  for (const auto& base : configs) {
    SolverConfig cfg = base;
    cfg.max_iterations = iters;
    ExperimentRun r{config_label(cfg), cfg, {}, std::nullopt};
    if (bounds_apply(cfg) && oracle.x_star()) {
      BoundMonitor monitor(oracle, start);
      r.trace = run(cfg, oracle, start, std::ref(monitor));
      r.bounds = monitor.verdict();
    } else {
      r.trace = run(cfg, oracle, start);
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Final residual of every (config, alpha) cell. Cells run on up to `threads`
/// workers; output order is config-major, alpha-minor.
inline std::vector<SweepRecord> robustness_sweep(const ProblemOracle& oracle,
                                                 const std::vector<SolverConfig>& configs,
                                                 const std::vector<double>& alphas, std::size_t iters,
                                                 std::size_t threads = 1) {
  for (double a : alphas) detail::require(a > 0.0, "alpha grid must be strictly positive");
  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(oracle.dimension()));
  std::vector<SweepRecord> out(configs.size() * alphas.size());
  auto cell = [&](std::size_t idx) {
    const auto& base = configs[idx / alphas.size()];
    SolverConfig cfg = base.with_alpha(alphas[idx % alphas.size()]);
    cfg.max_iterations = iters;
    cfg.record_every = std::max<std::size_t>(iters, 1);
    const Trace t = run(cfg, oracle, x0);
    SweepRecord r;
    r.algorithm = cfg.algorithm;
    r.m = cfg.bundle ? cfg.bundle->capacity : 0;
    r.alpha = cfg.alpha;
    r.status = t.status;
    if (t.status != RunStatus::Diverged) r.final_residual = t.last().residual;
    out[idx] = r;
  };
  threads = std::max<std::size_t>(1, std::min(threads, out.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) cell(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < out.size(); i = next++) cell(i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

inline nlohmann::json record_json(const TraceRecord& r) {
  nlohmann::json j{{"k", r.k},          {"f", r.f_value},
                   {"grad_norm", r.grad_norm}, {"elapsed_ms", r.elapsed_ms},
                   {"inner_iters", r.inner_iters}, {"status", std::string(to_string(r.status))}};
  if (r.status == RunStatus::Diverged) j["residual"] = std::string(kDivergedSentinel);
  else j["residual"] = r.residual;
  return j;
}

inline nlohmann::json bound_json(const BoundCheck& b) {
  nlohmann::json j{{"checked", b.checked}, {"passed", b.passed}, {"worst_excess", b.worst_excess}};
  if (b.first_violation) j["first_violation"] = *b.first_violation;
  return j;
}

/// Config echo, terminal record and bound verdicts of every run.
inline nlohmann::json summary_json(const InstanceSpec& spec, const ProblemOracle& oracle,
                                   const std::vector<ExperimentRun>& runs) {
  nlohmann::json j;
  j["instance"] = spec;
  j["L"] = oracle.smoothness();
  if (oracle.f_star()) j["f_star"] = *oracle.f_star();
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json e{{"label", r.label},
                     {"config", r.config},
                     {"final", record_json(r.trace.last())},
                     {"oracle_calls", r.trace.oracle_calls},
                     {"dual_cap_hits", r.trace.dual_cap_hits}};
    if (r.bounds) {
      e["bounds"] = {{"corollary", bound_json(r.bounds->corollary)},
                     {"theorem", bound_json(r.bounds->theorem)}};
    } else {
      e["bounds"] = "skipped";
    }
    j["runs"].push_back(std::move(e));
  }
  return j;
}

}  // namespace apbm
