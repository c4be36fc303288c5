#pragma once

// Command-line front end for the benchmark experiments.
//
//   run     one solver, one trace
//   race    GD, PBM(m), AGD, APBM(m) on a shared instance
//   sweep   final residual over a step-multiplier grid
//   verify  invariant suite (bounds, reductions, oracle equivalences)
//
// Exit codes: 0 success, 1 diverged `run`, 2 invalid flags or unusable
// output directory, 3 verify failure.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "apbm/bench.hpp"
#include "apbm/solvers.hpp"
#include "apbm/verify.hpp"

namespace apbm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDiverged = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitVerifyFailed = 3;

/// Flag values after parsing; defaults give the 800x800 seed-1 setup.
struct CliCommand {
  std::string subcommand;
  std::size_t N = 800;
  std::size_t n = 800;
  std::uint64_t seed = 1;
  std::vector<std::string> algos;
  std::string model = "cutting-plane";
  std::size_t m = 15;
  bool m_given = false;
  std::optional<double> floor;
  double alpha = 1.0;
  double alpha_min = 0.25;
  double alpha_max = 4.0;
  double alpha_step = 0.25;
  std::size_t iters = 2000;
  std::optional<std::size_t> restart;
  double tol = 1e-10;
  std::optional<double> grad_tol;
  std::string out_dir = "out";
  std::size_t record_every = 1;
  std::string format = "csv";
  std::size_t threads = 0;
  bool quick = false;
  std::string config_path;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Pulls "--config <path>" out of argv and appends JSON keys that were not
// given explicitly, so the command line always wins.
inline std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") path = args[i + 1];
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("--config: invalid JSON in '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("--config: top-level JSON value must be an object");

  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a);

  std::vector<std::string> out = args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (flag == "--config" || given.count(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
      continue;
    }
    if (value.is_array()) {
      for (const auto& v : value) {
        out.push_back(flag);
        out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      continue;
    }
    out.push_back(flag);
    out.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  return out;
}

inline std::optional<BundleConfig> bundle_for(const CliCommand& c, Algorithm a) {
  if (!is_bundle_method(a)) return std::nullopt;
  BundleConfig b;
  b.variant = parse_model_variant(c.model);
  b.capacity = c.m;
  b.floor = c.floor;
  return b;
}

inline SolverConfig solver_config(const CliCommand& c, Algorithm a) {
  SolverConfig cfg = make_config(a, c.alpha, bundle_for(c, a));
  cfg.max_iterations = c.iters;
  cfg.dual_tolerance = c.tol;
  cfg.grad_tolerance = c.grad_tol;
  cfg.record_every = c.record_every;
  if (c.restart && is_accelerated(a)) cfg.restart_period = c.restart;
  return cfg;
}

// Flag-level validation; every message names the offending flag.
inline void validate(const CliCommand& c, CLI::App* sub) {
  auto given = [&](const char* name) { return sub->count(name) > 0; };
  if (c.subcommand == "verify") return;
  if (c.N < 1) throw UsageError("--N must be positive");
  if (c.n < 1) throw UsageError("--n must be positive");
  if (c.iters < 1 && c.subcommand != "run") throw UsageError("--iters must be positive");
  if (c.record_every < 1) throw UsageError("--record-every must be positive");
  if (!(c.alpha > 0.0)) throw UsageError("--alpha must be positive");
  if (!(c.tol > 0.0)) throw UsageError("--tol must be positive");
  if (c.grad_tol && !(*c.grad_tol > 0.0)) throw UsageError("--grad-tol must be positive");
  if (c.m < 1) throw UsageError("--m must be at least 1");
  if (c.restart && *c.restart < 1) throw UsageError("--restart must be positive");
  try {
    (void)parse_model_variant(c.model);
  } catch (const InvalidArgument&) {
    throw UsageError("--model must be one of polyak, cutting-plane, polyak-cutting-plane, two-cut");
  }
  if (c.floor && !uses_floor(parse_model_variant(c.model)))
    throw UsageError("--floor only applies to --model polyak or polyak-cutting-plane");

  std::vector<Algorithm> algos;
  for (const auto& a : c.algos) {
    try {
      algos.push_back(parse_algorithm(a));
    } catch (const InvalidArgument&) {
      throw UsageError("--algo must be one of gd, agd, pbm, apbm (got '" + a + "')");
    }
  }
  if (c.subcommand == "run" && algos.size() > 1) throw UsageError("--algo accepts one value for run");
  const bool any_bundle = std::any_of(algos.begin(), algos.end(), is_bundle_method);
  const bool any_accel = std::any_of(algos.begin(), algos.end(), is_accelerated);
  if (c.subcommand == "run" || (c.subcommand == "sweep" && !algos.empty())) {
    if (!any_bundle && (given("--model") || given("--m") || given("--floor")))
      throw UsageError("--model/--m/--floor require --algo pbm or apbm");
    if (!any_accel && given("--restart")) throw UsageError("--restart requires --algo agd or apbm");
  }
  if (c.subcommand == "sweep") {
    if (given("--alpha")) throw UsageError("--alpha conflicts with sweep; use --alpha-min/--alpha-max/--alpha-step");
    if (!(c.alpha_min > 0.0)) throw UsageError("--alpha-min must be positive");
    if (!(c.alpha_step > 0.0)) throw UsageError("--alpha-step must be positive");
    if (c.alpha_max < c.alpha_min) throw UsageError("--alpha-max must be >= --alpha-min");
  }
  if (c.format != "csv" && c.format != "json") throw UsageError("--format must be csv or json");
}

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("--out-dir '" + dir + "' is not writable");
  const fs::path probe = fs::path(dir) / ".apbm_write_probe";
  {
    std::ofstream p(probe);
    if (!p) throw UsageError("--out-dir '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
  return fs::path(dir);
}

inline void write_trace(const std::filesystem::path& base, const std::string& format,
                        const Trace& trace) {
  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : trace.records) arr.push_back(record_json(r));
    std::ofstream(base.string() + ".json") << arr.dump(2) << '\n';
  } else {
    std::ofstream os(base.string() + ".csv");
    write_trace_csv(os, trace.records);
  }
}

inline std::size_t thread_count(const CliCommand& c) {
  if (c.threads > 0) return c.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline int do_run(const CliCommand& c, std::ostream& out) {
  const Algorithm algo = parse_algorithm(c.algos.empty() ? "apbm" : c.algos.front());
  const InstanceSpec spec{"least_squares", c.N, c.n, c.seed};
  SolverConfig cfg = solver_config(c, algo);
  const auto dir = prepare_out_dir(c.out_dir);
  auto inst = build_instance(spec);
  const ProblemOracle oracle = make_oracle(inst);
  std::vector<ExperimentRun> runs = convergence_experiment(oracle, {cfg}, c.iters);
  write_trace(dir / runs.front().label, c.format, runs.front().trace);
  std::ofstream(dir / "summary.json") << summary_json(spec, oracle, runs).dump(2) << '\n';
  const auto& last = runs.front().trace.last();
  out << runs.front().label << ": k=" << last.k << " residual=" << last.residual
      << " status=" << to_string(last.status) << '\n';
  return runs.front().trace.status == RunStatus::Diverged ? kExitDiverged : kExitOk;
}

inline int do_race(const CliCommand& c, std::ostream& out) {
  const InstanceSpec spec{"least_squares", c.N, c.n, c.seed};
  std::vector<SolverConfig> cfgs;
  if (c.algos.empty()) {
    for (auto a : {Algorithm::GD, Algorithm::PBM, Algorithm::AGD, Algorithm::APBM})
      cfgs.push_back(solver_config(c, a));
  } else {
    for (const auto& a : c.algos) cfgs.push_back(solver_config(c, parse_algorithm(a)));
  }
  const auto dir = prepare_out_dir(c.out_dir);
  auto inst = build_instance(spec);
  const ProblemOracle oracle = make_oracle(inst);
  const auto runs = convergence_experiment(oracle, cfgs, c.iters);

  std::ofstream combined(dir / "race.csv");
  combined << "label," << kTraceHeader << '\n';
  for (const auto& r : runs) {
    write_trace(dir / r.label, c.format, r.trace);
    std::ostringstream body;
    write_trace_csv(body, r.trace.records);
    std::istringstream lines(body.str());
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) combined << r.label << ',' << line << '\n';
    const auto& last = r.trace.last();
    out << r.label << ": k=" << last.k << " residual=" << last.residual
        << " status=" << to_string(last.status);
    if (r.bounds) out << " bounds=" << (r.bounds->passed() ? "ok" : "VIOLATED");
    out << '\n';
  }
  std::ofstream(dir / "summary.json") << summary_json(spec, oracle, runs).dump(2) << '\n';
  return kExitOk;
}

inline int do_sweep(const CliCommand& c, std::ostream& out) {
  const InstanceSpec spec{"least_squares", c.N, c.n, c.seed};
  std::vector<SolverConfig> cfgs;
  if (c.algos.empty()) {
    CliCommand pair = c;
    if (!c.m_given) pair.m = 10;
    cfgs.push_back(solver_config(pair, Algorithm::AGD));
    cfgs.push_back(solver_config(pair, Algorithm::APBM));
  } else {
    for (const auto& a : c.algos) cfgs.push_back(solver_config(c, parse_algorithm(a)));
  }
  const auto grid = alpha_grid(c.alpha_min, c.alpha_max, c.alpha_step);
  const auto dir = prepare_out_dir(c.out_dir);
  auto inst = build_instance(spec);
  const ProblemOracle oracle = make_oracle(inst);
  const auto records = robustness_sweep(oracle, cfgs, grid, c.iters, thread_count(c));
  if (c.format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
      nlohmann::json e{{"algorithm", std::string(to_string(r.algorithm))},
                       {"m", r.m},
                       {"alpha", r.alpha},
                       {"status", std::string(to_string(r.status))}};
      if (r.final_residual) e["final_residual"] = *r.final_residual;
      else e["final_residual"] = std::string(kDivergedSentinel);
      arr.push_back(std::move(e));
    }
    std::ofstream(dir / "sweep.json") << arr.dump(2) << '\n';
  } else {
    std::ofstream os(dir / "sweep.csv");
    write_sweep_csv(os, records);
  }
  for (const auto& r : records) {
    out << to_string(r.algorithm) << " m=" << r.m << " alpha=" << r.alpha << ": ";
    if (r.final_residual) out << *r.final_residual;
    else out << kDivergedSentinel;
    out << '\n';
  }
  return kExitOk;
}

inline int do_verify(const CliCommand& c, std::ostream& out) {
  const VerifyReport rep = run_verify({c.quick}, &out);
  out << (rep.passed() ? "verify: all checks passed" : "verify: FAILED") << '\n';
  return rep.passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace detail

/// Parses `args` (args[0] is the program name) and runs the subcommand.
inline int parse_and_dispatch(const std::vector<std::string>& raw_args, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  CLI::App app{"Accelerated proximal bundle method benchmarks", "apbm_bench"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CliCommand c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "JSON file with flag values (flags on the command line win)");
  };
  auto add_instance = [&](CLI::App* sub) {
    sub->add_option("--N", c.N, "Number of samples (rows of E)")->capture_default_str();
    sub->add_option("--n", c.n, "Problem dimension (columns of E)")->capture_default_str();
    sub->add_option("--seed", c.seed, "Instance seed")->capture_default_str();
  };
  auto add_solver = [&](CLI::App* sub, bool with_alpha) {
    sub->add_option("--algo", c.algos, "Algorithm(s): gd, agd, pbm, apbm");
    sub->add_option("--model", c.model, "Bundle model: polyak, cutting-plane, polyak-cutting-plane, two-cut")
        ->capture_default_str();
    sub->add_option("--m", c.m, "Bundle capacity")->capture_default_str();
    sub->add_option("--floor", c.floor, "Lower bound for the Polyak models (default: f*)");
    if (with_alpha) sub->add_option("--alpha", c.alpha, "Step multiplier, gamma = alpha / L")->capture_default_str();
    sub->add_option("--iters", c.iters, "Outer iterations")->capture_default_str();
    sub->add_option("--restart", c.restart, "Fixed restart period (agd/apbm)");
    sub->add_option("--tol", c.tol, "Dual subproblem tolerance")->capture_default_str();
    sub->add_option("--grad-tol", c.grad_tol, "Stop once ||grad f|| falls below this value");
  };
  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--record-every", c.record_every, "Trace decimation")->capture_default_str();
    sub->add_option("--format", c.format, "Trace format: csv or json")->capture_default_str();
  };

  CLI::App* run_cmd = app.add_subcommand("run", "Run one solver and write its trace");
  add_common(run_cmd);
  add_instance(run_cmd);
  add_solver(run_cmd, true);
  add_output(run_cmd);

  CLI::App* race_cmd = app.add_subcommand("race", "Convergence race (default GD, PBM, AGD, APBM)");
  add_common(race_cmd);
  add_instance(race_cmd);
  add_solver(race_cmd, true);
  add_output(race_cmd);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Final residual over a step-multiplier grid");
  add_common(sweep_cmd);
  add_instance(sweep_cmd);
  add_solver(sweep_cmd, true);
  add_output(sweep_cmd);
  sweep_cmd->add_option("--alpha-min", c.alpha_min, "Smallest alpha")->capture_default_str();
  sweep_cmd->add_option("--alpha-max", c.alpha_max, "Largest alpha")->capture_default_str();
  sweep_cmd->add_option("--alpha-step", c.alpha_step, "Alpha grid spacing")->capture_default_str();
  sweep_cmd->add_option("--threads", c.threads, "Worker threads (default: hardware concurrency)")
      ->envname("BUNDLE_ACCEL_THREADS");

  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the invariant suite");
  add_common(verify_cmd);
  verify_cmd->add_flag("--quick", c.quick, "Small instances and fewer iterations");

  std::vector<std::string> args;
  try {
    args = detail::merge_config(raw_args);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  CLI::App* sub = app.get_subcommands().front();
  c.subcommand = sub->get_name();
  c.m_given = c.subcommand == "sweep" && sub->count("--m") > 0;
  try {
    detail::validate(c, sub);
    if (c.subcommand == "run") return detail::do_run(c, out);
    if (c.subcommand == "race") return detail::do_race(c, out);
    if (c.subcommand == "sweep") return detail::do_sweep(c, out);
    return detail::do_verify(c, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}

inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  return parse_and_dispatch(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace apbm::cli
