#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "apbm/common.hpp"

namespace apbm {

enum class RunStatus { Running, Converged, Diverged, Capped };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Converged: return "converged";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Capped: return "capped";
  }
  return "unknown";
}

inline RunStatus parse_run_status(std::string_view s) {
  if (s == "running") return RunStatus::Running;
  if (s == "converged") return RunStatus::Converged;
  if (s == "diverged") return RunStatus::Diverged;
  if (s == "capped") return RunStatus::Capped;
  throw InvalidArgument("unknown run status '" + std::string(s) + "'");
}

/// One sampled row of a solver run. A diverged row stores +inf as residual.
struct TraceRecord {
  std::size_t k = 0;
  double f_value = 0.0;
  double residual = 0.0;
  double grad_norm = 0.0;
  double elapsed_ms = 0.0;
  std::size_t inner_iters = 0;  // cumulative dual iterations
  RunStatus status = RunStatus::Running;
};

struct Trace {
  std::vector<TraceRecord> records;
  RunStatus status = RunStatus::Running;
  std::size_t iterations = 0;
  std::size_t oracle_calls = 0;
  std::size_t inner_iterations = 0;
  std::size_t dual_cap_hits = 0;
  Vector final_x;

  const TraceRecord& last() const { return records.back(); }
};

}  // namespace apbm
