#pragma once

// Scripted experiments: each draws `realizations` clouds with seeds
// realization_seed(master_seed, index), runs them on a worker pool, reduces
// the results in index order and writes its files into one directory.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "collemit/config.hpp"

namespace collemit {

struct RunOptions {
  std::filesystem::path out_dir = "out";
  std::size_t threads = 1;
  /// Run only this realization index (same seed as in the full run).
  std::optional<std::size_t> replay_index;
  /// Progress lines; nullptr for silence.
  std::ostream* log = nullptr;
};

struct RunResult {
  /// Also written to <out_dir>/summary.json. Holds a flat "metrics" object of
  /// scalar results used by sweeps.
  nlohmann::json summary;
};

/// Dispatches on config.experiment. Throws ConfigError for inconsistent
/// settings and NumericalError (with the realization seed) for solver
/// failures.
RunResult run(const SimulationConfig& config, const RunOptions& options);

RunResult run_decay(const SimulationConfig& config, const RunOptions& options);
RunResult run_spectrum(const SimulationConfig& config, const RunOptions& options);
RunResult run_angular(const SimulationConfig& config, const RunOptions& options);
RunResult run_raman(const SimulationConfig& config, const RunOptions& options);

/// One sub-run per swept value in <out_dir>/point_NNN plus sweep.csv with one
/// row of metrics per point.
RunResult run_sweep(const SimulationConfig& config, const RunOptions& options);

}  // namespace collemit
