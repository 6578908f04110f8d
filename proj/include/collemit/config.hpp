#pragma once

// Experiment configuration.
//
// Configs are JSON documents whose physical keys carry their unit in the name
// (sigma_um, gamma_per_s, t_max_us, delta_min_gamma, ...). Times without a
// unit suffix other than `_gamma_inv` are in units of 1/Gamma. Unknown keys
// are rejected so that a typo never silently falls back to a default.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "collemit/analysis.hpp"
#include "collemit/dynamics.hpp"
#include "collemit/ensemble.hpp"
#include "collemit/kernel.hpp"
#include "collemit/spectrum.hpp"

namespace collemit {

enum class Experiment { decay, spectrum, angular, raman, sweep };

Experiment parse_experiment(std::string_view name);
std::string_view experiment_name(Experiment e);

struct DecaySettings {
  double t_max = 6.0;  // 1/Gamma
  std::size_t points = 400;
  /// Trap widths to run in turn; empty means the cloud's own sigma_um.
  std::vector<Vec3> geometries;
  Propagator propagator = Propagator::eigen;
  TriExpOptions fit;
};

struct SpectrumSettings {
  double delta_min = -10.0;  // Gamma
  double delta_max = 10.0;
  std::size_t points = 2001;
  EigenHistogram::Axis hist_delta{-6.0, 6.0, 120};
  EigenHistogram::Axis hist_gamma{0.0, 6.0, 120};
};

struct AngularSettings {
  double t_max = 20.0;  // 1/Gamma
  std::size_t points = 1001;
  double forward_cone_rad = 0.3;
  /// Repeat on the doubled grid and require P to move by less than this.
  bool refine_check = true;
  double refine_tolerance = 1e-3;
};

/// Weak-drive comparison model; the Rabi frequency is a fraction of the
/// configured pulse amplitude.
struct EffectiveSettings {
  double omega_ratio = 1.0;
  double delta_e = 0.0;  // Gamma
  double gamma_s = 1.0;  // Gamma
};

struct RamanSettings {
  double t_max_us = 2.0;
  std::size_t points = 400;
  double probe_us = 2.0;
  /// Far-field map and collection probability of the emitted photon.
  bool radiation = true;
  double forward_cone_rad = 0.3;
  std::optional<EffectiveSettings> effective;
};

/// One swept key. `key` is a dotted path into the config document, with
/// numeric components indexing arrays (e.g. "cloud.sigma_um.2").
struct SweepSettings {
  Experiment target = Experiment::angular;
  std::string key;
  std::vector<double> values;
  /// Sweeping sigma_z with sigma_x = sigma_y = sqrt(V / sigma_z), V the
  /// product sigma_x sigma_y sigma_z of the base cloud.
  bool fixed_veff = false;
};

struct SimulationConfig {
  Experiment experiment = Experiment::decay;
  CloudSpec cloud;
  KernelMode kernel = KernelMode::full;
  bool interacting = true;
  std::optional<Pulse> pulse;
  std::size_t realizations = 1;
  std::uint64_t master_seed = 0;

  DecaySettings decay;
  SpectrumSettings spectrum;
  AngularSettings angular;
  RamanSettings raman;
  std::optional<SweepSettings> sweep;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses a config document. Missing keys take defaults; unknown keys and
/// ill-typed values raise ConfigError with the dotted key in the message.
SimulationConfig parse_config(const nlohmann::json& doc);
SimulationConfig load_config(const std::filesystem::path& path);

/// Canonical document: every field written, keys sorted. parse_config of the
/// result reproduces the config.
nlohmann::json to_json(const SimulationConfig& config);

/// 64-bit FNV-1a of the canonical document's compact dump.
std::uint64_t config_hash(const SimulationConfig& config);
std::string config_hash_hex(const SimulationConfig& config);

/// Copy of `config` with `key` set to `value` (and the transverse widths
/// rescaled when fixed_veff applies). Used by sweeps.
SimulationConfig with_override(const SimulationConfig& config,
                               std::string_view key, double value,
                               bool fixed_veff);

}  // namespace collemit
