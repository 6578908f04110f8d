#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "collemit/types.hpp"

namespace collemit {

/// Unit dipole of a Delta M = +1 transition, (x + i y)/sqrt(2).
CVec3 sigma_plus_dipole();

/// Trap and transition description. Lengths in micrometres, rates in s^-1.
struct CloudSpec {
  std::size_t n_atoms = 1;
  Vec3 sigma_um{1.0, 1.0, 1.0};
  double lambda_um = 0.78;
  double gamma_per_s = 2.0e7;
  CVec3 dipole = sigma_plus_dipole();
  Vec3 k_c_dir{0.0, 0.0, 1.0};
  /// Exclusion radius; unset means 0.01 * lambda.
  std::optional<double> min_separation_um;

  double k_e() const;  // um^-1
  double min_separation() const;
  Vec3 k_c() const { return k_e() * k_c_dir; }

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

struct AtomCloud {
  CloudSpec spec;
  std::vector<Vec3> positions;  // um
  std::uint64_t seed = 0;

  std::size_t size() const { return positions.size(); }
};

struct CloudStats {
  double v_eff;            // um^3
  double mean_separation;  // um
  double aspect;           // sigma_z / sigma_x
};

CloudStats cloud_stats(const CloudSpec& spec);
inline CloudStats cloud_stats(const AtomCloud& cloud) {
  return cloud_stats(cloud.spec);
}

/// Sink for non-fatal diagnostics; defaults to stderr.
using WarningSink = std::function<void(const std::string&)>;

/// Draws i.i.d. positions from the anisotropic Gaussian trap. Atoms landing
/// closer than the exclusion radius to an accepted atom are redrawn; after
/// `max_attempts` consecutive rejections for one atom the density is deemed
/// too high and NumericalError is thrown.
AtomCloud sample_cloud(const CloudSpec& spec, std::uint64_t seed,
                       const WarningSink& warn = {},
                       int max_attempts = 10000);

/// Cloud with explicitly given positions (tests, replay). Validates the spec
/// and the pair-distance invariant.
AtomCloud make_cloud(const CloudSpec& spec, std::vector<Vec3> positions);

/// Transverse width used by the far-field formulas: sqrt(sigma_x sigma_y).
double transverse_sigma(const CloudSpec& spec);

}  // namespace collemit
