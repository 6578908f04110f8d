#include "collemit/ensemble.hpp"

#include <cmath>
#include <iostream>

#include <fmt/core.h>

#include "collemit/error.hpp"
#include "collemit/rng.hpp"

namespace collemit {

CVec3 sigma_plus_dipole() {
  const double s = 1.0 / std::sqrt(2.0);
  return CVec3(cdouble(s, 0.0), cdouble(0.0, s), cdouble(0.0, 0.0));
}

double CloudSpec::k_e() const { return 2.0 * kPi / lambda_um; }

double CloudSpec::min_separation() const {
  return min_separation_um.value_or(0.01 * lambda_um);
}

void CloudSpec::validate() const {
  if (n_atoms < 1) throw ConfigError("cloud: n_atoms must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (!(sigma_um[a] > 0.0) || !std::isfinite(sigma_um[a]))
      throw ConfigError("cloud: sigma_um components must be positive");
  }
  if (!(lambda_um > 0.0)) throw ConfigError("cloud: lambda_um must be positive");
  if (!(gamma_per_s > 0.0))
    throw ConfigError("cloud: gamma_per_s must be positive");
  if (std::abs(dipole.squaredNorm() - 1.0) > 1e-12)
    throw ConfigError("cloud: dipole must have unit norm");
  if (std::abs(k_c_dir.norm() - 1.0) > 1e-12)
    throw ConfigError("cloud: k_c_dir must be a unit vector");
  if (min_separation_um && !(*min_separation_um >= 0.0))
    throw ConfigError("cloud: min_separation_um must be >= 0");
}

CloudStats cloud_stats(const CloudSpec& spec) {
  const Vec3& s = spec.sigma_um;
  const double v_eff = std::pow(2.0 * kPi, 1.5) * s.x() * s.y() * s.z();
  return {v_eff, std::cbrt(v_eff / static_cast<double>(spec.n_atoms)),
          s.z() / s.x()};
}

double transverse_sigma(const CloudSpec& spec) {
  return std::sqrt(spec.sigma_um.x() * spec.sigma_um.y());
}

AtomCloud sample_cloud(const CloudSpec& spec, std::uint64_t seed,
                       const WarningSink& warn, int max_attempts) {
  spec.validate();
  const double r_min = spec.min_separation();
  const double mean_sep = cloud_stats(spec).mean_separation;
  if (spec.n_atoms > 1 && r_min > 0.1 * mean_sep) {
    const auto msg = fmt::format(
        "min_separation {:.4g} um exceeds 0.1 of the mean separation {:.4g} um",
        r_min, mean_sep);
    if (warn)
      warn(msg);
    else
      std::cerr << "warning: " << msg << '\n';
  }

  RandomStream rng(seed);
  AtomCloud cloud{spec, {}, seed};
  cloud.positions.reserve(spec.n_atoms);
  const double r_min2 = r_min * r_min;

  while (cloud.positions.size() < spec.n_atoms) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt >= max_attempts) {
        throw NumericalError(
            fmt::format("cloud density too high for min_separation {:.4g} um: "
                        "atom {} rejected {} times",
                        r_min, cloud.positions.size(), max_attempts),
            seed);
      }
      Vec3 p;
      for (int a = 0; a < 3; ++a) p[a] = spec.sigma_um[a] * rng.normal();
      bool ok = true;
      for (const auto& q : cloud.positions) {
        if ((p - q).squaredNorm() < r_min2) {
          ok = false;
          break;
        }
      }
      if (ok) {
        cloud.positions.push_back(p);
        break;
      }
    }
  }
  return cloud;
}

AtomCloud make_cloud(const CloudSpec& spec, std::vector<Vec3> positions) {
  spec.validate();
  if (positions.size() != spec.n_atoms)
    throw ConfigError("cloud: position count does not match n_atoms");
  const double r_min2 = spec.min_separation() * spec.min_separation();
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if ((positions[i] - positions[j]).squaredNorm() < r_min2)
        throw ConfigError(
            fmt::format("cloud: atoms {} and {} closer than min_separation", j, i));
  return AtomCloud{spec, std::move(positions), 0};
}

}  // namespace collemit
