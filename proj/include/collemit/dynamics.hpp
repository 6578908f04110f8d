#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "collemit/kernel.hpp"
#include "collemit/spectrum.hpp"
#include "collemit/types.hpp"

namespace collemit {

/// Single-excitation amplitudes at time t (units of 1/Gamma). `b` are the
/// excited amplitudes in the tilde gauge, `c` the optional storage amplitudes.
struct AmplitudeState {
  CVector b;
  std::optional<CVector> c;
  double t = 0.0;
};

struct Populations {
  double timed_dicke = 0.0;  // |(1/sqrt N) sum_j b_j|^2
  double excited = 0.0;      // sum |b_j|^2
  double storage = 0.0;      // sum |c_j|^2
  double ground = 0.0;       // 1 - storage - excited
};

Populations populations_of(const CVector& b, const CVector* c = nullptr);

struct AmplitudeTrajectory {
  std::vector<double> times;       // units of 1/Gamma
  CMatrix excited;                 // N x T, column k at times[k]
  std::optional<CMatrix> storage;  // N x T when present
  std::vector<Populations> populations;
  std::string method;
  std::vector<std::string> notes;  // fallbacks and other diagnostics

  std::size_t size() const { return times.size(); }
  Eigen::Index atoms() const { return excited.rows(); }
  AmplitudeState state(std::size_t k) const;
};

/// b_j = 1/sqrt(n): the timed-Dicke state in the tilde gauge.
AmplitudeState timed_dicke_state(std::size_t n);

/// c_j = 1/sqrt(n), b = 0: the symmetric storage state.
AmplitudeState storage_state(std::size_t n);

/// Uniform grid of `points` samples on [0, t_max].
std::vector<double> time_grid(double t_max, std::size_t points);

enum class PulseShape { constant, erf };

PulseShape parse_pulse_shape(std::string_view name);

/// Coupling-laser pulse. For `erf`,
///   Omega(t) = Omega0 [1 + erf((t - t0) / (sqrt(2) sigma_t))] / 2.
struct Pulse {
  PulseShape shape = PulseShape::erf;
  double omega0_per_s = 0.0;
  double t0_us = 1.0;
  double sigma_t_us = 0.4;
  double delta_c_rad_per_s = 0.0;

  void validate() const;
  double rabi_per_s(double t_us) const;
};

/// A pulse expressed in units of Gamma (time in 1/Gamma, rates in Gamma).
struct ScaledPulse {
  PulseShape shape = PulseShape::erf;
  double omega0 = 0.0;
  double t0 = 0.0;
  double sigma_t = 1.0;
  double delta_c = 0.0;

  double rabi(double t) const;
};

ScaledPulse scale_pulse(const Pulse& pulse, double gamma_per_s);

/// Microseconds to units of 1/Gamma and back.
inline double us_to_gamma_time(double t_us, double gamma_per_s) {
  return t_us * 1e-6 * gamma_per_s;
}
inline double gamma_time_to_us(double t, double gamma_per_s) {
  return t / gamma_per_s * 1e6;
}

enum class Propagator { eigen, adaptive };

struct TwoLevelOptions {
  Propagator method = Propagator::eigen;
  /// Reused when given; must decompose the same matrix.
  const Eigensystem* eigensystem = nullptr;
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  std::optional<std::uint64_t> seed;
};

/// Solves d b/dt = -(1/2) A b (time in 1/Gamma) from `b0` and samples it on
/// `times`, which must start at 0 and increase. The eigen propagator is exact;
/// if the eigensolver fails the adaptive Dormand-Prince integrator is used and
/// the fallback recorded in `notes`.
AmplitudeTrajectory evolve_two_level(const InteractionMatrix& a,
                                     const AmplitudeState& b0,
                                     std::span<const double> times,
                                     const TwoLevelOptions& options = {});

struct ThreeLevelOptions {
  /// Starting number of RK steps per output interval; 0 picks one from the
  /// pulse bandwidth.
  std::size_t substeps = 0;
  /// Step halving stops once no population curve moves by more than this.
  double tolerance = 1e-6;
  int max_halvings = 10;
  const Eigensystem* eigensystem = nullptr;
  std::optional<std::uint64_t> seed;
};

/// Raman transfer from the storage state (time in 1/Gamma):
///   dc_j/dt = i Omega^* b_j exp(+i Delta_c t)
///   db_j/dt = i Omega c_j exp(-i Delta_c t) - (1/2) sum_i A_ji b_i.
/// Because the drive is proportional to the identity, the system splits into
/// one storage/excited pair per eigenmode of A; each pair is advanced with a
/// fixed-step fourth-order Lawson (integrating-factor) Runge-Kutta scheme that
/// treats the mode decay exactly.
AmplitudeTrajectory evolve_three_level(const InteractionMatrix& a,
                                       const ScaledPulse& pulse,
                                       const AmplitudeState& initial,
                                       std::span<const double> times,
                                       const ThreeLevelOptions& options = {});

/// Frame of the direct integrator. `literal` keeps the exp(+-i Delta_c t)
/// factors; `shifted` absorbs them into a diagonal detuning of b.
enum class DriveFrame { literal, shifted };

/// Classic RK4 on the site-basis equations, `substeps` steps per output
/// interval. O(N^2) per step; meant for small N and cross-checks.
AmplitudeTrajectory evolve_three_level_direct(const InteractionMatrix& a,
                                              const ScaledPulse& pulse,
                                              const AmplitudeState& initial,
                                              std::span<const double> times,
                                              std::size_t substeps,
                                              DriveFrame frame = DriveFrame::literal);

}  // namespace collemit
