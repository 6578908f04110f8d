#pragma once

#include <span>
#include <string>
#include <vector>

#include "collemit/dynamics.hpp"

namespace collemit {

/// p(t) ~ p1 exp(-G_S t) + p2 exp(-G t) + p3 exp(-G_s t), rates in units of
/// the single-atom Gamma, with G pinned.
struct TriExpFit {
  double p1 = 0.0, p2 = 0.0, p3 = 0.0;
  double gamma_super = 1.0;  // G_S >= G
  double gamma_mid = 1.0;    // pinned
  double gamma_sub = 1.0;    // G_s <= G
  double residual = 0.0;     // RMS of ln(model) - ln(p) over the samples
  bool converged = true;
  std::string message;

  double operator()(double t) const;
};

struct TriExpOptions {
  double window = 6.0;         // fit t in [0, window]
  std::size_t samples = 160;   // log-spaced resampling points
};

/// Least squares in ln p on log-spaced samples with non-negative weights and
/// ordered rates. Four nested models are fitted (middle term alone, plus the
/// fast, the slow, or both extra terms), each from several starts; the
/// smallest model matching the best residual to 1e-9 is returned, so a pure
/// exp(-G t) curve yields p1 = p3 = 0.
TriExpFit fit_triexponential(std::span<const double> times,
                             std::span<const double> p,
                             double fixed_middle_rate = 1.0,
                             const TriExpOptions& options = {});

/// G_S = geometry * N / (k_e sigma_xy)^2, in units of Gamma.
double superradiant_rate_model(double n, double k_e, double sigma_xy,
                               double geometry_factor);

/// Single broad collective level |E> coupled to the storage state:
/// effective Rabi frequency, shift delta_E and width Gamma_S (units of Gamma).
struct EffectiveThreeLevel {
  double omega_eff_per_s = 0.0;
  double delta_e = 0.0;
  double gamma_s = 1.0;

  void validate() const;
};

struct EffectiveAmplitudes {
  cdouble storage;
  cdouble excited;
  double ground;  // 1 - |c|^2 - |b|^2, clamped to [0, 1]
};

/// Weak-drive solution (time in 1/Gamma):
///   c(t) = exp[-int_0^t Omega_eff^2 dt' / (G_S/2 - i (D_c - d_E))],
///   b(t) = i Omega_eff(t) exp(-i (D_c - d_E) t) c(t) / (G_S/2 - i (D_c - d_E)),
/// with Omega_eff(t) following the pulse envelope scaled to omega_eff.
EffectiveAmplitudes effective_three_level(const EffectiveThreeLevel& model,
                                          const Pulse& pulse,
                                          double gamma_per_s, double t);

double effective_three_level_pG(const EffectiveThreeLevel& model,
                                const Pulse& pulse, double gamma_per_s,
                                double t);

/// Pearson correlation of two equally long series.
double correlation(std::span<const double> x, std::span<const double> y);

}  // namespace collemit
