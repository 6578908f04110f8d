#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "collemit/kernel.hpp"
#include "collemit/types.hpp"

namespace collemit {

/// Right/left eigen-decomposition A = V diag(a) W with W = V^-1. Columns of V
/// have unit Euclidean norm; rows of W are the matching (biorthogonal) left
/// vectors. Used for exact propagation of the linear amplitude equations.
struct Eigensystem {
  CVector values;  // a_n, eigenvalues of A
  CMatrix right;   // V
  CMatrix left;    // W = V^-1
};

/// Dense general complex eigensolver (LAPACK zgeev). Throws NumericalError,
/// tagged with `seed` when given, on non-convergence or non-finite input.
Eigensystem decompose(const InteractionMatrix& a,
                      std::optional<std::uint64_t> seed = std::nullopt);

/// Eigenvalues lambda_n = omega_e + delta_n - i gamma_n of the effective
/// non-Hermitian Hamiltonian, in units of Gamma:
///   delta_n = Im(a_n)/2,  gamma_n = Re(a_n)/2.
struct EigenSpectrum {
  std::vector<double> shifts;
  std::vector<double> half_widths;
  std::vector<double> fc_weights;  // |<E_TD|Psi_n>|^2 of unit right vectors
  CMatrix right_vectors;

  std::size_t size() const { return shifts.size(); }
};

/// FC weights are overlaps with the uniform vector, i.e. the timed-Dicke state
/// when `a` is in the tilde gauge.
EigenSpectrum eigenspectrum(const InteractionMatrix& a,
                            std::optional<std::uint64_t> seed = std::nullopt);
EigenSpectrum eigenspectrum(const Eigensystem& sys);

/// S(Delta) = sum_n fc_n gamma_n^2 / ((Delta - delta_n)^2 + gamma_n^2).
std::vector<double> excitation_spectrum(const EigenSpectrum& eig,
                                        std::span<const double> delta_grid);

struct SpectrumStats {
  double peak_delta = 0.0;
  double fwhm = 0.0;
  bool ambiguous = false;  // several equal maxima; smallest |Delta| reported
};

/// Peak by parabolic interpolation around the grid maximum, FWHM by linear
/// interpolation of the half-maximum crossings. A side that never drops below
/// half maximum yields fwhm = NaN.
SpectrumStats spectrum_stats(std::span<const double> delta_grid,
                             std::span<const double> values);

std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Two-dimensional (delta, gamma) density of eigenvalues, plain and
/// FC-weighted. Bins default to delta in [-6, 6] and gamma in [0, 6] (units of
/// Gamma), 120 bins each. Accumulation order is the caller's; reduction of
/// partial histograms with merge() is exact.
class EigenHistogram {
 public:
  struct Axis {
    double lo;
    double hi;
    std::size_t bins;
  };

  EigenHistogram(Axis delta = {-6.0, 6.0, 120}, Axis gamma = {0.0, 6.0, 120});

  void accumulate(const EigenSpectrum& spectrum);
  void merge(const EigenHistogram& other);

  const Axis& delta_axis() const { return delta_; }
  const Axis& gamma_axis() const { return gamma_; }

  /// Raw counts, indexed [delta_bin * gamma_bins + gamma_bin].
  const std::vector<double>& counts() const { return counts_; }
  const std::vector<double>& fc_counts() const { return fc_counts_; }
  double count(std::size_t delta_bin, std::size_t gamma_bin) const {
    return counts_[delta_bin * gamma_.bins + gamma_bin];
  }

  /// Eigenvalues accumulated, in range or not.
  std::size_t total() const { return total_; }
  std::size_t overflow() const { return overflow_; }
  double fc_overflow() const { return fc_overflow_; }

  /// Copies normalized to unit in-range mass (all zeros if empty).
  std::vector<double> normalized_counts() const;
  std::vector<double> normalized_fc_counts() const;

 private:
  std::optional<std::size_t> bin_of(double delta, double gamma) const;

  Axis delta_;
  Axis gamma_;
  std::vector<double> counts_;
  std::vector<double> fc_counts_;
  std::size_t total_ = 0;
  std::size_t overflow_ = 0;
  double fc_overflow_ = 0.0;
};

}  // namespace collemit
