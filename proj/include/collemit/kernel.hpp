#pragma once

#include <string_view>

#include "collemit/ensemble.hpp"
#include "collemit/types.hpp"

namespace collemit {

/// Form of the dipole-dipole exchange kernel.
///   full      - retarded kernel with the (k r)^-2 and (k r)^-3 near-field terms
///   isotropic - exp(i k r) / (i k r)
///   farfield  - (3/2) [1 - |p.r|^2] exp(i k r) / (i k r)
enum class KernelMode { full, isotropic, farfield };

/// plain: A_ji = F_ji. tilde: A_ji = F_ji exp(i k_c . r_ij), the frame where
/// the drive phases exp(i k_c . r_j) are absorbed into the amplitudes.
enum class Gauge { plain, tilde };

KernelMode parse_kernel_mode(std::string_view name);
Gauge parse_gauge(std::string_view name);

struct PairCoupling {
  double f = 0.0;
  double g = 0.0;
  cdouble F() const { return {f, g}; }
};

/// F = f + i g for separation `r_um` and unit dipole `dipole`. The projection
/// (p.r)^2 is taken as |p.r|^2, so a circular dipole gives sin^2(theta)/2.
/// Throws ConfigError for |r| == 0 or |r| < min_separation_um.
PairCoupling pair_coupling(const Vec3& r_um, const CVec3& dipole, double k_e,
                           KernelMode mode, double min_separation_um = 0.0);

/// Same as pair_coupling with an explicit projection |p.r|^2 (used to check
/// the isotropic average 1/3).
PairCoupling pair_coupling_projected(double kr, double projection,
                                     KernelMode mode);

/// Collective coupling matrix of the closed amplitude equations
///   d b / dt = -(Gamma/2) A b,
/// with unit diagonal. Immutable once built.
struct InteractionMatrix {
  Gauge gauge = Gauge::plain;
  KernelMode mode = KernelMode::full;
  bool interacting = true;
  double k_e = 0.0;  // um^-1
  double k_c = 0.0;  // um^-1
  CMatrix entries;

  Eigen::Index n() const { return entries.rows(); }
};

/// O(N^2) assembly; |k_c| is set equal to k_e.
InteractionMatrix build_interaction_matrix(const AtomCloud& cloud, Gauge gauge,
                                           KernelMode mode = KernelMode::full);

/// Identity coupling (F_ji = 0): the dilute, non-interacting reference.
InteractionMatrix non_interacting_matrix(const AtomCloud& cloud, Gauge gauge);

/// Diagonal phases exp(i k_c . r_j) relating the two gauges:
///   A_tilde = diag(phase)^* A_plain diag(phase).
CVector drive_phases(const AtomCloud& cloud);

}  // namespace collemit
