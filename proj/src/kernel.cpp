#include "collemit/kernel.hpp"

#include <cmath>
#include <string>

#include "collemit/error.hpp"

namespace collemit {

KernelMode parse_kernel_mode(std::string_view name) {
  if (name == "full") return KernelMode::full;
  if (name == "isotropic") return KernelMode::isotropic;
  if (name == "farfield") return KernelMode::farfield;
  throw ConfigError("unknown kernel mode '" + std::string(name) + "'");
}

Gauge parse_gauge(std::string_view name) {
  if (name == "plain") return Gauge::plain;
  if (name == "tilde") return Gauge::tilde;
  throw ConfigError("unknown gauge '" + std::string(name) + "'");
}

PairCoupling pair_coupling_projected(double kr, double projection,
                                     KernelMode mode) {
  const double s = std::sin(kr);
  const double c = std::cos(kr);
  switch (mode) {
    case KernelMode::isotropic:
      // exp(i kr) / (i kr) = (sin kr - i cos kr) / kr
      return {s / kr, -c / kr};
    case KernelMode::farfield: {
      const double a = 1.5 * (1.0 - projection);
      return {a * s / kr, -a * c / kr};
    }
    case KernelMode::full:
      break;
  }
  const double a = 1.5 * (1.0 - projection);
  const double b = 1.5 * (1.0 - 3.0 * projection);
  const double kr2 = kr * kr;
  const double kr3 = kr2 * kr;
  // Below kr ~ 1e-2 the bracket sin/kr^3 - cos/kr^2 cancels catastrophically;
  // its series is 1/3 - kr^2/30 + kr^4/840, and the imaginary bracket
  // sin/kr^2 + cos/kr^3 keeps its 1/kr^3 singularity.
  double near_re;
  if (kr < 1e-2) {
    near_re = -(1.0 / 3.0 - kr2 / 30.0 + kr2 * kr2 / 840.0);
  } else {
    near_re = c / kr2 - s / kr3;
  }
  const double f = a * s / kr + b * near_re;
  const double g = -a * c / kr + b * (s / kr2 + c / kr3);
  return {f, g};
}

PairCoupling pair_coupling(const Vec3& r_um, const CVec3& dipole, double k_e,
                           KernelMode mode, double min_separation_um) {
  const double r = r_um.norm();
  if (!(r > 0.0)) throw ConfigError("pair_coupling: zero separation");
  if (r < min_separation_um)
    throw ConfigError("pair_coupling: separation below min_separation");
  if (!(k_e > 0.0)) throw ConfigError("pair_coupling: k_e must be positive");
  const Vec3 rhat = r_um / r;
  // Eigen's dot conjugates the dipole; |p.r| is unchanged since r is real.
  const double projection = std::norm(dipole.dot(rhat.cast<cdouble>()));
  return pair_coupling_projected(k_e * r, projection, mode);
}

CVector drive_phases(const AtomCloud& cloud) {
  const Vec3 kc = cloud.spec.k_c();
  CVector ph(static_cast<Eigen::Index>(cloud.size()));
  for (std::size_t j = 0; j < cloud.size(); ++j)
    ph[static_cast<Eigen::Index>(j)] = std::polar(1.0, kc.dot(cloud.positions[j]));
  return ph;
}

InteractionMatrix build_interaction_matrix(const AtomCloud& cloud, Gauge gauge,
                                           KernelMode mode) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  const double k_e = cloud.spec.k_e();
  const double r_min = cloud.spec.min_separation();
  InteractionMatrix m{gauge, mode, true, k_e, k_e, CMatrix::Identity(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const Vec3 r = cloud.positions[static_cast<std::size_t>(i)] -
                     cloud.positions[static_cast<std::size_t>(j)];
      const cdouble F = pair_coupling(r, cloud.spec.dipole, k_e, mode, r_min).F();
      m.entries(j, i) = F;
      m.entries(i, j) = F;
    }
  }
  if (gauge == Gauge::tilde) {
    const CVector ph = drive_phases(cloud);
    m.entries = ph.conjugate().asDiagonal() * m.entries * ph.asDiagonal();
    m.entries.diagonal().setOnes();
  }
  return m;
}

InteractionMatrix non_interacting_matrix(const AtomCloud& cloud, Gauge gauge) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  const double k_e = cloud.spec.k_e();
  return {gauge, KernelMode::full, false, k_e, k_e, CMatrix::Identity(n, n)};
}

}  // namespace collemit
