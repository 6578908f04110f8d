#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "collemit/dynamics.hpp"
#include "collemit/ensemble.hpp"
#include "collemit/types.hpp"

namespace collemit {

/// Product quadrature on the unit sphere: composite Gauss-Legendre panels in
/// cos(theta) times the periodic trapezoid rule in phi. Weights sum to 4 pi.
class AngularGrid {
 public:
  /// `edges` are increasing panel boundaries in cos(theta) from -1 to 1;
  /// `nodes[i]` Gauss-Legendre nodes go into panel i.
  AngularGrid(std::vector<double> edges, std::vector<std::size_t> nodes,
              std::size_t n_phi);

  /// Single panel.
  static AngularGrid uniform(std::size_t n_cos, std::size_t n_phi);

  /// Grid sized for a cloud: node counts follow the largest phase the cloud
  /// can imprint (k_e times its extent, from the actual positions), and a
  /// dedicated forward panel covers theta <= forward_cone.
  static AngularGrid for_cloud(const AtomCloud& cloud, double forward_cone);

  /// Same sizing from a bounding-box extent (um); for_spec uses +-4 sigma so
  /// that every realization of a spec shares one grid.
  static AngularGrid for_extent(const Vec3& extent, double k_e,
                                double forward_cone);
  static AngularGrid for_spec(const CloudSpec& spec, double forward_cone);

  /// Same panels with twice the nodes in every direction.
  AngularGrid refined() const;

  std::size_t size() const { return cos_theta_.size() * phi_.size(); }
  std::size_t rings() const { return cos_theta_.size(); }
  std::size_t azimuths() const { return phi_.size(); }

  // Direction d = ring * azimuths() + azimuth.
  double cos_theta(std::size_t d) const { return cos_theta_[d / phi_.size()]; }
  double theta(std::size_t d) const;
  double phi(std::size_t d) const { return phi_[d % phi_.size()]; }
  double weight(std::size_t d) const {
    return ring_weight_[d / phi_.size()] * phi_weight_;
  }
  Vec3 direction(std::size_t d) const;

  const std::vector<double>& ring_cos_theta() const { return cos_theta_; }
  const std::vector<double>& ring_weights() const { return ring_weight_; }
  const std::vector<double>& panel_edges() const { return edges_; }
  const std::vector<std::size_t>& panel_nodes() const { return nodes_; }

 private:
  std::vector<double> edges_;
  std::vector<std::size_t> nodes_;
  std::vector<double> cos_theta_;
  std::vector<double> ring_weight_;
  std::vector<double> phi_;
  double phi_weight_ = 0.0;
};

/// Spherical polarization vectors theta-hat and phi-hat at direction d.
std::pair<Vec3, Vec3> polarization_basis(const AngularGrid& grid, std::size_t d);

/// Far-field emission of one trajectory.
///
/// Fields are in units of p k_e^2 / (4 pi eps0) per unit distance, with the
/// common retardation dropped:
///   E_s(r, t) = (e_s . p) sum_j b_j(t) exp(i (k_c - k_e r) . r_j),
/// s = theta, phi. `energy` is U(theta, phi) = (3 / 8 pi) sum_s int |E_s|^2 dt
/// (t in 1/Gamma, trapezoid rule), which makes U the emitted photon
/// probability per steradian.
struct RadiationMap {
  AngularGrid grid;
  std::vector<double> energy;
  std::vector<double> times;
  /// Time-integrated amplitude correlation G = int b(t) b(t)^H dt.
  CMatrix correlation;
  /// N x T amplitudes, kept only when requested.
  std::optional<CMatrix> amplitudes;
  std::vector<Vec3> positions;
  CVec3 dipole;
  Vec3 k_c;
  double k_e = 0.0;

  /// Sum of U over the sphere.
  double total_energy() const;

  /// E_theta(t), E_phi(t) at direction d; requires stored amplitudes.
  std::pair<CVector, CVector> field_series(std::size_t d) const;
};

struct FarFieldOptions {
  bool keep_amplitudes = false;
  /// Directions per evaluation block.
  std::size_t block = 512;
};

RadiationMap far_field(const AmplitudeTrajectory& traj, const AtomCloud& cloud,
                       const AngularGrid& grid,
                       const FarFieldOptions& options = {});

/// Paraxial Gaussian collection mode with waist at the origin, axis +z.
struct GaussianMode {
  double k = 0.0;                    // um^-1
  double w0 = 0.0;                   // um
  double detector_radius_um = 1e6;   // radius of the far-field sphere

  double rayleigh() const { return 0.5 * k * w0 * w0; }
  /// lambda / (pi w0).
  double divergence() const { return 2.0 / (k * w0); }

  /// Far-field amplitude on the sphere (forward hemisphere only):
  ///   zeta / (z - i zeta) exp(-(k zeta / 2) tan^2 theta),  z = R cos theta.
  /// The carrier exp(i k r) is common to the atomic field and dropped.
  cdouble far_field(double cos_theta) const;
};

/// Mode matched to a cloud: w0 = sqrt(2) sigma_perp.
GaussianMode matched_mode(const CloudSpec& spec);

/// Probability that the emitted photon ends up in `mode`:
///   P = sum_s int dt |int dOmega E_s phi^*|^2
///       / (int dOmega sum_s int dt |E_s|^2 * int dOmega |phi|^2).
/// The polarization sum uses the co/cross (Ludwig-3) basis, which is smooth
/// through the beam axis. 0 <= P <= 1 by Cauchy-Schwarz.
double collection_probability(const RadiationMap& map, const GaussianMode& mode);

/// Collection probability with the grid-doubling check: throws NumericalError
/// when refining the grid moves P by more than `tolerance`.
struct ConvergedCollection {
  double probability;
  double refined_probability;
  RadiationMap map;  // on the refined grid
};
ConvergedCollection converged_collection_probability(
    const AmplitudeTrajectory& traj, const AtomCloud& cloud,
    const AngularGrid& grid, const GaussianMode& mode, double tolerance = 1e-3);

/// Fraction of the emitted energy inside theta <= 2 delta_theta about +z.
double forward_cone_fraction(const RadiationMap& map, double delta_theta);

/// N dOmega / (4 pi + N dOmega) with dOmega = 2 pi / (k_e sigma_perp)^2.
double analytic_P_noninteracting(double n, double k_e, double sigma_perp);

/// Gaussian-cloud structure envelope of a non-interacting ensemble along the
/// direction (x, y, z)/r:
///   exp{-(k^2/2) [ (x^2+y^2)/r^2 sigma_perp^2 + (z - r)^2/r^2 sigma_z^2 ]}.
double noninteracting_envelope(const Vec3& direction, double k_e,
                               double sigma_perp, double sigma_z);

/// Azimuthal mean of U per ring, ordered by increasing theta.
struct PolarProfile {
  std::vector<double> theta;
  std::vector<double> energy;
};
PolarProfile polar_profile(const RadiationMap& map);

/// Width of the forward lobe from a fit of ln U = ln U0 - 2 theta^2 / w^2 over
/// rings with theta <= window and U above `floor_fraction` of the peak.
struct LobeFit {
  double peak;
  double width;
  std::size_t rings_used;
};
LobeFit fit_forward_lobe(const RadiationMap& map, double window,
                         double floor_fraction = 0.1);

}  // namespace collemit
