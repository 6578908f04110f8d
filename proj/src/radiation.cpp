#include "collemit/radiation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <tuple>
#include <utility>

#include <gsl/gsl_integration.h>

#include "collemit/error.hpp"

namespace collemit {

namespace {

constexpr double kEnergyScale = 3.0 / (8.0 * kPi);

// GSL's tables for large orders are accurate to ~1e-10 only; one or two
// Newton steps on P_n bring node and weight to rounding level.
std::pair<double, double> polish_legendre(std::size_t n, double x) {
  double dp = 1.0;
  for (int iter = 0; iter < 3; ++iter) {
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = pk;
    }
    if (n == 1) p0 = 1.0;
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    x -= p1 / dp;
  }
  return {x, 2.0 / ((1.0 - x * x) * dp * dp)};
}

std::size_t round_up(std::size_t n, std::size_t multiple) {
  return (n + multiple - 1) / multiple * multiple;
}

}  // namespace

AngularGrid::AngularGrid(std::vector<double> edges,
                         std::vector<std::size_t> nodes, std::size_t n_phi)
    : edges_(std::move(edges)), nodes_(std::move(nodes)) {
  if (edges_.size() < 2 || nodes_.size() + 1 != edges_.size() ||
      edges_.front() != -1.0 || edges_.back() != 1.0)
    throw ConfigError("angular grid: panel edges must run from -1 to 1");
  if (n_phi < 1) throw ConfigError("angular grid: need at least one azimuth");
  for (std::size_t p = 0; p < nodes_.size(); ++p) {
    if (!(edges_[p + 1] > edges_[p]))
      throw ConfigError("angular grid: panel edges must increase");
    if (nodes_[p] < 1) throw ConfigError("angular grid: empty panel");
    std::unique_ptr<gsl_integration_glfixed_table,
                    decltype(&gsl_integration_glfixed_table_free)>
        table(gsl_integration_glfixed_table_alloc(nodes_[p]),
              &gsl_integration_glfixed_table_free);
    if (!table) throw std::bad_alloc();
    const double half = 0.5 * (edges_[p + 1] - edges_[p]);
    const double mid = 0.5 * (edges_[p + 1] + edges_[p]);
    for (std::size_t i = 0; i < nodes_[p]; ++i) {
      double x = 0.0, w = 0.0;
      gsl_integration_glfixed_point(-1.0, 1.0, i, &x, &w, table.get());
      std::tie(x, w) = polish_legendre(nodes_[p], x);
      cos_theta_.push_back(mid + half * x);
      ring_weight_.push_back(half * w);
    }
  }
  // GSL returns nodes of each panel in no guaranteed order.
  std::vector<std::size_t> order(cos_theta_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cos_theta_[a] < cos_theta_[b];
  });
  std::vector<double> c, w;
  for (auto i : order) {
    c.push_back(cos_theta_[i]);
    w.push_back(ring_weight_[i]);
  }
  cos_theta_ = std::move(c);
  ring_weight_ = std::move(w);

  phi_.resize(n_phi);
  phi_weight_ = 2.0 * kPi / static_cast<double>(n_phi);
  for (std::size_t j = 0; j < n_phi; ++j)
    phi_[j] = phi_weight_ * static_cast<double>(j);
}

AngularGrid AngularGrid::uniform(std::size_t n_cos, std::size_t n_phi) {
  return AngularGrid({-1.0, 1.0}, {n_cos}, n_phi);
}

AngularGrid AngularGrid::for_cloud(const AtomCloud& cloud, double forward_cone) {
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  if (!cloud.positions.empty()) {
    lo = hi = cloud.positions.front();
    for (const auto& p : cloud.positions) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  return for_extent(hi - lo, cloud.spec.k_e(), forward_cone);
}

AngularGrid AngularGrid::for_spec(const CloudSpec& spec, double forward_cone) {
  return for_extent(8.0 * spec.sigma_um, spec.k_e(), forward_cone);
}

AngularGrid AngularGrid::for_extent(const Vec3& extent, double k,
                                    double forward_cone) {
  const double d_perp = std::hypot(extent.x(), extent.y());
  const double d_all = extent.norm();
  const double c_f = std::cos(std::clamp(forward_cone, 1e-3, 0.5 * kPi - 1e-3));

  std::vector<double> edges{-1.0, 0.0, c_f, 1.0};
  std::vector<std::size_t> nodes;
  std::size_t total = 0;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double half_len = 0.5 * (edges[p + 1] - edges[p]);
    auto n = static_cast<std::size_t>(std::ceil(0.6 * k * d_all * half_len)) + 16;
    if (p + 2 == edges.size()) n = std::max<std::size_t>(n, 48);
    nodes.push_back(n);
    total += n;
  }
  // Keep at least 128 rings overall.
  if (total < 128) {
    const std::size_t extra = 128 - total;
    nodes[0] += extra / 2;
    nodes[1] += extra - extra / 2;
  }
  const auto n_phi = round_up(
      std::max<std::size_t>(
          256, static_cast<std::size_t>(std::ceil(1.2 * k * d_perp)) + 32),
      16);
  return AngularGrid(std::move(edges), std::move(nodes), n_phi);
}

AngularGrid AngularGrid::refined() const {
  std::vector<std::size_t> nodes = nodes_;
  for (auto& n : nodes) n *= 2;
  return AngularGrid(edges_, std::move(nodes), 2 * phi_.size());
}

double AngularGrid::theta(std::size_t d) const {
  return std::acos(std::clamp(cos_theta(d), -1.0, 1.0));
}

Vec3 AngularGrid::direction(std::size_t d) const {
  const double c = cos_theta(d);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double p = phi(d);
  return {s * std::cos(p), s * std::sin(p), c};
}

std::pair<Vec3, Vec3> polarization_basis(const AngularGrid& grid, std::size_t d) {
  const double c = grid.cos_theta(d);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double cp = std::cos(grid.phi(d));
  const double sp = std::sin(grid.phi(d));
  return {Vec3(c * cp, c * sp, -s), Vec3(-sp, cp, 0.0)};
}

namespace {

// Bilinear projection e . p of a real polarization vector on the dipole.
cdouble project(const Vec3& e, const CVec3& p) {
  return e.x() * p.x() + e.y() * p.y() + e.z() * p.z();
}

// Rows: exp(i (k_c - k_e r_d) . r_j) for directions [first, first + count).
CMatrix phase_block(const RadiationMap& map, std::size_t first,
                    std::size_t count) {
  const auto n = static_cast<Eigen::Index>(map.positions.size());
  CMatrix s(static_cast<Eigen::Index>(count), n);
  for (std::size_t r = 0; r < count; ++r) {
    const Vec3 q = map.k_c - map.k_e * map.grid.direction(first + r);
    for (Eigen::Index j = 0; j < n; ++j)
      s(static_cast<Eigen::Index>(r), j) =
          std::polar(1.0, q.dot(map.positions[static_cast<std::size_t>(j)]));
  }
  return s;
}

std::vector<double> trapezoid_weights(const std::vector<double>& t) {
  std::vector<double> w(t.size(), 0.0);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double h = 0.5 * (t[k + 1] - t[k]);
    w[k] += h;
    w[k + 1] += h;
  }
  return w;
}

// Factor L (N x r) with L L^H = correlation, dropping eigen-directions whose
// total weight cannot change any U value by more than ~1e-12.
CMatrix correlation_factor(const CMatrix& g) {
  const Eigen::Index n = g.rows();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(g);
  const RVector& lam = es.eigenvalues();  // ascending
  const double trace = std::max(0.0, g.trace().real());
  const double budget = 1e-12 * trace / static_cast<double>(std::max<Eigen::Index>(n, 1));
  double dropped = 0.0;
  Eigen::Index first = 0;
  while (first < n && dropped + std::max(0.0, lam[first]) <= budget) {
    dropped += std::max(0.0, lam[first]);
    ++first;
  }
  const Eigen::Index rank = n - first;
  CMatrix l(n, rank);
  for (Eigen::Index m = 0; m < rank; ++m)
    l.col(m) = es.eigenvectors().col(first + m) * std::sqrt(std::max(0.0, lam[first + m]));
  return l;
}

}  // namespace

double RadiationMap::total_energy() const {
  double acc = 0.0;
  for (std::size_t d = 0; d < grid.size(); ++d) acc += grid.weight(d) * energy[d];
  return acc;
}

std::pair<CVector, CVector> RadiationMap::field_series(std::size_t d) const {
  if (!amplitudes)
    throw ConfigError("field_series: radiation map was built without amplitudes");
  const CMatrix s = phase_block(*this, d, 1);
  const CVector sum = (s * *amplitudes).transpose();
  const auto [e_theta, e_phi] = polarization_basis(grid, d);
  return {project(e_theta, dipole) * sum, project(e_phi, dipole) * sum};
}

RadiationMap far_field(const AmplitudeTrajectory& traj, const AtomCloud& cloud,
                       const AngularGrid& grid, const FarFieldOptions& options) {
  if (traj.atoms() != static_cast<Eigen::Index>(cloud.size()))
    throw ConfigError("far_field: trajectory and cloud sizes differ");
  if (grid.size() == 0) throw ConfigError("far_field: empty angular grid");

  RadiationMap map{grid,
                   std::vector<double>(grid.size(), 0.0),
                   traj.times,
                   CMatrix(),
                   std::nullopt,
                   cloud.positions,
                   cloud.spec.dipole,
                   cloud.spec.k_c(),
                   cloud.spec.k_e()};

  const std::vector<double> w = trapezoid_weights(traj.times);
  const Eigen::Index nt = traj.excited.cols();
  CMatrix weighted = traj.excited;
  for (Eigen::Index k = 0; k < nt; ++k)
    weighted.col(k) *= std::sqrt(w[static_cast<std::size_t>(k)]);
  map.correlation = weighted * weighted.adjoint();

  // Any L with L L^H = G gives U; use the cheaper of the two.
  const CMatrix factor = nt <= traj.atoms() ? weighted : correlation_factor(map.correlation);

  const std::size_t block = std::max<std::size_t>(1, options.block);
  for (std::size_t first = 0; first < grid.size(); first += block) {
    const std::size_t count = std::min(block, grid.size() - first);
    const CMatrix s = phase_block(map, first, count);
    const CMatrix proj = s * factor;
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t d = first + r;
      const Vec3 dir = grid.direction(d);
      const double pattern =
          1.0 - std::norm(project(dir, cloud.spec.dipole));  // sum_s |e_s . p|^2
      map.energy[d] = kEnergyScale * pattern *
                      proj.row(static_cast<Eigen::Index>(r)).squaredNorm();
    }
  }
  if (options.keep_amplitudes) map.amplitudes = traj.excited;
  return map;
}

cdouble GaussianMode::far_field(double cos_theta) const {
  if (cos_theta <= 0.0) return 0.0;
  const double zeta = rayleigh();
  const double z = detector_radius_um * cos_theta;
  const double tan2 = (1.0 - cos_theta * cos_theta) / (cos_theta * cos_theta);
  return zeta / cdouble(z, -zeta) * std::exp(-0.5 * k * zeta * tan2);
}

GaussianMode matched_mode(const CloudSpec& spec) {
  return {spec.k_e(), std::sqrt(2.0) * transverse_sigma(spec), 1e6};
}

double collection_probability(const RadiationMap& map, const GaussianMode& mode) {
  if (!(mode.w0 > 0.0) || !(mode.k > 0.0))
    throw ConfigError("collection_probability: invalid Gaussian mode");
  const auto n = static_cast<Eigen::Index>(map.positions.size());
  // M_s[j] = sum_d w_d (e_s . p) phi^*(d) exp(i q_d . r_j) per co/cross
  // polarization, so that int dOmega E_s phi^* = M_s . b(t).
  CVector m_co = CVector::Zero(n), m_cross = CVector::Zero(n);
  double mode_norm = 0.0;
  const std::size_t block = 512;
  for (std::size_t first = 0; first < map.grid.size(); first += block) {
    const std::size_t count = std::min(block, map.grid.size() - first);
    CVector c_co(static_cast<Eigen::Index>(count)), c_cross(static_cast<Eigen::Index>(count));
    bool any = false;
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t d = first + r;
      const cdouble phi = mode.far_field(map.grid.cos_theta(d));
      const double wgt = map.grid.weight(d);
      mode_norm += wgt * std::norm(phi);
      const auto [e_theta, e_phi] = polarization_basis(map.grid, d);
      const double cp = std::cos(map.grid.phi(d));
      const double sp = std::sin(map.grid.phi(d));
      const Vec3 co = cp * e_theta - sp * e_phi;
      const Vec3 cross = sp * e_theta + cp * e_phi;
      const cdouble a = wgt * std::conj(phi);
      c_co[static_cast<Eigen::Index>(r)] = a * project(co, map.dipole);
      c_cross[static_cast<Eigen::Index>(r)] = a * project(cross, map.dipole);
      any = any || phi != 0.0;
    }
    if (!any) continue;
    const CMatrix s = phase_block(map, first, count);
    m_co.noalias() += s.transpose() * c_co;
    m_cross.noalias() += s.transpose() * c_cross;
  }
  // int dt |M . b(t)|^2 = M^T G M^*.
  const double overlap =
      (m_co.transpose() * map.correlation * m_co.conjugate())(0, 0).real() +
      (m_cross.transpose() * map.correlation * m_cross.conjugate())(0, 0).real();
  const double emitted = map.total_energy() / kEnergyScale;
  if (!(emitted > 0.0) || !(mode_norm > 0.0)) return 0.0;
  return overlap / (emitted * mode_norm);
}

ConvergedCollection converged_collection_probability(
    const AmplitudeTrajectory& traj, const AtomCloud& cloud,
    const AngularGrid& grid, const GaussianMode& mode, double tolerance) {
  const double p = collection_probability(far_field(traj, cloud, grid), mode);
  RadiationMap fine = far_field(traj, cloud, grid.refined());
  const double p_fine = collection_probability(fine, mode);
  if (std::abs(p_fine - p) > tolerance)
    throw NumericalError("collection probability not converged: " +
                         std::to_string(p) + " vs " + std::to_string(p_fine) +
                         " on the refined angular grid");
  return {p, p_fine, std::move(fine)};
}

double forward_cone_fraction(const RadiationMap& map, double delta_theta) {
  const double c_cone = std::cos(2.0 * delta_theta);
  double inside = 0.0, total = 0.0;
  for (std::size_t d = 0; d < map.grid.size(); ++d) {
    const double e = map.grid.weight(d) * map.energy[d];
    total += e;
    if (map.grid.cos_theta(d) >= c_cone) inside += e;
  }
  return total > 0.0 ? inside / total : 0.0;
}

double analytic_P_noninteracting(double n, double k_e, double sigma_perp) {
  if (!(n >= 0.0) || !(k_e > 0.0) || !(sigma_perp > 0.0))
    throw ConfigError("analytic_P_noninteracting: invalid inputs");
  const double d_omega = 2.0 * kPi / ((k_e * sigma_perp) * (k_e * sigma_perp));
  return n * d_omega / (4.0 * kPi + n * d_omega);
}

double noninteracting_envelope(const Vec3& direction, double k_e,
                               double sigma_perp, double sigma_z) {
  const Vec3 u = direction.normalized();
  const double transverse = u.x() * u.x() + u.y() * u.y();
  const double axial = (u.z() - 1.0) * (u.z() - 1.0);
  return std::exp(-0.5 * k_e * k_e *
                  (transverse * sigma_perp * sigma_perp + axial * sigma_z * sigma_z));
}

PolarProfile polar_profile(const RadiationMap& map) {
  PolarProfile prof;
  const std::size_t rings = map.grid.rings();
  const std::size_t az = map.grid.azimuths();
  for (std::size_t i = rings; i-- > 0;) {  // cos theta descending
    double acc = 0.0;
    for (std::size_t j = 0; j < az; ++j) acc += map.energy[i * az + j];
    prof.theta.push_back(std::acos(std::clamp(map.grid.ring_cos_theta()[i], -1.0, 1.0)));
    prof.energy.push_back(acc / static_cast<double>(az));
  }
  return prof;
}

LobeFit fit_forward_lobe(const RadiationMap& map, double window,
                         double floor_fraction) {
  const PolarProfile prof = polar_profile(map);
  double peak = 0.0;
  for (std::size_t i = 0; i < prof.theta.size() && prof.theta[i] <= window; ++i)
    peak = std::max(peak, prof.energy[i]);
  // Least squares of ln U against theta^2 over the lobe.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < prof.theta.size() && prof.theta[i] <= window; ++i) {
    if (prof.energy[i] < floor_fraction * peak) break;
    const double x = prof.theta[i] * prof.theta[i];
    const double y = std::log(prof.energy[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  if (used < 3) throw NumericalError("fit_forward_lobe: too few rings in the lobe");
  const double nn = static_cast<double>(used);
  const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
  const double icpt = (sy - slope * sx) / nn;
  if (!(slope < 0.0)) throw NumericalError("fit_forward_lobe: lobe is not decaying");
  return {std::exp(icpt), std::sqrt(-2.0 / slope), used};
}

}  // namespace collemit
