#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "collemit/dynamics.hpp"
#include "collemit/ensemble.hpp"
#include "collemit/error.hpp"
#include "collemit/kernel.hpp"
#include "collemit/radiation.hpp"
#include "collemit/rng.hpp"
#include "oracles.hpp"

using namespace collemit;

namespace {

const WarningSink kQuiet = [](const std::string&) {};

CloudSpec spec_of(std::size_t n, Vec3 sigma) {
  CloudSpec s;
  s.n_atoms = n;
  s.sigma_um = sigma;
  return s;
}

AtomCloud single_atom() {
  return make_cloud(spec_of(1, {1, 1, 1}), {Vec3::Zero()});
}

AmplitudeTrajectory decay_of(const AtomCloud& cloud, bool interacting, double t_max,
                             std::size_t points) {
  const auto m = interacting ? build_interaction_matrix(cloud, Gauge::tilde)
                             : non_interacting_matrix(cloud, Gauge::tilde);
  return evolve_two_level(m, timed_dicke_state(cloud.size()), time_grid(t_max, points));
}

// Grid with a panel boundary at the cone edge so that the cone integral is
// a sum over whole Gauss-Legendre panels.
AngularGrid cone_grid(double cone) {
  return AngularGrid({-1.0, std::cos(cone), 1.0}, {64, 48}, 64);
}

double sum_weights(const AngularGrid& g) {
  double s = 0;
  for (std::size_t d = 0; d < g.size(); ++d) s += g.weight(d);
  return s;
}

}  // namespace

TEST_SUITE("radiation") {

TEST_CASE("quadrature weights cover the sphere") {
  CHECK(sum_weights(AngularGrid::uniform(16, 8)) == doctest::Approx(4 * kPi).epsilon(1e-13));
  CHECK(sum_weights(cone_grid(0.3)) == doctest::Approx(4 * kPi).epsilon(1e-13));
  const auto g = AngularGrid::for_spec(spec_of(1000, {1, 1, 8}), 0.3);
  CHECK(sum_weights(g) == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(g.rings() >= 128);
  CHECK(g.azimuths() >= 256);
  CHECK(sum_weights(g.refined()) == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(g.refined().rings() == 2 * g.rings());
  // Polynomial in cos(theta) integrated exactly: int cos^2 dOmega = 4 pi / 3.
  double c2 = 0;
  for (std::size_t d = 0; d < g.size(); ++d) c2 += g.weight(d) * std::pow(g.cos_theta(d), 2);
  CHECK(c2 == doctest::Approx(4 * kPi / 3).epsilon(1e-12));
}

TEST_CASE("polarization basis is orthonormal and transverse") {
  const auto g = AngularGrid::uniform(9, 7);
  for (std::size_t d = 0; d < g.size(); ++d) {
    const auto [t, p] = polarization_basis(g, d);
    const Vec3 r = g.direction(d);
    CHECK(r.norm() == doctest::Approx(1.0));
    CHECK(t.norm() == doctest::Approx(1.0));
    CHECK(p.norm() == doctest::Approx(1.0));
    CHECK(std::abs(t.dot(p)) < 1e-14);
    CHECK(std::abs(t.dot(r)) < 1e-14);
    CHECK(std::abs(p.dot(r)) < 1e-14);
  }
}

TEST_CASE("single circular dipole radiates (1 + cos^2 theta)/2") {
  const auto cloud = single_atom();
  const auto traj = decay_of(cloud, true, 20.0, 401);
  const auto grid = AngularGrid::uniform(24, 16);
  const auto map = far_field(traj, cloud, grid);
  double forward = 0;
  for (std::size_t d = 0; d < grid.size(); ++d) forward = std::max(forward, map.energy[d]);
  const double peak = map.energy[0] / ((1 + std::pow(grid.cos_theta(0), 2)) / 2);
  for (std::size_t d = 0; d < grid.size(); ++d) {
    CHECK(map.energy[d] >= 0.0);
    const double c = grid.cos_theta(d);
    CHECK(map.energy[d] == doctest::Approx(peak * (1 + c * c) / 2).epsilon(1e-12));
  }
  // Emitted energy equals the decayed population, and U peaks at 3/(8 pi).
  const double decayed = 1 - traj.populations.back().excited;
  CHECK(map.total_energy() == doctest::Approx(decayed).epsilon(1e-3));
  CHECK(peak == doctest::Approx(3.0 / (8 * kPi) * decayed).epsilon(1e-3));
}

TEST_CASE("forward cone fraction of a single atom") {
  const auto cloud = single_atom();
  const auto traj = decay_of(cloud, true, 10.0, 51);
  for (double dtheta : {0.05, 0.2, 0.6}) {
    const auto map = far_field(traj, cloud, cone_grid(2 * dtheta));
    CHECK(forward_cone_fraction(map, dtheta) ==
          doctest::Approx(oracle::dipole_cone_fraction(2 * dtheta)).epsilon(1e-10));
  }
}

TEST_CASE("forward cone fraction of an isotropic emitter") {
  for (double dtheta : {0.02, 0.05, 0.3}) {
    const auto grid = cone_grid(2 * dtheta);
    RadiationMap map{.grid = grid, .energy = std::vector<double>(grid.size(), 1.0)};
    const double exact = (1 - std::cos(2 * dtheta)) / 2;
    CHECK(forward_cone_fraction(map, dtheta) == doctest::Approx(exact).epsilon(1e-12));
    if (dtheta <= 0.05) {
      const double small_angle = kPi * std::pow(2 * dtheta, 2) / (4 * kPi);
      CHECK(forward_cone_fraction(map, dtheta) == doctest::Approx(small_angle).epsilon(0.005));
    }
  }
}

TEST_CASE("emitted energy matches the decayed population") {
  for (std::size_t n : {1u, 10u, 40u}) {
    const auto cloud = sample_cloud(spec_of(n, {0.4, 0.4, 1.0}), 50 + n, kQuiet);
    const auto traj = decay_of(cloud, true, 15.0, 601);
    const auto map = far_field(traj, cloud, AngularGrid::for_cloud(cloud, 0.3));
    const double decayed = 1 - traj.populations.back().excited;
    CHECK(map.total_energy() == doctest::Approx(decayed).epsilon(0.03));
    for (double u : map.energy) CHECK(u >= 0.0);
  }
}

TEST_CASE("non-interacting emission averages to the coherent envelope plus floor") {
  const std::size_t n = 50;
  const auto spec = spec_of(n, {1.0, 1.0, 1.5});
  const auto grid = AngularGrid({-1.0, 0.0, std::cos(0.4), 1.0}, {4, 4, 12}, 8);
  const auto single = far_field(decay_of(single_atom(), false, 10.0, 41), single_atom(), grid);
  const int reps = 300;
  std::vector<double> mean(grid.size(), 0.0), sq(grid.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto cloud = sample_cloud(spec, realization_seed(5, r), kQuiet);
    const auto map = far_field(decay_of(cloud, false, 10.0, 41), cloud, grid);
    for (std::size_t d = 0; d < grid.size(); ++d) {
      const double ratio = map.energy[d] / single.energy[d];
      mean[d] += ratio / reps;
      sq[d] += ratio * ratio / reps;
    }
  }
  int checked = 0;
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const double env = noninteracting_envelope(grid.direction(d), spec.k_e(), 1.0, 1.5);
    const double expect = 1.0 + (n - 1) * env * env;
    const double se = std::sqrt((sq[d] - mean[d] * mean[d]) / (reps - 1));
    CHECK(std::abs(mean[d] - expect) < 5 * se + 1e-9);
    ++checked;
  }
  CHECK(checked == int(grid.size()));
}

TEST_CASE("envelope of a Gaussian cloud") {
  const double k = 2 * kPi / 0.78;
  CHECK(noninteracting_envelope(Vec3(0, 0, 1), k, 1.0, 8.0) == 1.0);
  const double sigma = 1.3;
  const double s = std::sqrt(2.0) / (k * sigma);
  const Vec3 dir(s, 0, std::sqrt(1 - s * s));
  // The axial term is (1 - cos)^2 sigma_z^2 ~ s^4 and is switched off here.
  CHECK(noninteracting_envelope(dir, k, sigma, 0.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(noninteracting_envelope(dir, k, sigma, 2.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(0.01));
  // Backward: exp(-(2k)^2 sigma_z^2 / 2).
  CHECK(noninteracting_envelope(Vec3(0, 0, -1), k, sigma, 1.0) ==
        doctest::Approx(std::exp(-2 * k * k)).epsilon(1e-9));
}

TEST_CASE("collection probability lies in [0, 1]") {
  struct Case {
    std::size_t n;
    Vec3 sigma;
    bool interacting;
  };
  for (const auto& c : {Case{1, {1, 1, 1}, true}, Case{30, {0.3, 0.3, 0.6}, true},
                        Case{60, {1, 1, 3}, false}, Case{60, {1, 1, 3}, true}}) {
    const auto cloud = sample_cloud(spec_of(c.n, c.sigma), 3, kQuiet);
    const auto traj = decay_of(cloud, c.interacting, 15.0, 151);
    const auto map = far_field(traj, cloud, AngularGrid::for_cloud(cloud, 0.3));
    const double p = collection_probability(map, matched_mode(cloud.spec));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("collection probability ignores global phase and time shifts") {
  const auto cloud = sample_cloud(spec_of(40, {0.6, 0.6, 2.0}), 8, kQuiet);
  const auto traj = decay_of(cloud, true, 12.0, 241);
  const auto grid = AngularGrid::for_cloud(cloud, 0.3);
  const auto mode = matched_mode(cloud.spec);
  const double p = collection_probability(far_field(traj, cloud, grid), mode);
  auto rotated = traj;
  rotated.excited *= std::polar(1.0, 2.1);
  auto shifted = traj;
  for (auto& t : shifted.times) t += 7.5;
  CHECK(collection_probability(far_field(rotated, cloud, grid), mode) ==
        doctest::Approx(p).epsilon(1e-12));
  CHECK(collection_probability(far_field(shifted, cloud, grid), mode) ==
        doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("grid doubling check") {
  const auto cloud = sample_cloud(spec_of(60, {1, 1, 4}), 2, kQuiet);
  const auto traj = decay_of(cloud, true, 10.0, 101);
  const auto mode = matched_mode(cloud.spec);
  const auto ok = converged_collection_probability(
      traj, cloud, AngularGrid::for_cloud(cloud, 0.3), mode, 1e-3);
  CHECK(std::abs(ok.probability - ok.refined_probability) < 1e-3);
  CHECK_THROWS_AS(converged_collection_probability(traj, cloud, AngularGrid::uniform(6, 6),
                                                   mode, 1e-3),
                  NumericalError);
}

TEST_CASE("Gaussian mode far field") {
  const auto spec = spec_of(1000, {1, 1, 8});
  const auto mode = matched_mode(spec);
  CHECK(mode.w0 == doctest::Approx(std::sqrt(2.0)));
  CHECK(mode.divergence() == doctest::Approx(0.78 / (kPi * mode.w0)));
  CHECK(mode.divergence() == doctest::Approx(std::sqrt(2.0) / (spec.k_e() * 1.0)));
  CHECK(mode.rayleigh() == doctest::Approx(0.5 * spec.k_e() * 2.0));
  const double a0 = std::abs(mode.far_field(1.0));
  const double th = std::atan(mode.divergence());
  // 1/e of the transverse profile times the 1/z fall-off of a paraxial beam
  // sampled on a sphere.
  CHECK(std::abs(mode.far_field(std::cos(th))) / a0 ==
        doctest::Approx(std::exp(-1.0) / std::cos(th)).epsilon(1e-6));
  CHECK(mode.far_field(-0.2) == oracle::cd(0, 0));
  CHECK(mode.far_field(0.0) == oracle::cd(0, 0));
  // Gouy phase: the on-axis prefactor zeta / (R - i zeta) is nearly real for
  // a distant detector.
  CHECK(std::abs(std::arg(mode.far_field(1.0))) < 1e-4);
}

TEST_CASE("closed-form non-interacting collection probability") {
  const double k = 2 * kPi / 0.78;
  CHECK(analytic_P_noninteracting(0, k, 1.0) == 0.0);
  CHECK(analytic_P_noninteracting(1e12, k, 1.0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(analytic_P_noninteracting(1000, k, 1.0) ==
        doctest::Approx(oracle::cooperative_fraction(1000, 0.78, 1.0)).epsilon(1e-14));
  CHECK(analytic_P_noninteracting(1000, k, 1.0) == doctest::Approx(0.885).epsilon(1e-3));
  CHECK_THROWS_AS(analytic_P_noninteracting(-1, k, 1.0), ConfigError);
}

TEST_CASE("forward lobe width against the diffraction estimate") {
  // Forward-only grid: a few rings backwards, the lobe resolved finely.
  const double window = 0.2 * kPi;
  const auto grid = AngularGrid({-1.0, std::cos(window), 1.0}, {4, 90}, 64);
  SUBCASE("wide cloud follows the Gaussian estimate") {
    const double sxy = std::sqrt(2.0);
    const auto cloud = sample_cloud(spec_of(1000, {sxy, sxy, 4.0}), 1, kQuiet);
    const auto map = far_field(decay_of(cloud, false, 20.0, 41), cloud, grid);
    const auto lobe = fit_forward_lobe(map, window);
    CHECK(lobe.width == doctest::Approx(std::sqrt(2.0) / (cloud.spec.k_e() * sxy)).epsilon(0.1));
  }
  SUBCASE("narrow interacting cloud has a narrower lobe") {
    const double sxy = std::sqrt(8.0 / 24.0);
    const auto cloud = sample_cloud(spec_of(1000, {sxy, sxy, 24.0}), 1, kQuiet);
    const auto map = far_field(decay_of(cloud, true, 20.0, 81), cloud, grid);
    const auto lobe = fit_forward_lobe(map, window);
    CHECK(lobe.width < std::sqrt(2.0) / (cloud.spec.k_e() * sxy));
  }
}

TEST_CASE("Raman emission is collected equally for all coupling detunings") {
  const auto spec = spec_of(60, {0.5, 0.5, 1.0});
  const double gamma = spec.gamma_per_s;
  const auto times = time_grid(us_to_gamma_time(10.0, gamma), 401);
  const auto grid = AngularGrid::for_spec(spec, 0.3);
  const auto mode = matched_mode(spec);
  std::vector<double> means;
  for (double mhz : {-3.0, 0.0, 3.0}) {
    Pulse pulse;
    pulse.omega0_per_s = 5e6;
    pulse.delta_c_rad_per_s = 2 * kPi * mhz * 1e6;
    const auto scaled = scale_pulse(pulse, gamma);
    double mean = 0;
    for (int r = 0; r < 3; ++r) {
      const auto cloud = sample_cloud(spec, realization_seed(77, r), kQuiet);
      const auto traj = evolve_three_level(build_interaction_matrix(cloud, Gauge::tilde),
                                           scaled, storage_state(60), times);
      CHECK(traj.populations.back().ground > 0.95);
      mean += collection_probability(far_field(traj, cloud, grid), mode) / 3;
    }
    means.push_back(mean);
  }
  CHECK(means[0] == doctest::Approx(means[1]).epsilon(0.02));
  CHECK(means[2] == doctest::Approx(means[1]).epsilon(0.02));
}

}  // TEST_SUITE
