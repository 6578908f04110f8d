#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "collemit/dynamics.hpp"
#include "collemit/ensemble.hpp"
#include "collemit/error.hpp"
#include "collemit/kernel.hpp"
#include "oracles.hpp"

using namespace collemit;

namespace {

const WarningSink kQuiet = [](const std::string&) {};

AtomCloud random_cloud(std::size_t n, Vec3 sigma, std::uint64_t seed) {
  CloudSpec s;
  s.n_atoms = n;
  s.sigma_um = sigma;
  return sample_cloud(s, seed, kQuiet);
}

TwoLevelOptions adaptive_options() {
  TwoLevelOptions o;
  o.method = Propagator::adaptive;
  o.rel_tol = 1e-11;
  o.abs_tol = 1e-14;
  return o;
}

ScaledPulse test_pulse(double omega0, double delta_c) {
  ScaledPulse p;
  p.shape = PulseShape::erf;
  p.omega0 = omega0;
  p.t0 = 3.0;
  p.sigma_t = 1.2;
  p.delta_c = delta_c;
  return p;
}

double max_population_gap(const AmplitudeTrajectory& a, const AmplitudeTrajectory& b) {
  double worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& x = a.populations[k];
    const auto& y = b.populations[k];
    for (double d : {x.timed_dicke - y.timed_dicke, x.excited - y.excited,
                     x.storage - y.storage, x.ground - y.ground})
      worst = std::max(worst, std::abs(d));
  }
  return worst;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("timed-Dicke and storage states") {
  const auto one = timed_dicke_state(1);
  CHECK(one.b.size() == 1);
  CHECK(one.b[0] == oracle::cd(1, 0));
  const auto four = timed_dicke_state(4);
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(four.b[j] == oracle::cd(0.5, 0));
  CHECK(!four.c);
  for (std::size_t n : {1u, 7u, 1000u}) {
    CHECK(populations_of(timed_dicke_state(n).b).timed_dicke ==
          doctest::Approx(1.0).epsilon(1e-14));
  }
  const auto s = storage_state(9);
  REQUIRE(s.c);
  const auto pop = populations_of(s.b, &*s.c);
  CHECK(pop.storage == doctest::Approx(1.0));
  CHECK(pop.ground == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_THROWS_AS(timed_dicke_state(0), ConfigError);
  CHECK_THROWS_AS(storage_state(0), ConfigError);
}

TEST_CASE("time grids are validated") {
  const auto m = non_interacting_matrix(random_cloud(2, {1, 1, 1}, 1), Gauge::tilde);
  const std::vector<double> late{0.5, 1.0};
  const std::vector<double> backwards{0.0, 1.0, 0.5};
  CHECK_THROWS_AS(evolve_two_level(m, timed_dicke_state(2), late), ConfigError);
  CHECK_THROWS_AS(evolve_two_level(m, timed_dicke_state(2), backwards), ConfigError);
  CHECK_THROWS_AS(evolve_two_level(m, timed_dicke_state(3), time_grid(1, 5)), ConfigError);
  const auto g = time_grid(6.0, 400);
  CHECK(g.size() == 400);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(6.0));
}

TEST_CASE("single atom decays as exp(-t)") {
  const auto cloud = random_cloud(1, {1, 1, 1}, 4);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto times = time_grid(10.0, 201);
  for (const auto& opt : {TwoLevelOptions{}, adaptive_options()}) {
    const auto traj = evolve_two_level(m, timed_dicke_state(1), times, opt);
    double worst = 0;
    for (std::size_t k = 0; k < times.size(); ++k)
      worst = std::max(worst, std::abs(traj.populations[k].timed_dicke - std::exp(-times[k])));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("two close atoms decay at twice the single-atom rate") {
  // The symmetric state is an exact eigenvector of the plain-gauge pair
  // matrix, so its population decays as exp(-(1 + f) t) with f -> 1.
  CloudSpec s;
  s.n_atoms = 2;
  s.min_separation_um = 0.0;
  const double r = 0.01 / s.k_e();
  for (const Vec3 dir : {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0.6, 0, 0.8)}) {
    const auto cloud = make_cloud(s, {Vec3::Zero(), r * dir});
    const auto m = build_interaction_matrix(cloud, Gauge::plain);
    const std::vector<double> times{0.0, 1.0};
    const auto traj = evolve_two_level(m, timed_dicke_state(2), times);
    const double rate = -std::log(traj.populations[1].timed_dicke) / times[1];
    CHECK(rate == doctest::Approx(2.0).epsilon(0.01));
  }
}

TEST_CASE("eigen propagation matches the matrix exponential") {
  for (std::size_t n : {3u, 10u}) {
    const auto cloud = random_cloud(n, {0.3, 0.3, 0.5}, 100 + n);
    const auto m = build_interaction_matrix(cloud, Gauge::tilde);
    const auto times = time_grid(5.0, 51);
    const auto b0 = timed_dicke_state(n);
    for (const auto& opt : {TwoLevelOptions{}, adaptive_options()}) {
      const auto traj = evolve_two_level(m, b0, times, opt);
      double worst = 0;
      for (std::size_t k = 0; k < times.size(); ++k) {
        const auto ref = oracle::propagate(m.entries, b0.b, times[k]);
        worst = std::max(worst,
                         (traj.excited.col(Eigen::Index(k)) - ref).cwiseAbs().maxCoeff());
      }
      CHECK(worst < 1e-8);
    }
  }
}

TEST_CASE("eigen and adaptive propagators agree on a larger cloud") {
  const auto cloud = random_cloud(200, {1, 1, 4}, 7);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto times = time_grid(6.0, 61);
  const auto a = evolve_two_level(m, timed_dicke_state(200), times);
  const auto b = evolve_two_level(m, timed_dicke_state(200), times, adaptive_options());
  CHECK((a.excited - b.excited).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(a.method != b.method);
}

TEST_CASE("excited population never increases") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto cloud = random_cloud(300, {0.8, 0.8, 3}, seed);
    const auto m = build_interaction_matrix(cloud, Gauge::tilde);
    const auto traj = evolve_two_level(m, timed_dicke_state(300), time_grid(8.0, 400));
    for (std::size_t k = 1; k < traj.size(); ++k) {
      CHECK(traj.populations[k].excited <= traj.populations[k - 1].excited + 1e-12);
      CHECK(traj.populations[k].excited <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("tilde and plain gauges give the same dynamics") {
  const auto cloud = random_cloud(40, {0.5, 0.5, 1.5}, 31);
  const auto plain = build_interaction_matrix(cloud, Gauge::plain);
  const auto tilde = build_interaction_matrix(cloud, Gauge::tilde);
  const CVector ph = drive_phases(cloud);
  AmplitudeState phased{ph / std::sqrt(40.0), std::nullopt, 0.0};
  const auto times = time_grid(5.0, 41);
  const auto a = evolve_two_level(tilde, timed_dicke_state(40), times);
  const auto b = evolve_two_level(plain, phased, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const CVector back = ph.conjugate().cwiseProduct(b.excited.col(Eigen::Index(k)));
    const auto pb = populations_of(back);
    CHECK(std::abs(pb.timed_dicke - a.populations[k].timed_dicke) < 1e-10);
    CHECK(std::abs(b.populations[k].excited - a.populations[k].excited) < 1e-10);
  }
}

TEST_CASE("global phase and linearity") {
  const auto cloud = random_cloud(30, {0.5, 0.5, 1}, 12);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto times = time_grid(4.0, 21);
  const auto base = evolve_two_level(m, timed_dicke_state(30), times);
  const oracle::cd phase = std::polar(1.0, 1.234);
  const oracle::cd alpha(0.3, -0.7);
  AmplitudeState rotated = timed_dicke_state(30);
  rotated.b *= phase;
  AmplitudeState scaled = timed_dicke_state(30);
  scaled.b *= alpha;
  const auto r = evolve_two_level(m, rotated, times);
  const auto s = evolve_two_level(m, scaled, times);
  CHECK(max_population_gap(base, r) < 1e-14);
  CHECK((s.excited - alpha * base.excited).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("pulse description") {
  Pulse p;
  p.omega0_per_s = 5e6;
  p.t0_us = 1.0;
  p.sigma_t_us = 0.4;
  CHECK(p.rabi_per_s(1.0) == doctest::Approx(2.5e6));
  CHECK(p.rabi_per_s(10.0) == doctest::Approx(5e6));
  CHECK(p.rabi_per_s(-10.0) < 1e-6);
  const auto s = scale_pulse(p, 2e7);
  CHECK(s.omega0 == doctest::Approx(0.25));
  CHECK(s.t0 == doctest::Approx(20.0));
  CHECK(s.sigma_t == doctest::Approx(8.0));
  CHECK(s.rabi(20.0) == doctest::Approx(0.125));
  p.sigma_t_us = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.sigma_t_us = 0.4;
  p.omega0_per_s = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS(parse_pulse_shape("square"), ConfigError);
}

TEST_CASE("no drive leaves the storage state untouched") {
  const auto cloud = random_cloud(20, {0.5, 0.5, 1}, 3);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto traj = evolve_three_level(m, test_pulse(0.0, 0.3), storage_state(20),
                                       time_grid(10.0, 51));
  for (const auto& p : traj.populations) {
    CHECK(p.storage == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.excited < 1e-28);
  }
}

TEST_CASE("weak resonant drive of independent atoms follows the adiabatic solution") {
  const auto cloud = random_cloud(10, {1, 1, 1}, 2);
  const auto m = non_interacting_matrix(cloud, Gauge::tilde);
  ScaledPulse p = test_pulse(0.2, 0.0);
  p.t0 = 20.0;
  p.sigma_t = 8.0;
  const auto times = time_grid(40.0, 81);
  const auto traj = evolve_three_level(m, p, storage_state(10), times);
  const auto rabi = [&](double t) { return p.rabi(t); };
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double c = std::abs((*traj.storage)(0, Eigen::Index(k))) * std::sqrt(10.0);
    const double expect = oracle::adiabatic_storage(rabi, times[k]);
    CHECK(c == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("modal integrator matches direct integration in both frames") {
  const auto cloud = random_cloud(6, {0.2, 0.2, 0.4}, 5);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto times = time_grid(12.0, 61);
  for (double delta : {-1.5, 0.0, 0.9}) {
    const auto p = test_pulse(0.6, delta);
    const auto modal = evolve_three_level(m, p, storage_state(6), times);
    const auto literal = evolve_three_level_direct(m, p, storage_state(6), times, 400);
    const auto shifted = evolve_three_level_direct(m, p, storage_state(6), times, 400,
                                                   DriveFrame::shifted);
    CHECK(max_population_gap(literal, shifted) < 1e-9);
    CHECK((literal.excited - shifted.excited).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(max_population_gap(modal, literal) < 1e-6);
    CHECK((*modal.storage - *literal.storage).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("ground population only grows and populations sum to one") {
  const auto cloud = random_cloud(150, {1, 1, 4}, 9);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  const auto traj = evolve_three_level(m, test_pulse(0.5, -0.4), storage_state(150),
                                       time_grid(20.0, 200));
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& p = traj.populations[k];
    CHECK(p.storage + p.excited + p.ground == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.storage + p.excited <= 1.0 + 1e-9);
    if (k > 0) CHECK(p.ground >= traj.populations[k - 1].ground - 1e-9);
  }
  CHECK(traj.populations.back().ground > 0.5);
  CHECK(traj.method.find("lawson") != std::string::npos);
}

TEST_CASE("step halving converges and reports the step count") {
  const auto cloud = random_cloud(8, {0.3, 0.3, 0.6}, 1);
  const auto m = build_interaction_matrix(cloud, Gauge::tilde);
  ThreeLevelOptions loose, tight;
  loose.tolerance = 1e-4;
  tight.tolerance = 1e-9;
  const auto times = time_grid(10.0, 21);
  const auto a = evolve_three_level(m, test_pulse(1.0, 0.5), storage_state(8), times, loose);
  const auto b = evolve_three_level(m, test_pulse(1.0, 0.5), storage_state(8), times, tight);
  CHECK(max_population_gap(a, b) < 1e-4);
  ThreeLevelOptions starved;
  starved.tolerance = 1e-15;
  starved.max_halvings = 1;
  starved.substeps = 1;
  CHECK_THROWS_AS(
      evolve_three_level(m, test_pulse(1.0, 0.5), storage_state(8), times, starved),
      NumericalError);
}

TEST_CASE("three-level inputs are validated") {
  const auto m = non_interacting_matrix(random_cloud(3, {1, 1, 1}, 1), Gauge::tilde);
  auto p = test_pulse(0.2, 0.0);
  const auto times = time_grid(1.0, 5);
  CHECK_THROWS_AS(evolve_three_level(m, p, timed_dicke_state(3), times), ConfigError);
  p.sigma_t = 0.0;
  CHECK_THROWS_AS(evolve_three_level(m, p, storage_state(3), times), ConfigError);
}

}  // TEST_SUITE
