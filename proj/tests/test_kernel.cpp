#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

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

Vec3 unit(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta)};
}

// Greedy nearest matching of two eigenvalue sets; returns the largest
// distance relative to the largest modulus.
double spectral_distance(Eigen::VectorXcd a, Eigen::VectorXcd b) {
  double worst = 0.0, scale = 0.0;
  std::vector<bool> used(static_cast<std::size_t>(b.size()), false);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double best = 1e300;
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double d = std::abs(a[i] - b[j]);
      if (d < best) best = d, arg = j;
    }
    used[static_cast<std::size_t>(arg)] = true;
    worst = std::max(worst, best);
    scale = std::max(scale, std::abs(a[i]));
  }
  return worst / scale;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("isotropic kernel at k r = pi") {
  const auto c = pair_coupling_projected(kPi, 0.0, KernelMode::isotropic);
  CHECK(std::abs(c.f) < 1e-15);
  CHECK(c.g == doctest::Approx(1.0 / kPi).epsilon(1e-14));
  const auto via_vector =
      pair_coupling(Vec3(0, 0, 0.39), sigma_plus_dipole(), kPi / 0.39, KernelMode::isotropic);
  CHECK(via_vector.g == doctest::Approx(1.0 / kPi).epsilon(1e-14));
}

TEST_CASE("real part tends to one at short distance for every orientation") {
  for (double theta : {0.0, 0.4, kPi / 2, 2.5}) {
    for (double kr : {1e-3, 1e-4}) {
      const auto c =
          pair_coupling(kr * unit(theta, 0.3), sigma_plus_dipole(), 1.0, KernelMode::full);
      CHECK(c.f == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("circular dipole on the quantization axis at k r = 2") {
  const auto c = pair_coupling(Vec3(0, 0, 2.0), sigma_plus_dipole(), 1.0, KernelMode::full);
  const auto ref = oracle::exchange_kernel(2.0, 0.0);
  CHECK(c.f == doctest::Approx(ref.real()).epsilon(1e-13));
  CHECK(c.g == doctest::Approx(ref.imag()).epsilon(1e-13));
  CHECK(c.f == doctest::Approx(0.3554).epsilon(1e-4 / 0.3554));
  CHECK(c.g == doctest::Approx(0.5750).epsilon(1e-4 / 0.5750));
}

TEST_CASE("full kernel matches the term-by-term closed forms") {
  const CVec3 p = sigma_plus_dipole();
  for (double kr : {0.02, 0.1, 0.5, 1.0, 2.0, 3.7, 10.0, 55.0}) {
    for (double theta : {0.0, 0.3, 1.0, kPi / 2, 2.9}) {
      const Vec3 rhat = unit(theta, 1.1);
      const double q = std::pow(std::sin(theta), 2) / 2;
      const auto c = pair_coupling(kr * rhat, p, 1.0, KernelMode::full);
      const auto ref = oracle::exchange_kernel(kr, q);
      const double scale = std::max(1.0, std::abs(ref));
      CHECK(std::abs(c.F() - ref) < 1e-10 * scale);
    }
  }
}

TEST_CASE("short-distance series branch joins the closed forms") {
  for (double q : {0.0, 1.0 / 3.0, 0.5, 1.0}) {
    const auto below = pair_coupling_projected(0.00999999, q, KernelMode::full);
    const auto above = pair_coupling_projected(0.01000001, q, KernelMode::full);
    CHECK(below.f == doctest::Approx(above.f).epsilon(1e-6));
    CHECK(below.g == doctest::Approx(above.g).epsilon(1e-5));
  }
}

TEST_CASE("projection of a complex dipole equals the tensor contraction") {
  // p* . (1 - r r) . p = 1 - |p.r|^2 and p* . (1 - 3 r r) . p = 1 - 3 |p.r|^2
  // for any unit complex p, so the scalar form is the tensor Green function.
  const std::vector<CVec3> dipoles = {
      sigma_plus_dipole(),
      CVec3(oracle::cd(1, 0), oracle::cd(0, -1), 0) / std::sqrt(2.0),
      CVec3(oracle::cd(0.3, 0.1), oracle::cd(-0.2, 0.6), oracle::cd(0.5, -0.4)).normalized(),
      CVec3(0, 0, 1)};
  for (const auto& p : dipoles) {
    for (double theta : {0.2, 1.3, 2.2}) {
      const Vec3 rhat = unit(theta, 0.7);
      const Eigen::Matrix3cd rr = (rhat * rhat.transpose()).cast<oracle::cd>();
      const Eigen::Matrix3cd one = Eigen::Matrix3cd::Identity();
      const double t1 = (p.adjoint() * (one - rr) * p)(0).real();
      const double t3 = (p.adjoint() * (one - 3.0 * rr) * p)(0).real();
      const double kr = 1.7;
      const double s = std::sin(kr), co = std::cos(kr);
      const oracle::cd tensor{
          1.5 * t1 * s / kr + 1.5 * t3 * (co / (kr * kr) - s / (kr * kr * kr)),
          -1.5 * t1 * co / kr + 1.5 * t3 * (s / (kr * kr) + co / (kr * kr * kr))};
      const auto c = pair_coupling(kr * rhat, p, 1.0, KernelMode::full);
      CHECK(std::abs(c.F() - tensor) < 1e-12);
    }
  }
}

TEST_CASE("exchange symmetry and decay at large distance") {
  const CVec3 p = sigma_plus_dipole();
  for (double theta : {0.1, 0.9, 2.0}) {
    const Vec3 r = 3.1 * unit(theta, 2.3);
    CHECK(std::abs(pair_coupling(r, p, 2.0, KernelMode::full).F() -
                   pair_coupling(-r, p, 2.0, KernelMode::full).F()) < 1e-15);
  }
  double previous = 1e9;
  for (double kr : {1e2, 1e3, 1e4, 1e5}) {
    const double m = std::abs(pair_coupling(kr * unit(0.7, 0.0), p, 1.0, KernelMode::full).F());
    CHECK(m < 1.6 / kr);
    CHECK(m < previous);
    previous = m;
  }
}

TEST_CASE("far-field kernel approaches the full kernel") {
  // The neglected terms are (1 - 3q) / ((1 - q) k r) relative to the kept
  // one, at most 1/(k r) for a circular dipole.
  const CVec3 p = sigma_plus_dipole();
  for (double kr : {50.0, 73.0, 100.0, 150.0, 400.0}) {
    for (double theta : {0.0, 0.5, 1.0, kPi / 2}) {
      const Vec3 r = kr * unit(theta, 0.0);
      const auto full = pair_coupling(r, p, 1.0, KernelMode::full).F();
      const auto ff = pair_coupling(r, p, 1.0, KernelMode::farfield).F();
      const double rel = std::abs(full - ff) / std::abs(ff);
      const double q = std::pow(std::sin(theta), 2) / 2;
      CHECK(rel <= 1.01 * std::abs(1 - 3 * q) / ((1 - q) * kr) + 1e-12);
      CHECK(rel <= 1.01 / kr);
      if (kr > 100.0) CHECK(rel <= 0.01);
    }
  }
}

TEST_CASE("isotropic kernel is the full kernel at projection one third") {
  for (double kr : {0.005, 0.3, 1.0, 4.0, 20.0}) {
    const auto full = pair_coupling_projected(kr, 1.0 / 3.0, KernelMode::full);
    const auto iso = pair_coupling_projected(kr, 0.0, KernelMode::isotropic);
    // 1 - 3q is only zero to rounding; it multiplies terms up to 1/(k r)^3.
    const double tol = 1e-12 * std::max(1.0, std::abs(iso.F())) + 1e-15 / (kr * kr * kr);
    CHECK(std::abs(full.F() - iso.F()) < tol);
  }
}

TEST_CASE("zero and sub-cutoff separations are rejected") {
  const CVec3 p = sigma_plus_dipole();
  CHECK_THROWS_AS(pair_coupling(Vec3::Zero(), p, 8.0, KernelMode::full), ConfigError);
  CHECK_THROWS_AS(pair_coupling(Vec3(0, 0, 0.001), p, 8.0, KernelMode::full, 0.0078),
                  ConfigError);
  CHECK_NOTHROW(pair_coupling(Vec3(0, 0, 0.01), p, 8.0, KernelMode::full, 0.0078));
  CHECK_THROWS_AS(parse_kernel_mode("dipolar"), ConfigError);
}

TEST_CASE("single atom matrix") {
  const auto m = build_interaction_matrix(random_cloud(1, {1, 1, 1}, 3), Gauge::tilde);
  REQUIRE(m.n() == 1);
  CHECK(m.entries(0, 0) == oracle::cd(1.0, 0.0));
}

TEST_CASE("plain matrix is complex symmetric with unit diagonal") {
  for (std::size_t n : {2u, 30u}) {
    const auto cloud = random_cloud(n, {1, 1, 2}, 17);
    const auto m = build_interaction_matrix(cloud, Gauge::plain);
    CHECK((m.entries - m.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index j = 0; j < m.n(); ++j) CHECK(m.entries(j, j) == oracle::cd(1, 0));
    const auto t = build_interaction_matrix(cloud, Gauge::tilde);
    for (Eigen::Index j = 0; j < t.n(); ++j) CHECK(t.entries(j, j) == oracle::cd(1, 0));
    CHECK(m.k_c == doctest::Approx(m.k_e));
  }
}

TEST_CASE("gauges are related by the drive phases") {
  const auto cloud = random_cloud(12, {1, 1, 2}, 5);
  const auto plain = build_interaction_matrix(cloud, Gauge::plain);
  const auto tilde = build_interaction_matrix(cloud, Gauge::tilde);
  const Vec3 kc = cloud.spec.k_c();
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (i == j) continue;
      const double phase = kc.dot(cloud.positions[i] - cloud.positions[j]);
      const auto expect = plain.entries(Eigen::Index(j), Eigen::Index(i)) *
                          std::polar(1.0, phase);
      CHECK(std::abs(tilde.entries(Eigen::Index(j), Eigen::Index(i)) - expect) < 1e-14);
    }
  }
}

TEST_CASE("gauges share eigenvalues") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cloud = random_cloud(3, {0.3, 0.3, 0.6}, seed);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> a(
        build_interaction_matrix(cloud, Gauge::plain).entries, false);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> b(
        build_interaction_matrix(cloud, Gauge::tilde).entries, false);
    CHECK(spectral_distance(a.eigenvalues(), b.eigenvalues()) < 1e-12);
  }
  const auto big = random_cloud(60, {1, 1, 2}, 9);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> a(
      build_interaction_matrix(big, Gauge::plain).entries, false);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> b(
      build_interaction_matrix(big, Gauge::tilde).entries, false);
  CHECK(spectral_distance(a.eigenvalues(), b.eigenvalues()) < 1e-11);
}

TEST_CASE("real part of the coupling matrix is positive semidefinite") {
  struct Case {
    std::size_t n;
    Vec3 sigma;
  };
  for (const auto& c : {Case{20, {0.2, 0.2, 0.2}}, Case{200, {1, 1, 8}},
                        Case{300, {0.5, 0.5, 1.0}}, Case{400, {2, 2, 2}}}) {
    for (std::uint64_t seed : {11u, 12u}) {
      const auto m = build_interaction_matrix(random_cloud(c.n, c.sigma, seed), Gauge::plain);
      const Eigen::MatrixXd re = m.entries.real();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(re, Eigen::EigenvaluesOnly);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
  }
}

TEST_CASE("kernel forms produce distinct matrices") {
  const auto cloud = random_cloud(10, {0.5, 0.5, 0.5}, 4);
  const auto full = build_interaction_matrix(cloud, Gauge::plain, KernelMode::full);
  const auto iso = build_interaction_matrix(cloud, Gauge::plain, KernelMode::isotropic);
  CHECK((full.entries - iso.entries).cwiseAbs().maxCoeff() > 1e-3);
  const auto none = non_interacting_matrix(cloud, Gauge::tilde);
  CHECK(!none.interacting);
  CHECK(none.entries.isIdentity(0.0));
}

}  // TEST_SUITE
