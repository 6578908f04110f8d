#include "collemit/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <boost/numeric/odeint.hpp>
#include <fmt/core.h>

#include "collemit/error.hpp"

namespace collemit {

namespace odeint = boost::numeric::odeint;

namespace {

using SiteState = std::vector<cdouble>;

void check_times(std::span<const double> times) {
  if (times.empty()) throw ConfigError("time grid is empty");
  if (times.front() != 0.0) throw ConfigError("time grid must start at 0");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw ConfigError("time grid must be strictly increasing");
}

void fill_populations(AmplitudeTrajectory& traj) {
  const std::size_t nt = traj.times.size();
  traj.populations.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const CVector b = traj.excited.col(col);
    if (traj.storage) {
      const CVector c = traj.storage->col(col);
      traj.populations[k] = populations_of(b, &c);
    } else {
      traj.populations[k] = populations_of(b);
    }
  }
}

void require_finite(const AmplitudeTrajectory& traj,
                    std::optional<std::uint64_t> seed) {
  if (!traj.excited.allFinite() || (traj.storage && !traj.storage->allFinite()))
    throw NumericalError("non-finite amplitudes in trajectory", seed);
}

AmplitudeTrajectory two_level_eigen(const Eigensystem& sys, const CVector& b0,
                                    std::span<const double> times) {
  const Eigen::Index n = b0.size();
  const auto nt = static_cast<Eigen::Index>(times.size());
  const CVector modal = sys.left * b0;
  CMatrix coeff(n, nt);
  for (Eigen::Index k = 0; k < nt; ++k) {
    const double t = times[static_cast<std::size_t>(k)];
    for (Eigen::Index m = 0; m < n; ++m)
      coeff(m, k) = modal[m] * std::exp(-0.5 * sys.values[m] * t);
  }
  AmplitudeTrajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.excited = sys.right * coeff;
  traj.method = "eigen";
  return traj;
}

AmplitudeTrajectory two_level_adaptive(const InteractionMatrix& a,
                                       const CVector& b0,
                                       std::span<const double> times,
                                       double rel_tol, double abs_tol) {
  const Eigen::Index n = b0.size();
  const CMatrix half = 0.5 * a.entries;
  auto rhs = [&](const SiteState& x, SiteState& dxdt, double /*t*/) {
    Eigen::Map<const CVector> xv(x.data(), n);
    Eigen::Map<CVector> dv(dxdt.data(), n);
    dv.noalias() = -half * xv;
  };
  SiteState x(b0.data(), b0.data() + n);
  AmplitudeTrajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.excited.resize(n, static_cast<Eigen::Index>(times.size()));
  Eigen::Index col = 0;
  auto observer = [&](const SiteState& s, double /*t*/) {
    traj.excited.col(col++) = Eigen::Map<const CVector>(s.data(), n);
  };
  auto stepper = odeint::make_dense_output(
      abs_tol, rel_tol, odeint::runge_kutta_dopri5<SiteState>());
  const double dt0 = times.size() > 1 ? (times[1] - times[0]) * 0.01 : 1e-3;
  odeint::integrate_times(stepper, rhs, x, times.begin(), times.end(), dt0,
                          observer);
  traj.method = "adaptive";
  return traj;
}

}  // namespace

Populations populations_of(const CVector& b, const CVector* c) {
  Populations p;
  const double n = static_cast<double>(b.size());
  p.timed_dicke = std::norm(b.sum()) / n;
  p.excited = b.squaredNorm();
  p.storage = c ? c->squaredNorm() : 0.0;
  p.ground = 1.0 - p.storage - p.excited;
  return p;
}

AmplitudeState AmplitudeTrajectory::state(std::size_t k) const {
  const auto col = static_cast<Eigen::Index>(k);
  AmplitudeState s{excited.col(col), std::nullopt, times.at(k)};
  if (storage) s.c = storage->col(col);
  return s;
}

AmplitudeState timed_dicke_state(std::size_t n) {
  if (n < 1) throw ConfigError("timed_dicke_state: n must be >= 1");
  const auto m = static_cast<Eigen::Index>(n);
  return {CVector::Constant(m, 1.0 / std::sqrt(static_cast<double>(n))),
          std::nullopt, 0.0};
}

AmplitudeState storage_state(std::size_t n) {
  if (n < 1) throw ConfigError("storage_state: n must be >= 1");
  const auto m = static_cast<Eigen::Index>(n);
  return {CVector::Zero(m),
          CVector::Constant(m, 1.0 / std::sqrt(static_cast<double>(n))), 0.0};
}

std::vector<double> time_grid(double t_max, std::size_t points) {
  if (points < 2 || !(t_max > 0.0))
    throw ConfigError("time grid needs >= 2 points and t_max > 0");
  std::vector<double> t(points);
  for (std::size_t k = 0; k < points; ++k)
    t[k] = t_max * static_cast<double>(k) / static_cast<double>(points - 1);
  return t;
}

PulseShape parse_pulse_shape(std::string_view name) {
  if (name == "erf") return PulseShape::erf;
  if (name == "constant") return PulseShape::constant;
  throw ConfigError("unknown pulse shape '" + std::string(name) + "'");
}

void Pulse::validate() const {
  if (!(omega0_per_s >= 0.0)) throw ConfigError("pulse: omega0 must be >= 0");
  if (shape == PulseShape::erf && !(sigma_t_us > 0.0))
    throw ConfigError("pulse: sigma_t must be > 0 for the erf shape");
  if (!std::isfinite(delta_c_rad_per_s) || !std::isfinite(t0_us))
    throw ConfigError("pulse: non-finite t0 or detuning");
}

double Pulse::rabi_per_s(double t_us) const {
  if (shape == PulseShape::constant) return omega0_per_s;
  return omega0_per_s * 0.5 *
         (1.0 + std::erf((t_us - t0_us) / (std::sqrt(2.0) * sigma_t_us)));
}

double ScaledPulse::rabi(double t) const {
  if (shape == PulseShape::constant) return omega0;
  return omega0 * 0.5 * (1.0 + std::erf((t - t0) / (std::sqrt(2.0) * sigma_t)));
}

ScaledPulse scale_pulse(const Pulse& pulse, double gamma_per_s) {
  pulse.validate();
  if (!(gamma_per_s > 0.0)) throw ConfigError("gamma_per_s must be positive");
  return {pulse.shape, pulse.omega0_per_s / gamma_per_s,
          us_to_gamma_time(pulse.t0_us, gamma_per_s),
          us_to_gamma_time(pulse.sigma_t_us, gamma_per_s),
          pulse.delta_c_rad_per_s / gamma_per_s};
}

AmplitudeTrajectory evolve_two_level(const InteractionMatrix& a,
                                     const AmplitudeState& b0,
                                     std::span<const double> times,
                                     const TwoLevelOptions& options) {
  check_times(times);
  if (a.n() != b0.b.size())
    throw ConfigError("evolve_two_level: state size does not match matrix");

  AmplitudeTrajectory traj;
  if (options.method == Propagator::eigen) {
    try {
      if (options.eigensystem) {
        traj = two_level_eigen(*options.eigensystem, b0.b, times);
      } else {
        traj = two_level_eigen(decompose(a, options.seed), b0.b, times);
      }
    } catch (const NumericalError& e) {
      traj = two_level_adaptive(a, b0.b, times, options.rel_tol, options.abs_tol);
      traj.notes.push_back(std::string("eigen propagation failed (") + e.what() +
                           "); used adaptive stepping");
    }
  } else {
    traj = two_level_adaptive(a, b0.b, times, options.rel_tol, options.abs_tol);
  }
  require_finite(traj, options.seed);
  fill_populations(traj);

  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double prev = traj.populations[k - 1].excited;
    if (traj.populations[k].excited > prev * (1.0 + 1e-9) + 1e-12) {
      traj.notes.push_back(fmt::format(
          "excited population increased at t = {:.6g} (kernel real part not "
          "positive semidefinite?)",
          traj.times[k]));
      break;
    }
  }
  return traj;
}

namespace {

// Storage/excited pair of one eigenmode, advanced by the Lawson RK4 scheme:
// the linear decay -mu * beta is integrated exactly, the drive explicitly.
struct ModePair {
  cdouble storage;
  cdouble excited;
};

struct ModalRun {
  CMatrix storage;  // modal amplitudes, N x T
  CMatrix excited;
};

ModalRun integrate_modes(const Eigensystem& sys, const ScaledPulse& pulse,
                         const CVector& c0, const CVector& b0,
                         std::span<const double> times, std::size_t substeps) {
  const Eigen::Index n = sys.values.size();
  const auto nt = static_cast<Eigen::Index>(times.size());
  const CVector g0 = sys.left * c0;
  const CVector e0 = sys.left * b0;
  ModalRun run{CMatrix(n, nt), CMatrix(n, nt)};

  // The drive is shared by all modes: tabulate it at the RK stage times once.
  const std::size_t intervals = times.size() - 1;
  const double delta = pulse.delta_c;
  auto drive = [&](double t) { return pulse.rabi(t) * std::polar(1.0, -delta * t); };
  // Per substep: Omega e^{-i D t} at t, t + h/2, t + h.
  std::vector<std::array<cdouble, 3>> stages(intervals * substeps);
  std::vector<double> step(intervals);
  for (std::size_t k = 0; k < intervals; ++k) {
    const double h = (times[k + 1] - times[k]) / static_cast<double>(substeps);
    step[k] = h;
    for (std::size_t s = 0; s < substeps; ++s) {
      const double t = times[k] + h * static_cast<double>(s);
      stages[k * substeps + s] = {drive(t), drive(t + 0.5 * h), drive(t + h)};
    }
  }

  for (Eigen::Index m = 0; m < n; ++m) {
    const cdouble mu = 0.5 * sys.values[m];
    ModePair y{g0[m], e0[m]};
    run.storage(m, 0) = y.storage;
    run.excited(m, 0) = y.excited;
    // rhs(t, y) = (i conj(W) beta, i W gamma) with W = Omega e^{-i D t}.
    auto rhs = [](const cdouble& w, const ModePair& v) {
      return ModePair{kI * std::conj(w) * v.excited, kI * w * v.storage};
    };
    for (std::size_t k = 0; k < intervals; ++k) {
      const double h = step[k];
      const cdouble e_half = std::exp(-mu * (0.5 * h));
      const cdouble e_full = e_half * e_half;
      for (std::size_t s = 0; s < substeps; ++s) {
        const auto& w = stages[k * substeps + s];
        const ModePair k1 = rhs(w[0], y);
        const ModePair y2{y.storage + 0.5 * h * k1.storage,
                          e_half * (y.excited + 0.5 * h * k1.excited)};
        const ModePair k2 = rhs(w[1], y2);
        const ModePair y3{y.storage + 0.5 * h * k2.storage,
                          e_half * y.excited + 0.5 * h * k2.excited};
        const ModePair k3 = rhs(w[1], y3);
        const ModePair y4{y.storage + h * k3.storage,
                          e_full * y.excited + h * e_half * k3.excited};
        const ModePair k4 = rhs(w[2], y4);
        y.storage += h / 6.0 *
                     (k1.storage + 2.0 * (k2.storage + k3.storage) + k4.storage);
        y.excited = e_full * y.excited +
                    h / 6.0 *
                        (e_full * k1.excited +
                         2.0 * e_half * (k2.excited + k3.excited) + k4.excited);
      }
      const auto col = static_cast<Eigen::Index>(k + 1);
      run.storage(m, col) = y.storage;
      run.excited(m, col) = y.excited;
    }
  }
  return run;
}

AmplitudeTrajectory modal_to_sites(const Eigensystem& sys, const ModalRun& run,
                                   std::span<const double> times) {
  AmplitudeTrajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.excited = sys.right * run.excited;
  traj.storage = sys.right * run.storage;
  fill_populations(traj);
  return traj;
}

double max_population_change(const AmplitudeTrajectory& a,
                             const AmplitudeTrajectory& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& p = a.populations[k];
    const auto& q = b.populations[k];
    worst = std::max({worst, std::abs(p.storage - q.storage),
                      std::abs(p.excited - q.excited),
                      std::abs(p.ground - q.ground),
                      std::abs(p.timed_dicke - q.timed_dicke)});
  }
  return worst;
}

std::size_t default_substeps(const ScaledPulse& pulse,
                             std::span<const double> times) {
  double dt_max = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k)
    dt_max = std::max(dt_max, times[k] - times[k - 1]);
  // Resolve the drive envelope, its Rabi oscillation and the detuning phase.
  double h = 0.25;
  const double rate = std::abs(pulse.omega0) + std::abs(pulse.delta_c);
  if (rate > 0.0) h = std::min(h, 0.2 / rate);
  if (pulse.shape == PulseShape::erf) h = std::min(h, pulse.sigma_t / 20.0);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt_max / h)));
}

void check_three_level_inputs(const InteractionMatrix& a,
                              const AmplitudeState& initial,
                              const ScaledPulse& pulse,
                              std::span<const double> times) {
  check_times(times);
  if (!initial.c)
    throw ConfigError("evolve_three_level: initial state has no storage part");
  if (a.n() != initial.b.size() || a.n() != initial.c->size())
    throw ConfigError("evolve_three_level: state size does not match matrix");
  if (pulse.shape == PulseShape::erf && !(pulse.sigma_t > 0.0))
    throw ConfigError("evolve_three_level: pulse sigma_t must be > 0");
}

}  // namespace

AmplitudeTrajectory evolve_three_level(const InteractionMatrix& a,
                                       const ScaledPulse& pulse,
                                       const AmplitudeState& initial,
                                       std::span<const double> times,
                                       const ThreeLevelOptions& options) {
  check_three_level_inputs(a, initial, pulse, times);

  Eigensystem owned;
  const Eigensystem* sys = options.eigensystem;
  if (!sys) {
    try {
      owned = decompose(a, options.seed);
      sys = &owned;
    } catch (const NumericalError& e) {
      const std::size_t steps =
          4 * (options.substeps ? options.substeps : default_substeps(pulse, times));
      auto traj = evolve_three_level_direct(a, pulse, initial, times, steps);
      traj.notes.push_back(std::string("modal decomposition failed (") +
                           e.what() + "); used direct RK4");
      require_finite(traj, options.seed);
      return traj;
    }
  }

  std::size_t substeps =
      options.substeps ? options.substeps : default_substeps(pulse, times);
  AmplitudeTrajectory coarse = modal_to_sites(
      *sys, integrate_modes(*sys, pulse, *initial.c, initial.b, times, substeps),
      times);
  require_finite(coarse, options.seed);
  for (int halving = 0;; ++halving) {
    substeps *= 2;
    AmplitudeTrajectory fine = modal_to_sites(
        *sys, integrate_modes(*sys, pulse, *initial.c, initial.b, times, substeps),
        times);
    require_finite(fine, options.seed);
    const double change = max_population_change(coarse, fine);
    if (change < options.tolerance) {
      fine.method = fmt::format("modal-lawson-rk4 ({} steps/interval)", substeps);
      return fine;
    }
    if (halving + 1 >= options.max_halvings)
      throw NumericalError(
          fmt::format("three-level step halving did not converge "
                      "(last change {:.3g} at {} steps/interval)",
                      change, substeps),
          options.seed);
    coarse = std::move(fine);
  }
}

AmplitudeTrajectory evolve_three_level_direct(const InteractionMatrix& a,
                                              const ScaledPulse& pulse,
                                              const AmplitudeState& initial,
                                              std::span<const double> times,
                                              std::size_t substeps,
                                              DriveFrame frame) {
  check_three_level_inputs(a, initial, pulse, times);
  if (substeps == 0) throw ConfigError("substeps must be >= 1");
  const Eigen::Index n = a.n();
  const CMatrix half = 0.5 * a.entries;
  const double delta = pulse.delta_c;

  // Layout: [c_0..c_{n-1}, b_0..b_{n-1}]; in the shifted frame the second
  // block holds b_j exp(+i Delta_c t).
  auto rhs = [&](const SiteState& x, SiteState& dxdt, double t) {
    Eigen::Map<const CVector> c(x.data(), n);
    Eigen::Map<const CVector> b(x.data() + n, n);
    Eigen::Map<CVector> dc(dxdt.data(), n);
    Eigen::Map<CVector> db(dxdt.data() + n, n);
    const double omega = pulse.rabi(t);
    if (frame == DriveFrame::literal) {
      const cdouble phase = std::polar(1.0, delta * t);
      dc = (kI * omega * phase) * b;
      db.noalias() = (kI * omega * std::conj(phase)) * c;
    } else {
      dc = (kI * omega) * b;
      db.noalias() = (kI * omega) * c + (kI * delta) * b;
    }
    db.noalias() -= half * b;
  };

  SiteState x(static_cast<std::size_t>(2 * n));
  for (Eigen::Index j = 0; j < n; ++j) {
    x[static_cast<std::size_t>(j)] = (*initial.c)[j];
    x[static_cast<std::size_t>(n + j)] = initial.b[j];
  }

  AmplitudeTrajectory traj;
  traj.times.assign(times.begin(), times.end());
  const auto nt = static_cast<Eigen::Index>(times.size());
  traj.excited.resize(n, nt);
  traj.storage = CMatrix(n, nt);
  auto record = [&](Eigen::Index col, double t) {
    traj.storage->col(col) = Eigen::Map<const CVector>(x.data(), n);
    cdouble unshift = 1.0;
    if (frame == DriveFrame::shifted) unshift = std::polar(1.0, -delta * t);
    traj.excited.col(col) = unshift * Eigen::Map<const CVector>(x.data() + n, n);
  };
  record(0, times[0]);
  odeint::runge_kutta4<SiteState> stepper;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double h = (times[k + 1] - times[k]) / static_cast<double>(substeps);
    double t = times[k];
    for (std::size_t s = 0; s < substeps; ++s) {
      stepper.do_step(rhs, x, t, h);
      t += h;
    }
    record(static_cast<Eigen::Index>(k + 1), times[k + 1]);
  }
  traj.method = frame == DriveFrame::literal ? "direct-rk4" : "direct-rk4-shifted";
  fill_populations(traj);
  return traj;
}

}  // namespace collemit
