#include "collemit/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/core.h>
#include <unsupported/Eigen/NonLinearOptimization>

#include "collemit/error.hpp"

namespace collemit {

double TriExpFit::operator()(double t) const {
  return p1 * std::exp(-gamma_super * t) + p2 * std::exp(-gamma_mid * t) +
         p3 * std::exp(-gamma_sub * t);
}

namespace {

// Which of the fast / slow terms a nested model carries.
struct Terms {
  bool fast;
  bool slow;
};

// Parameters: ln p2, [ln p1, a], [ln p3, b] with
//   G_S = G (1 + e^a),  G_s = G / (1 + e^b).
struct LogResidual {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<double>* t;
  const std::vector<double>* log_p;
  double rate;
  Terms terms;

  int inputs() const { return 1 + (terms.fast ? 2 : 0) + (terms.slow ? 2 : 0); }
  int values() const { return static_cast<int>(t->size()); }

  struct Unpacked {
    double u_mid, u_fast = 0, a = 0, u_slow = 0, b = 0;
  };
  Unpacked unpack(const Eigen::VectorXd& x) const {
    Unpacked u{x[0]};
    int i = 1;
    if (terms.fast) {
      u.u_fast = x[i++];
      u.a = x[i++];
    }
    if (terms.slow) {
      u.u_slow = x[i++];
      u.b = x[i++];
    }
    return u;
  }

  double fast_rate(double a) const { return rate * (1.0 + std::exp(a)); }
  double slow_rate(double b) const { return rate / (1.0 + std::exp(b)); }

  // Exponents and their log-sum-exp at sample k.
  void exponents(const Unpacked& u, double tk, std::array<double, 3>& e,
                 double& lse) const {
    e = {-std::numeric_limits<double>::infinity(), u.u_mid - rate * tk,
         -std::numeric_limits<double>::infinity()};
    if (terms.fast) e[0] = u.u_fast - fast_rate(u.a) * tk;
    if (terms.slow) e[2] = u.u_slow - slow_rate(u.b) * tk;
    const double m = std::max({e[0], e[1], e[2]});
    lse = m + std::log(std::exp(e[0] - m) + std::exp(e[1] - m) + std::exp(e[2] - m));
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    const Unpacked u = unpack(x);
    for (int k = 0; k < values(); ++k) {
      std::array<double, 3> e;
      double lse;
      exponents(u, (*t)[static_cast<std::size_t>(k)], e, lse);
      f[k] = lse - (*log_p)[static_cast<std::size_t>(k)];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    const Unpacked u = unpack(x);
    for (int k = 0; k < values(); ++k) {
      const double tk = (*t)[static_cast<std::size_t>(k)];
      std::array<double, 3> e;
      double lse;
      exponents(u, tk, e, lse);
      const double s_fast = std::exp(e[0] - lse);
      const double s_mid = std::exp(e[1] - lse);
      const double s_slow = std::exp(e[2] - lse);
      jac(k, 0) = s_mid;
      int i = 1;
      if (terms.fast) {
        jac(k, i++) = s_fast;
        jac(k, i++) = -tk * s_fast * rate * std::exp(u.a);
      }
      if (terms.slow) {
        const double eb = std::exp(u.b);
        jac(k, i++) = s_slow;
        jac(k, i++) = tk * s_slow * rate * eb / ((1.0 + eb) * (1.0 + eb));
      }
    }
    return 0;
  }
};

double interp(std::span<const double> x, std::span<const double> y, double at) {
  auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  const auto i = static_cast<std::size_t>(it - x.begin());
  const double w = (at - x[i - 1]) / (x[i] - x[i - 1]);
  return (1.0 - w) * y[i - 1] + w * y[i];
}

struct Candidate {
  TriExpFit fit;
  int complexity;
  bool finite;
};

}  // namespace

TriExpFit fit_triexponential(std::span<const double> times,
                             std::span<const double> p,
                             double fixed_middle_rate,
                             const TriExpOptions& options) {
  if (times.size() != p.size() || times.size() < 4)
    throw ConfigError("fit_triexponential: need >= 4 matching samples");
  if (!(fixed_middle_rate > 0.0))
    throw ConfigError("fit_triexponential: middle rate must be positive");
  for (double v : p)
    if (!(v > 0.0)) throw ConfigError("fit_triexponential: p(t) must be positive");

  // Log-spaced resampling of ln p over (0, window], plus t = 0.
  std::vector<double> log_p_in(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) log_p_in[i] = std::log(p[i]);
  const double t_end = std::min(options.window, times.back());
  double t_first = times.back();
  for (double t : times)
    if (t > 0.0) {
      t_first = t;
      break;
    }
  t_first = std::min(t_first, 1e-2 * t_end);
  std::vector<double> ts{times.front()}, ls{interp(times, log_p_in, times.front())};
  const std::size_t m = std::max<std::size_t>(options.samples, 8);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = t_first * std::pow(t_end / t_first,
                                        static_cast<double>(i) / static_cast<double>(m - 1));
    ts.push_back(t);
    ls.push_back(interp(times, log_p_in, t));
  }

  // Initial slope sets the scale of the fast-rate starts.
  const double slope = std::max(
      fixed_middle_rate, -(interp(times, log_p_in, 0.05) - ls.front()) / 0.05);
  const double ln_p0 = ls.front();

  const double rate = fixed_middle_rate;
  std::vector<Candidate> candidates;
  const std::array<Terms, 4> models{{{false, false}, {true, false}, {false, true}, {true, true}}};
  for (const Terms& terms : models) {
    const int complexity = (terms.fast ? 1 : 0) + (terms.slow ? 1 : 0);
    LogResidual functor{&ts, &ls, rate, terms};
    Candidate best{{}, complexity, false};
    best.fit.residual = std::numeric_limits<double>::infinity();
    for (double fast_mult : {5.0, 2.0, 12.0}) {
      for (double slow_mult : {0.2, 0.05, 0.5}) {
        if (!terms.fast && fast_mult != 5.0) continue;
        if (!terms.slow && slow_mult != 0.2) continue;
        Eigen::VectorXd x(functor.inputs());
        const double third = ln_p0 - std::log(1.0 + complexity);
        x[0] = third;
        int i = 1;
        if (terms.fast) {
          const double g_fast = std::max(1.05, fast_mult * slope / rate);
          x[i++] = third;
          x[i++] = std::log(g_fast - 1.0);
        }
        if (terms.slow) {
          x[i++] = third;
          x[i++] = std::log(1.0 / slow_mult - 1.0);
        }
        Eigen::LevenbergMarquardt<LogResidual> lm(functor);
        lm.parameters.maxfev = 4000;
        lm.parameters.xtol = 1e-12;
        lm.parameters.ftol = 1e-14;
        const auto status = lm.minimize(x);
        Eigen::VectorXd f(functor.values());
        functor(x, f);
        const double rms = std::sqrt(f.squaredNorm() / static_cast<double>(f.size()));
        if (!std::isfinite(rms) || !x.allFinite()) continue;
        if (rms < best.fit.residual) {
          const auto u = functor.unpack(x);
          TriExpFit fit;
          fit.p2 = std::exp(u.u_mid);
          fit.gamma_mid = rate;
          fit.gamma_super = terms.fast ? functor.fast_rate(u.a) : rate;
          fit.p1 = terms.fast ? std::exp(u.u_fast) : 0.0;
          fit.gamma_sub = terms.slow ? functor.slow_rate(u.b) : rate;
          fit.p3 = terms.slow ? std::exp(u.u_slow) : 0.0;
          fit.residual = rms;
          fit.converged =
              status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
              status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
          best = {fit, complexity, true};
        }
      }
    }
    if (best.finite) candidates.push_back(best);
  }
  if (candidates.empty())
    throw NumericalError("fit_triexponential: no start produced a finite fit");

  double best_rms = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best_rms = std::min(best_rms, c.fit.residual);
  const Candidate* chosen = nullptr;
  for (const auto& c : candidates) {
    if (c.fit.residual > best_rms + 1e-9) continue;
    if (!chosen || c.complexity < chosen->complexity) chosen = &c;
  }
  TriExpFit out = chosen->fit;
  if (!out.converged)
    out.message = fmt::format("best start did not converge (residual {:.3g})", out.residual);
  return out;
}

double superradiant_rate_model(double n, double k_e, double sigma_xy,
                               double geometry_factor) {
  if (!(n > 0.0) || !(k_e > 0.0) || !(sigma_xy > 0.0) || !(geometry_factor > 0.0))
    throw ConfigError("superradiant_rate_model: inputs must be positive");
  return geometry_factor * n / (k_e * k_e * sigma_xy * sigma_xy);
}

void EffectiveThreeLevel::validate() const {
  if (!(gamma_s > 0.0)) throw ConfigError("effective model: gamma_s must be > 0");
  if (!(omega_eff_per_s >= 0.0))
    throw ConfigError("effective model: omega_eff must be >= 0");
}

EffectiveAmplitudes effective_three_level(const EffectiveThreeLevel& model,
                                          const Pulse& pulse,
                                          double gamma_per_s, double t) {
  model.validate();
  Pulse eff = pulse;
  eff.omega0_per_s = model.omega_eff_per_s;
  const ScaledPulse sp = scale_pulse(eff, gamma_per_s);
  const double detuning = sp.delta_c - model.delta_e;
  const cdouble denom(0.5 * model.gamma_s, -detuning);

  double area = 0.0;  // int_0^t Omega_eff^2 dt'
  if (t > 0.0 && sp.omega0 > 0.0) {
    auto integrand = [&](double s) {
      const double w = sp.rabi(s);
      return w * w;
    };
    area = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, 0.0, t, 15, 1e-12);
  }
  const cdouble c = std::exp(-area / denom);
  const cdouble b = kI * sp.rabi(t) * std::polar(1.0, -detuning * t) / denom * c;
  // The weak-drive solution does not conserve norm exactly; keep p_G physical.
  return {c, b, std::clamp(1.0 - std::norm(c) - std::norm(b), 0.0, 1.0)};
}

double effective_three_level_pG(const EffectiveThreeLevel& model,
                                const Pulse& pulse, double gamma_per_s,
                                double t) {
  return effective_three_level(model, pulse, gamma_per_s, t).ground;
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("correlation: need two equally long series");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace collemit
