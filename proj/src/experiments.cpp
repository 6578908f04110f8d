#include "collemit/experiments.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "collemit/analysis.hpp"
#include "collemit/error.hpp"
#include "collemit/output.hpp"
#include "collemit/parallel.hpp"
#include "collemit/radiation.hpp"
#include "collemit/rng.hpp"

extern "C" void openblas_set_num_threads(int);

namespace collemit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunContext {
  const SimulationConfig& config;
  const RunOptions& options;
  std::vector<std::size_t> indices;
  std::vector<std::uint64_t> seeds;
  std::string hash;

  RunContext(const SimulationConfig& c, const RunOptions& o)
      : config(c), options(o), hash(config_hash_hex(c)) {
    if (o.replay_index) {
      indices.push_back(*o.replay_index);
    } else {
      for (std::size_t i = 0; i < c.realizations; ++i) indices.push_back(i);
    }
    for (auto i : indices) seeds.push_back(realization_seed(c.master_seed, i));
    // Realizations already run in parallel; nested BLAS threads would only
    // oversubscribe the cores.
    if (o.threads > 1) openblas_set_num_threads(1);
  }

  std::size_t count() const { return indices.size(); }

  OutputHeader header(std::vector<std::string> notes = {}) const {
    OutputHeader h{std::string(experiment_name(config.experiment)), hash,
                   config.master_seed, count(), std::move(notes)};
    if (options.replay_index)
      h.notes.insert(h.notes.begin(),
                     fmt::format("replay_index: {}", *options.replay_index));
    return h;
  }

  fs::path path(const std::string& name) const { return options.out_dir / name; }

  template <class F>
  auto map(F&& fn) const {
    std::mutex log_mutex;
    std::size_t done = 0;
    return parallel_map(count(), options.threads, [&](std::size_t k) {
      auto r = fn(indices[k], seeds[k]);
      if (options.log) {
        std::lock_guard lock(log_mutex);
        ++done;
        *options.log << fmt::format("  realization {} done ({}/{})\n",
                                    indices[k], done, count());
      }
      return r;
    });
  }

  // Clouds warn only about the exclusion radius, which is the same for every
  // realization; report it once.
  WarningSink warn_once() const {
    return [this](const std::string& msg) {
      std::lock_guard lock(warn_mutex_);
      if (warned_.insert(msg).second && options.log)
        *options.log << "warning: " << msg << '\n';
    };
  }

  void write_realizations() const {
    write_seed_table(path("realizations.csv"), header(), indices, seeds);
  }

  json summary_base() const {
    json s;
    s["experiment"] = experiment_name(config.experiment);
    s["config_hash"] = "fnv1a64:" + hash;
    s["master_seed"] = config.master_seed;
    s["realizations"] = count();
    if (options.replay_index) s["replay_index"] = *options.replay_index;
    s["config"] = to_json(config);
    return s;
  }

  mutable std::mutex warn_mutex_;
  mutable std::set<std::string> warned_;
};

InteractionMatrix coupling(const AtomCloud& cloud, const SimulationConfig& c) {
  if (!c.interacting) return non_interacting_matrix(cloud, Gauge::tilde);
  return build_interaction_matrix(cloud, Gauge::tilde, c.kernel);
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += r[i];
  for (auto& x : out) x /= static_cast<double>(rows.size());
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

void collect_notes(json& summary, const std::vector<std::string>& notes) {
  std::set<std::string> unique(notes.begin(), notes.end());
  summary["notes"] = json::array();
  for (const auto& n : unique) summary["notes"].push_back(n);
}

RunResult finish(const RunContext& ctx, json summary) {
  write_json(ctx.path("summary.json"), summary);
  return {std::move(summary)};
}

// Far-field map rebuilt from an averaged energy table, for profile and lobe
// analysis.
RadiationMap averaged_map(const AngularGrid& grid, std::vector<double> energy) {
  RadiationMap m{grid, std::move(energy), {}, {}, {}, {}, {}, {}, 0.0};
  return m;
}

void write_angular_files(const RunContext& ctx, const AngularGrid& grid,
                         const std::vector<double>& energy) {
  std::vector<double> theta(grid.rings()), phi(grid.azimuths());
  for (std::size_t r = 0; r < grid.rings(); ++r)
    theta[r] = grid.theta(r * grid.azimuths());
  for (std::size_t a = 0; a < grid.azimuths(); ++a) phi[a] = grid.phi(a);
  write_dense_grid(ctx.path("angular_map.csv"),
                   ctx.header({"U(theta, phi): emitted photon probability per steradian"}),
                   "theta_rad", theta, "phi_rad", phi, energy);

  const auto profile = polar_profile(averaged_map(grid, energy));
  CsvWriter csv(ctx.path("polar_profile.csv"),
                ctx.header({"azimuthal mean of U per ring"}),
                {"theta_rad", "U_per_sr"});
  for (std::size_t i = 0; i < profile.theta.size(); ++i)
    csv.row({profile.theta[i], profile.energy[i]});
}

std::string geometry_suffix(std::size_t g, std::size_t n) {
  return n == 1 ? "" : fmt::format("_g{}", g);
}

}  // namespace

RunResult run(const SimulationConfig& config, const RunOptions& options) {
  switch (config.experiment) {
    case Experiment::decay: return run_decay(config, options);
    case Experiment::spectrum: return run_spectrum(config, options);
    case Experiment::angular: return run_angular(config, options);
    case Experiment::raman: return run_raman(config, options);
    case Experiment::sweep: return run_sweep(config, options);
  }
  throw ConfigError("experiment: unsupported");
}

RunResult run_decay(const SimulationConfig& config, const RunOptions& options) {
  const RunContext ctx(config, options);
  const auto& d = config.decay;
  const auto times = time_grid(d.t_max, d.points);
  std::vector<Vec3> geometries = d.geometries;
  if (geometries.empty()) geometries.push_back(config.cloud.sigma_um);

  struct Sample {
    std::vector<double> p_td, p_e;
    std::vector<std::string> notes;
  };

  std::vector<std::vector<double>> p_td, p_e;
  std::vector<std::string> notes;
  for (std::size_t g = 0; g < geometries.size(); ++g) {
    CloudSpec spec = config.cloud;
    spec.sigma_um = geometries[g];
    if (options.log)
      *options.log << fmt::format("decay: geometry {} sigma_um = ({}, {}, {})\n", g,
                                  spec.sigma_um.x(), spec.sigma_um.y(),
                                  spec.sigma_um.z());
    const auto samples = ctx.map([&](std::size_t, std::uint64_t seed) {
      const auto cloud = sample_cloud(spec, seed, ctx.warn_once());
      TwoLevelOptions opt;
      opt.method = d.propagator;
      opt.seed = seed;
      const auto traj = evolve_two_level(coupling(cloud, config),
                                         timed_dicke_state(spec.n_atoms), times, opt);
      Sample s;
      for (const auto& p : traj.populations) {
        s.p_td.push_back(p.timed_dicke);
        s.p_e.push_back(p.excited);
      }
      s.notes = traj.notes;
      return s;
    });
    std::vector<std::vector<double>> td, e;
    for (const auto& s : samples) {
      td.push_back(s.p_td);
      e.push_back(s.p_e);
      notes.insert(notes.end(), s.notes.begin(), s.notes.end());
    }
    p_td.push_back(mean_of(td));
    p_e.push_back(mean_of(e));
  }

  std::vector<std::string> columns{"t_gamma_inv"};
  for (std::size_t g = 0; g < geometries.size(); ++g) {
    columns.push_back(fmt::format("p_td_g{}", g));
    columns.push_back(fmt::format("p_e_g{}", g));
  }
  std::vector<std::string> geometry_notes;
  for (std::size_t g = 0; g < geometries.size(); ++g)
    geometry_notes.push_back(fmt::format("g{}: sigma_um = {} {} {}", g,
                                         geometries[g].x(), geometries[g].y(),
                                         geometries[g].z()));
  {
    CsvWriter csv(ctx.path("decay.csv"), ctx.header(geometry_notes), columns);
    std::vector<double> row(columns.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
      row[0] = times[k];
      for (std::size_t g = 0; g < geometries.size(); ++g) {
        row[1 + 2 * g] = p_td[g][k];
        row[2 + 2 * g] = p_e[g][k];
      }
      csv.row(row);
    }
  }

  json summary = ctx.summary_base();
  json metrics = json::object();
  summary["geometries"] = json::array();
  CsvWriter fits(ctx.path("decay_fit.csv"), ctx.header(),
                 {"geometry", "sigma_x_um", "sigma_y_um", "sigma_z_um", "p1",
                  "p2", "p3", "gamma_super", "gamma_sub", "residual",
                  "converged", "geometry_factor"});
  for (std::size_t g = 0; g < geometries.size(); ++g) {
    CloudSpec spec = config.cloud;
    spec.sigma_um = geometries[g];
    const auto fit = fit_triexponential(times, p_td[g], 1.0, d.fit);
    const double unit_rate = superradiant_rate_model(
        static_cast<double>(spec.n_atoms), spec.k_e(), transverse_sigma(spec), 1.0);
    const double geometry_factor = fit.gamma_super / unit_rate;
    fits.row({static_cast<double>(g), spec.sigma_um.x(), spec.sigma_um.y(),
              spec.sigma_um.z(), fit.p1, fit.p2, fit.p3, fit.gamma_super,
              fit.gamma_sub, fit.residual, fit.converged ? 1.0 : 0.0,
              geometry_factor});
    summary["geometries"].push_back(
        {{"sigma_um", {spec.sigma_um.x(), spec.sigma_um.y(), spec.sigma_um.z()}},
         {"p1", fit.p1},
         {"p2", fit.p2},
         {"p3", fit.p3},
         {"gamma_super", fit.gamma_super},
         {"gamma_sub", fit.gamma_sub},
         {"residual", fit.residual},
         {"converged", fit.converged},
         {"fit_message", fit.message},
         {"geometry_factor", geometry_factor}});
    const auto sfx = geometry_suffix(g, geometries.size());
    metrics["gamma_super" + sfx] = fit.gamma_super;
    metrics["gamma_sub" + sfx] = fit.gamma_sub;
    metrics["geometry_factor" + sfx] = geometry_factor;
  }
  summary["metrics"] = metrics;
  collect_notes(summary, notes);
  ctx.write_realizations();
  return finish(ctx, summary);
}

RunResult run_spectrum(const SimulationConfig& config, const RunOptions& options) {
  const RunContext ctx(config, options);
  const auto& sp = config.spectrum;
  const auto grid = linspace(sp.delta_min, sp.delta_max, sp.points);

  struct Sample {
    std::vector<double> s;
    EigenHistogram hist;
    double shift_sum;
    double width_sum_error;
  };
  const auto samples = ctx.map([&](std::size_t, std::uint64_t seed) {
    const auto cloud = sample_cloud(config.cloud, seed, ctx.warn_once());
    const auto eig = eigenspectrum(coupling(cloud, config), seed);
    Sample out{excitation_spectrum(eig, grid), EigenHistogram(sp.hist_delta, sp.hist_gamma),
               0.0, 0.0};
    out.hist.accumulate(eig);
    double sd = 0.0, sg = 0.0;
    for (std::size_t n = 0; n < eig.size(); ++n) {
      sd += eig.shifts[n];
      sg += eig.half_widths[n];
    }
    const double half_n = 0.5 * static_cast<double>(eig.size());
    out.shift_sum = std::abs(sd) / half_n;
    out.width_sum_error = std::abs(sg - half_n) / half_n;
    return out;
  });

  std::vector<std::vector<double>> spectra;
  EigenHistogram hist(sp.hist_delta, sp.hist_gamma);
  double worst_shift = 0.0, worst_width = 0.0;
  for (const auto& s : samples) {
    spectra.push_back(s.s);
    hist.merge(s.hist);
    worst_shift = std::max(worst_shift, s.shift_sum);
    worst_width = std::max(worst_width, s.width_sum_error);
  }
  const auto mean = mean_of(spectra);
  const auto stats = spectrum_stats(grid, mean);

  {
    CsvWriter csv(ctx.path("spectrum.csv"), ctx.header({"S(Delta) averaged over realizations"}),
                  {"delta_gamma", "S"});
    for (std::size_t i = 0; i < grid.size(); ++i) csv.row({grid[i], mean[i]});
  }
  const auto centers = [](const EigenHistogram::Axis& a) {
    std::vector<double> c(a.bins);
    const double w = (a.hi - a.lo) / static_cast<double>(a.bins);
    for (std::size_t i = 0; i < a.bins; ++i) c[i] = a.lo + (static_cast<double>(i) + 0.5) * w;
    return c;
  };
  const auto dc = centers(hist.delta_axis()), gc = centers(hist.gamma_axis());
  const auto overflow_note = fmt::format("eigenvalues: {}, outside grid: {}",
                                         hist.total(), hist.overflow());
  write_dense_grid(ctx.path("histogram_counts.csv"),
                   ctx.header({"eigenvalue counts, normalized to unit in-range mass", overflow_note}),
                   "delta_gamma", dc, "gamma_gamma", gc, hist.normalized_counts());
  write_dense_grid(ctx.path("histogram_fc.csv"),
                   ctx.header({"FC-weighted eigenvalue density, normalized to unit in-range mass",
                               overflow_note}),
                   "delta_gamma", dc, "gamma_gamma", gc, hist.normalized_fc_counts());

  json summary = ctx.summary_base();
  summary["metrics"] = {{"peak_delta", stats.peak_delta},
                        {"fwhm", stats.fwhm},
                        {"max_shift_sum_rel", worst_shift},
                        {"max_width_sum_rel_error", worst_width}};
  summary["peak_ambiguous"] = stats.ambiguous;
  summary["eigenvalues_outside_histogram"] = hist.overflow();
  ctx.write_realizations();
  return finish(ctx, summary);
}

RunResult run_angular(const SimulationConfig& config, const RunOptions& options) {
  const RunContext ctx(config, options);
  const auto& a = config.angular;
  const auto times = time_grid(a.t_max, a.points);
  const auto base_grid = AngularGrid::for_spec(config.cloud, a.forward_cone_rad);
  const auto grid = a.refine_check ? base_grid.refined() : base_grid;
  const auto mode = matched_mode(config.cloud);

  struct Sample {
    std::vector<double> energy;
    double p, p_refined, forward, total, decayed;
    std::vector<std::string> notes;
  };
  const auto samples = ctx.map([&](std::size_t, std::uint64_t seed) {
    const auto cloud = sample_cloud(config.cloud, seed, ctx.warn_once());
    TwoLevelOptions opt;
    opt.seed = seed;
    const auto traj = evolve_two_level(coupling(cloud, config),
                                       timed_dicke_state(cloud.size()), times, opt);
    Sample s;
    s.notes = traj.notes;
    if (a.refine_check) {
      try {
        auto cc = converged_collection_probability(traj, cloud, base_grid, mode,
                                                   a.refine_tolerance);
        s.p = cc.probability;
        s.p_refined = cc.refined_probability;
        s.energy = std::move(cc.map.energy);
      } catch (const NumericalError& e) {
        throw NumericalError(e.what(), seed);
      }
    } else {
      const auto map = far_field(traj, cloud, grid);
      s.p = s.p_refined = collection_probability(map, mode);
      s.energy = map.energy;
    }
    const auto map = averaged_map(grid, s.energy);
    s.forward = forward_cone_fraction(map, mode.divergence());
    s.total = map.total_energy();
    s.decayed = 1.0 - traj.populations.back().excited;
    return s;
  });

  std::vector<std::vector<double>> maps;
  std::vector<double> ps, prs, fwd, totals, decayed;
  std::vector<std::string> notes;
  {
    CsvWriter csv(ctx.path("collection.csv"), ctx.header(),
                  {"index", "P", "P_refined", "forward_fraction", "energy",
                   "decayed_population"});
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      maps.push_back(s.energy);
      ps.push_back(s.p);
      prs.push_back(s.p_refined);
      fwd.push_back(s.forward);
      totals.push_back(s.total);
      decayed.push_back(s.decayed);
      notes.insert(notes.end(), s.notes.begin(), s.notes.end());
      csv.row({static_cast<double>(ctx.indices[k]), s.p, s.p_refined, s.forward,
               s.total, s.decayed});
    }
  }
  const auto energy = mean_of(maps);
  write_angular_files(ctx, grid, energy);
  const auto lobe = fit_forward_lobe(averaged_map(grid, energy), 0.2 * kPi);

  json summary = ctx.summary_base();
  summary["metrics"] = {
      {"P", mean_of(ps)},
      {"P_refined", mean_of(prs)},
      {"forward_fraction", mean_of(fwd)},
      {"energy", mean_of(totals)},
      {"decayed_population", mean_of(decayed)},
      {"lobe_width_rad", lobe.width},
      {"mode_divergence_rad", mode.divergence()},
      {"P_analytic_noninteracting",
       analytic_P_noninteracting(static_cast<double>(config.cloud.n_atoms),
                                 config.cloud.k_e(), transverse_sigma(config.cloud))}};
  summary["grid"] = {{"rings", grid.rings()}, {"azimuths", grid.azimuths()}};
  collect_notes(summary, notes);
  ctx.write_realizations();
  return finish(ctx, summary);
}

RunResult run_raman(const SimulationConfig& config, const RunOptions& options) {
  const RunContext ctx(config, options);
  const auto& r = config.raman;
  const double gamma = config.cloud.gamma_per_s;
  const Pulse pulse = *config.pulse;
  const auto scaled = scale_pulse(pulse, gamma);
  const auto times = time_grid(us_to_gamma_time(r.t_max_us, gamma), r.points);
  const std::vector<double> probe{0.0, us_to_gamma_time(r.probe_us, gamma)};
  const auto grid = AngularGrid::for_spec(config.cloud, r.forward_cone_rad);
  const auto mode = matched_mode(config.cloud);

  struct Sample {
    std::vector<double> ps, pe, pg;
    double pg_probe;
    std::vector<double> energy;
    double p = 0.0, forward = 0.0, total = 0.0;
    std::vector<std::string> notes;
  };
  const auto samples = ctx.map([&](std::size_t, std::uint64_t seed) {
    const auto cloud = sample_cloud(config.cloud, seed, ctx.warn_once());
    const auto a = coupling(cloud, config);
    const auto eig = decompose(a, seed);
    ThreeLevelOptions opt;
    opt.eigensystem = &eig;
    opt.seed = seed;
    const auto initial = storage_state(cloud.size());
    const auto traj = evolve_three_level(a, scaled, initial, times, opt);
    Sample s;
    for (const auto& p : traj.populations) {
      s.ps.push_back(p.storage);
      s.pe.push_back(p.excited);
      s.pg.push_back(p.ground);
    }
    s.pg_probe = evolve_three_level(a, scaled, initial, probe, opt).populations[1].ground;
    s.notes = traj.notes;
    if (r.radiation) {
      const auto map = far_field(traj, cloud, grid);
      s.p = collection_probability(map, mode);
      s.forward = forward_cone_fraction(map, mode.divergence());
      s.total = map.total_energy();
      s.energy = map.energy;
    }
    return s;
  });

  std::vector<std::vector<double>> ps, pe, pg, maps;
  std::vector<double> probes, pcol, fwd, totals;
  std::vector<std::string> notes;
  for (const auto& s : samples) {
    ps.push_back(s.ps);
    pe.push_back(s.pe);
    pg.push_back(s.pg);
    probes.push_back(s.pg_probe);
    notes.insert(notes.end(), s.notes.begin(), s.notes.end());
    if (r.radiation) {
      maps.push_back(s.energy);
      pcol.push_back(s.p);
      fwd.push_back(s.forward);
      totals.push_back(s.total);
    }
  }
  const auto mps = mean_of(ps), mpe = mean_of(pe), mpg = mean_of(pg);

  std::optional<EffectiveThreeLevel> eff;
  if (r.effective)
    eff = EffectiveThreeLevel{r.effective->omega_ratio * pulse.omega0_per_s,
                              r.effective->delta_e, r.effective->gamma_s};
  {
    std::vector<std::string> cols{"t_us", "p_storage", "p_excited", "p_ground"};
    if (eff) cols.push_back("p_ground_effective");
    CsvWriter csv(ctx.path("populations.csv"), ctx.header(), cols);
    for (std::size_t k = 0; k < times.size(); ++k) {
      std::vector<double> row{gamma_time_to_us(times[k], gamma), mps[k], mpe[k], mpg[k]};
      if (eff) row.push_back(effective_three_level_pG(*eff, pulse, gamma, times[k]));
      csv.row(row);
    }
  }

  json summary = ctx.summary_base();
  json metrics{{"p_ground_probe", mean_of(probes)},
               {"p_storage_final", mps.back()},
               {"p_ground_final", mpg.back()},
               {"delta_c_2pi_mhz", pulse.delta_c_rad_per_s / (2.0 * kPi * 1e6)}};
  if (eff)
    metrics["p_ground_probe_effective"] =
        effective_three_level_pG(*eff, pulse, gamma, probe[1]);
  if (r.radiation) {
    CsvWriter csv(ctx.path("collection.csv"), ctx.header(),
                  {"index", "P", "forward_fraction", "energy", "p_ground_probe"});
    for (std::size_t k = 0; k < samples.size(); ++k)
      csv.row({static_cast<double>(ctx.indices[k]), pcol[k], fwd[k], totals[k], probes[k]});
    write_angular_files(ctx, grid, mean_of(maps));
    metrics["P"] = mean_of(pcol);
    metrics["forward_fraction"] = mean_of(fwd);
    metrics["energy"] = mean_of(totals);
  }
  summary["metrics"] = metrics;
  collect_notes(summary, notes);
  ctx.write_realizations();
  return finish(ctx, summary);
}

RunResult run_sweep(const SimulationConfig& config, const RunOptions& options) {
  const auto& sw = *config.sweep;
  std::vector<json> metrics;
  json points = json::array();
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    const auto point = with_override(config, sw.key, sw.values[i], sw.fixed_veff);
    RunOptions sub = options;
    sub.out_dir = options.out_dir / fmt::format("point_{:03}", i);
    if (options.log)
      *options.log << fmt::format("sweep: {} = {} ({}/{})\n", sw.key, sw.values[i],
                                  i + 1, sw.values.size());
    auto result = run(point, sub);
    metrics.push_back(result.summary["metrics"]);
    points.push_back({{"value", sw.values[i]},
                      {"dir", sub.out_dir.filename().string()},
                      {"config_hash", result.summary["config_hash"]},
                      {"metrics", result.summary["metrics"]}});
  }

  // Columns: every metric seen in any point, in sorted order.
  std::set<std::string> names;
  for (const auto& m : metrics)
    for (const auto& item : m.items()) names.insert(item.key());
  std::vector<std::string> columns{sw.key};
  if (sw.fixed_veff) {
    columns.push_back("sigma_xy_um");
  }
  columns.insert(columns.end(), names.begin(), names.end());

  const RunContext ctx(config, options);
  CsvWriter csv(ctx.path("sweep.csv"),
                ctx.header({fmt::format("swept key: {}", sw.key),
                            fmt::format("target experiment: {}", experiment_name(sw.target)),
                            fmt::format("fixed_veff: {}", sw.fixed_veff)}),
                columns);
  const Vec3& s0 = config.cloud.sigma_um;
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    std::vector<double> row{sw.values[i]};
    if (sw.fixed_veff) row.push_back(std::sqrt(s0.x() * s0.y() * s0.z() / sw.values[i]));
    for (const auto& n : names) {
      const auto it = metrics[i].find(n);
      row.push_back(it != metrics[i].end() && it->is_number()
                        ? it->get<double>()
                        : std::numeric_limits<double>::quiet_NaN());
    }
    csv.row(row);
  }

  json summary = ctx.summary_base();
  summary["points"] = points;
  summary["metrics"] = json::object();
  return finish(ctx, summary);
}

}  // namespace collemit
