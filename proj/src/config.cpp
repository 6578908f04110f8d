#include "collemit/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "collemit/error.hpp"

namespace collemit {

using nlohmann::json;

namespace {

// Reads one JSON object, remembers which keys were consumed and rejects the
// rest. Error messages carry the dotted path of the key.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object())
      throw ConfigError(fmt::format("{}: expected an object", label()));
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, double fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (!v->is_number())
      throw ConfigError(fmt::format("{}: expected a number", key_path(key)));
    const double x = v->get<double>();
    if (!std::isfinite(x))
      throw ConfigError(fmt::format("{}: must be finite", key_path(key)));
    return x;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
      return v->get<std::size_t>();
    if (v->is_number_float()) {
      const double x = v->get<double>();
      if (x >= 0.0 && std::floor(x) == x) return static_cast<std::size_t>(x);
    }
    throw ConfigError(
        fmt::format("{}: expected a non-negative integer", key_path(key)));
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() &&
        !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      throw ConfigError(
          fmt::format("{}: expected an unsigned 64-bit integer", key_path(key)));
    return v->get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (!v->is_boolean())
      throw ConfigError(fmt::format("{}: expected true or false", key_path(key)));
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (!v->is_string())
      throw ConfigError(fmt::format("{}: expected a string", key_path(key)));
    return v->get<std::string>();
  }

  Vec3 vec3(const std::string& key, const Vec3& fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    return to_vec3(*v, key_path(key));
  }

  std::vector<double> numbers(const std::string& key) {
    const json* v = take(key);
    if (!v) return {};
    if (!v->is_array())
      throw ConfigError(fmt::format("{}: expected an array", key_path(key)));
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number())
        throw ConfigError(fmt::format("{}.{}: expected a number", key_path(key), i));
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  const json* raw(const std::string& key) { return take(key); }

  std::optional<Section> child(const std::string& key) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    return Section(*v, key_path(key));
  }

  void finish() const {
    for (const auto& item : node_.items())
      if (!used_.contains(item.key()))
        throw ConfigError(fmt::format("{}: unknown key", key_path(item.key())));
  }

  static Vec3 to_vec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3)
      throw ConfigError(fmt::format("{}: expected an array of 3 numbers", where));
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
      if (!v[a].is_number())
        throw ConfigError(fmt::format("{}.{}: expected a number", where, a));
      out[a] = v[a].get<double>();
    }
    return out;
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json* take(const std::string& key) {
    used_.insert(key);
    auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

struct NamedDipole {
  const char* name;
  CVec3 vector;
};

std::vector<NamedDipole> named_dipoles() {
  const double s = 1.0 / std::sqrt(2.0);
  return {
      {"sigma_plus", sigma_plus_dipole()},
      {"sigma_minus", CVec3(cdouble(s, 0), cdouble(0, -s), 0)},
      {"x", CVec3(1, 0, 0)},
      {"y", CVec3(0, 1, 0)},
      {"z", CVec3(0, 0, 1)},
  };
}

CVec3 parse_dipole(const json& v, const std::string& where) {
  if (v.is_string()) {
    for (const auto& d : named_dipoles())
      if (v.get<std::string>() == d.name) return d.vector;
    throw ConfigError(fmt::format(
        "{}: unknown dipole '{}' (sigma_plus, sigma_minus, x, y, z)", where,
        v.get<std::string>()));
  }
  // [[re, im], [re, im], [re, im]]
  if (!v.is_array() || v.size() != 3)
    throw ConfigError(fmt::format("{}: expected a name or 3 [re, im] pairs", where));
  CVec3 out;
  for (int a = 0; a < 3; ++a) {
    const auto& c = v[a];
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
      throw ConfigError(fmt::format("{}.{}: expected [re, im]", where, a));
    out[a] = cdouble(c[0].get<double>(), c[1].get<double>());
  }
  return out;
}

json dipole_to_json(const CVec3& p) {
  for (const auto& d : named_dipoles())
    if ((d.vector - p).norm() < 1e-15) return d.name;
  json out = json::array();
  for (int a = 0; a < 3; ++a) out.push_back({p[a].real(), p[a].imag()});
  return out;
}

json vec3_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

const char* kernel_name(KernelMode m) {
  switch (m) {
    case KernelMode::full: return "full";
    case KernelMode::isotropic: return "isotropic";
    case KernelMode::farfield: return "farfield";
  }
  return "full";
}

const char* propagator_name(Propagator p) {
  return p == Propagator::eigen ? "eigen" : "adaptive";
}

Propagator parse_propagator(const std::string& name, const std::string& where) {
  if (name == "eigen") return Propagator::eigen;
  if (name == "adaptive") return Propagator::adaptive;
  throw ConfigError(fmt::format("{}: unknown propagator '{}' (eigen, adaptive)",
                                where, name));
}

EigenHistogram::Axis parse_axis(Section s, EigenHistogram::Axis fallback) {
  EigenHistogram::Axis a{s.number("min_gamma", fallback.lo),
                         s.number("max_gamma", fallback.hi),
                         s.count("bins", fallback.bins)};
  s.finish();
  if (!(a.hi > a.lo) || a.bins == 0)
    throw ConfigError(fmt::format("{}: need max_gamma > min_gamma and bins >= 1",
                                  s.key_path("")));
  return a;
}

json axis_to_json(const EigenHistogram::Axis& a) {
  return {{"min_gamma", a.lo}, {"max_gamma", a.hi}, {"bins", a.bins}};
}

// Prefixes a component's ConfigError with the key that fed it.
template <class F>
void checked(const std::string& where, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", where, e.what()));
  }
}

}  // namespace

Experiment parse_experiment(std::string_view name) {
  if (name == "decay") return Experiment::decay;
  if (name == "spectrum") return Experiment::spectrum;
  if (name == "angular") return Experiment::angular;
  if (name == "raman") return Experiment::raman;
  if (name == "sweep") return Experiment::sweep;
  throw ConfigError(fmt::format(
      "experiment: unknown '{}' (decay, spectrum, angular, raman, sweep)", name));
}

std::string_view experiment_name(Experiment e) {
  switch (e) {
    case Experiment::decay: return "decay";
    case Experiment::spectrum: return "spectrum";
    case Experiment::angular: return "angular";
    case Experiment::raman: return "raman";
    case Experiment::sweep: return "sweep";
  }
  return "decay";
}

void SimulationConfig::validate() const {
  cloud.validate();
  if (realizations < 1) throw ConfigError("realizations: must be >= 1");
  if (pulse) pulse->validate();

  if (!(decay.t_max > 0.0)) throw ConfigError("decay.t_max_gamma_inv: must be > 0");
  if (decay.points < 2) throw ConfigError("decay.points: must be >= 2");
  for (std::size_t g = 0; g < decay.geometries.size(); ++g)
    for (int a = 0; a < 3; ++a)
      if (!(decay.geometries[g][a] > 0.0))
        throw ConfigError(fmt::format("decay.geometries_sigma_um.{}: widths must be > 0", g));

  if (!(spectrum.delta_max > spectrum.delta_min))
    throw ConfigError("spectrum.delta_max_gamma: must exceed delta_min_gamma");
  if (spectrum.points < 3) throw ConfigError("spectrum.points: must be >= 3");

  if (!(angular.t_max > 0.0)) throw ConfigError("angular.t_max_gamma_inv: must be > 0");
  if (angular.points < 2) throw ConfigError("angular.points: must be >= 2");
  if (!(angular.forward_cone_rad > 0.0 && angular.forward_cone_rad < kPi / 2))
    throw ConfigError("angular.forward_cone_rad: must lie in (0, pi/2)");
  if (!(angular.refine_tolerance > 0.0))
    throw ConfigError("angular.refine_tolerance: must be > 0");

  if (!(raman.t_max_us > 0.0)) throw ConfigError("raman.t_max_us: must be > 0");
  if (raman.points < 2) throw ConfigError("raman.points: must be >= 2");
  if (!(raman.probe_us >= 0.0 && raman.probe_us <= raman.t_max_us))
    throw ConfigError("raman.probe_us: must lie in [0, t_max_us]");
  if (!(raman.forward_cone_rad > 0.0 && raman.forward_cone_rad < kPi / 2))
    throw ConfigError("raman.forward_cone_rad: must lie in (0, pi/2)");
  if (raman.effective) {
    if (!(raman.effective->gamma_s > 0.0))
      throw ConfigError("raman.effective.gamma_s_gamma: must be > 0");
    if (!(raman.effective->omega_ratio >= 0.0))
      throw ConfigError("raman.effective.omega_ratio: must be >= 0");
  }

  const auto needs_pulse = [&](Experiment e) { return e == Experiment::raman; };
  if (needs_pulse(experiment) && !pulse)
    throw ConfigError("pulse: required for the raman experiment");
  if (experiment == Experiment::sweep) {
    if (!sweep) throw ConfigError("sweep: required for the sweep experiment");
    if (sweep->target == Experiment::sweep)
      throw ConfigError("sweep.experiment: cannot be 'sweep'");
    if (needs_pulse(sweep->target) && !pulse)
      throw ConfigError("pulse: required for the raman experiment");
    if (sweep->values.empty()) throw ConfigError("sweep.vary: empty value list");
    if (sweep->fixed_veff && sweep->key != "cloud.sigma_um.2")
      throw ConfigError("sweep.fixed_veff: only applies to key cloud.sigma_um.2");
  }
}

SimulationConfig parse_config(const json& doc) {
  SimulationConfig c;
  Section root(doc, "");

  c.experiment = parse_experiment(root.text("experiment", "decay"));
  c.realizations = root.count("realizations", 1);
  c.master_seed = root.seed("seed", 0);

  if (auto s = root.child("cloud")) {
    c.cloud.n_atoms = s->count("n_atoms", c.cloud.n_atoms);
    c.cloud.sigma_um = s->vec3("sigma_um", c.cloud.sigma_um);
    c.cloud.lambda_um = s->number("lambda_um", c.cloud.lambda_um);
    c.cloud.gamma_per_s = s->number("gamma_per_s", c.cloud.gamma_per_s);
    if (const json* d = s->raw("dipole"))
      c.cloud.dipole = parse_dipole(*d, s->key_path("dipole"));
    c.cloud.k_c_dir = s->vec3("k_c_dir", c.cloud.k_c_dir);
    if (s->has("min_separation_um"))
      c.cloud.min_separation_um = s->number("min_separation_um", 0.0);
    s->finish();
  }

  if (auto s = root.child("kernel")) {
    const auto mode = s->text("mode", "full");
    checked(s->key_path("mode"), [&] { c.kernel = parse_kernel_mode(mode); });
    c.interacting = s->flag("interacting", true);
    s->finish();
  }

  if (auto s = root.child("pulse")) {
    Pulse p;
    const auto shape = s->text("shape", "erf");
    checked(s->key_path("shape"), [&] { p.shape = parse_pulse_shape(shape); });
    p.omega0_per_s = s->number("omega0_per_s", 0.0);
    p.t0_us = s->number("t0_us", p.t0_us);
    p.sigma_t_us = s->number("sigma_t_us", p.sigma_t_us);
    p.delta_c_rad_per_s = 2.0 * kPi * 1e6 * s->number("delta_c_2pi_mhz", 0.0);
    s->finish();
    c.pulse = p;
  }

  if (auto s = root.child("decay")) {
    auto& d = c.decay;
    d.t_max = s->number("t_max_gamma_inv", d.t_max);
    d.points = s->count("points", d.points);
    d.propagator = parse_propagator(s->text("propagator", "eigen"),
                                    s->key_path("propagator"));
    if (const json* g = s->raw("geometries_sigma_um")) {
      const auto where = s->key_path("geometries_sigma_um");
      if (!g->is_array()) throw ConfigError(where + ": expected an array");
      for (std::size_t i = 0; i < g->size(); ++i)
        d.geometries.push_back(Section::to_vec3((*g)[i], fmt::format("{}.{}", where, i)));
    }
    if (auto f = s->child("fit")) {
      d.fit.window = f->number("window_gamma_inv", d.fit.window);
      d.fit.samples = f->count("samples", d.fit.samples);
      f->finish();
    }
    s->finish();
  }

  if (auto s = root.child("spectrum")) {
    auto& sp = c.spectrum;
    sp.delta_min = s->number("delta_min_gamma", sp.delta_min);
    sp.delta_max = s->number("delta_max_gamma", sp.delta_max);
    sp.points = s->count("points", sp.points);
    if (auto h = s->child("histogram")) {
      if (auto a = h->child("delta")) sp.hist_delta = parse_axis(*a, sp.hist_delta);
      if (auto a = h->child("gamma")) sp.hist_gamma = parse_axis(*a, sp.hist_gamma);
      h->finish();
    }
    s->finish();
  }

  if (auto s = root.child("angular")) {
    auto& a = c.angular;
    a.t_max = s->number("t_max_gamma_inv", a.t_max);
    a.points = s->count("points", a.points);
    a.forward_cone_rad = s->number("forward_cone_rad", a.forward_cone_rad);
    a.refine_check = s->flag("refine_check", a.refine_check);
    a.refine_tolerance = s->number("refine_tolerance", a.refine_tolerance);
    s->finish();
  }

  if (auto s = root.child("raman")) {
    auto& r = c.raman;
    r.t_max_us = s->number("t_max_us", r.t_max_us);
    r.points = s->count("points", r.points);
    r.probe_us = s->number("probe_us", r.probe_us);
    r.radiation = s->flag("radiation", r.radiation);
    r.forward_cone_rad = s->number("forward_cone_rad", r.forward_cone_rad);
    if (auto e = s->child("effective")) {
      EffectiveSettings eff;
      eff.omega_ratio = e->number("omega_ratio", eff.omega_ratio);
      eff.delta_e = e->number("delta_e_gamma", eff.delta_e);
      eff.gamma_s = e->number("gamma_s_gamma", eff.gamma_s);
      e->finish();
      r.effective = eff;
    }
    s->finish();
  }

  if (auto s = root.child("sweep")) {
    SweepSettings sw;
    sw.target = parse_experiment(s->text("experiment", "angular"));
    sw.fixed_veff = s->flag("fixed_veff", false);
    auto vary = s->child("vary");
    if (!vary) throw ConfigError("sweep.vary: required");
    std::size_t keys = 0;
    for (const auto& item : doc.at("sweep").at("vary").items()) {
      ++keys;
      sw.key = item.key();
    }
    if (keys != 1)
      throw ConfigError(fmt::format(
          "sweep.vary: exactly one swept key is allowed, found {}", keys));
    sw.values = vary->numbers(sw.key);
    vary->finish();
    s->finish();
    c.sweep = sw;
  }

  root.finish();
  c.validate();
  // Resolve the swept key now so a typo fails before any work is done.
  if (c.sweep) with_override(c, c.sweep->key, c.sweep->values.front(), c.sweep->fixed_veff);
  return c;
}

SimulationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(doc);
}

json to_json(const SimulationConfig& c) {
  json doc;
  doc["experiment"] = experiment_name(c.experiment);
  doc["realizations"] = c.realizations;
  doc["seed"] = c.master_seed;

  json cloud{{"n_atoms", c.cloud.n_atoms},
             {"sigma_um", vec3_to_json(c.cloud.sigma_um)},
             {"lambda_um", c.cloud.lambda_um},
             {"gamma_per_s", c.cloud.gamma_per_s},
             {"dipole", dipole_to_json(c.cloud.dipole)},
             {"k_c_dir", vec3_to_json(c.cloud.k_c_dir)}};
  if (c.cloud.min_separation_um) cloud["min_separation_um"] = *c.cloud.min_separation_um;
  doc["cloud"] = cloud;

  doc["kernel"] = {{"mode", kernel_name(c.kernel)}, {"interacting", c.interacting}};

  if (c.pulse) {
    doc["pulse"] = {
        {"shape", c.pulse->shape == PulseShape::erf ? "erf" : "constant"},
        {"omega0_per_s", c.pulse->omega0_per_s},
        {"t0_us", c.pulse->t0_us},
        {"sigma_t_us", c.pulse->sigma_t_us},
        {"delta_c_2pi_mhz", c.pulse->delta_c_rad_per_s / (2.0 * kPi * 1e6)}};
  }

  json geoms = json::array();
  for (const auto& g : c.decay.geometries) geoms.push_back(vec3_to_json(g));
  doc["decay"] = {{"t_max_gamma_inv", c.decay.t_max},
                  {"points", c.decay.points},
                  {"propagator", propagator_name(c.decay.propagator)},
                  {"geometries_sigma_um", geoms},
                  {"fit",
                   {{"window_gamma_inv", c.decay.fit.window},
                    {"samples", c.decay.fit.samples}}}};

  doc["spectrum"] = {{"delta_min_gamma", c.spectrum.delta_min},
                     {"delta_max_gamma", c.spectrum.delta_max},
                     {"points", c.spectrum.points},
                     {"histogram",
                      {{"delta", axis_to_json(c.spectrum.hist_delta)},
                       {"gamma", axis_to_json(c.spectrum.hist_gamma)}}}};

  doc["angular"] = {{"t_max_gamma_inv", c.angular.t_max},
                    {"points", c.angular.points},
                    {"forward_cone_rad", c.angular.forward_cone_rad},
                    {"refine_check", c.angular.refine_check},
                    {"refine_tolerance", c.angular.refine_tolerance}};

  json raman{{"t_max_us", c.raman.t_max_us},
             {"points", c.raman.points},
             {"probe_us", c.raman.probe_us},
             {"radiation", c.raman.radiation},
             {"forward_cone_rad", c.raman.forward_cone_rad}};
  if (c.raman.effective)
    raman["effective"] = {{"omega_ratio", c.raman.effective->omega_ratio},
                          {"delta_e_gamma", c.raman.effective->delta_e},
                          {"gamma_s_gamma", c.raman.effective->gamma_s}};
  doc["raman"] = raman;

  if (c.sweep)
    doc["sweep"] = {{"experiment", experiment_name(c.sweep->target)},
                    {"fixed_veff", c.sweep->fixed_veff},
                    {"vary", {{c.sweep->key, c.sweep->values}}}};
  return doc;
}

std::uint64_t config_hash(const SimulationConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash_hex(const SimulationConfig& config) {
  return fmt::format("{:016x}", config_hash(config));
}

SimulationConfig with_override(const SimulationConfig& config,
                               std::string_view key, double value,
                               bool fixed_veff) {
  json doc = to_json(config);
  if (config.sweep) doc["experiment"] = experiment_name(config.sweep->target);
  doc.erase("sweep");
  json* node = &doc;
  std::string path;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part(key.substr(start, dot == std::string_view::npos
                                                 ? std::string_view::npos
                                                 : dot - start));
    path = path.empty() ? part : path + "." + part;
    const bool last = dot == std::string_view::npos;
    json* next = nullptr;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("sweep.vary: '{}' is not an array index", path));
      }
      if (idx >= node->size())
        throw ConfigError(fmt::format("sweep.vary: index '{}' out of range", path));
      next = &(*node)[idx];
    } else if (node->is_object() && node->contains(part)) {
      next = &(*node)[part];
    } else {
      throw ConfigError(fmt::format("sweep.vary: unknown key '{}'", path));
    }
    if (last) {
      if (!next->is_number())
        throw ConfigError(fmt::format("sweep.vary: '{}' is not numeric", path));
      if (next->is_number_integer()) {
        if (value < 0.0 || std::floor(value) != value)
          throw ConfigError(fmt::format("sweep.vary: '{}' needs integer values", path));
        *next = static_cast<std::uint64_t>(value);
      } else {
        *next = value;
      }
      break;
    }
    node = next;
    start = dot + 1;
  }
  if (fixed_veff) {
    const Vec3& s = config.cloud.sigma_um;
    const double xy = std::sqrt(s.x() * s.y() * s.z() / value);
    doc["cloud"]["sigma_um"] = {xy, xy, value};
  }
  return parse_config(doc);
}

}  // namespace collemit
