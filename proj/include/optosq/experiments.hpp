#pragma once

// Experiment registry behind the command-line tool.
//
// A run is a pure function of its RunConfig: the config is read from TOML or
// JSON into one JSON document, validated field by field, and every
// experiment writes CSV tables plus a manifest.json into the output directory.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "optosq/errors.hpp"
#include "optosq/gaussian.hpp"
#include "optosq/lindblad.hpp"
#include "optosq/meanfield.hpp"
#include "optosq/model.hpp"
#include "optosq/sweep.hpp"
#include "optosq/timeseries.hpp"

namespace optosq {

using Json = nlohmann::ordered_json;

struct GridAxis {
  double start = 0.0;
  double stop = 0.0;
  int count = 1;

  std::vector<double> values() const {
    std::vector<double> v;
    for (int k = 0; k < count; ++k) {
      v.push_back(count == 1 ? start : start + (stop - start) * static_cast<double>(k) / (count - 1));
    }
    return v;
  }
};

/// Step settings of one time-stepping track; zero means "experiment default".
struct TrackSettings {
  double t_final = 0.0;
  double dt = 0.0;
  double sample_dt = 0.0;
};

struct RunConfig {
  std::string experiment;
  std::string preset = "fig2";
  Json params_override = Json::object();
  PhysicalParams params;  ///< preset plus overrides, drive recomputed

  std::map<std::string, GridAxis> grids;  ///< Delta_eff, kappa, G, eta
  std::vector<double> n_m_list;
  std::string sweep_mode;  ///< sweep-custom: detuning | kappa_g | eta
  SweepMethod method = SweepMethod::effective_me;
  std::optional<double> Delta_eff;  ///< fig7 override

  std::optional<std::vector<int>> truncation_effective;
  std::optional<std::vector<int>> truncation_full;

  TrackSettings meanfield, me_full, me_effective, cm;
  std::string output_dir = "out";
  int threads = 1;

  Json to_json() const;
};

inline const std::map<std::string, PhysicalParams>& presets() {
  static const std::map<std::string, PhysicalParams> table = {{"fig2", reference_preset()}};
  return table;
}

struct ExperimentInfo {
  std::string id;
  std::string description;
};

inline const std::vector<ExperimentInfo>& experiment_list() {
  static const std::vector<ExperimentInfo> list = {
      {"fig2", "mean-field trajectory of <a> and <b> (a, b, c form)"},
      {"fig3", "<dX^2>(t) from the full linearised and the effective master equations"},
      {"fig4", "steady <dX^2> on a kappa x G grid"},
      {"fig5", "steady <dX^2> versus Delta_eff for several n_m"},
      {"fig7", "<b'b>(t) from thermal initial states at the optimal detuning"},
      {"fig8", "mean-field trajectory of <q> and <a> (q, p, a, c form)"},
      {"fig9", "<dq^2>(t) from the full and reduced covariance matrices"},
      {"fig10", "steady <dq^2> versus eta: full CM, reduced CM, closed form"},
      {"fig11", "master equation and covariance matrix, with and without the steady-amplitude approximation"},
      {"sweep-custom", "user-defined detuning, kappa x G or eta sweep"},
  };
  return list;
}

// ---------------------------------------------------------------- parsing

namespace detail {

inline Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json out = Json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    Json out = Json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("", "unsupported TOML value type (dates are not accepted)");
}

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a table");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) throw ConfigError(child(k), "unknown field");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const Json& at(const char* key) const { return j_.at(key); }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const Json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(child(key), "must be finite");
    return x;
  }

  double positive(const char* key, double fallback) const {
    const double x = number(key, fallback);
    if (has(key) && !(x > 0.0)) throw ConfigError(child(key), "must be positive");
    return x;
  }

  int integer(const char* key, int fallback, int min_value) const {
    if (!has(key)) return fallback;
    const Json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(child(key), "expected an integer");
    const long long x = v.get<long long>();
    if (x < min_value || x > 1000000) throw ConfigError(child(key), "out of range");
    return static_cast<int>(x);
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const Json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(child(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) const {
    const Json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(child(key), "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<int> dims(const char* key) const {
    const Json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(child(key), "expected an array of mode dimensions");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer() || v[i].get<long long>() < 2 || v[i].get<long long>() > 200) {
        throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected an integer in [2, 200]");
      }
      out.push_back(v[i].get<int>());
    }
    return out;
  }

 private:
  const Json& j_;
  std::string path_;
};

inline TrackSettings read_track(const Reader& parent, const char* key) {
  TrackSettings t;
  if (!parent.has(key)) return t;
  Reader r(parent.at(key), parent.child(key));
  r.allow({"t_final", "dt", "sample_dt"});
  t.t_final = r.positive("t_final", 0.0);
  t.dt = r.positive("dt", 0.0);
  t.sample_dt = r.positive("sample_dt", 0.0);
  return t;
}

inline PhysicalParams apply_overrides(PhysicalParams p, const Json& j) {
  Reader r(j, "params");
  r.allow({"omega_m", "gamma_m", "g0_prime", "omega_c", "delta_c", "kappa", "Delta_a", "gamma_a", "G", "eta", "n_m",
           "E", "P_mW", "omega_m_rad_s"});
  p.omega_m = r.positive("omega_m", p.omega_m);
  p.gamma_m = r.number("gamma_m", p.gamma_m);
  p.g0_prime = r.number("g0_prime", p.g0_prime);
  p.omega_c = r.positive("omega_c", p.omega_c);
  p.delta_c = r.number("delta_c", p.delta_c);
  p.kappa = r.number("kappa", p.kappa);
  p.Delta_a = r.number("Delta_a", p.Delta_a);
  p.gamma_a = r.number("gamma_a", p.gamma_a);
  p.G = r.number("G", p.G);
  p.eta = r.number("eta", p.eta);
  p.n_m = r.number("n_m", p.n_m);
  p.P_mW = r.number("P_mW", p.P_mW);
  p.omega_m_rad_s = r.positive("omega_m_rad_s", p.omega_m_rad_s);
  if (p.gamma_m < 0.0) throw ConfigError("params.gamma_m", "must be >= 0");
  if (p.kappa <= 0.0) throw ConfigError("params.kappa", "must be positive");
  if (p.gamma_a < 0.0) throw ConfigError("params.gamma_a", "must be >= 0");
  if (p.n_m < 0.0) throw ConfigError("params.n_m", "must be >= 0");
  if (p.P_mW < 0.0) throw ConfigError("params.P_mW", "must be >= 0");
  if (p.omega_l() <= 0.0) throw ConfigError("params.omega_c", "laser frequency omega_c - delta_c must be positive");
  if (r.has("E")) {
    p.E = r.number("E", 0.0);
    if (p.E < 0.0) throw ConfigError("params.E", "must be >= 0");
  } else {
    update_drive(p);
  }
  return p;
}

}  // namespace detail

/// Validates a config document (already in JSON form) and fills a RunConfig.
inline RunConfig parse_config(const Json& doc) {
  detail::Reader root(doc, "");
  root.allow({"experiment", "preset", "params", "grid", "method", "mode", "Delta_eff", "truncation", "integrator",
              "output", "threads"});
  RunConfig c;
  if (!root.has("experiment")) throw ConfigError("experiment", "missing required field");
  c.experiment = root.string("experiment", "");
  bool known = false;
  for (const auto& e : experiment_list()) known = known || e.id == c.experiment;
  if (!known) throw ConfigError("experiment", "unknown experiment id '" + c.experiment + "'");

  c.preset = root.string("preset", "fig2");
  const auto it = presets().find(c.preset);
  if (it == presets().end()) throw ConfigError("preset", "unknown preset '" + c.preset + "'");
  if (root.has("params")) c.params_override = root.at("params");
  c.params = detail::apply_overrides(it->second, c.params_override);

  if (root.has("grid")) {
    detail::Reader g(root.at("grid"), "grid");
    g.allow({"Delta_eff", "kappa", "G", "eta", "n_m"});
    for (const char* axis : {"Delta_eff", "kappa", "G", "eta"}) {
      if (!g.has(axis)) continue;
      detail::Reader a(g.at(axis), g.child(axis));
      a.allow({"start", "stop", "count"});
      if (!a.has("start") || !a.has("stop")) throw ConfigError(g.child(axis), "needs start and stop");
      GridAxis ax{a.number("start", 0.0), a.number("stop", 0.0), a.integer("count", 11, 1)};
      c.grids[axis] = ax;
    }
    if (g.has("n_m")) {
      c.n_m_list = g.numbers("n_m");
      for (std::size_t i = 0; i < c.n_m_list.size(); ++i) {
        if (!(c.n_m_list[i] >= 0.0)) throw ConfigError("grid.n_m[" + std::to_string(i) + "]", "must be >= 0");
      }
    }
  }

  const std::string method = root.string("method", "");
  if (method == "effective_me") {
    c.method = SweepMethod::effective_me;
  } else if (method == "effective_gaussian") {
    c.method = SweepMethod::effective_gaussian;
  } else if (method == "reduced_cm") {
    c.method = SweepMethod::reduced_cm;
  } else if (!method.empty()) {
    throw ConfigError("method", "expected effective_me, effective_gaussian or reduced_cm");
  } else if (c.experiment == "fig4") {
    c.method = SweepMethod::reduced_cm;
  }
  c.sweep_mode = root.string("mode", "");
  if (c.experiment == "sweep-custom" && c.sweep_mode != "detuning" && c.sweep_mode != "kappa_g" &&
      c.sweep_mode != "eta") {
    throw ConfigError("mode", "sweep-custom needs mode = detuning, kappa_g or eta");
  }
  if (root.has("Delta_eff")) c.Delta_eff = root.number("Delta_eff", 0.0);

  if (root.has("truncation")) {
    detail::Reader t(root.at("truncation"), "truncation");
    t.allow({"effective", "full"});
    if (t.has("effective")) {
      c.truncation_effective = t.dims("effective");
      if (c.truncation_effective->size() != 2) throw ConfigError("truncation.effective", "needs 2 modes (b, c)");
    }
    if (t.has("full")) {
      c.truncation_full = t.dims("full");
      if (c.truncation_full->size() != 3) throw ConfigError("truncation.full", "needs 3 modes (a, b, c)");
    }
  }
  if (root.has("integrator")) {
    detail::Reader in(root.at("integrator"), "integrator");
    in.allow({"meanfield", "me_full", "me_effective", "cm"});
    c.meanfield = detail::read_track(in, "meanfield");
    c.me_full = detail::read_track(in, "me_full");
    c.me_effective = detail::read_track(in, "me_effective");
    c.cm = detail::read_track(in, "cm");
  }
  c.output_dir = root.string("output", "out/" + c.experiment);
  c.threads = root.integer("threads", 1, 1);
  return c;
}

inline Json parse_config_text(const std::string& text, const std::string& format) {
  if (format == "json") {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError("<root>", std::string("JSON syntax error: ") + e.what());
    }
  }
  try {
    return detail::toml_to_json(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML syntax error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError("<root>", msg.str());
  }
}

/// Reads a .toml or .json config file (format by extension, TOML otherwise).
inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("<file>", "cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string format = file.extension() == ".json" ? "json" : "toml";
  return parse_config(parse_config_text(ss.str(), format));
}

inline Json params_json(const PhysicalParams& p) {
  return Json{{"omega_m", p.omega_m}, {"gamma_m", p.gamma_m}, {"g0_prime", p.g0_prime}, {"omega_c", p.omega_c},
              {"delta_c", p.delta_c}, {"kappa", p.kappa},     {"Delta_a", p.Delta_a},   {"gamma_a", p.gamma_a},
              {"G", p.G},             {"eta", p.eta},         {"n_m", p.n_m},           {"E", p.E},
              {"P_mW", p.P_mW},       {"omega_m_rad_s", p.omega_m_rad_s}};
}

inline Json RunConfig::to_json() const {
  Json j{{"experiment", experiment}, {"preset", preset}, {"params", params_json(params)}};
  Json g = Json::object();
  for (const auto& [k, a] : grids) g[k] = {{"start", a.start}, {"stop", a.stop}, {"count", a.count}};
  if (!n_m_list.empty()) g["n_m"] = n_m_list;
  j["grid"] = g;
  j["method"] = to_string(method);
  if (!sweep_mode.empty()) j["mode"] = sweep_mode;
  if (Delta_eff) j["Delta_eff"] = *Delta_eff;
  Json t = Json::object();
  if (truncation_effective) t["effective"] = *truncation_effective;
  if (truncation_full) t["full"] = *truncation_full;
  j["truncation"] = t;
  auto track = [](const TrackSettings& s) {
    return Json{{"t_final", s.t_final}, {"dt", s.dt}, {"sample_dt", s.sample_dt}};
  };
  j["integrator"] = {{"meanfield", track(meanfield)}, {"me_full", track(me_full)},
                     {"me_effective", track(me_effective)}, {"cm", track(cm)}};
  j["output"] = output_dir;
  j["threads"] = threads;
  return j;
}

// ---------------------------------------------------------------- reports

inline Json complex_json(cplx z) { return Json::array({z.real(), z.imag()}); }

inline Json derived_json(const DerivedParams& d, const SteadyMeanField& s) {
  return Json{
      {"drive_E", d.base.E},
      {"meanfield",
       {{"a", complex_json(s.state.a)},
        {"b", complex_json(s.state.b)},
        {"c", complex_json(s.state.c)},
        {"abs_a", s.a_s},
        {"abs_b", s.b_s},
        {"abs_q", s.q_s},
        {"residual", s.residual},
        {"re_im_ratio_a", s.ratio_a},
        {"re_im_ratio_b", s.ratio_b},
        {"settled_at_t", s.t}}},
      {"Delta_c", d.Delta_c_eff},
      {"G0", d.G0},
      {"omega_m_prime", d.omega_m_prime},
      {"omega_m_tilde", d.omega_m_tilde},
      {"G_eff", d.G_eff},
      {"eta_prime", d.eta_prime},
      {"Delta_eff", d.Delta_eff},
      {"gamma_eff", d.gamma_eff},
      {"r", d.r},
      {"omega_m_tilde_prime", d.omega_m_tilde_prime},
      {"G_eff_prime", d.G_eff_prime},
      {"optimal_Delta_eff", optimal_detuning(d)},
      {"sideband_ratio", d.sideband_ratio()},
      {"Delta_G", d.Delta_G},
      {"Omega_m", d.Omega_m},
      {"G_g", d.G_g},
  };
}

inline SteadySearchOptions meanfield_search(const RunConfig& c) {
  SteadySearchOptions o;
  if (c.meanfield.dt > 0.0) o.dt = c.meanfield.dt;
  return o;
}

/// Derived parameters plus mean-field provenance.
inline Json derived_report(const RunConfig& c) {
  SteadyMeanField s;
  const DerivedParams d = derive(c.params, &s, meanfield_search(c));
  return derived_json(d, s);
}

// ---------------------------------------------------------------- running

struct RunItem {
  std::string name;
  bool converged = false;
  std::string note;
};

struct RunSummary {
  std::filesystem::path output_dir;
  std::vector<std::string> files;
  std::vector<RunItem> items;
  Json results = Json::object();
  Json manifest;

  bool all_converged() const {
    for (const auto& i : items) {
      if (!i.converged) return false;
    }
    return true;
  }
};

class RunContext {
 public:
  explicit RunContext(const RunConfig& c) : config(c) {
    summary.output_dir = c.output_dir;
    std::filesystem::create_directories(summary.output_dir);
  }

  const RunConfig& config;
  RunSummary summary;

  std::ofstream open(const std::string& name) {
    summary.files.push_back(name);
    std::ofstream f(summary.output_dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (summary.output_dir / name).string());
    return f;
  }

  void write_series(const std::string& name, const TimeSeries& s) {
    auto f = open(name);
    write_csv(f, s);
  }

  void flag(const std::string& name, bool ok, const std::string& note = "") {
    summary.items.push_back({name, ok, note});
  }

  /// Derived parameters at the configured point (computed once).
  const DerivedParams& derived() {
    if (!derived_) {
      SteadyMeanField s;
      derived_ = derive(config.params, &s, meanfield_search(config));
      steady_ = s;
      summary.results["derived"] = derived_json(*derived_, s);
      flag("meanfield_steady", s.residual < 1e-6, "residual " + format_number(s.residual));
    }
    return *derived_;
  }
  const SteadyMeanField& steady() {
    derived();
    return *steady_;
  }

  HilbertSpec effective_space() const {
    return HilbertSpec(config.truncation_effective.value_or(std::vector<int>{14, 8}));
  }
  HilbertSpec full_space() const { return HilbertSpec(config.truncation_full.value_or(std::vector<int>{4, 10, 4})); }

 private:
  std::optional<DerivedParams> derived_;
  std::optional<SteadyMeanField> steady_;
};

inline double pick(double configured, double fallback) { return configured > 0.0 ? configured : fallback; }

inline std::vector<double> axis_or(const RunConfig& c, const std::string& name, GridAxis fallback) {
  const auto it = c.grids.find(name);
  return (it == c.grids.end() ? fallback : it->second).values();
}

namespace detail {

inline std::string flag_text(bool b) { return b ? "1" : "0"; }

struct MeSteady {
  SteadyEstimate estimate;
  bool truncation_ok = false;
  bool heisenberg_ok = false;
  double min_heisenberg = 0.0;
};

inline MeSteady me_steady(const MasterEquationResult& r, const std::string& column) {
  MeSteady s;
  s.estimate = tail_average(r.series.column(column));
  s.truncation_ok = r.truncation_ok;
  const auto x = r.series.column("var_X");
  const auto y = r.series.column("var_Y");
  s.min_heisenberg = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) s.min_heisenberg = std::min(s.min_heisenberg, x[i] * y[i]);
  s.heisenberg_ok = s.min_heisenberg >= 0.25 - 1e-8;
  return s;
}

inline MasterEquationResult run_me(RunContext& ctx, const HamiltonianSpec& h, double n_m, const TrackSettings& track,
                                   double default_t_final) {
  MasterEquationOptions o;
  o.t_final = pick(track.t_final, default_t_final);
  o.dt = pick(track.dt, default_me_dt(h));
  o.sample_dt = pick(track.sample_dt, h.kind == HamiltonianKind::effective ? 0.5 : 0.25);
  (void)ctx;
  return evolve_master_equation(h, standard_dissipators(h), initial_state(h, n_m), o, mechanical_observables(h));
}

inline void record_me(RunContext& ctx, const std::string& name, const MasterEquationResult& r,
                      const std::string& column, Json& out) {
  const MeSteady s = me_steady(r, column);
  const bool ok = s.estimate.converged && s.truncation_ok && s.heisenberg_ok;
  out[name] = {{"steady_" + column, s.estimate.value},
               {"tail_drift", s.estimate.drift},
               {"max_guard_population", r.max_guard_population},
               {"min_uncertainty_product", s.min_heisenberg},
               {"converged", ok}};
  std::string note;
  if (!s.estimate.converged) note += "tail drift " + format_number(s.estimate.drift) + "; ";
  if (!s.truncation_ok) note += "guard population above 1e-4; ";
  if (!s.heisenberg_ok) note += "uncertainty product below 1/4; ";
  ctx.flag(name, ok, note);
}

inline CovarianceOptions cm_options(const TrackSettings& t, double default_t_final) {
  CovarianceOptions o;
  o.t_final = pick(t.t_final, default_t_final);
  o.dt = pick(t.dt, 5e-4);  // 2e-3 undershoots the symplectic bound on the full drift
  o.sample_dt = pick(t.sample_dt, 0.1);
  return o;
}

inline void record_cm(RunContext& ctx, const std::string& name, const CovarianceEvolution& e, Json& out) {
  out[name] = {{"steady_V11", e.steady_q.value}, {"tail_drift", e.steady_q.drift}, {"converged", e.steady_q.converged}};
  ctx.flag(name, e.steady_q.converged, e.steady_q.converged ? "" : "tail drift " + format_number(e.steady_q.drift));
}

inline void write_meanfield(RunContext& ctx, MeanFieldForm form, const std::string& file) {
  const PhysicalParams& p = ctx.config.params;
  const double dt = pick(ctx.config.meanfield.dt, default_meanfield_dt(p));
  const double t_final = pick(ctx.config.meanfield.t_final, 200.0);
  const double sample = pick(ctx.config.meanfield.sample_dt, 0.05);
  const long stride = std::max(1L, static_cast<long>(std::llround(sample / dt)));
  const MeanFieldTrajectory traj = integrate_meanfield(p, form, t_final, dt, stride);
  ctx.write_series(file, traj.to_timeseries());
  ctx.derived();
}

inline void write_sweep(RunContext& ctx, const std::string& file, const std::vector<std::string>& coords,
                        const std::vector<SweepPoint>& pts) {
  auto f = ctx.open(file);
  for (const auto& c : coords) f << c << ",";
  f << "variance,phonons,stable,converged\n";
  bool all = true;
  int bad = 0;
  for (const auto& p : pts) {
    if (coords.size() >= 1) f << format_number(coords[0] == "n_m" ? p.n_m : p.x) << ",";
    if (coords.size() >= 2) f << format_number(coords[0] == "n_m" ? p.x : p.y) << ",";
    f << format_number(p.variance) << "," << format_number(p.phonons) << "," << flag_text(p.stable) << ","
      << flag_text(p.converged) << "\n";
    all = all && p.converged;
    bad += p.converged ? 0 : 1;
  }
  ctx.flag(file, all, all ? "" : std::to_string(bad) + " grid points not converged");
}

inline void run_fig3(RunContext& ctx) {
  const DerivedParams& d = ctx.derived();
  Json res = Json::object();
  const auto full = run_me(ctx, full_linear_spec(d, ctx.full_space()), 0.0, ctx.config.me_full, 100.0);
  ctx.write_series("fig3_full_linear.csv", full.series);
  record_me(ctx, "full_linear_me", full, "var_X", res);
  const auto eff = run_me(ctx, effective_spec(d, ctx.effective_space()), 0.0, ctx.config.me_effective, 500.0);
  ctx.write_series("fig3_effective.csv", eff.series);
  record_me(ctx, "effective_me", eff, "var_X", res);
  ctx.summary.results["steady"] = res;
}

inline void run_fig4(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  SweepOptions o;
  o.method = c.method;
  o.space = ctx.effective_space();
  o.threads = c.threads;
  o.meanfield = meanfield_search(c);
  const auto kappa = axis_or(c, "kappa", {0.5, 6.0, 12});
  const auto G = axis_or(c, "G", {1.0, 12.0, 12});
  const double n_m = c.n_m_list.empty() ? 0.0 : c.n_m_list.front();
  write_sweep(ctx, "fig4.csv", {"kappa", "G"}, kappa_g_sweep(c.params, kappa, G, n_m, o));
  ctx.derived();
}

inline void run_detuning(RunContext& ctx, const std::string& file) {
  const RunConfig& c = ctx.config;
  SweepOptions o;
  o.method = c.method;
  o.space = ctx.effective_space();
  o.threads = c.threads;
  const auto grid = axis_or(c, "Delta_eff", {1.0, 1.8, 17});
  const std::vector<double> n_list = c.n_m_list.empty() ? std::vector<double>{0.0, 1.0, 3.0} : c.n_m_list;
  std::vector<SweepPoint> all;
  Json minima = Json::array();
  for (double n_m : n_list) {
    const auto pts = detuning_sweep(ctx.derived(), grid, n_m, o);
    const SweepPoint* best = nullptr;
    for (const auto& p : pts) {
      if (p.converged && (!best || p.variance < best->variance)) best = &p;
    }
    minima.push_back({{"n_m", n_m}, {"argmin_Delta_eff", best ? best->x : std::nan("")}});
    all.insert(all.end(), pts.begin(), pts.end());
  }
  write_sweep(ctx, file, {"n_m", "Delta_eff"}, all);
  ctx.summary.results["minima"] = minima;
  ctx.summary.results["optimal_Delta_eff"] = optimal_detuning(ctx.derived());
}

inline void run_fig7(RunContext& ctx) {
  DerivedParams d = ctx.derived();
  d.Delta_eff = ctx.config.Delta_eff.value_or(1.4);
  const std::vector<double> n_list = ctx.config.n_m_list.empty() ? std::vector<double>{1.0, 2.0, 3.0}
                                                                  : ctx.config.n_m_list;
  Json res = Json::object();
  for (double n_m : n_list) {
    DerivedParams dn = d;
    dn.base.n_m = n_m;
    const HilbertSpec space = ctx.config.truncation_effective ? ctx.effective_space() : cooling_truncation(n_m);
    const HamiltonianSpec h = effective_spec(dn, space);
    const auto r = run_me(ctx, h, n_m, ctx.config.me_effective, 300.0);
    const std::string tag = "nm" + format_number(n_m);
    ctx.write_series("fig7_" + tag + ".csv", r.series);
    record_me(ctx, "cooling_" + tag, r, "phonons", res);
  }
  ctx.summary.results["steady"] = res;
  ctx.summary.results["Delta_eff"] = d.Delta_eff;
}

inline void run_fig9(RunContext& ctx) {
  const DerivedParams& d = ctx.derived();
  const PhysicalParams& p = ctx.config.params;
  const CovarianceOptions o = cm_options(ctx.config.cm, 200.0);
  Json res = Json::object();
  const auto full = evolve_covariance(static_drift(drift_full_steady(p, ctx.steady())), diffusion_full(p),
                                      initial_covariance(6, p.n_m), o);
  ctx.write_series("fig9_full.csv", full.series);
  record_cm(ctx, "full_cm", full, res);
  const auto red =
      evolve_covariance(static_drift(drift_reduced(d)), diffusion_reduced(p), initial_covariance(4, p.n_m), o);
  ctx.write_series("fig9_reduced.csv", red.series);
  record_cm(ctx, "reduced_cm", red, res);
  res["lyapunov_full"] = lyapunov_steady(drift_full_steady(p, ctx.steady()), diffusion_full(p)).V(0, 0);
  res["lyapunov_reduced"] = lyapunov_steady(drift_reduced(d), diffusion_reduced(p)).V(0, 0);
  ctx.summary.results["steady"] = res;
}

struct EtaRow {
  double eta = 0.0, full = std::nan(""), reduced = std::nan(""), analytic = std::nan("");
  bool converged = false;
  std::string note;
};

inline std::vector<EtaRow> eta_rows(const RunConfig& c, const std::vector<double>& etas) {
  std::vector<EtaRow> rows(etas.size());
  parallel_for(etas.size(), c.threads, [&](std::size_t i) {
    EtaRow& row = rows[i];
    row.eta = etas[i];
    try {
      PhysicalParams p = c.params;
      p.eta = etas[i];
      SteadyMeanField s;
      const DerivedParams d = derive(p, &s, meanfield_search(c));
      row.full = lyapunov_steady(drift_full_steady(p, s), diffusion_full(p)).V(0, 0);
      row.reduced = lyapunov_steady(drift_reduced(d), diffusion_reduced(p)).V(0, 0);
      row.analytic = analytic_variance(d);
      row.converged = true;
    } catch (const Error& e) {
      row.note = e.what();
    }
  });
  return rows;
}

inline void run_eta(RunContext& ctx, const std::string& file) {
  const auto rows = eta_rows(ctx.config, axis_or(ctx.config, "eta", {0.0, 0.4, 41}));
  auto f = ctx.open(file);
  f << "eta,full_cm,reduced_cm,analytic,converged\n";
  int bad = 0;
  for (const auto& r : rows) {
    f << format_number(r.eta) << "," << format_number(r.full) << "," << format_number(r.reduced) << ","
      << format_number(r.analytic) << "," << flag_text(r.converged) << "\n";
    bad += r.converged ? 0 : 1;
  }
  ctx.flag(file, bad == 0, bad == 0 ? "" : std::to_string(bad) + " eta points failed");
  ctx.derived();
}

inline void run_fig11(RunContext& ctx) {
  const DerivedParams& d = ctx.derived();
  const PhysicalParams& p = ctx.config.params;
  Json res = Json::object();

  const auto eff = run_me(ctx, effective_spec(d, ctx.effective_space()), p.n_m, ctx.config.me_effective, 500.0);
  ctx.write_series("fig11_me_approx.csv", eff.series);
  record_me(ctx, "me_approx", eff, "var_X", res);

  const CovarianceOptions o = cm_options(ctx.config.cm, 2000.0);
  const auto red =
      evolve_covariance(static_drift(drift_reduced(d)), diffusion_reduced(p), initial_covariance(4, p.n_m), o);
  ctx.write_series("fig11_cm_approx.csv", red.series);
  record_cm(ctx, "cm_approx", red, res);

  // The exact tracks follow the mean field from zero amplitudes. The CM carries
  // the mean field along in the same integrator; the ME interpolates a stored track.
  const double me_t = pick(ctx.config.me_full.t_final, 100.0);
  const double mf_dt = pick(ctx.config.meanfield.dt, default_meanfield_dt(p));
  auto traj = std::make_shared<MeanFieldTrajectory>(integrate_meanfield(p, MeanFieldForm::abc, me_t, mf_dt, 1));
  const auto cm = evolve_covariance_cointegrated(p, initial_covariance(6, p.n_m), o);
  ctx.write_series("fig11_cm_exact.csv", cm.series);
  record_cm(ctx, "cm_exact", cm, res);

  const auto me = run_me(ctx, time_dependent_spec(d, traj, ctx.full_space()), p.n_m, ctx.config.me_full, 100.0);
  ctx.write_series("fig11_me_exact.csv", me.series);
  record_me(ctx, "me_exact", me, "var_X", res);
  ctx.summary.results["steady"] = res;
}

inline void run_custom(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  if (c.sweep_mode == "detuning") {
    run_detuning(ctx, "sweep.csv");
  } else if (c.sweep_mode == "eta") {
    run_eta(ctx, "sweep.csv");
  } else {
    SweepOptions o;
    o.method = c.method;
    o.space = ctx.effective_space();
    o.threads = c.threads;
    o.meanfield = meanfield_search(c);
    const double n_m = c.n_m_list.empty() ? 0.0 : c.n_m_list.front();
    write_sweep(ctx, "sweep.csv", {"kappa", "G"},
                kappa_g_sweep(c.params, axis_or(c, "kappa", {0.5, 6.0, 12}), axis_or(c, "G", {1.0, 12.0, 12}),
                              n_m, o));
    ctx.derived();
  }
}

}  // namespace detail

/// Runs one experiment and writes its artifacts; returns the summary with
/// per-item convergence flags.
inline RunSummary run(const RunConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  RunContext ctx(c);
  const std::string& id = c.experiment;
  if (id == "fig2") {
    detail::write_meanfield(ctx, MeanFieldForm::abc, "fig2.csv");
  } else if (id == "fig8") {
    detail::write_meanfield(ctx, MeanFieldForm::qpac, "fig8.csv");
  } else if (id == "fig3") {
    detail::run_fig3(ctx);
  } else if (id == "fig4") {
    detail::run_fig4(ctx);
  } else if (id == "fig5") {
    detail::run_detuning(ctx, "fig5.csv");
  } else if (id == "fig7") {
    detail::run_fig7(ctx);
  } else if (id == "fig9") {
    detail::run_fig9(ctx);
  } else if (id == "fig10") {
    detail::run_eta(ctx, "fig10.csv");
  } else if (id == "fig11") {
    detail::run_fig11(ctx);
  } else if (id == "sweep-custom") {
    detail::run_custom(ctx);
  } else {
    throw ConfigError("experiment", "unknown experiment id '" + id + "'");
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunSummary& s = ctx.summary;
  Json items = Json::array();
  for (const auto& i : s.items) items.push_back({{"name", i.name}, {"converged", i.converged}, {"note", i.note}});
  s.manifest = Json{{"experiment", id},         {"config", c.to_json()}, {"outputs", s.files},
                    {"results", s.results},     {"convergence", items},  {"all_converged", s.all_converged()},
                    {"wall_time_s", wall}};
  std::ofstream m(s.output_dir / "manifest.json", std::ios::binary);
  m << s.manifest.dump(2) << "\n";
  return s;
}

}  // namespace optosq
