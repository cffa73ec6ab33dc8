#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "io.hpp"

namespace fluxspec {

namespace fs = std::filesystem;

struct TransductionConfig {
  enum class Kind { transmon, tuning_curve };
  Kind kind = Kind::transmon;
  TransmonModel transmon{20e9, 0.2e9, 0.0, 0.0};
  fs::path curve_path;
};

struct SpectroscopyConfig {
  fs::path trace_dir;
  fs::path psd_csv;  // fit-psd input when set; otherwise traces are processed
  double f_min = 0.0;
  double f_max = std::numeric_limits<double>::infinity();
  std::optional<double> amplitude_pivot;  // Hz; default: geometric centre of the fitted points
};

struct SynthesisConfig {
  PowerLawPSD psd{1e-12, 1.0, 0.8, 0.0};
  std::vector<int> n_pulses{1, 2, 5, 14, 48};
  double tau_min = 1e-6;
  double tau_max = 100e-6;
  int tau_points = 30;
  std::string spacing = "linear";  // or "log"
  double t1 = 60e-6;
  double a0 = 0.05;
  double a = 0.9;
  double noise_rms = 0.005;
  std::string qubit_id = "qubit";

  std::vector<double> taus() const {
    std::vector<double> out;
    for (int i = 0; i < tau_points; ++i) {
      const double u = tau_points > 1 ? static_cast<double>(i) / (tau_points - 1) : 0.0;
      out.push_back(spacing == "log" ? tau_min * std::pow(tau_max / tau_min, u) : tau_min + (tau_max - tau_min) * u);
    }
    return out;
  }
};

struct FrequencyGrid {
  double f_min = 4e9;
  double f_max = 6e9;
  int points = 401;

  std::vector<double> values() const {
    std::vector<double> out;
    for (int i = 0; i < points; ++i) out.push_back(f_min + (f_max - f_min) * i / std::max(1, points - 1));
    return out;
  }
};

struct LossBudgetConfig {
  fs::path participations;
  fs::path t1_data;
  std::optional<double> default_p_bulk;
  std::array<bool, 5> free = {true, false, false, true, false};
  LossModel fixed;
  bool relative_weights = true;
  std::vector<ResonantChannel> channels;  // added to the fitted model for T1(f) curves
  std::optional<FrequencyGrid> frequency_grid;
  int guide_points = 200;
};

struct FilterConfig {
  std::vector<int> n_pulses{1, 2, 5, 14, 48};
  double tau = 10e-6;
  double omega_tau_min = 0.1;
  double omega_tau_max = 200.0;
  int points = 2000;
};

struct MonteCarloConfig {
  std::vector<int> n_pulses{1, 2, 14};
  std::vector<double> chi_targets{0.1, 1.0, 3.0};
  std::vector<double> alphas{0.0, 0.8};  // 0 selects a white spectrum
  double tau = 10e-6;
  double acquisition_time = 2e-3;
  int n_traj = 1000;
  int samples_per_interval = 64;
};

struct PipelineConfig {
  fs::path source;  // config file, empty when built in code
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  fs::path output_dir = "out";
  double flux_phi0 = 0.25;
  double acquisition_time = 1.0;  // s, sets the infrared cutoff
  TransductionConfig transduction;
  FitOptions fit;
  std::optional<SpectroscopyConfig> spectroscopy;
  std::optional<SynthesisConfig> synthesis;
  std::optional<LossBudgetConfig> loss_budget;
  std::optional<FilterConfig> filter;
  std::optional<MonteCarloConfig> monte_carlo;

  TransductionSource transduction_source() const {
    if (transduction.kind == TransductionConfig::Kind::transmon) return transduction.transmon;
    return io::read_tuning_curve(transduction.curve_path);
  }
};

namespace detail {

inline fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

inline io::json opt_number(const std::optional<double>& v) { return v ? io::json(*v) : io::json(nullptr); }

inline std::vector<std::string> term_names(const std::array<bool, 5>& free) {
  static constexpr std::array<const char*, 5> short_names = {"ms", "sa", "ma", "bulk", "other"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < 5; ++i)
    if (free[i]) out.emplace_back(short_names[i]);
  return out;
}

inline std::array<bool, 5> parse_terms(const std::vector<std::string>& names, const std::string& where) {
  static constexpr std::array<const char*, 5> short_names = {"ms", "sa", "ma", "bulk", "other"};
  std::array<bool, 5> out{};
  for (const auto& n : names) {
    const auto it = std::find(short_names.begin(), short_names.end(), n);
    if (it == short_names.end())
      throw SchemaError(where + ": unknown loss term '" + n + "' (expected ms, sa, ma, bulk, other)");
    out[static_cast<std::size_t>(it - short_names.begin())] = true;
  }
  return out;
}

}  // namespace detail

// Parses a configuration document. Relative paths are taken from base_dir.
inline PipelineConfig parse_config(const io::json& j, const fs::path& base_dir, const std::string& where = "config") {
  using io::JsonObject;
  PipelineConfig c;
  JsonObject o(j, where);
  c.seed = o.unsigned_integer("seed", 0);
  const auto jobs = o.integer("jobs", 1);
  if (jobs < 1 || jobs > 1024) throw SchemaError(where + ": jobs must be between 1 and 1024");
  c.jobs = static_cast<unsigned>(jobs);
  c.output_dir = detail::resolve_path(base_dir, o.string("output_dir", "out"));
  c.flux_phi0 = o.number("flux_phi0", c.flux_phi0);
  c.acquisition_time = o.number("acquisition_time_s", c.acquisition_time);
  if (!(c.acquisition_time > 0.0)) throw SchemaError(where + ": acquisition_time_s must be > 0");

  if (o.has("transduction")) {
    JsonObject t(o.child("transduction"), where + ".transduction");
    const auto kind = t.string("kind");
    if (kind == "transmon") {
      c.transduction.kind = TransductionConfig::Kind::transmon;
      c.transduction.transmon = io::transmon_from_json(t);
    } else if (kind == "tuning_curve") {
      c.transduction.kind = TransductionConfig::Kind::tuning_curve;
      c.transduction.curve_path = detail::resolve_path(base_dir, t.string("path"));
    } else {
      throw SchemaError(where + ".transduction: kind must be 'transmon' or 'tuning_curve'");
    }
    t.finish();
  }

  if (o.has("fit")) {
    JsonObject f(o.child("fit"), where + ".fit");
    c.fit.restarts = static_cast<int>(f.integer("restarts", c.fit.restarts));
    c.fit.noise_floor_sigma = f.number("noise_floor_sigma", c.fit.noise_floor_sigma);
    c.fit.fit_tau0 = f.boolean("fit_tau0", c.fit.fit_tau0);
    f.finish();
    if (c.fit.restarts < 0 || c.fit.restarts > 5) throw SchemaError(where + ".fit: restarts must be in 0..5");
    if (!(c.fit.noise_floor_sigma >= 0.0)) throw SchemaError(where + ".fit: noise_floor_sigma must be >= 0");
  }

  if (o.has("spectroscopy")) {
    JsonObject s(o.child("spectroscopy"), where + ".spectroscopy");
    SpectroscopyConfig sc;
    if (s.has("trace_dir")) sc.trace_dir = detail::resolve_path(base_dir, s.string("trace_dir"));
    if (s.has("psd_csv")) sc.psd_csv = detail::resolve_path(base_dir, s.string("psd_csv"));
    sc.f_min = s.number("f_min_hz", 0.0);
    sc.f_max = s.number("f_max_hz", std::numeric_limits<double>::infinity());
    if (s.has("amplitude_pivot_hz")) sc.amplitude_pivot = s.number("amplitude_pivot_hz");
    s.finish();
    if (!(sc.f_max > sc.f_min)) throw SchemaError(where + ".spectroscopy: f_max_hz must exceed f_min_hz");
    if (sc.amplitude_pivot && !(*sc.amplitude_pivot > 0.0))
      throw SchemaError(where + ".spectroscopy: amplitude_pivot_hz must be > 0");
    c.spectroscopy = sc;
  }

  if (o.has("synthesis")) {
    JsonObject s(o.child("synthesis"), where + ".synthesis");
    SynthesisConfig sc;
    if (s.has("psd")) sc.psd = io::psd_from_json(s.child("psd"), where + ".synthesis.psd");
    if (s.has("n_pulses")) sc.n_pulses = s.integers("n_pulses");
    sc.tau_min = s.number("tau_min_s", sc.tau_min);
    sc.tau_max = s.number("tau_max_s", sc.tau_max);
    sc.tau_points = static_cast<int>(s.integer("tau_points", sc.tau_points));
    sc.spacing = s.string("tau_spacing", sc.spacing);
    sc.t1 = s.number("t1_s", sc.t1);
    sc.a0 = s.number("a0", sc.a0);
    sc.a = s.number("a", sc.a);
    sc.noise_rms = s.number("noise_rms", sc.noise_rms);
    sc.qubit_id = s.string("qubit_id", sc.qubit_id);
    s.finish();
    const std::string w = where + ".synthesis: ";
    if (sc.n_pulses.empty()) throw SchemaError(w + "n_pulses must not be empty");
    for (int n : sc.n_pulses)
      if (n < 1) throw SchemaError(w + "n_pulses entries must be >= 1");
    if (!(sc.tau_min > 0.0 && sc.tau_max > sc.tau_min)) throw SchemaError(w + "need 0 < tau_min_s < tau_max_s");
    if (sc.tau_points < 8) throw SchemaError(w + "tau_points must be >= 8");
    if (sc.spacing != "linear" && sc.spacing != "log") throw SchemaError(w + "tau_spacing must be 'linear' or 'log'");
    if (!(sc.t1 > 0.0)) throw SchemaError(w + "t1_s must be > 0");
    if (!(sc.noise_rms >= 0.0)) throw SchemaError(w + "noise_rms must be >= 0");
    if (sc.a == 0.0) throw SchemaError(w + "a must be nonzero");
    if (sc.qubit_id.empty()) throw SchemaError(w + "qubit_id must not be empty");
    c.synthesis = sc;
  }

  if (o.has("loss_budget")) {
    JsonObject l(o.child("loss_budget"), where + ".loss_budget");
    LossBudgetConfig lc;
    lc.participations = detail::resolve_path(base_dir, l.string("participations"));
    if (l.has("t1_data")) lc.t1_data = detail::resolve_path(base_dir, l.string("t1_data"));
    if (l.has("default_p_bulk")) lc.default_p_bulk = l.number("default_p_bulk");
    if (l.has("free_terms")) lc.free = detail::parse_terms(l.strings("free_terms"), l.where());
    if (l.has("fixed")) lc.fixed = io::loss_model_from_json(l.child("fixed"), where + ".loss_budget.fixed");
    lc.relative_weights = l.boolean("relative_weights", true);
    if (l.has("resonant_channels")) {
      io::json wrap = {{"resonant_channels", l.child("resonant_channels")}};
      lc.channels = io::loss_model_from_json(wrap, where + ".loss_budget").channels;
    }
    if (l.has("frequency_grid")) {
      JsonObject g(l.child("frequency_grid"), where + ".loss_budget.frequency_grid");
      FrequencyGrid fg;
      fg.f_min = g.number("f_min_hz");
      fg.f_max = g.number("f_max_hz");
      fg.points = static_cast<int>(g.integer("points"));
      g.finish();
      if (!(fg.f_min > 0.0 && fg.f_max > fg.f_min && fg.points >= 2))
        throw SchemaError(g.where() + ": need 0 < f_min_hz < f_max_hz and points >= 2");
      lc.frequency_grid = fg;
    }
    lc.guide_points = static_cast<int>(l.integer("guide_points", lc.guide_points));
    l.finish();
    if (lc.guide_points < 2) throw SchemaError(where + ".loss_budget: guide_points must be >= 2");
    c.loss_budget = lc;
  }

  if (o.has("filter")) {
    JsonObject f(o.child("filter"), where + ".filter");
    FilterConfig fc;
    if (f.has("n_pulses")) fc.n_pulses = f.integers("n_pulses");
    fc.tau = f.number("tau_s", fc.tau);
    fc.omega_tau_min = f.number("omega_tau_min", fc.omega_tau_min);
    fc.omega_tau_max = f.number("omega_tau_max", fc.omega_tau_max);
    fc.points = static_cast<int>(f.integer("points", fc.points));
    f.finish();
    if (!(fc.tau > 0.0 && fc.omega_tau_min > 0.0 && fc.omega_tau_max > fc.omega_tau_min && fc.points >= 2))
      throw SchemaError(where + ".filter: need tau_s > 0, 0 < omega_tau_min < omega_tau_max, points >= 2");
    for (int n : fc.n_pulses)
      if (n < 1) throw SchemaError(where + ".filter: n_pulses entries must be >= 1");
    c.filter = fc;
  }

  if (o.has("monte_carlo")) {
    JsonObject m(o.child("monte_carlo"), where + ".monte_carlo");
    MonteCarloConfig mc;
    if (m.has("n_pulses")) mc.n_pulses = m.integers("n_pulses");
    if (m.has("chi_targets")) mc.chi_targets = m.numbers("chi_targets");
    if (m.has("alphas")) mc.alphas = m.numbers("alphas");
    mc.tau = m.number("tau_s", mc.tau);
    mc.acquisition_time = m.number("acquisition_time_s", mc.acquisition_time);
    mc.n_traj = static_cast<int>(m.integer("n_traj", mc.n_traj));
    mc.samples_per_interval = static_cast<int>(m.integer("samples_per_interval", mc.samples_per_interval));
    m.finish();
    if (mc.n_traj < 100) throw SchemaError(where + ".monte_carlo: n_traj must be >= 100");
    if (mc.samples_per_interval < 64) throw SchemaError(where + ".monte_carlo: samples_per_interval must be >= 64");
    if (!(mc.tau > 0.0 && mc.acquisition_time > mc.tau))
      throw SchemaError(where + ".monte_carlo: need 0 < tau_s < acquisition_time_s");
    for (double x : mc.chi_targets)
      if (!(x > 0.0)) throw SchemaError(where + ".monte_carlo: chi_targets must be > 0");
    for (double a : mc.alphas)
      if (!(a >= 0.0)) throw SchemaError(where + ".monte_carlo: alphas must be >= 0");
    c.monte_carlo = mc;
  }
  o.finish();
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  auto c = parse_config(io::read_json(path), fs::absolute(path).parent_path(), path.string());
  c.source = fs::absolute(path).lexically_normal();
  return c;
}

// Fully explicit form; parse_config(to_json(c)) reproduces c.
inline io::json to_json(const PipelineConfig& c) {
  using io::json;
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["output_dir"] = c.output_dir.string();
  j["flux_phi0"] = c.flux_phi0;
  j["acquisition_time_s"] = c.acquisition_time;
  if (c.transduction.kind == TransductionConfig::Kind::transmon) {
    j["transduction"] = io::to_json(c.transduction.transmon);
    j["transduction"]["kind"] = "transmon";
  } else {
    j["transduction"] = {{"kind", "tuning_curve"}, {"path", c.transduction.curve_path.string()}};
  }
  j["fit"] = {{"restarts", c.fit.restarts}, {"noise_floor_sigma", c.fit.noise_floor_sigma}, {"fit_tau0", c.fit.fit_tau0}};
  if (c.spectroscopy) {
    const auto& s = *c.spectroscopy;
    j["spectroscopy"] = {{"f_min_hz", s.f_min}, {"amplitude_pivot_hz", detail::opt_number(s.amplitude_pivot)}};
    if (std::isfinite(s.f_max)) j["spectroscopy"]["f_max_hz"] = s.f_max;
    if (!s.trace_dir.empty()) j["spectroscopy"]["trace_dir"] = s.trace_dir.string();
    if (!s.psd_csv.empty()) j["spectroscopy"]["psd_csv"] = s.psd_csv.string();
  }
  if (c.synthesis) {
    const auto& s = *c.synthesis;
    j["synthesis"] = {{"psd", io::to_json(s.psd)}, {"n_pulses", s.n_pulses}, {"tau_min_s", s.tau_min},
                      {"tau_max_s", s.tau_max},    {"tau_points", s.tau_points}, {"tau_spacing", s.spacing},
                      {"t1_s", s.t1},              {"a0", s.a0},             {"a", s.a},
                      {"noise_rms", s.noise_rms},  {"qubit_id", s.qubit_id}};
  }
  if (c.loss_budget) {
    const auto& l = *c.loss_budget;
    json ch = json::array();
    for (const auto& x : l.channels) ch.push_back(io::to_json(x));
    j["loss_budget"] = {{"participations", l.participations.string()},
                        {"default_p_bulk", detail::opt_number(l.default_p_bulk)},
                        {"free_terms", detail::term_names(l.free)},
                        {"fixed", io::to_json(l.fixed)},
                        {"relative_weights", l.relative_weights},
                        {"resonant_channels", ch},
                        {"guide_points", l.guide_points}};
    if (!l.t1_data.empty()) j["loss_budget"]["t1_data"] = l.t1_data.string();
    if (l.frequency_grid)
      j["loss_budget"]["frequency_grid"] = {
          {"f_min_hz", l.frequency_grid->f_min}, {"f_max_hz", l.frequency_grid->f_max}, {"points", l.frequency_grid->points}};
  }
  if (c.filter) {
    const auto& f = *c.filter;
    j["filter"] = {{"n_pulses", f.n_pulses},           {"tau_s", f.tau},     {"omega_tau_min", f.omega_tau_min},
                   {"omega_tau_max", f.omega_tau_max}, {"points", f.points}};
  }
  if (c.monte_carlo) {
    const auto& m = *c.monte_carlo;
    j["monte_carlo"] = {{"n_pulses", m.n_pulses},
                        {"chi_targets", m.chi_targets},
                        {"alphas", m.alphas},
                        {"tau_s", m.tau},
                        {"acquisition_time_s", m.acquisition_time},
                        {"n_traj", m.n_traj},
                        {"samples_per_interval", m.samples_per_interval}};
  }
  return j;
}

}  // namespace fluxspec
