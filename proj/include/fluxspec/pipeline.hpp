#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "config.hpp"
#include "dephasing.hpp"
#include "filter.hpp"
#include "io.hpp"
#include "loss_budget.hpp"
#include "parallel.hpp"
#include "spectroscopy.hpp"
#include "transduction.hpp"

#ifndef FLUXSPEC_VERSION
#define FLUXSPEC_VERSION "0.0.0"
#endif

namespace fluxspec::pipeline {

namespace fs = std::filesystem;
using io::json;

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// Re-throws with "[stage] " in front of the message, keeping the error type.
template <class Fn>
auto tagged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string tag = "[" + stage + "] ";
  try {
    return fn();
  } catch (const SchemaError& e) {
    throw SchemaError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  } catch (const ResourceError& e) {
    throw ResourceError(tag + e.what());
  } catch (const ExtrapolationError& e) {
    throw ExtrapolationError(tag + e.what());
  } catch (const DomainError& e) {
    throw DomainError(tag + e.what());
  } catch (const UnidentifiableError& e) {
    throw UnidentifiableError(tag + e.what());
  } catch (const DegeneracyError& e) {
    throw DegeneracyError(tag + e.what());
  } catch (const FitError& e) {
    throw FitError(tag + e.what());
  } catch (const EmptyEstimateError& e) {
    throw EmptyEstimateError(tag + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag + e.what());
  }
}

// Collects outputs of one run. Everything in results.json is a pure function
// of the resolved configuration and the inputs; timings live in report.json.
class Run {
public:
  Run(const PipelineConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)), resolved_(to_json(cfg)),
        config_hash_(hash_config(resolved_)) {}

  // Output location and thread count do not change any result.
  static std::string hash_config(json j) {
    j.erase("output_dir");
    j.erase("jobs");
    return sha256_hex(j.dump());
  }

  const PipelineConfig& config() const noexcept { return cfg_; }
  const fs::path& out_dir() const noexcept { return cfg_.output_dir; }
  json& results() noexcept { return results_; }
  const std::string& config_hash() const noexcept { return config_hash_; }

  void write(const std::string& rel, const std::string& content) {
    io::write_text(cfg_.output_dir / rel, content);
    files_[rel] = sha256_hex(content);
  }

  template <class Fn>
  auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Timer {
      Run& run;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Timer() {
        run.timings_[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } timer{*this, name, t0};
    return tagged(name, std::forward<Fn>(fn));
  }

  json finish() {
    json payload = {{"command", command_},
                    {"software_version", FLUXSPEC_VERSION},
                    {"config_hash", config_hash_},
                    {"results", results_}};
    json outputs = json::object();
    for (const auto& [rel, hash] : files_) outputs[rel] = hash;
    payload["outputs"] = outputs;
    write("results.json", io::dump(payload));
    // Holds the output directory and thread count, so it is not part of results.json.
    write("resolved_config.json", io::dump(resolved_));
    json report = payload;
    report["timings_s"] = timings_;
    write("report.json", io::dump(report));
    json manifest = {{"config_hash", config_hash_}, {"files", json::object()}};
    for (const auto& [rel, hash] : files_) manifest["files"][rel] = hash;
    io::write_text(cfg_.output_dir / "manifest.json", io::dump(manifest));
    return report;
  }

private:
  PipelineConfig cfg_;
  std::string command_;
  json resolved_;
  std::string config_hash_;
  json results_ = json::object();
  std::map<std::string, std::string> files_;
  std::map<std::string, double> timings_;
};

inline double working_sensitivity(const PipelineConfig& cfg) {
  return flux_sensitivity(cfg.transduction_source(), cfg.flux_phi0);
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

inline std::string trace_stem(const std::string& qubit, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_N%03d", n);
  return qubit + buf;
}

inline void synthesize(Run& run) {
  const auto& cfg = run.config();
  if (!cfg.synthesis) throw SchemaError("config: 'synthesis' section required");
  const auto& s = *cfg.synthesis;
  SignalModel m;
  m.psd = s.psd;
  m.sensitivity = run.stage("transduction", [&] { return working_sensitivity(cfg); });
  m.t1 = s.t1;
  m.a0 = s.a0;
  m.a = s.a;
  m.noise_rms = s.noise_rms;
  m.qubit_id = s.qubit_id;
  m.flux_phi0 = cfg.flux_phi0;
  m.coherence.acquisition_time = cfg.acquisition_time;
  const auto taus = s.taus();
  std::vector<CPMGSequence> seqs;
  for (int n : s.n_pulses)
    for (double tau : taus) seqs.emplace_back(n, tau);
  const auto chi = run.stage("coherence", [&] { return coherence_exponents(m, seqs, cfg.jobs); });
  const auto traces = run.stage("simulate", [&] { return simulate_signal_with_chi(m, seqs, chi, cfg.seed); });

  json files = json::array();
  for (const auto& tr : traces) {
    const auto stem = trace_stem(tr.qubit_id, tr.n_pulses);
    run.write("traces/" + stem + ".csv", io::trace_csv(tr));
    run.write("traces/" + stem + ".json", io::dump(io::trace_sidecar(tr)));
    files.push_back("traces/" + stem + ".csv");
  }
  json chi_table = json::array();
  for (std::size_t i = 0; i < seqs.size(); ++i)
    chi_table.push_back({{"n_pulses", seqs[i].n_pulses()}, {"tau_s", seqs[i].tau()}, {"chi", chi[i]}});
  const json truth = {{"psd", io::to_json(s.psd)},
                      {"sensitivity_rad_per_s_per_phi0", m.sensitivity},
                      {"flux_phi0", cfg.flux_phi0},
                      {"qubit_id", s.qubit_id},
                      {"t1_s", s.t1},
                      {"a0", s.a0},
                      {"a", s.a},
                      {"noise_rms", s.noise_rms},
                      {"seed", cfg.seed},
                      {"acquisition_time_s", cfg.acquisition_time},
                      {"chi", chi_table}};
  run.write("truth.json", io::dump(truth));
  run.results()["synthesis"] = {{"trace_files", files},
                                {"n_traces", traces.size()},
                                {"points_per_trace", taus.size()},
                                {"sensitivity_rad_per_s_per_phi0", m.sensitivity}};
}

// ---------------------------------------------------------------------------
// Spectroscopy
// ---------------------------------------------------------------------------

struct FittedTraces {
  std::vector<CPMGTrace> traces;
  std::vector<TraceFit> fits;
};

inline const SpectroscopyConfig& spectroscopy_section(const PipelineConfig& cfg) {
  if (!cfg.spectroscopy) throw SchemaError("config: 'spectroscopy' section required");
  return *cfg.spectroscopy;
}

inline FittedTraces fit_traces(Run& run) {
  const auto& cfg = run.config();
  const auto& sc = spectroscopy_section(cfg);
  if (sc.trace_dir.empty()) throw SchemaError("config.spectroscopy: trace_dir required");
  FittedTraces out;
  std::vector<fs::path> paths;
  run.stage("ingest", [&] {
    paths = io::list_traces(sc.trace_dir);
    for (const auto& p : paths) out.traces.push_back(io::read_trace(p));
  });
  out.fits.resize(out.traces.size());
  run.stage("fit_trace", [&] {
    parallel_for(out.traces.size(), cfg.jobs, [&](std::size_t i) {
      try {
        out.fits[i] = fit_trace(out.traces[i], cfg.fit);
      } catch (const FitError& e) {
        throw FitError(paths[i].filename().string() + ": " + e.what());
      }
    });
  });
  json summary = json::array();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto stem = paths[i].stem().string();
    json f = io::to_json(out.fits[i]);
    run.write("fits/" + stem + ".fit.json", io::dump(f));
    f["file"] = paths[i].filename().string();
    f["n_pulses"] = out.traces[i].n_pulses;
    summary.push_back(f);
  }
  run.results()["fits"] = summary;
  return out;
}

inline PSDEstimate extract(Run& run) {
  const auto& cfg = run.config();
  const auto fitted = fit_traces(run);
  ExtractionDiagnostics diag;
  auto est = run.stage("extract_psd", [&] {
    const auto source = cfg.transduction_source();
    return extract_psd(fitted.traces, fitted.fits, source, cfg.flux_phi0, &diag);
  });
  run.write("psd.csv", io::psd_csv(est));
  json excluded = json::object();
  for (const auto& [reason, count] : diag.excluded) excluded[to_string(reason)] = count;
  const json meta = {{"provenance", io::to_json(est.provenance)},
                     {"included", diag.included},
                     {"excluded", excluded},
                     {"f_min_hz", est.points.front().freq},
                     {"f_max_hz", est.points.back().freq}};
  run.write("psd_meta.json", io::dump(meta));
  run.results()["psd"] = meta;
  return est;
}

inline json fit_psd(Run& run) {
  const auto& cfg = run.config();
  const auto& sc = spectroscopy_section(cfg);
  const PSDEstimate est =
      sc.psd_csv.empty() ? extract(run) : run.stage("ingest", [&] { return io::read_psd(sc.psd_csv); });
  const FrequencyRange range{sc.f_min, sc.f_max};
  return run.stage("fit_power_law", [&] {
    const auto at_1hz = fit_power_law(est, range, 1.0);
    double pivot = std::sqrt(at_1hz.f_min * at_1hz.f_max);
    if (sc.amplitude_pivot) pivot = *sc.amplitude_pivot;
    const auto at_pivot = fit_power_law(est, range, pivot);
    const json summary = io::to_json(at_1hz, at_pivot);
    run.write("psd_fit.json", io::dump(summary));
    run.results()["power_law"] = summary;
    return summary;
  });
}

// ---------------------------------------------------------------------------
// Loss budget
// ---------------------------------------------------------------------------

inline void loss_budget(Run& run) {
  const auto& cfg = run.config();
  if (!cfg.loss_budget) throw SchemaError("config: 'loss_budget' section required");
  const auto& lc = *cfg.loss_budget;
  const auto table = run.stage("ingest", [&] { return io::read_participations(lc.participations, lc.default_p_bulk); });
  std::vector<LossDatum> data;
  if (!lc.t1_data.empty()) data = run.stage("ingest", [&] { return io::read_t1_data(lc.t1_data, table); });

  json res;
  res["bulk_spread"] = table.bulk_spread();
  res["bulk_similar"] = table.bulk_similar();
  LossModel model = lc.fixed;
  if (!data.empty()) {
    LossFitOptions opts;
    opts.free = lc.free;
    opts.fixed = lc.fixed;
    opts.relative_weights = lc.relative_weights;
    const auto fit = run.stage("fit_loss_tangents", [&] { return fit_loss_tangents(data, opts); });
    model = fit.model;
    run.write("loss_model.json", io::dump(io::to_json(fit)));
    io::CsvWriter pvm({"design_id", "p_ms", "f_q_hz", "t1_measured_s", "t1_predicted_s", "residual_rate_per_s"});
    for (std::size_t i = 0; i < data.size(); ++i)
      pvm.row(data[i].parts.design_id,
              {data[i].parts.p_ms, data[i].f_q, data[i].t1, fit.predicted_t1[i], fit.residuals[i]});
    run.write("predicted_vs_measured.csv", pvm.str());
    res["fit"] = io::to_json(fit);
  } else {
    run.write("loss_model.json", io::dump({{"model", io::to_json(model)}}));
    res["fit"] = nullptr;
  }
  model.channels.insert(model.channels.end(), lc.channels.begin(), lc.channels.end());

  // Guide lines against p_ms: surface line, p_ms-independent line and their sum.
  run.stage("guide_curves", [&] {
    double f_q = 5e9;
    if (!data.empty()) {
      std::vector<double> fs;
      for (const auto& d : data) fs.push_back(d.f_q);
      f_q = detail::median(fs);
    }
    double lo = table.rows().front().p_ms, hi = lo, bulk = 0.0;
    for (const auto& r : table.rows()) {
      lo = std::min(lo, r.p_ms);
      hi = std::max(hi, r.p_ms);
      bulk += r.p_bulk;
    }
    bulk /= static_cast<double>(table.size());
    lo *= 0.5;
    hi *= 2.0;
    const double w = 2.0 * std::numbers::pi * f_q;
    const double r_flat = w * bulk * model.tan_bulk + model.other_rate;
    // A line with zero rate has no finite T1; only its rate column is written.
    std::vector<std::string> header{"p_ms", "rate_ms_line_per_s", "rate_flat_line_per_s", "rate_combined_per_s"};
    const bool ms_t1 = model.tan_ms > 0.0, flat_t1 = r_flat > 0.0;
    if (ms_t1) header.push_back("t1_ms_line_s");
    if (flat_t1) header.push_back("t1_flat_line_s");
    if (ms_t1 || flat_t1) header.push_back("t1_combined_s");
    io::CsvWriter guide(header);
    for (int i = 0; i < lc.guide_points; ++i) {
      const double p = lo * std::pow(hi / lo, static_cast<double>(i) / (lc.guide_points - 1));
      const double r_ms = w * p * model.tan_ms;
      std::vector<double> row{p, r_ms, r_flat, r_ms + r_flat};
      if (ms_t1) row.push_back(1.0 / r_ms);
      if (flat_t1) row.push_back(1.0 / r_flat);
      if (ms_t1 || flat_t1) row.push_back(1.0 / (r_ms + r_flat));
      guide.row(row);
    }
    run.write("guide_curves.csv", guide.str());
    res["guide_f_q_hz"] = f_q;
    res["guide_mean_p_bulk"] = bulk;
  });

  if (lc.frequency_grid) {
    run.stage("t1_vs_frequency", [&] {
      const auto grid = lc.frequency_grid->values();
      std::vector<std::string> ids;
      if (data.empty())
        for (const auto& r : table.rows()) ids.push_back(r.design_id);
      else
        for (const auto& d : data)
          if (std::find(ids.begin(), ids.end(), d.parts.design_id) == ids.end()) ids.push_back(d.parts.design_id);
      json curves = json::array();
      for (const auto& id : ids) {
        const auto curve = t1_vs_frequency(table.find(id), model, grid);
        io::CsvWriter w({"freq_hz", "t1_s"});
        for (const auto& p : curve) w.row({p.freq, p.t1});
        run.write("t1_curves/" + id + ".csv", w.str());
        curves.push_back("t1_curves/" + id + ".csv");
      }
      res["t1_curves"] = curves;
    });
  }
  res["model"] = io::to_json(model);
  run.results()["loss_budget"] = res;
}

// ---------------------------------------------------------------------------
// Filter functions and Monte Carlo validation
// ---------------------------------------------------------------------------

inline void filter_functions(Run& run) {
  const auto& cfg = run.config();
  if (!cfg.filter) throw SchemaError("config: 'filter' section required");
  const auto& fc = *cfg.filter;
  json rects = json::array();
  run.stage("filter_function", [&] {
    for (int n : fc.n_pulses) {
      const CPMGSequence seq(n, fc.tau);
      io::CsvWriter w({"omega_rad_s", "g"});
      for (int i = 0; i < fc.points; ++i) {
        const double wt = fc.omega_tau_min * std::pow(fc.omega_tau_max / fc.omega_tau_min,
                                                      static_cast<double>(i) / (fc.points - 1));
        const double omega = wt / fc.tau;
        w.row({omega, filter_function(seq, omega)});
      }
      char name[32];
      std::snprintf(name, sizeof name, "filter_N%03d.csv", n);
      run.write(name, w.str());
      const auto rect = rectangular_approximation(seq);
      rects.push_back({{"n_pulses", n},
                       {"tau_s", fc.tau},
                       {"omega_c_rad_per_s", rect.omega_c},
                       {"f_c_hz", rect.center_freq()},
                       {"height", rect.height},
                       {"width_rad_per_s", rect.width},
                       {"area", rect.area()},
                       {"area_tail", rect.area_tail},
                       {"omega_max_rad_per_s", rect.omega_max}});
    }
  });
  run.write("rect_filters.json", io::dump(rects));
  run.results()["filters"] = rects;
}

struct McRow {
  double alpha = 0.0;
  int n_pulses = 1;
  double chi = 0.0;
  double expected = 0.0;
  MonteCarloResult mc;
  bool pass = false;
};

inline std::vector<McRow> monte_carlo_validation(const PipelineConfig& cfg, double sensitivity) {
  const auto& mc = *cfg.monte_carlo;
  std::vector<McRow> rows;
  for (double alpha : mc.alphas)
    for (int n : mc.n_pulses)
      for (double chi : mc.chi_targets) rows.push_back({alpha, n, chi, 0.0, {}, false});
  MonteCarloOptions mo;
  mo.acquisition_time = mc.acquisition_time;
  mo.samples_per_interval = mc.samples_per_interval;
  mo.jobs = cfg.jobs;
  const CoherenceOptions co{mc.acquisition_time, 1e-5};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    const CPMGSequence seq(r.n_pulses, mc.tau);
    const PowerLawPSD unit = r.alpha == 0.0 ? PowerLawPSD{0.0, 1.0, 0.0, 1.0} : PowerLawPSD{1.0, 1.0, r.alpha, 0.0};
    const double k = r.chi / coherence_exponent(unit, sensitivity, seq, co);
    const auto psd = unit.scaled(k);
    r.chi = coherence_exponent(psd, sensitivity, seq, co);
    r.expected = std::exp(-r.chi);
    r.mc = monte_carlo_coherence(psd, sensitivity, seq, mc.n_traj, derive_seed(cfg.seed, i), mo);
    r.pass = std::abs(r.mc.coherence - r.expected) <= std::max(0.02, 3.0 * r.mc.std_error);
  }
  return rows;
}

inline void mc_validate(Run& run) {
  const auto& cfg = run.config();
  if (!cfg.monte_carlo) throw SchemaError("config: 'monte_carlo' section required");
  const double d = run.stage("transduction", [&] { return working_sensitivity(cfg); });
  const auto rows = run.stage("monte_carlo", [&] { return monte_carlo_validation(cfg, d); });
  io::CsvWriter w({"alpha", "n_pulses", "chi", "coherence_expected", "coherence_mc", "std_error", "pass"});
  std::size_t passed = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    w.row({r.alpha, static_cast<double>(r.n_pulses), r.chi, r.expected, r.mc.coherence, r.mc.std_error,
           r.pass ? 1.0 : 0.0});
    passed += r.pass;
    worst = std::max(worst, std::abs(r.mc.coherence - r.expected));
  }
  run.write("mc_validation.csv", w.str());
  run.results()["monte_carlo"] = {
      {"cases", rows.size()}, {"passed", passed}, {"max_abs_deviation", worst}, {"sensitivity_rad_per_s_per_phi0", d}};
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

enum class Command { synthesize, fit_trace, extract_psd, fit_psd, loss_budget, filter_fn, mc_validate };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::synthesize: return "synthesize";
    case Command::fit_trace: return "fit-trace";
    case Command::extract_psd: return "extract-psd";
    case Command::fit_psd: return "fit-psd";
    case Command::loss_budget: return "loss-budget";
    case Command::filter_fn: return "filter-fn";
    case Command::mc_validate: return "mc-validate";
  }
  return "unknown";
}

inline json run(const PipelineConfig& cfg, Command command) {
  Run r(cfg, command_name(command));
  switch (command) {
    case Command::synthesize: synthesize(r); break;
    case Command::fit_trace: fit_traces(r); break;
    case Command::extract_psd: extract(r); break;
    case Command::fit_psd: fit_psd(r); break;
    case Command::loss_budget: loss_budget(r); break;
    case Command::filter_fn: filter_functions(r); break;
    case Command::mc_validate: mc_validate(r); break;
  }
  return r.finish();
}

// Traces -> fits -> PSD estimate -> power law.
inline json run_spectroscopy(const PipelineConfig& cfg) { return run(cfg, Command::fit_psd); }
inline json run_synthesis(const PipelineConfig& cfg) { return run(cfg, Command::synthesize); }
inline json run_loss_budget(const PipelineConfig& cfg) { return run(cfg, Command::loss_budget); }

// Process exit code for an error escaping a run.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 3;
  return 1;
}

}  // namespace fluxspec::pipeline
