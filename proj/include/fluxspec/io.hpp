#pragma once

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dephasing.hpp"
#include "error.hpp"
#include "loss_budget.hpp"
#include "noise.hpp"
#include "spectroscopy.hpp"
#include "transduction.hpp"

namespace fluxspec::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Numbers and text files
// ---------------------------------------------------------------------------

// Shortest representation that round-trips; identical on every run.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) throw DomainError("cannot write non-finite value to a data file");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

class CsvDocument {
public:
  struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
  };

  // Comma separated, one header line; blank lines and '#' comments skipped.
  static CsvDocument parse(const std::string& text, const std::string& file) {
    CsvDocument doc;
    doc.file_ = file;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      auto fields = split(line);
      if (!have_header) {
        std::set<std::string> seen;
        for (const auto& h : fields) {
          if (h.empty()) throw SchemaError(file, lineno, "empty column name in header");
          if (!seen.insert(h).second) throw SchemaError(file, lineno, "duplicate column '" + h + "'");
        }
        doc.header_ = std::move(fields);
        have_header = true;
        continue;
      }
      if (fields.size() != doc.header_.size())
        throw SchemaError(file, lineno, "expected " + std::to_string(doc.header_.size()) + " fields, found " +
                                            std::to_string(fields.size()));
      doc.rows_.push_back({lineno, std::move(fields)});
    }
    if (!have_header) throw SchemaError(file, 0, "missing header line");
    return doc;
  }

  static CsvDocument read(const fs::path& path) { return parse(read_text(path), path.string()); }

  const std::string& file() const noexcept { return file_; }
  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  bool has_column(const std::string& name) const {
    return std::find(header_.begin(), header_.end(), name) != header_.end();
  }

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) throw SchemaError(file_, 1, "missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header_.begin());
  }

  double number(const Row& row, std::size_t col) const {
    const std::string& s = row.fields[col];
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (b != e && *b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != e)
      throw SchemaError(file_, row.line, "column '" + header_[col] + "': '" + s + "' is not a number");
    if (!std::isfinite(v))
      throw SchemaError(file_, row.line, "column '" + header_[col] + "': non-finite value '" + s + "'");
    return v;
  }

  const std::string& text(const Row& row, std::size_t col) const { return row.fields[col]; }

private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      std::string f = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      const auto a = f.find_first_not_of(" \t");
      const auto z = f.find_last_not_of(" \t");
      out.push_back(a == std::string::npos ? std::string{} : f.substr(a, z - a + 1));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  std::string file_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    add_line(header);
  }

  CsvWriter& row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

  CsvWriter& row(const std::vector<double>& values) {
    std::vector<std::string> f;
    for (double v : values) f.push_back(format_number(v));
    add_line(f);
    return *this;
  }

  CsvWriter& row(const std::string& key, const std::vector<double>& values) {
    std::vector<std::string> f{key};
    for (double v : values) f.push_back(format_number(v));
    add_line(f);
    return *this;
  }

  const std::string& str() const noexcept { return text_; }

private:
  void add_line(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw DomainError("CsvWriter: wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n") != std::string::npos)
        throw DomainError("CsvWriter: field contains a separator: " + fields[i]);
      if (i) text_ += ',';
      text_ += fields[i];
    }
    text_ += '\n';
  }

  std::size_t columns_;
  std::string text_;
};

// ---------------------------------------------------------------------------
// Strict JSON objects
// ---------------------------------------------------------------------------

// Wraps a JSON object; every key must be consumed or declared, and unknown
// keys are rejected by finish().
class JsonObject {
public:
  JsonObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw SchemaError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  double number(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing required key '" + key + "'");
    return as_number(j_.at(key), key);
  }

  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing required key '" + key + "'");
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw SchemaError(where_ + ": key '" + key + "' must be an integer");
    return v.get<std::int64_t>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) { return has(key) ? integer(key) : fallback; }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw SchemaError(where_ + ": key '" + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw SchemaError(where_ + ": key '" + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing required key '" + key + "'");
    const auto& v = j_.at(key);
    if (!v.is_string()) throw SchemaError(where_ + ": key '" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing required key '" + key + "'");
    return j_.at(key);
  }

  std::vector<double> numbers(const std::string& key) {
    const auto& v = child(key);
    if (!v.is_array()) throw SchemaError(where_ + ": key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(as_number(e, key));
    return out;
  }

  std::vector<int> integers(const std::string& key) {
    const auto& v = child(key);
    if (!v.is_array()) throw SchemaError(where_ + ": key '" + key + "' must be an array");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw SchemaError(where_ + ": entries of '" + key + "' must be integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key) {
    const auto& v = child(key);
    if (!v.is_array()) throw SchemaError(where_ + ": key '" + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw SchemaError(where_ + ": entries of '" + key + "' must be strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  const std::string& where() const noexcept { return where_; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw SchemaError(where_ + ": unknown key '" + key + "'");
  }

private:
  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) throw SchemaError(where_ + ": key '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(where_ + ": key '" + key + "' is not finite");
    return d;
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json parse_json(const std::string& text, const std::string& file) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(file, 0, std::string("invalid JSON: ") + e.what());
  }
}

inline json read_json(const fs::path& path) { return parse_json(read_text(path), path.string()); }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

inline json to_json(const PowerLawPSD& p) {
  return {{"amplitude", p.amplitude}, {"pivot_freq_hz", p.pivot_freq}, {"alpha", p.alpha}, {"white_floor", p.white_floor}};
}

inline PowerLawPSD psd_from_json(const json& j, const std::string& where) {
  JsonObject o(j, where);
  PowerLawPSD p;
  p.amplitude = o.number("amplitude", 0.0);
  p.pivot_freq = o.number("pivot_freq_hz", 1.0);
  p.alpha = o.number("alpha", 0.0);
  p.white_floor = o.number("white_floor", 0.0);
  o.finish();
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return p;
}

inline json to_json(const TransmonModel& m) {
  return {{"ej_sum_hz", m.ej_sum}, {"ec_hz", m.ec}, {"asymmetry", m.asymmetry}, {"flux_offset_phi0", m.flux_offset}};
}

inline TransmonModel transmon_from_json(JsonObject& o) {
  TransmonModel m;
  m.ej_sum = o.number("ej_sum_hz");
  m.ec = o.number("ec_hz");
  m.asymmetry = o.number("asymmetry", 0.0);
  m.flux_offset = o.number("flux_offset_phi0", 0.0);
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw SchemaError(o.where() + ": " + e.what());
  }
  return m;
}

// Frequency-flux curve: columns flux_phi0, freq_hz.
inline FluxTuningCurve read_tuning_curve(const fs::path& path) {
  const auto doc = CsvDocument::read(path);
  const auto cf = doc.column("flux_phi0"), cq = doc.column("freq_hz");
  std::vector<double> flux, freq;
  for (const auto& r : doc.rows()) {
    flux.push_back(doc.number(r, cf));
    freq.push_back(doc.number(r, cq));
    if (flux.size() > 1 && !(flux.back() > flux[flux.size() - 2]))
      throw SchemaError(doc.file(), r.line, "flux_phi0 must be strictly increasing");
  }
  try {
    return FluxTuningCurve(flux, freq);
  } catch (const DomainError& e) {
    throw SchemaError(doc.file(), 0, e.what());
  }
}

// Traces: <stem>.csv with tau_s, signal and <stem>.json sidecar.
inline CPMGTrace read_trace(const fs::path& csv_path) {
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  const auto doc = CsvDocument::read(csv_path);
  const auto ct = doc.column("tau_s"), cs = doc.column("signal");
  CPMGTrace tr;
  for (const auto& r : doc.rows()) {
    const double tau = doc.number(r, ct);
    if (!(tau > 0.0)) throw SchemaError(doc.file(), r.line, "tau_s must be positive");
    if (!tr.tau.empty() && !(tau > tr.tau.back()))
      throw SchemaError(doc.file(), r.line, "tau_s is not strictly increasing");
    tr.tau.push_back(tau);
    tr.signal.push_back(doc.number(r, cs));
  }
  if (!fs::exists(sidecar)) throw SchemaError(sidecar.string(), 0, "missing trace sidecar");
  const auto meta = read_json(sidecar);
  JsonObject o(meta, sidecar.string());
  const auto n = o.integer("n_pulses");
  if (n < 1 || n > 100000) throw SchemaError(sidecar.string(), 0, "n_pulses must be a positive integer");
  tr.n_pulses = static_cast<int>(n);
  tr.t1 = o.number("t1_s");
  tr.qubit_id = o.string("qubit_id");
  tr.flux_phi0 = o.number("flux_phi0");
  o.finish();
  try {
    tr.validate();
  } catch (const DomainError& e) {
    throw SchemaError(doc.file(), 0, e.what());
  }
  return tr;
}

inline json trace_sidecar(const CPMGTrace& tr) {
  return {{"n_pulses", tr.n_pulses}, {"t1_s", tr.t1}, {"qubit_id", tr.qubit_id}, {"flux_phi0", tr.flux_phi0}};
}

inline std::string trace_csv(const CPMGTrace& tr) {
  CsvWriter w({"tau_s", "signal"});
  for (std::size_t i = 0; i < tr.size(); ++i) w.row({tr.tau[i], tr.signal[i]});
  return w.str();
}

// Every *.csv in the directory with a sidecar, in name order.
inline std::vector<fs::path> list_traces(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SchemaError(dir.string(), 0, "trace directory does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw SchemaError(dir.string(), 0, "no trace files (*.csv) found");
  return out;
}

inline json to_json(const TraceFit& f) {
  std::size_t n_inc = 0;
  for (bool b : f.included) n_inc += b;
  json j = {{"a0", f.a0},
            {"a", f.a},
            {"t2_s", f.t2},
            {"tau0_s", f.tau0},
            {"residual_rms", f.residual_rms},
            {"floor_threshold", f.floor_threshold},
            {"n_included", n_inc},
            {"n_points", f.included.size()},
            {"starts", f.starts}};
  j["included_tau_range_s"] =
      n_inc ? json::array({f.tau_min_included, f.tau_max_included}) : json(nullptr);
  return j;
}

inline TraceFit trace_fit_from_json(const json& j, const std::string& where) {
  JsonObject o(j, where);
  TraceFit f;
  f.a0 = o.number("a0");
  f.a = o.number("a");
  f.t2 = o.number("t2_s");
  f.tau0 = o.number("tau0_s", 0.0);
  f.residual_rms = o.number("residual_rms");
  f.floor_threshold = o.number("floor_threshold", 0.0);
  f.starts = static_cast<int>(o.integer("starts", 1));
  o.has("n_included");
  o.has("n_points");
  if (o.has("included_tau_range_s")) {
    const auto r = o.numbers("included_tau_range_s");
    if (r.size() != 2) throw SchemaError(where + ": included_tau_range_s must hold two values");
    f.tau_min_included = r[0];
    f.tau_max_included = r[1];
  }
  o.finish();
  if (!(f.t2 > 0.0) || f.a == 0.0) throw SchemaError(where + ": fit needs t2_s > 0 and a != 0");
  return f;
}

// PSD estimate: freq_hz, s_phi0sq_per_hz, sigma (+ n_pulses, tau_s provenance).
inline std::string psd_csv(const PSDEstimate& est) {
  CsvWriter w({"freq_hz", "s_phi0sq_per_hz", "sigma", "n_pulses", "tau_s"});
  for (const auto& p : est.points) w.row({p.freq, p.s_phi, p.sigma, static_cast<double>(p.n_pulses), p.tau});
  return w.str();
}

inline PSDEstimate read_psd(const fs::path& path) {
  const auto doc = CsvDocument::read(path);
  const auto cf = doc.column("freq_hz"), cs = doc.column("s_phi0sq_per_hz"), ce = doc.column("sigma");
  const bool has_n = doc.has_column("n_pulses"), has_tau = doc.has_column("tau_s");
  PSDEstimate est;
  std::set<int> ns;
  for (const auto& r : doc.rows()) {
    PsdPoint p;
    p.freq = doc.number(r, cf);
    p.s_phi = doc.number(r, cs);
    p.sigma = doc.number(r, ce);
    if (!(p.freq > 0.0)) throw SchemaError(doc.file(), r.line, "freq_hz must be positive");
    if (!(p.s_phi > 0.0)) throw SchemaError(doc.file(), r.line, "s_phi0sq_per_hz must be positive");
    if (p.sigma < 0.0) throw SchemaError(doc.file(), r.line, "sigma must be nonnegative");
    if (has_n) {
      const double n = doc.number(r, doc.column("n_pulses"));
      if (n < 1 || n != std::floor(n)) throw SchemaError(doc.file(), r.line, "n_pulses must be a positive integer");
      p.n_pulses = static_cast<int>(n);
      ns.insert(p.n_pulses);
    }
    if (has_tau) p.tau = doc.number(r, doc.column("tau_s"));
    est.points.push_back(p);
  }
  if (est.points.empty()) throw SchemaError(doc.file(), 0, "PSD file has no data rows");
  est.provenance.n_values.assign(ns.begin(), ns.end());
  return est;
}

inline json to_json(const PsdProvenance& p) {
  return {{"qubit_id", p.qubit_id}, {"flux_phi0", p.flux_phi0}, {"n_values", p.n_values}};
}

// Summary of a power-law fit. The same data are fitted with the law pivoted
// at 1 Hz and at an in-band pivot, so both amplitudes carry their own errors.
inline json to_json(const PowerLawFit& at_1hz, const PowerLawFit& at_pivot) {
  return {{"alpha", at_1hz.alpha},
          {"alpha_err", at_1hz.alpha_err},
          {"amp_1hz", at_1hz.amplitude},
          {"amp_err", at_1hz.amplitude_err},
          {"pivot_hz", at_pivot.pivot},
          {"amp_pivot", at_pivot.amplitude},
          {"amp_pivot_err", at_pivot.amplitude_err},
          {"f_min", at_1hz.f_min},
          {"f_max", at_1hz.f_max},
          {"n_points", at_1hz.n_points},
          {"reduced_chi2", at_1hz.reduced_chi2}};
}

// Participations: design_id, p_ms, p_sa, p_ma, p_bulk. p_bulk may be omitted
// when a default bulk participation is supplied.
inline ParticipationTable read_participations(const fs::path& path, std::optional<double> default_bulk = {}) {
  const auto doc = CsvDocument::read(path);
  const auto cid = doc.column("design_id"), cms = doc.column("p_ms"), csa = doc.column("p_sa"),
             cma = doc.column("p_ma");
  std::optional<std::size_t> cb;
  if (doc.has_column("p_bulk")) cb = doc.column("p_bulk");
  else if (!default_bulk) doc.column("p_bulk");
  std::vector<ParticipationRow> rows;
  std::set<std::string> ids;
  for (const auto& r : doc.rows()) {
    ParticipationRow p;
    p.design_id = doc.text(r, cid);
    if (p.design_id.empty()) throw SchemaError(doc.file(), r.line, "empty design_id");
    if (!ids.insert(p.design_id).second) throw SchemaError(doc.file(), r.line, "duplicate design_id '" + p.design_id + "'");
    p.p_ms = doc.number(r, cms);
    p.p_sa = doc.number(r, csa);
    p.p_ma = doc.number(r, cma);
    p.p_bulk = cb ? doc.number(r, *cb) : *default_bulk;
    try {
      p.validate();
    } catch (const DomainError& e) {
      throw SchemaError(doc.file(), r.line, e.what());
    }
    rows.push_back(p);
  }
  if (rows.empty()) throw SchemaError(doc.file(), 0, "participation table has no rows");
  return ParticipationTable(std::move(rows));
}

inline std::string participations_csv(const ParticipationTable& t) {
  CsvWriter w({"design_id", "p_ms", "p_sa", "p_ma", "p_bulk"});
  for (const auto& r : t.rows()) w.row(r.design_id, {r.p_ms, r.p_sa, r.p_ma, r.p_bulk});
  return w.str();
}

// Measured lifetimes: design_id, t1_s, f_q_hz. One row per qubit.
inline std::vector<LossDatum> read_t1_data(const fs::path& path, const ParticipationTable& table) {
  const auto doc = CsvDocument::read(path);
  const auto cid = doc.column("design_id"), ct = doc.column("t1_s"), cf = doc.column("f_q_hz");
  std::vector<LossDatum> out;
  for (const auto& r : doc.rows()) {
    LossDatum d;
    const auto& id = doc.text(r, cid);
    try {
      d.parts = table.find(id);
    } catch (const DomainError& e) {
      throw SchemaError(doc.file(), r.line, e.what());
    }
    d.t1 = doc.number(r, ct);
    d.f_q = doc.number(r, cf);
    if (!(d.t1 > 0.0)) throw SchemaError(doc.file(), r.line, "t1_s must be positive");
    if (!(d.f_q > 0.0)) throw SchemaError(doc.file(), r.line, "f_q_hz must be positive");
    out.push_back(d);
  }
  if (out.empty()) throw SchemaError(doc.file(), 0, "T1 dataset has no rows");
  return out;
}

inline json to_json(const ResonantChannel& c) {
  return {{"f_hz", c.f_k}, {"rate_peak_per_s", c.rate_peak}, {"linewidth_hz", c.linewidth}};
}

inline json to_json(const LossModel& m) {
  json ch = json::array();
  for (const auto& c : m.channels) ch.push_back(to_json(c));
  return {{"tan_delta_ms", m.tan_ms},   {"tan_delta_sa", m.tan_sa}, {"tan_delta_ma", m.tan_ma},
          {"tan_delta_bulk", m.tan_bulk}, {"other_rate_per_s", m.other_rate}, {"resonant_channels", ch}};
}

inline LossModel loss_model_from_json(const json& j, const std::string& where) {
  JsonObject o(j, where);
  LossModel m;
  m.tan_ms = o.number("tan_delta_ms", 0.0);
  m.tan_sa = o.number("tan_delta_sa", 0.0);
  m.tan_ma = o.number("tan_delta_ma", 0.0);
  m.tan_bulk = o.number("tan_delta_bulk", 0.0);
  m.other_rate = o.number("other_rate_per_s", 0.0);
  if (o.has("resonant_channels")) {
    const auto& arr = o.child("resonant_channels");
    if (!arr.is_array()) throw SchemaError(where + ": resonant_channels must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      JsonObject c(arr[i], where + ".resonant_channels[" + std::to_string(i) + "]");
      m.channels.push_back({c.number("f_hz"), c.number("rate_peak_per_s"), c.number("linewidth_hz")});
      c.finish();
    }
  }
  o.finish();
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return m;
}

inline json to_json(const LossFit& f) {
  json values = json::object(), errs = json::object();
  for (std::size_t i = 0; i < f.terms.size(); ++i) {
    const std::string name = kLossTermNames[static_cast<std::size_t>(f.terms[i])];
    values[name] = f.values[i];
    errs[name] = f.uncertainties[i];
  }
  json cov = json::array();
  for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < f.covariance.cols(); ++c) row.push_back(f.covariance(r, c));
    cov.push_back(row);
  }
  return {{"model", to_json(f.model)},     {"fitted", values}, {"uncertainties", errs},
          {"covariance", cov},             {"reduced_chi2", f.reduced_chi2}};
}

}  // namespace fluxspec::io
