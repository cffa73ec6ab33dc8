#include <catch_amalgamated.hpp>

#include <fluxspec/spectroscopy.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

using namespace fluxspec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const TransmonModel kQubit{20e9, 0.2e9, 0.0, 0.0};
constexpr double kFlux = 0.25;
const std::vector<int> kNs{1, 2, 5, 14, 48};

// Linear tau grid per N, as in a CPMG sweep.
std::vector<CPMGSequence> grid(const std::vector<int>& ns, double lo, double hi, int count) {
  std::vector<CPMGSequence> out;
  for (int n : ns)
    for (int i = 0; i < count; ++i) out.emplace_back(n, lo + (hi - lo) * i / (count - 1));
  return out;
}

// chi at unit amplitude and unit sensitivity; chi scales as amplitude * D^2.
const std::vector<double>& unit_chi(double alpha, const std::vector<CPMGSequence>& seqs) {
  static std::map<std::tuple<double, int, double, double>, std::vector<double>> cache;
  const auto key = std::make_tuple(alpha, static_cast<int>(seqs.size()), seqs.front().tau(), seqs.back().tau());
  auto it = cache.find(key);
  if (it == cache.end()) {
    SignalModel m;
    m.psd = alpha == 0.0 ? PowerLawPSD{0.0, 1.0, 0.0, 1.0} : PowerLawPSD{1.0, 1.0, alpha, 0.0};
    m.sensitivity = 1.0;
    it = cache.emplace(key, coherence_exponents(m, seqs)).first;
  }
  return it->second;
}

struct Dataset {
  SignalModel model;
  std::vector<CPMGTrace> traces;
  std::vector<TraceFit> fits;
};

// alpha == 0 means a flat spectrum of the given level.
Dataset make_dataset(double alpha, double level, double noise_rms, std::uint64_t seed,
                     const std::vector<CPMGSequence>& seqs, double sensitivity_scale = 1.0, double t1 = 60e-6) {
  Dataset ds;
  auto& m = ds.model;
  m.psd = alpha == 0.0 ? PowerLawPSD{0.0, 1.0, 0.0, level} : PowerLawPSD{level, 1.0, alpha, 0.0};
  m.sensitivity = sensitivity_scale * flux_sensitivity(kQubit, kFlux);
  m.t1 = t1;
  m.a0 = 0.05;
  m.a = 0.9;
  m.noise_rms = noise_rms;
  m.qubit_id = "q";
  m.flux_phi0 = kFlux;
  const auto& u = unit_chi(alpha, seqs);
  std::vector<double> chi(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) chi[i] = u[i] * level * m.sensitivity * m.sensitivity;
  ds.traces = simulate_signal_with_chi(m, seqs, chi, seed);
  for (const auto& tr : ds.traces) ds.fits.push_back(fit_trace(tr));
  return ds;
}

PSDEstimate extract(const Dataset& ds, ExtractionDiagnostics* diag = nullptr) {
  return extract_psd(ds.traces, ds.fits, TransductionSource{kQubit}, kFlux, diag);
}

// Filter-weighted average of the input PSD that a perfect rectangular
// inversion returns: 4 pi int S_omega g dw / (h w), by dense log-trapezoid.
double rectangular_prediction(const PowerLawPSD& psd, const CPMGSequence& seq, double acquisition_time) {
  const double lo = 2.0 * std::numbers::pi / acquisition_time;
  const double hi = 400.0 * std::numbers::pi * seq.n_pulses() / seq.tau();
  const int steps = 400000;
  const double r = std::log(hi / lo) / steps;
  double acc = 0.0, prev = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double w = lo * std::exp(r * i);
    const double v = psd_eval(psd, w / (2.0 * std::numbers::pi)) * filter_function(seq, w) * w;
    if (i > 0) acc += 0.5 * (v + prev) * r;
    prev = v;
  }
  const auto rect = rectangular_approximation(seq);
  return acc / rect.area();
}


}  // namespace

TEST_CASE("white noise inverts to a flat spectrum", "[spectroscopy]") {
  // Normalisation from the synthesis truth isolates the rectangular inversion.
  const auto seqs = grid({14}, 1e-6, 100e-6, 30);
  const auto ds = make_dataset(0.0, 1e-16, 0.0, 1, seqs);
  TraceFit truth;
  truth.a0 = ds.model.a0;
  truth.a = ds.model.a;
  truth.t2 = 1e-5;
  const double d = flux_sensitivity(kQubit, kFlux);
  const auto& tr = ds.traces[0];
  int used = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto inv = invert_point(tr.tau[i], tr.signal[i], truth, d, CPMGSequence(14, tr.tau[i]), tr.t1);
    if (!inv) continue;
    ++used;
    CHECK_THAT(inv.point.s_phi, WithinRel(1e-16, 0.10));
  }
  CHECK(used == 30);
}

TEST_CASE("no decay and sub-floor points are excluded", "[spectroscopy]") {
  TraceFit fit;
  fit.a0 = 0.1;
  fit.a = 0.8;
  fit.t2 = 1e-5;
  fit.residual_rms = 0.01;
  fit.floor_threshold = 3.0 * 0.01 / 0.8;
  const CPMGSequence seq(2, 1e-7);
  const double d = flux_sensitivity(kQubit, kFlux);
  CHECK(invert_point(1e-7, 0.9, fit, d, seq, 5e-5).excluded == Exclusion::no_decay);
  CHECK(invert_point(1e-7, 0.1 + 0.8 * std::exp(-1e-7 / 5e-5), fit, d, seq, 5e-5).excluded ==
        Exclusion::nonpositive_chi);
  CHECK(invert_point(1e-7, 0.1 + 0.8 * 0.01, fit, d, seq, 5e-5).excluded == Exclusion::below_noise_floor);
  CHECK(invert_point(1e-7, 0.05, fit, d, seq, 5e-5).excluded == Exclusion::below_noise_floor);
  const auto ok = invert_point(1e-7, 0.1 + 0.8 * 0.5, fit, d, seq, 5e-5);
  REQUIRE(ok);
  CHECK(ok.point.s_phi > 0.0);
  CHECK_THAT(ok.s_freq_noise, WithinRel(d * d * ok.point.s_phi, 1e-12));
}

TEST_CASE("inversion reproduces a known chi exactly", "[spectroscopy]") {
  // Flat S: chi = tau^2 D^2 (S / 4 pi) h w.
  TraceFit fit;
  fit.a = 1.0;
  fit.t2 = 1e-5;
  const CPMGSequence seq(5, 20e-6);
  const auto rect = rectangular_approximation(seq);
  const double d = 3e10, s = 2e-16, t1 = 1e-4;
  const double chi = seq.tau() * seq.tau() * d * d * s / (4.0 * std::numbers::pi) * rect.area();
  const auto inv = invert_point(seq.tau(), std::exp(-chi - seq.tau() / t1), fit, d, seq, t1);
  REQUIRE(inv);
  CHECK_THAT(inv.chi, WithinRel(chi, 1e-10));
  CHECK_THAT(inv.point.s_phi, WithinRel(s, 1e-10));
  CHECK_THAT(inv.point.freq, WithinRel(rect.omega_c / (2.0 * std::numbers::pi), 1e-12));
}

TEST_CASE("each included datum gives one PSD point", "[spectroscopy]") {
  CPMGTrace tr;
  tr.n_pulses = 14;
  tr.t1 = 60e-6;
  tr.qubit_id = "q";
  tr.flux_phi0 = kFlux;
  for (int i = 1; i <= 20; ++i) {
    tr.tau.push_back(i * 1e-6);
    tr.signal.push_back(trace_model(i * 1e-6, 0.05, 0.9, 12e-6, 0.0, tr.t1));
  }
  const std::vector<CPMGTrace> traces{tr};
  const std::vector<TraceFit> fits{fit_trace(tr)};
  ExtractionDiagnostics diag;
  const auto est = extract_psd(traces, fits, TransductionSource{kQubit}, kFlux, &diag);
  CHECK(est.points.size() == 20);
  CHECK(diag.included == 20);
  CHECK(est.provenance.n_values == std::vector<int>{14});
  CHECK(std::is_sorted(est.points.begin(), est.points.end(),
                       [](const PsdPoint& l, const PsdPoint& r) { return l.freq < r.freq; }));
}

TEST_CASE("combined N values cover about three decades", "[spectroscopy]") {
  const auto seqs = grid(kNs, 1e-6, 100e-6, 30);
  const auto ds = make_dataset(0.8, 1e-12, 0.002, 3, seqs);
  const auto est = extract(ds);
  const double lo = filter_peak(CPMGSequence(1, 100e-6)) / (2.0 * std::numbers::pi);
  const double hi = filter_peak(CPMGSequence(48, 1e-6)) / (2.0 * std::numbers::pi);
  const double span = std::log10(est.points.back().freq / est.points.front().freq);
  INFO("grid extremes " << lo << " .. " << hi << " Hz, estimate " << est.points.front().freq << " .. "
                        << est.points.back().freq);
  CHECK(est.points.front().freq >= lo * 0.999);
  CHECK(est.points.back().freq <= hi * 1.001);
  CHECK_THAT(std::log10(hi / lo), WithinAbs(3.0, 0.75));
  CHECK(span >= 2.0);
  CHECK(span <= std::log10(hi / lo) + 1e-9);
  CHECK(est.provenance.n_values == kNs);
  for (const auto& p : est.points) CHECK(p.s_phi > 0.0);
}

TEST_CASE("alpha 0.8 estimate is consistent with the forward rectangular model", "[spectroscopy]") {
  const auto seqs = grid(kNs, 1e-6, 100e-6, 30);
  const auto ds = make_dataset(0.8, 1e-12, 0.005, 5, seqs);
  const auto est = extract(ds);
  double chi2 = 0.0;
  for (const auto& p : est.points) {
    const double pred = rectangular_prediction(ds.model.psd, CPMGSequence(p.n_pulses, p.tau), 1.0);
    const double z = (p.s_phi - pred) / p.sigma;
    chi2 += z * z;
  }
  const double reduced = chi2 / static_cast<double>(est.points.size());
  INFO("points " << est.points.size() << " reduced chi2 " << reduced);
  CHECK(reduced <= 2.0);
}

TEST_CASE("power-law slopes are recovered", "[spectroscopy]") {
  const auto seqs = grid(kNs, 1e-6, 100e-6, 30);
  SECTION("suspended-like alpha 0.8") {
    const auto fit = fit_power_law(extract(make_dataset(0.8, 1e-12, 0.005, 7, seqs)));
    CHECK_THAT(fit.alpha, WithinAbs(0.8, 0.1));
    CHECK(fit.alpha_err >= 0.0);
  }
  SECTION("regular-like alpha 0.9") {
    const auto fit = fit_power_law(extract(make_dataset(0.9, 3e-12, 0.005, 8, seqs)));
    CHECK_THAT(fit.alpha, WithinAbs(0.9, 0.15));
  }
  SECTION("flat at 1e-16") {
    const auto fit = fit_power_law(extract(make_dataset(0.0, 1e-16, 0.005, 9, seqs)));
    CHECK(std::abs(fit.alpha) < 0.1);
  }
}

TEST_CASE("fit_power_law on exact power-law points", "[spectroscopy]") {
  PSDEstimate est;
  for (int i = 0; i < 12; ++i) {
    const double f = 1e3 * std::pow(10.0, i / 4.0);
    est.points.push_back({f, 2e-12 * std::pow(1.0 / f, 0.75), 0.1 * 2e-12 * std::pow(1.0 / f, 0.75), 1, 1e-6});
  }
  const auto fit = fit_power_law(est);
  CHECK_THAT(fit.alpha, WithinAbs(0.75, 1e-10));
  CHECK_THAT(fit.amplitude, WithinRel(2e-12, 1e-8));
  CHECK(fit.n_points == 12);
  CHECK_THAT(fit.evaluate(1e4), WithinRel(2e-12 * std::pow(1e-4, 0.75), 1e-8));
  const auto sub = fit_power_law(est, {2e3, 2e5}, 1e4);
  CHECK(sub.n_points == 8);
  CHECK(sub.f_min >= 2e3);
  CHECK(sub.f_max <= 2e5);
  CHECK_THAT(sub.amplitude, WithinRel(2e-12 * std::pow(1e-4, 0.75), 1e-8));
  CHECK_THROWS_AS(fit_power_law(est, {1e3, 5e3}), FitError);
}

TEST_CASE("three-to-one input ratio survives inversion", "[spectroscopy]") {
  const auto seqs = grid(kNs, 1e-6, 100e-6, 30);
  const auto low = extract(make_dataset(0.8, 1e-12, 0.002, 11, seqs));
  const auto high = extract(make_dataset(0.8, 3e-12, 0.002, 12, seqs));
  const auto fl = fit_power_law(low, {}, 1e5);
  const auto fh = fit_power_law(high, {}, 1e5);
  const double ratio = fh.amplitude / fl.amplitude;
  const double err = ratio * std::hypot(fh.amplitude_err / fh.amplitude, fl.amplitude_err / fl.amplitude);
  INFO("ratio " << ratio << " +- " << err);
  CHECK(std::abs(ratio - 3.0) <= std::max(3.0 * err, 0.05 * 3.0));
}

namespace {

// Small-chi regime: T1 dominates the decay over the sweep.
constexpr double kSmallChiLevel = 1e-13;
constexpr double kSmallChiT1 = 20e-6;

std::map<std::pair<int, double>, PsdPoint> points_by_key(const PSDEstimate& est) {
  std::map<std::pair<int, double>, PsdPoint> out;
  for (const auto& p : est.points) out[{p.n_pulses, p.tau}] = p;
  return out;
}

struct Comparison {
  std::size_t common = 0;
  std::size_t within_5pct = 0;
  std::size_t within_uncertainty = 0;
  double worst = 0.0;
};

Comparison compare(const PSDEstimate& a, const PSDEstimate& b, double k) {
  Comparison c;
  const auto pb = points_by_key(b);
  for (const auto& [key, p] : points_by_key(a)) {
    if (!pb.contains(key)) continue;
    const auto& q = pb.at(key);
    ++c.common;
    const double dev = std::abs(q.s_phi / (k * p.s_phi) - 1.0);
    c.worst = std::max(c.worst, dev);
    c.within_5pct += dev <= 0.05;
    c.within_uncertainty += dev <= 0.05 || std::abs(q.s_phi - k * p.s_phi) <= 3.0 * std::hypot(q.sigma, k * p.sigma);
  }
  return c;
}

PSDEstimate doubled_sensitivity_estimate(const std::vector<CPMGSequence>& seqs) {
  // The doubled slope comes from a tuning curve of twice the frequency span.
  const auto ds = make_dataset(0.8, kSmallChiLevel, 0.0, 0, seqs, 2.0, kSmallChiT1);
  std::vector<double> flux, freq;
  for (int i = 0; i <= 200; ++i) {
    flux.push_back(0.05 + 0.4 * i / 200.0);
    freq.push_back(2.0 * qubit_freq(kQubit, flux.back()));
  }
  const FluxTuningCurve curve(flux, freq);
  REQUIRE_THAT(flux_sensitivity(curve, kFlux), WithinRel(2.0 * flux_sensitivity(kQubit, kFlux), 1e-3));
  return extract_psd(ds.traces, ds.fits, TransductionSource{curve}, kFlux);
}

}  // namespace

TEST_CASE("extraction is linear in the noise amplitude", "[spectroscopy][!mayfail]") {
  const auto seqs = grid({1, 14}, 1e-6, 100e-6, 30);
  const auto a = extract(make_dataset(0.8, kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto b = extract(make_dataset(0.8, 2.0 * kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto c = compare(a, b, 2.0);
  INFO("common " << c.common << " worst deviation " << c.worst);
  CHECK(c.common >= 20);
  CHECK(c.within_5pct == c.common);
}

TEST_CASE("extraction is linear within propagated uncertainty", "[spectroscopy]") {
  const auto seqs = grid({1, 14}, 1e-6, 100e-6, 30);
  const auto a = extract(make_dataset(0.8, kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto b = extract(make_dataset(0.8, 2.0 * kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto c = compare(a, b, 2.0);
  INFO("common " << c.common << " worst deviation " << c.worst);
  CHECK(c.within_uncertainty == c.common);
  CHECK_THAT(fit_power_law(b, {}, 1e5).amplitude, WithinRel(2.0 * fit_power_law(a, {}, 1e5).amplitude, 0.05));
}

TEST_CASE("doubling the sensitivity leaves the flux PSD unchanged", "[spectroscopy][!mayfail]") {
  const auto seqs = grid({1, 14}, 1e-6, 100e-6, 30);
  const auto a = extract(make_dataset(0.8, kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto c = compare(a, doubled_sensitivity_estimate(seqs), 1.0);
  INFO("common " << c.common << " worst deviation " << c.worst);
  CHECK(c.common >= 20);
  CHECK(c.within_5pct == c.common);
}

TEST_CASE("doubling the sensitivity preserves the flux PSD within uncertainty", "[spectroscopy]") {
  const auto seqs = grid({1, 14}, 1e-6, 100e-6, 30);
  const auto a = extract(make_dataset(0.8, kSmallChiLevel, 0.0, 0, seqs, 1.0, kSmallChiT1));
  const auto b = doubled_sensitivity_estimate(seqs);
  const auto c = compare(a, b, 1.0);
  INFO("common " << c.common << " worst deviation " << c.worst);
  CHECK(c.within_uncertainty == c.common);
  CHECK_THAT(fit_power_law(b, {}, 1e5).amplitude, WithinRel(fit_power_law(a, {}, 1e5).amplitude, 0.05));
}

TEST_CASE("extract_psd validates its inputs", "[spectroscopy]") {
  const auto seqs = grid({2}, 1e-6, 20e-6, 10);
  auto ds = make_dataset(0.8, 1e-12, 0.0, 0, seqs);
  CHECK_THROWS_AS(extract_psd(ds.traces, std::span<const TraceFit>{}, TransductionSource{kQubit}, kFlux),
                  DomainError);
  CHECK_THROWS_AS(extract_psd(ds.traces, ds.fits, TransductionSource{kQubit}, 0.3), DomainError);
  auto other = ds.traces;
  other.push_back(ds.traces[0]);
  other.back().qubit_id = "r";
  auto fits = ds.fits;
  fits.push_back(ds.fits[0]);
  CHECK_THROWS_AS(extract_psd(other, fits, TransductionSource{kQubit}, kFlux), DomainError);
  // A trace with nothing above the floor.
  auto dead = ds.traces[0];
  for (auto& s : dead.signal) s = ds.model.a0 + 1e-9;
  auto dead_fit = ds.fits[0];
  dead_fit.floor_threshold = 0.5;
  const std::vector<CPMGTrace> dt{dead};
  const std::vector<TraceFit> df{dead_fit};
  CHECK_THROWS_AS(extract_psd(dt, df, TransductionSource{kQubit}, kFlux), EmptyEstimateError);
}
