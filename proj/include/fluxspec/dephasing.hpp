#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "filter.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace fluxspec {

// ---------------------------------------------------------------------------
// Forward model
// ---------------------------------------------------------------------------

struct CoherenceOptions {
  double acquisition_time = 1.0;  // s; infrared cutoff omega_ir = 2 pi / acquisition_time
  double rel_tol = 1e-5;
};

// Angular-frequency density used inside the dephasing integral. With
// phi = D int f(t) dPhi(t) dt and S_f one-sided per Hz,
// <phi^2> / 2 = tau^2 D^2 int_0^inf S_f(w / 2 pi) / (4 pi) g(w) dw,
// so the coherence of Gaussian noise is exactly exp(-chi).
inline double angular_psd(const PowerLawPSD& model, double omega) {
  return psd_eval(model, omega / (2.0 * std::numbers::pi)) / (4.0 * std::numbers::pi);
}

inline double ultraviolet_cutoff(const CPMGSequence& seq) {
  return 400.0 * std::numbers::pi * seq.n_pulses() / seq.tau();
}

// chi = tau^2 D^2 int_{omega_ir}^{omega_uv} S_omega(w) g_N(w, tau) dw
inline double coherence_exponent(const PowerLawPSD& psd, double sensitivity, const CPMGSequence& seq,
                                 const CoherenceOptions& opts = {}) {
  psd.validate();
  if (!std::isfinite(sensitivity)) throw DomainError("coherence_exponent: sensitivity must be finite");
  if (!(opts.acquisition_time > 0.0)) throw DomainError("coherence_exponent: acquisition time must be > 0");
  if (psd.is_zero() || sensitivity == 0.0) return 0.0;
  const double tau = seq.tau();
  const double w_ir = 2.0 * std::numbers::pi / opts.acquisition_time;
  const double w_uv = ultraviolet_cutoff(seq);
  if (!(w_ir < w_uv)) throw DomainError("coherence_exponent: acquisition time shorter than the sequence");
  const double step = std::numbers::pi / tau;
  const auto breaks = quad::mixed_breaks(w_ir, step, step, w_uv);
  const auto q = quad::integrate_panels(
      [&](double w) { return angular_psd(psd, w) * filter_function(seq, w); }, breaks, 0.1 * opts.rel_tol);
  if (!q.converged)
    throw NumericalError("coherence_exponent: quadrature failed to reach relative tolerance (N=" +
                         std::to_string(seq.n_pulses()) + ", tau=" + std::to_string(tau) + ")");
  return tau * tau * sensitivity * sensitivity * q.value;
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct CPMGTrace {
  int n_pulses = 1;
  std::vector<double> tau;     // s
  std::vector<double> signal;  // readout units
  double t1 = 0.0;             // s
  std::string qubit_id;
  double flux_phi0 = 0.0;

  std::size_t size() const noexcept { return tau.size(); }

  void validate() const {
    detail::require(n_pulses >= 1, "CPMGTrace: n_pulses must be >= 1");
    detail::require(tau.size() == signal.size(), "CPMGTrace: tau and signal lengths differ");
    detail::require(tau.size() >= 8, "CPMGTrace: at least 8 points required");
    detail::require(std::isfinite(t1) && t1 > 0.0, "CPMGTrace: t1 must be > 0");
    for (std::size_t i = 0; i < tau.size(); ++i) {
      detail::require(std::isfinite(tau[i]) && std::isfinite(signal[i]),
                      "CPMGTrace: non-finite value at index " + std::to_string(i));
      detail::require(tau[i] > 0.0, "CPMGTrace: tau must be positive");
      if (i > 0) detail::require(tau[i] > tau[i - 1], "CPMGTrace: tau must be strictly increasing");
    }
  }
};

struct SignalModel {
  PowerLawPSD psd;
  double sensitivity = 0.0;  // rad/s per Phi0
  double t1 = 0.0;           // s
  double a0 = 0.0;
  double a = 1.0;
  double noise_rms = 0.0;
  double tau0 = 0.0;
  std::string qubit_id;
  double flux_phi0 = 0.0;
  CoherenceOptions coherence;
};

inline std::vector<double> coherence_exponents(const SignalModel& model, std::span<const CPMGSequence> seqs,
                                               unsigned jobs = 1) {
  std::vector<double> chi(seqs.size());
  parallel_for(seqs.size(), jobs, [&](std::size_t i) {
    chi[i] = coherence_exponent(model.psd, model.sensitivity, seqs[i], model.coherence);
  });
  return chi;
}

// signal = a0 + a exp(-chi) exp(-(tau - tau0) / t1) + N(0, noise_rms^2), with
// precomputed chi per sequence. Sequences are grouped into one trace per N,
// in order of first appearance, sorted by tau.
inline std::vector<CPMGTrace> simulate_signal_with_chi(const SignalModel& model, std::span<const CPMGSequence> seqs,
                                                       std::span<const double> chi, std::uint64_t seed) {
  detail::require(chi.size() == seqs.size(), "simulate_signal: chi and sequence counts differ");
  detail::require(std::isfinite(model.t1) && model.t1 > 0.0, "simulate_signal: t1 must be > 0");
  detail::require(std::isfinite(model.a0) && std::isfinite(model.a) && std::isfinite(model.noise_rms) &&
                      model.noise_rms >= 0.0,
                  "simulate_signal: readout parameters must be finite");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<int> order_n;
  std::map<int, std::vector<std::pair<double, double>>> by_n;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& seq = seqs[i];
    const double noise = model.noise_rms > 0.0 ? model.noise_rms * normal(rng) : 0.0;
    const double s = model.a0 + model.a * std::exp(-chi[i]) * std::exp(-(seq.tau() - model.tau0) / model.t1) + noise;
    if (!by_n.contains(seq.n_pulses())) order_n.push_back(seq.n_pulses());
    by_n[seq.n_pulses()].emplace_back(seq.tau(), s);
  }
  std::vector<CPMGTrace> traces;
  for (int n : order_n) {
    auto& pts = by_n[n];
    std::stable_sort(pts.begin(), pts.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    CPMGTrace tr;
    tr.n_pulses = n;
    tr.t1 = model.t1;
    tr.qubit_id = model.qubit_id;
    tr.flux_phi0 = model.flux_phi0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i > 0 && !(pts[i].first > pts[i - 1].first))
        throw DomainError("simulate_signal: duplicate tau for N=" + std::to_string(n));
      tr.tau.push_back(pts[i].first);
      tr.signal.push_back(pts[i].second);
    }
    traces.push_back(std::move(tr));
  }
  return traces;
}

inline std::vector<CPMGTrace> simulate_signal(const SignalModel& model, std::span<const CPMGSequence> seqs,
                                              std::uint64_t seed, unsigned jobs = 1) {
  const auto chi = coherence_exponents(model, seqs, jobs);
  return simulate_signal_with_chi(model, seqs, chi, seed);
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle
// ---------------------------------------------------------------------------

struct MonteCarloOptions {
  double acquisition_time = 1.0;  // s; trajectory length, sets the infrared cutoff
  int samples_per_interval = 64;  // samples per tau/N
  std::size_t max_samples = std::size_t{1} << 24;
  unsigned jobs = 1;
  int bootstrap = 200;
};

struct MonteCarloResult {
  double coherence = 1.0;
  double std_error = 0.0;
  double mean_phase_sq = 0.0;  // <phi^2> over trajectories, rad^2
  std::size_t n_traj = 0;
  double dt = 0.0;
};

// Direct time-domain estimate of |<exp(i phi)>| with
// phi = D int_0^tau f(t) dPhi(t) dt on synthesized noise. Shares only the PSD
// definition with coherence_exponent; the filter function is never used.
inline MonteCarloResult monte_carlo_coherence(const PowerLawPSD& psd, double sensitivity, const CPMGSequence& seq,
                                              int n_traj, std::uint64_t seed, const MonteCarloOptions& opts = {}) {
  if (n_traj < 100) throw DomainError("monte_carlo_coherence: need at least 100 trajectories");
  if (opts.samples_per_interval < 64) throw DomainError("monte_carlo_coherence: need >= 64 samples per tau/N");
  const int n = seq.n_pulses();
  const std::size_t cells = static_cast<std::size_t>(opts.samples_per_interval) * static_cast<std::size_t>(n);
  const double dt = seq.tau() / static_cast<double>(cells);
  const double samples = std::round(opts.acquisition_time / dt);
  if (!(samples > static_cast<double>(cells)))
    throw DomainError("monte_carlo_coherence: acquisition time must exceed tau");
  if (samples > static_cast<double>(opts.max_samples))
    throw ResourceError("monte_carlo_coherence: resolution dt=" + std::to_string(dt) + " s over " +
                        std::to_string(opts.acquisition_time) + " s needs " + std::to_string(samples) +
                        " samples per trajectory (limit " + std::to_string(opts.max_samples) + ")");

  MonteCarloResult out;
  out.n_traj = static_cast<std::size_t>(n_traj);
  out.dt = dt;
  if (psd.is_zero() || sensitivity == 0.0) return out;

  // Cell signs; pulse times fall on cell edges because dt divides tau/(2N).
  std::vector<double> sign(cells);
  for (std::size_t i = 0; i < cells; ++i)
    sign[i] = switching_function(seq, (static_cast<double>(i) + 0.5) * dt);

  const TrajectorySynthesizer synth(psd, static_cast<double>(samples) * dt, dt);
  std::vector<double> phase(static_cast<std::size_t>(n_traj));
  parallel_for(phase.size(), opts.jobs, [&](std::size_t k) {
    const auto traj = synth(derive_seed(seed, k));
    double acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) acc += sign[i] * 0.5 * (traj.samples[i] + traj.samples[i + 1]);
    phase[k] = sensitivity * acc * dt;
  });

  auto coherence_of = [&](auto&& index) {
    double c = 0.0, s = 0.0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
      const double p = phase[index(k)];
      c += std::cos(p);
      s += std::sin(p);
    }
    const double m = static_cast<double>(phase.size());
    return std::hypot(c / m, s / m);
  };
  out.coherence = coherence_of([](std::size_t k) { return k; });
  double sq = 0.0;
  for (double p : phase) sq += p * p;
  out.mean_phase_sq = sq / static_cast<double>(phase.size());

  std::mt19937_64 rng(derive_seed(seed, ~std::uint64_t{0}));
  std::uniform_int_distribution<std::size_t> pick(0, phase.size() - 1);
  std::vector<std::size_t> idx(phase.size());
  double sum = 0.0, sum_sq = 0.0;
  for (int b = 0; b < opts.bootstrap; ++b) {
    for (auto& i : idx) i = pick(rng);
    const double v = coherence_of([&](std::size_t k) { return idx[k]; });
    sum += v;
    sum_sq += v * v;
  }
  if (opts.bootstrap > 1) {
    const double nb = opts.bootstrap;
    out.std_error = std::sqrt(std::max(0.0, (sum_sq - sum * sum / nb) / (nb - 1.0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace fitting
// ---------------------------------------------------------------------------

struct FitOptions {
  int restarts = 5;
  double noise_floor_sigma = 3.0;
  bool fit_tau0 = false;
};

struct TraceFit {
  double a0 = 0.0;
  double a = 0.0;
  double t2 = 0.0;
  double tau0 = 0.0;
  double residual_rms = 0.0;
  std::vector<bool> included;  // per point: above the noise floor
  double tau_min_included = std::numeric_limits<double>::quiet_NaN();
  double tau_max_included = std::numeric_limits<double>::quiet_NaN();
  // (signal - a0) / a must reach this value for a point to count.
  double floor_threshold = 0.0;
  int starts = 1;
};

// a0 + a exp(-(tau - tau0)^2 / (2 t2^2)) exp(-(tau - tau0) / t1)
inline double trace_model(double tau, double a0, double a, double t2, double tau0, double t1) {
  const double u = tau - tau0;
  return a0 + a * std::exp(-u * u / (2.0 * t2 * t2) - u / t1);
}

namespace detail {

// Normalised problem: u = tau / tau_scale, v = (signal - center) / scale.
// Parameters: [a0, a, log t2, tau0] in normalised units.
struct TraceResidual : Eigen::DenseFunctor<double> {
  TraceResidual(std::vector<double> u, std::vector<double> v, double decay, bool free_tau0)
      : Eigen::DenseFunctor<double>(free_tau0 ? 4 : 3, static_cast<int>(u.size())),
        u_(std::move(u)), v_(std::move(v)), k_(decay), free_tau0_(free_tau0) {}

  int operator()(const InputType& x, ValueType& r) const {
    const double t2 = std::exp(x[2]);
    const double u0 = free_tau0_ ? x[3] : 0.0;
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const double d = u_[i] - u0;
      r[static_cast<Eigen::Index>(i)] = x[0] + x[1] * std::exp(-d * d / (2.0 * t2 * t2) - d * k_) - v_[i];
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& j) const {
    const double t2 = std::exp(x[2]);
    const double u0 = free_tau0_ ? x[3] : 0.0;
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double d = u_[i] - u0;
      const double e = std::exp(-d * d / (2.0 * t2 * t2) - d * k_);
      j(row, 0) = 1.0;
      j(row, 1) = e;
      j(row, 2) = x[1] * e * d * d / (t2 * t2);
      if (free_tau0_) j(row, 3) = x[1] * e * (d / (t2 * t2) + k_);
    }
    return 0;
  }

  std::vector<double> u_, v_;
  double k_;
  bool free_tau0_;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

inline TraceFit fit_trace(const CPMGTrace& trace, const FitOptions& opts = {}) {
  trace.validate();
  const std::size_t n = trace.size();
  const auto [lo_it, hi_it] = std::minmax_element(trace.signal.begin(), trace.signal.end());
  const double range = *hi_it - *lo_it;
  const double level = std::max({std::abs(*lo_it), std::abs(*hi_it), std::numeric_limits<double>::min()});
  if (!(range > 1e-12 * level))
    throw UnidentifiableError("fit_trace: signal is flat (N=" + std::to_string(trace.n_pulses) +
                              "); T2 is unidentifiable");

  // Initial guess: tail median, first-point contrast, half-contrast time.
  const std::size_t tail = std::max<std::size_t>(3, n / 5);
  const double a0_init = detail::median({trace.signal.end() - static_cast<std::ptrdiff_t>(tail), trace.signal.end()});
  double a_init = trace.signal.front() - a0_init;
  if (a_init == 0.0) a_init = range;
  double t2_init = 0.5 * trace.tau.back();
  for (std::size_t i = 1; i < n; ++i) {
    const double y0 = (trace.signal[i - 1] - a0_init) / a_init, y1 = (trace.signal[i] - a0_init) / a_init;
    if (y0 > 0.5 && y1 <= 0.5) {
      t2_init = trace.tau[i - 1] + (trace.tau[i] - trace.tau[i - 1]) * (y0 - 0.5) / (y0 - y1);
      break;
    }
  }

  const double center = a0_init;
  const double scale = std::abs(a_init);
  const double tau_scale = trace.tau.back();
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = trace.tau[i] / tau_scale;
    v[i] = (trace.signal[i] - center) / scale;
  }
  detail::TraceResidual fn(u, v, tau_scale / trace.t1, opts.fit_tau0);

  static constexpr double kPerturb[] = {1.0, 0.5, 2.0, 0.25, 4.0, 8.0};
  const int attempts = 1 + std::clamp(opts.restarts, 0, 5);
  std::string last_status;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    Eigen::VectorXd x(fn.inputs());
    x[0] = 0.0;
    x[1] = a_init / scale;
    x[2] = std::log(std::max(t2_init * kPerturb[attempt], 1e-3 * tau_scale) / tau_scale);
    if (opts.fit_tau0) x[3] = 0.0;
    Eigen::LevenbergMarquardt<detail::TraceResidual> lm(fn);
    lm.setMaxfev(4000);
    lm.setXtol(1e-14);
    lm.setFtol(1e-14);
    const auto status = lm.minimize(x);
    const bool converged = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                           status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation &&
                           status != Eigen::LevenbergMarquardtSpace::UserAsked && x.allFinite() &&
                           std::abs(x[2]) < 30.0;
    last_status = std::to_string(static_cast<int>(status));
    if (!converged) continue;

    TraceFit fit;
    fit.starts = attempt + 1;
    fit.a0 = center + scale * x[0];
    fit.a = scale * x[1];
    fit.t2 = tau_scale * std::exp(x[2]);
    fit.tau0 = opts.fit_tau0 ? tau_scale * x[3] : 0.0;
    if (!(std::abs(fit.a) > 1e-9 * (std::abs(fit.a0) + range)))
      throw UnidentifiableError("fit_trace: fitted amplitude vanished (N=" + std::to_string(trace.n_pulses) +
                                "); T2 is unidentifiable");
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = trace.signal[i] - trace_model(trace.tau[i], fit.a0, fit.a, fit.t2, fit.tau0, trace.t1);
      ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
    const double threshold = opts.noise_floor_sigma * fit.residual_rms / std::abs(fit.a);
    fit.floor_threshold = threshold;
    fit.included.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = (trace.signal[i] - fit.a0) / fit.a;
      fit.included[i] = y > 0.0 && y >= threshold;
      if (fit.included[i]) {
        if (std::isnan(fit.tau_min_included)) fit.tau_min_included = trace.tau[i];
        fit.tau_max_included = trace.tau[i];
      }
    }
    return fit;
  }
  throw FitError("fit_trace: no convergence after " + std::to_string(attempts) + " starts (N=" +
                 std::to_string(trace.n_pulses) + ", last LM status " + last_status + ", initial a0=" +
                 std::to_string(a0_init) + ", a=" + std::to_string(a_init) + ", t2=" + std::to_string(t2_init) + ")");
}

}  // namespace fluxspec
