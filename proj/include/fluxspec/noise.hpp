#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "fft.hpp"

namespace fluxspec {

// One-sided flux-noise PSD, Phi0^2/Hz:
//   S(f) = amplitude * (pivot_freq / f)^alpha + white_floor
struct PowerLawPSD {
  double amplitude = 0.0;
  double pivot_freq = 1.0;  // Hz
  double alpha = 0.0;
  double white_floor = 0.0;

  void validate() const {
    detail::require(std::isfinite(amplitude) && amplitude >= 0.0, "PSD amplitude must be finite and >= 0");
    detail::require(std::isfinite(white_floor) && white_floor >= 0.0, "PSD white floor must be finite and >= 0");
    detail::require(std::isfinite(pivot_freq) && pivot_freq > 0.0, "PSD pivot frequency must be > 0");
    detail::require(std::isfinite(alpha) && alpha >= 0.0, "PSD exponent alpha must be >= 0");
  }

  bool is_zero() const noexcept { return amplitude == 0.0 && white_floor == 0.0; }

  PowerLawPSD scaled(double k) const {
    PowerLawPSD out = *this;
    out.amplitude *= k;
    out.white_floor *= k;
    return out;
  }

  friend bool operator==(const PowerLawPSD&, const PowerLawPSD&) = default;
};

inline double psd_eval(const PowerLawPSD& model, double f) {
  if (!(f > 0.0)) throw DomainError("psd_eval: frequency must be > 0");
  if (f == model.pivot_freq) return model.amplitude + model.white_floor;
  const double colored = model.amplitude == 0.0 ? 0.0 : model.amplitude * std::pow(model.pivot_freq / f, model.alpha);
  return colored + model.white_floor;
}

struct NoiseTrajectory {
  double dt = 0.0;  // s
  std::vector<double> samples;  // flux deviation, Phi0
  std::uint64_t seed = 0;

  double duration() const noexcept { return dt * static_cast<double>(samples.size()); }
  double time(std::size_t i) const noexcept { return dt * static_cast<double>(i); }
};

// Frequency-domain synthesis of stationary Gaussian noise. Bin k (frequency
// k/duration, k = 1..M/2-1) receives a complex Gaussian amplitude with
// E|X_k|^2 = S(f_k) df / 2; DC and Nyquist are zero, so no power is placed
// below 1/duration. Reusable across seeds; thread-safe.
class TrajectorySynthesizer {
public:
  TrajectorySynthesizer(const PowerLawPSD& model, double duration, double dt)
      : dt_(dt), n_(checked_length(duration, dt)), fft_(n_) {
    model.validate();
    const double df = 1.0 / (static_cast<double>(n_) * dt_);
    bin_sigma_.assign(fft_.bins(), 0.0);
    silent_ = model.is_zero();
    if (silent_) return;
    const std::size_t end = n_ % 2 == 0 ? fft_.bins() - 1 : fft_.bins();
    for (std::size_t k = 1; k < end; ++k) {
      const double s = psd_eval(model, static_cast<double>(k) * df);
      // Re and Im each carry half of E|X_k|^2.
      bin_sigma_[k] = std::sqrt(s * df / 4.0);
    }
  }

  std::size_t length() const noexcept { return n_; }
  double dt() const noexcept { return dt_; }
  double lowest_frequency() const noexcept { return 1.0 / (static_cast<double>(n_) * dt_); }

  NoiseTrajectory operator()(std::uint64_t seed) const {
    NoiseTrajectory out;
    out.dt = dt_;
    out.seed = seed;
    if (silent_) {
      out.samples.assign(n_, 0.0);
      return out;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::complex<double>> spec(fft_.bins());
    for (std::size_t k = 1; k < spec.size(); ++k) {
      const double re = normal(rng);
      const double im = normal(rng);
      spec[k] = {bin_sigma_[k] * re, bin_sigma_[k] * im};
    }
    out.samples = fft_.inverse(spec);
    return out;
  }

private:
  static std::size_t checked_length(double duration, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("synthesize_trajectory: dt must be > 0");
    if (!(duration > 0.0) || !std::isfinite(duration))
      throw DomainError("synthesize_trajectory: duration must be > 0");
    if (duration < 2.0 * dt * (1.0 - 1e-12)) throw DomainError("synthesize_trajectory: duration must be >= 2 dt");
    const double n = std::round(duration / dt);
    if (n > 1u << 28) throw ResourceError("synthesize_trajectory: more than 2^28 samples requested");
    return std::max<std::size_t>(2, static_cast<std::size_t>(n));
  }

  double dt_;
  std::size_t n_;
  fft::RealFft fft_;
  std::vector<double> bin_sigma_;
  bool silent_ = false;
};

inline NoiseTrajectory synthesize_trajectory(const PowerLawPSD& model, double duration, double dt,
                                             std::uint64_t seed) {
  return TrajectorySynthesizer(model, duration, dt)(seed);
}

struct PsdPoint {
  double freq = 0.0;   // Hz
  double s_phi = 0.0;  // Phi0^2/Hz
  double sigma = 0.0;  // Phi0^2/Hz
  int n_pulses = 0;    // 0 when not from a CPMG datum
  double tau = 0.0;    // s
};

struct PsdProvenance {
  std::string qubit_id;
  double flux_phi0 = 0.0;
  std::vector<int> n_values;
};

struct PSDEstimate {
  std::vector<PsdPoint> points;
  PsdProvenance provenance;
};

// Welch estimate: n_segments Hann-windowed segments with 50 % overlap, each
// mean-detrended. Output excludes DC; sigma is the chi-square spread of the
// segment average, corrected for overlap correlation.
inline PSDEstimate periodogram(const NoiseTrajectory& traj, int n_segments) {
  if (n_segments < 1) throw DomainError("periodogram: n_segments must be >= 1");
  if (!(traj.dt > 0.0)) throw DomainError("periodogram: dt must be > 0");
  const std::size_t m = traj.samples.size();
  const std::size_t seg = 2 * (m / (static_cast<std::size_t>(n_segments) + 1));
  if (seg < 16) throw DomainError("periodogram: trajectory too short for requested segments");
  const std::size_t hop = seg / 2;

  std::vector<double> w(seg);
  double wsq = 0.0;
  for (std::size_t i = 0; i < seg; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg)));
    wsq += w[i] * w[i];
  }
  double overlap = 0.0;
  for (std::size_t i = 0; i + hop < seg; ++i) overlap += w[i] * w[i + hop];
  const double rho = (overlap * overlap) / (wsq * wsq);

  fft::RealFft fft(seg);
  std::vector<double> acc(fft.bins(), 0.0);
  std::vector<double> buf(seg);
  for (int s = 0; s < n_segments; ++s) {
    const std::size_t start = static_cast<std::size_t>(s) * hop;
    double mean = 0.0;
    for (std::size_t i = 0; i < seg; ++i) mean += traj.samples[start + i];
    mean /= static_cast<double>(seg);
    for (std::size_t i = 0; i < seg; ++i) buf[i] = (traj.samples[start + i] - mean) * w[i];
    const auto spec = fft.forward(buf);
    for (std::size_t k = 0; k < spec.size(); ++k) acc[k] += std::norm(spec[k]);
  }

  const double k_seg = static_cast<double>(n_segments);
  const double k_eff = n_segments == 1 ? 1.0 : k_seg / (1.0 + 2.0 * rho * (k_seg - 1.0) / k_seg);
  const double df = 1.0 / (static_cast<double>(seg) * traj.dt);
  PSDEstimate out;
  for (std::size_t k = 1; k < acc.size(); ++k) {
    const bool nyquist = (seg % 2 == 0) && k == acc.size() - 1;
    const double scale = (nyquist ? 1.0 : 2.0) * traj.dt / wsq;
    PsdPoint p;
    p.freq = static_cast<double>(k) * df;
    p.s_phi = scale * acc[k] / k_seg;
    p.sigma = p.s_phi / std::sqrt(k_eff);
    out.points.push_back(p);
  }
  return out;
}

}  // namespace fluxspec
