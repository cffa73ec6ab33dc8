#pragma once

#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"

namespace fluxspec {

// Symmetric or asymmetric SQUID transmon. Energies are in Hz (E/h), flux in Phi0.
struct TransmonModel {
  double ej_sum = 0.0;
  double ec = 0.0;
  double asymmetry = 0.0;  // d = |EJ1 - EJ2| / (EJ1 + EJ2)
  double flux_offset = 0.0;

  // Below this EJ/EC ratio the qubit_freq formula is rejected outright.
  static constexpr double kDegenerateRatio = 1.0;
  // Below this EJ_sum/EC ratio the device is outside the transmon regime.
  static constexpr double kTransmonRatio = 20.0;

  void validate() const {
    detail::require(std::isfinite(ej_sum) && ej_sum > 0.0, "TransmonModel: ej_sum must be > 0");
    detail::require(std::isfinite(ec) && ec > 0.0, "TransmonModel: ec must be > 0");
    detail::require(asymmetry >= 0.0 && asymmetry < 1.0, "TransmonModel: asymmetry must lie in [0, 1)");
    detail::require(std::isfinite(flux_offset), "TransmonModel: flux_offset must be finite");
  }

  bool transmon_regime() const noexcept { return ej_sum / ec >= kTransmonRatio; }

  // EJ(flux) = ej_sum |cos(pi x)| sqrt(1 + d^2 tan^2(pi x)), written in the
  // form that stays finite at half flux.
  double josephson_energy(double flux) const {
    const double x = std::numbers::pi * (flux - flux_offset);
    const double c = std::cos(x), s = std::sin(x);
    return ej_sum * std::sqrt(c * c + asymmetry * asymmetry * s * s);
  }
};

inline double qubit_freq(const TransmonModel& model, double flux) {
  model.validate();
  const double ej = model.josephson_energy(flux);
  if (!(ej > model.ec * TransmonModel::kDegenerateRatio))
    throw DomainError("qubit_freq: effective EJ(" + std::to_string(flux) +
                      " Phi0) is below the degenerate-regime threshold");
  return std::sqrt(8.0 * ej * model.ec) - model.ec;
}

// 2 pi d f_q / d flux, rad/s per Phi0, from the analytic derivative.
inline double flux_sensitivity(const TransmonModel& model, double flux) {
  const double ej = model.josephson_energy(flux);
  (void)qubit_freq(model, flux);  // domain check
  const double x = std::numbers::pi * (flux - model.flux_offset);
  const double d2 = model.asymmetry * model.asymmetry;
  // d/dflux of cos^2 + d^2 sin^2 = -pi (1 - d^2) sin(2x)
  const double dej = model.ej_sum * model.ej_sum * (-std::numbers::pi * (1.0 - d2) * std::sin(2.0 * x)) / (2.0 * ej);
  const double dfreq = std::sqrt(8.0 * model.ec) * dej / (2.0 * std::sqrt(ej));
  return 2.0 * std::numbers::pi * dfreq;
}

// Measured flux-tuning spectrum with a natural cubic spline through the samples.
class FluxTuningCurve {
public:
  static constexpr const char* kInterpolation = "natural_cubic_spline";
  static constexpr std::size_t kEndMargin = 2;

  FluxTuningCurve(std::vector<double> flux, std::vector<double> freq)
      : flux_(std::move(flux)), freq_(std::move(freq)) {
    if (flux_.size() != freq_.size()) throw DomainError("FluxTuningCurve: flux and frequency lengths differ");
    if (flux_.size() < 4) throw DomainError("FluxTuningCurve: at least 4 samples required");
    for (std::size_t i = 0; i < flux_.size(); ++i) {
      if (!std::isfinite(flux_[i]) || !std::isfinite(freq_[i]))
        throw DomainError("FluxTuningCurve: non-finite sample at index " + std::to_string(i));
      if (!(freq_[i] > 0.0)) throw DomainError("FluxTuningCurve: frequencies must be positive");
      if (i > 0 && !(flux_[i] > flux_[i - 1])) throw DomainError("FluxTuningCurve: flux must be strictly increasing");
    }
    spline_.reset(gsl_spline_alloc(gsl_interp_cspline, flux_.size()));
    if (!spline_) throw NumericalError("FluxTuningCurve: spline allocation failed");
    if (gsl_spline_init(spline_.get(), flux_.data(), freq_.data(), flux_.size()) != GSL_SUCCESS)
      throw NumericalError("FluxTuningCurve: spline construction failed");
  }

  FluxTuningCurve(const FluxTuningCurve& other) : FluxTuningCurve(other.flux_, other.freq_) {}
  FluxTuningCurve& operator=(const FluxTuningCurve& other) {
    if (this != &other) *this = FluxTuningCurve(other);
    return *this;
  }
  FluxTuningCurve(FluxTuningCurve&&) noexcept = default;
  FluxTuningCurve& operator=(FluxTuningCurve&&) noexcept = default;

  const std::vector<double>& flux() const noexcept { return flux_; }
  const std::vector<double>& freq() const noexcept { return freq_; }
  std::size_t size() const noexcept { return flux_.size(); }

  // Interval where derivative queries are accepted.
  double query_min() const noexcept { return flux_[std::min(kEndMargin, size() - 1)]; }
  double query_max() const noexcept { return flux_[size() - 1 - std::min(kEndMargin, size() - 1)]; }

  double frequency(double flux) const {
    check(flux);
    // A null accelerator makes evaluation reentrant.
    return gsl_spline_eval(spline_.get(), flux, nullptr);
  }

  double slope(double flux) const {
    check(flux);
    return gsl_spline_eval_deriv(spline_.get(), flux, nullptr);
  }

private:
  struct SplineFree {
    void operator()(gsl_spline* s) const noexcept { gsl_spline_free(s); }
  };

  void check(double flux) const {
    if (!(flux >= query_min() && flux <= query_max()))
      throw ExtrapolationError("flux " + std::to_string(flux) + " Phi0 is outside the usable tuning-curve range [" +
                               std::to_string(query_min()) + ", " + std::to_string(query_max()) + "]");
  }

  std::vector<double> flux_;
  std::vector<double> freq_;
  std::unique_ptr<gsl_spline, SplineFree> spline_;
};

inline double flux_sensitivity(const FluxTuningCurve& curve, double flux) {
  return 2.0 * std::numbers::pi * curve.slope(flux);
}

using TransductionSource = std::variant<TransmonModel, FluxTuningCurve>;

inline double flux_sensitivity(const TransductionSource& source, double flux) {
  return std::visit([flux](const auto& s) { return flux_sensitivity(s, flux); }, source);
}

// Samples the parametric model on a uniform flux grid.
inline FluxTuningCurve sample_tuning_curve(const TransmonModel& model, double flux_lo, double flux_hi,
                                           std::size_t n) {
  detail::require(n >= 4 && flux_hi > flux_lo, "sample_tuning_curve: need n >= 4 and an increasing range");
  std::vector<double> flux(n), freq(n);
  for (std::size_t i = 0; i < n; ++i) {
    flux[i] = flux_lo + (flux_hi - flux_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    freq[i] = qubit_freq(model, flux[i]);
  }
  return FluxTuningCurve(std::move(flux), std::move(freq));
}

}  // namespace fluxspec
