#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dephasing.hpp"
#include "error.hpp"
#include "filter.hpp"
#include "noise.hpp"
#include "transduction.hpp"

namespace fluxspec {

enum class Exclusion { none, no_decay, below_noise_floor, nonpositive_chi };

inline const char* to_string(Exclusion e) {
  switch (e) {
    case Exclusion::none: return "none";
    case Exclusion::no_decay: return "no_decay";
    case Exclusion::below_noise_floor: return "below_noise_floor";
    case Exclusion::nonpositive_chi: return "nonpositive_chi";
  }
  return "unknown";
}

struct InvertedPoint {
  Exclusion excluded = Exclusion::none;
  PsdPoint point;                 // flux noise, Phi0^2/Hz
  double chi = 0.0;               // dephasing exponent of this datum
  double s_freq_noise = 0.0;      // D^2 S_Phi, (rad/s)^2/Hz
  double sigma_freq_noise = 0.0;

  explicit operator bool() const noexcept { return excluded == Exclusion::none; }
};

// One CPMG datum -> one PSD sample at the filter peak. The normalised decay
// chi = -ln[(signal - a0)/a] - (tau - tau0)/t1 is divided by the rectangular
// filter's integral tau^2 D^2 h w; the result is converted from the angular
// density back to one-sided per-Hz units (factor 4 pi, see angular_psd).
inline InvertedPoint invert_point(double tau, double signal, const TraceFit& fit, double sensitivity,
                                  const CPMGSequence& seq, double t1, const RectFilter& rect) {
  if (!(fit.a != 0.0) || !(fit.t2 > 0.0)) throw DomainError("invert_point: invalid trace fit");
  if (!std::isfinite(sensitivity) || sensitivity == 0.0)
    throw DomainError("invert_point: sensitivity must be finite and nonzero");
  if (!(t1 > 0.0)) throw DomainError("invert_point: t1 must be > 0");

  InvertedPoint out;
  out.point.n_pulses = seq.n_pulses();
  out.point.tau = tau;
  out.point.freq = rect.center_freq();
  const double y = (signal - fit.a0) / fit.a;
  if (y >= 1.0) {
    out.excluded = Exclusion::no_decay;
    return out;
  }
  if (!(y > 0.0) || y < fit.floor_threshold) {
    out.excluded = Exclusion::below_noise_floor;
    return out;
  }
  out.chi = -std::log(y) - (tau - fit.tau0) / t1;
  if (!(out.chi > 0.0)) {
    out.excluded = Exclusion::nonpositive_chi;
    return out;
  }
  const double d2 = sensitivity * sensitivity;
  const double s_omega = out.chi / (tau * tau * d2 * rect.area());
  out.point.s_phi = 4.0 * std::numbers::pi * s_omega;
  // First order through the log: sigma_chi = sigma_y / y.
  const double sigma_chi = fit.residual_rms / (std::abs(fit.a) * y);
  out.point.sigma = out.point.s_phi * sigma_chi / out.chi;
  out.s_freq_noise = d2 * out.point.s_phi;
  out.sigma_freq_noise = d2 * out.point.sigma;
  return out;
}

inline InvertedPoint invert_point(double tau, double signal, const TraceFit& fit, double sensitivity,
                                  const CPMGSequence& seq, double t1) {
  return invert_point(tau, signal, fit, sensitivity, seq, t1, rectangular_approximation(seq));
}

// Rectangular filters per N, computed once at unit tau and rescaled.
class RectFilterCache {
public:
  RectFilter get(const CPMGSequence& seq) {
    auto it = unit_.find(seq.n_pulses());
    if (it == unit_.end())
      it = unit_.emplace(seq.n_pulses(), rectangular_approximation(CPMGSequence(seq.n_pulses(), 1.0))).first;
    return it->second.rescaled(seq.tau());
  }

private:
  std::map<int, RectFilter> unit_;
};

struct ExtractionDiagnostics {
  std::size_t included = 0;
  std::map<Exclusion, std::size_t> excluded;
};

inline PSDEstimate extract_psd(std::span<const CPMGTrace> traces, std::span<const TraceFit> fits,
                               const TransductionSource& source, double flux,
                               ExtractionDiagnostics* diagnostics = nullptr) {
  if (traces.empty()) throw EmptyEstimateError("extract_psd: no traces supplied");
  if (traces.size() != fits.size()) throw DomainError("extract_psd: one fit per trace required");
  const std::string& qubit = traces.front().qubit_id;
  for (const auto& tr : traces) {
    tr.validate();
    if (tr.qubit_id != qubit) throw DomainError("extract_psd: traces from different qubits ('" + qubit + "', '" + tr.qubit_id + "')");
    if (std::abs(tr.flux_phi0 - flux) > 1e-9)
      throw DomainError("extract_psd: trace flux " + std::to_string(tr.flux_phi0) + " differs from working point " +
                        std::to_string(flux));
  }
  const double d = flux_sensitivity(source, flux);

  RectFilterCache cache;
  PSDEstimate est;
  est.provenance.qubit_id = qubit;
  est.provenance.flux_phi0 = flux;
  std::set<int> ns;
  ExtractionDiagnostics diag;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const auto& tr = traces[t];
    ns.insert(tr.n_pulses);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const CPMGSequence seq(tr.n_pulses, tr.tau[i], fits[t].tau0);
      const auto inv = invert_point(tr.tau[i], tr.signal[i], fits[t], d, seq, tr.t1, cache.get(seq));
      if (inv) {
        est.points.push_back(inv.point);
        ++diag.included;
      } else {
        ++diag.excluded[inv.excluded];
      }
    }
  }
  if (est.points.empty()) throw EmptyEstimateError("extract_psd: no datum survived the exclusion rules");
  std::stable_sort(est.points.begin(), est.points.end(), [](const PsdPoint& l, const PsdPoint& r) {
    if (l.freq != r.freq) return l.freq < r.freq;
    if (l.n_pulses != r.n_pulses) return l.n_pulses < r.n_pulses;
    return l.tau < r.tau;
  });
  est.provenance.n_values.assign(ns.begin(), ns.end());
  if (diagnostics) *diagnostics = diag;
  return est;
}

struct PowerLawFit {
  double alpha = 0.0;
  double alpha_err = 0.0;
  double amplitude = 0.0;  // at pivot, Phi0^2/Hz
  double amplitude_err = 0.0;
  double pivot = 1.0;      // Hz
  double f_min = 0.0;      // extent of the points used, Hz
  double f_max = 0.0;
  std::size_t n_points = 0;
  double reduced_chi2 = 0.0;

  double evaluate(double f) const { return amplitude * std::pow(pivot / f, alpha); }
};

struct FrequencyRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

// Weighted least squares of ln S = ln A - alpha ln(f / pivot) with weights
// (S / sigma)^2. Unweighted when any point lacks a positive sigma.
// Covariance is scaled by the reduced chi-square.
inline PowerLawFit fit_power_law(const PSDEstimate& estimate, FrequencyRange range = {}, double pivot = 1.0) {
  if (!(pivot > 0.0)) throw DomainError("fit_power_law: pivot must be > 0");
  if (!(range.hi > range.lo)) throw DomainError("fit_power_law: empty frequency range");
  std::vector<const PsdPoint*> pts;
  for (const auto& p : estimate.points)
    if (p.freq >= range.lo && p.freq <= range.hi) pts.push_back(&p);
  if (pts.size() < 5)
    throw FitError("fit_power_law: " + std::to_string(pts.size()) + " points in range, at least 5 required");
  bool weighted = true;
  for (const auto* p : pts) {
    if (!(p->freq > 0.0) || !(p->s_phi > 0.0)) throw DomainError("fit_power_law: nonpositive frequency or PSD value");
    if (!(p->sigma > 0.0) || !std::isfinite(p->sigma)) weighted = false;
  }
  const auto m = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd x(m, 2);
  Eigen::VectorXd y(m), w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto* p = pts[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, 1) = -std::log(p->freq / pivot);
    y[i] = std::log(p->s_phi);
    const double rel = p->sigma / p->s_phi;
    w[i] = weighted ? 1.0 / (rel * rel) : 1.0;
  }
  const Eigen::Matrix2d normal = x.transpose() * w.asDiagonal() * x;
  const Eigen::Vector2d rhs = x.transpose() * w.asDiagonal() * y;
  const Eigen::LDLT<Eigen::Matrix2d> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !(std::abs(normal.determinant()) > 0.0))
    throw FitError("fit_power_law: points do not span a frequency range");
  const Eigen::Vector2d beta = ldlt.solve(rhs);
  const Eigen::VectorXd resid = y - x * beta;
  const double chi2 = resid.dot(w.asDiagonal() * resid);
  const double dof = static_cast<double>(m - 2);
  const double red = chi2 / dof;
  const Eigen::Matrix2d cov = normal.inverse() * red;

  PowerLawFit out;
  out.pivot = pivot;
  out.alpha = beta[1];
  out.alpha_err = std::sqrt(std::max(0.0, cov(1, 1)));
  out.amplitude = std::exp(beta[0]);
  out.amplitude_err = out.amplitude * std::sqrt(std::max(0.0, cov(0, 0)));
  out.n_points = pts.size();
  out.reduced_chi2 = red;
  out.f_min = pts.front()->freq;
  out.f_max = pts.front()->freq;
  for (const auto* p : pts) {
    out.f_min = std::min(out.f_min, p->freq);
    out.f_max = std::max(out.f_max, p->freq);
  }
  return out;
}

}  // namespace fluxspec
