#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "quadrature.hpp"

namespace fluxspec {

// (pi/2)_x - [tau/2N - pi_y - tau/2N]^N - (pi/2)_x with ideal instantaneous pulses.
class CPMGSequence {
public:
  CPMGSequence(int n_pulses, double tau, double tau0 = 0.0) : n_(n_pulses), tau_(tau), tau0_(tau0) {
    if (n_pulses < 1) throw DomainError("CPMGSequence: need at least one pi pulse");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("CPMGSequence: tau must be > 0");
    if (!std::isfinite(tau0)) throw DomainError("CPMGSequence: tau0 must be finite");
  }

  int n_pulses() const noexcept { return n_; }
  double tau() const noexcept { return tau_; }
  double tau0() const noexcept { return tau0_; }

  // t_j = (j - 1/2) tau / N, j = 1..N
  double pulse_time(int j) const {
    if (j < 1 || j > n_) throw DomainError("CPMGSequence: pulse index out of range");
    return (static_cast<double>(j) - 0.5) * tau_ / static_cast<double>(n_);
  }

  CPMGSequence with_tau(double tau) const { return CPMGSequence(n_, tau, tau0_); }

private:
  int n_;
  double tau_;
  double tau0_;
};

// +1 before the first pulse, sign flips at each pulse; the value at a flip
// time is the post-flip value.
inline int switching_function(const CPMGSequence& seq, double t) {
  if (!(t >= 0.0 && t <= seq.tau())) throw DomainError("switching_function: t outside [0, tau]");
  const double pos = t * static_cast<double>(seq.n_pulses()) / seq.tau() + 0.5;
  const int flips = std::min(seq.n_pulses(), static_cast<int>(std::floor(pos)));
  return flips % 2 == 0 ? 1 : -1;
}

// g_N(w, tau) = |int_0^tau f(t) e^{i w t} dt|^2 / tau^2, summed exactly over
// the N + 1 constant-sign intervals. Each interval [a, b] contributes
// s e^{i w (a+b)/2} * 2 sin(w (b-a)/2) / w, which avoids cancellation at small w.
inline double filter_function(const CPMGSequence& seq, double omega) {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw DomainError("filter_function: omega must be >= 0");
  if (omega == 0.0) return 0.0;
  const int n = seq.n_pulses();
  const double tau = seq.tau();
  const double edge = tau / (2.0 * n);
  const double inner = tau / n;
  const double edge_weight = 2.0 * std::sin(0.5 * omega * edge) / omega;
  const double inner_weight = 2.0 * std::sin(0.5 * omega * inner) / omega;

  // First interval [0, tau/2N], sign +1.
  std::complex<double> sum = edge_weight * std::polar(1.0, 0.5 * omega * edge);
  // Last interval [tau - tau/2N, tau], sign (-1)^N.
  const double last_sign = n % 2 == 0 ? 1.0 : -1.0;
  sum += last_sign * edge_weight * std::polar(1.0, omega * (tau - 0.5 * edge));
  // Interior intervals k = 1..N-1, midpoints k tau / N, signs (-1)^k.
  if (n > 1) {
    const std::complex<double> step = -std::polar(1.0, omega * inner);
    std::complex<double> phasor = step;
    std::complex<double> interior = 0.0;
    for (int k = 1; k < n; ++k) {
      interior += phasor;
      phasor *= step;
    }
    sum += inner_weight * interior;
  }
  return std::norm(sum) / (tau * tau);
}

// Equal-height, equal-area stand-in for the peaked filter function.
struct RectFilter {
  double omega_c = 0.0;  // rad/s
  double height = 0.0;
  double width = 0.0;    // rad/s
  // Diagnostics of the area computation.
  double area_quadrature = 0.0;  // int_0^omega_max g
  double area_tail = 0.0;        // estimate of int_omega_max^inf g
  double omega_max = 0.0;
  double quadrature_error = 0.0;

  double area() const noexcept { return height * width; }
  double center_freq() const noexcept { return omega_c / (2.0 * std::numbers::pi); }

  // Same filter for tau' = k tau: g depends on omega tau only.
  RectFilter rescaled(double k) const {
    RectFilter out = *this;
    out.omega_c /= k;
    out.width /= k;
    out.area_quadrature /= k;
    out.area_tail /= k;
    out.omega_max /= k;
    out.quadrature_error /= k;
    return out;
  }
};

// Main-lobe peak of g: coarse scan on a pi/(8 tau) grid over (0, 4 pi N / tau],
// then golden-section refinement inside the bracketing grid cells.
inline double filter_peak(const CPMGSequence& seq) {
  const double tau = seq.tau();
  const double step = std::numbers::pi / (8.0 * tau);
  const double upper = 4.0 * std::numbers::pi * seq.n_pulses() / tau;
  double best_w = step, best_g = -1.0;
  for (double w = step; w <= upper * (1.0 + 1e-12); w += step) {
    const double g = filter_function(seq, w);
    if (g > best_g) {
      best_g = g;
      best_w = w;
    }
  }
  double lo = std::max(best_w - step, 0.5 * step), hi = best_w + step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double g1 = filter_function(seq, x1), g2 = filter_function(seq, x2);
  while (hi - lo > 1e-13 * hi) {
    if (g1 < g2) {
      lo = x1;
      x1 = x2;
      g1 = g2;
      x2 = lo + inv_phi * (hi - lo);
      g2 = filter_function(seq, x2);
    } else {
      hi = x2;
      x2 = x1;
      g2 = g1;
      x1 = hi - inv_phi * (hi - lo);
      g1 = filter_function(seq, x1);
    }
  }
  return 0.5 * (lo + hi);
}

inline constexpr double kRectAreaTolerance = 1e-4;

// The area is integrated to omega_max = 40 pi N / tau on pi/tau panels. Beyond
// that g averages to (sum of squared switching jumps) / (omega tau)^2 =
// (4N + 2) / (omega tau)^2, whose integral closes the area.
inline RectFilter rectangular_approximation(const CPMGSequence& seq) {
  const int n = seq.n_pulses();
  const double tau = seq.tau();
  RectFilter out;
  out.omega_c = filter_peak(seq);
  out.height = filter_function(seq, out.omega_c);
  out.omega_max = 40.0 * std::numbers::pi * n / tau;

  const double step = std::numbers::pi / tau;
  std::vector<double> breaks;
  for (int k = 0; k <= 40 * n; ++k) breaks.push_back(k * step);
  breaks.back() = out.omega_max;
  const auto q = quad::integrate_panels([&](double w) { return filter_function(seq, w); }, breaks,
                                        kRectAreaTolerance * 1e-2);
  out.area_quadrature = q.value;
  out.quadrature_error = q.error;
  out.area_tail = (4.0 * n + 2.0) / (tau * tau * out.omega_max);
  const double area = out.area_quadrature + out.area_tail;
  if (!q.converged || !(q.error <= kRectAreaTolerance * area) || !(out.height > 0.0))
    throw NumericalError("rectangular_approximation: area quadrature did not converge (N=" + std::to_string(n) +
                         ", tau=" + std::to_string(tau) + ", estimate=" + std::to_string(q.value) +
                         ", error=" + std::to_string(q.error) + ")");
  out.width = area / out.height;
  return out;
}

}  // namespace fluxspec
