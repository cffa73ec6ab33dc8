#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace fluxspec::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  std::size_t intervals = 0;
  bool converged = false;
};

struct Segment {
  double a = 0.0, b = 0.0, value = 0.0, error = 0.0;
  bool operator<(const Segment& o) const noexcept { return error < o.error; }
};

// 15-point Kronrod rule with embedded 7-point Gauss error estimate, using the
// node and weight tables shipped with Boost.Math.
template <class F>
Segment gauss_kronrod_15(F& f, double a, double b) {
  using kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
  using gauss = boost::math::quadrature::gauss<double, 7>;
  const auto& x = kronrod::abscissa();
  const auto& wk = kronrod::weights();
  const auto& wg = gauss::weights();
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  const double f0 = f(mid);
  double k = f0 * wk[0];
  double g = f0 * wg[0];
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double fp = f(mid + half * x[i]);
    const double fm = f(mid - half * x[i]);
    k += (fp + fm) * wk[i];
    if (i % 2 == 0) g += (fp + fm) * wg[i / 2];
  }
  Segment s{a, b, half * k, half * std::abs(k - g)};
  s.error = std::max(s.error, 50.0 * std::numeric_limits<double>::epsilon() * std::abs(s.value));
  return s;
}

// Globally adaptive quadrature over consecutive panels
// [breaks[i], breaks[i+1]]: the segment with the largest error estimate is
// bisected until the summed error is below rel_tol * |integral|.
template <class F>
Result integrate_panels(F&& f, std::span<const double> breaks, double rel_tol,
                        std::size_t max_intervals = 1u << 20) {
  std::priority_queue<Segment> heap;
  Result r;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    const auto s = gauss_kronrod_15(f, breaks[i], breaks[i + 1]);
    r.value += s.value;
    r.error += s.error;
    heap.push(s);
  }
  std::size_t iter = 0;
  while (!heap.empty() && r.error > rel_tol * std::abs(r.value) && heap.size() < max_intervals) {
    const Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // cannot bisect further
    heap.pop();
    const auto l = gauss_kronrod_15(f, worst.a, mid);
    const auto h = gauss_kronrod_15(f, mid, worst.b);
    r.value += l.value + h.value - worst.value;
    r.error += l.error + h.error - worst.error;
    heap.push(l);
    heap.push(h);
    if (++iter % 4096 == 0) {
      // Re-sum to shed accumulated rounding in the running totals.
      auto copy = heap;
      r.value = r.error = 0.0;
      while (!copy.empty()) {
        r.value += copy.top().value;
        r.error += copy.top().error;
        copy.pop();
      }
    }
  }
  if (!std::isfinite(r.value)) throw NumericalError("quadrature produced a non-finite value");
  r.intervals = heap.size();
  r.converged = r.error <= rel_tol * std::abs(r.value);
  return r;
}

// Panel edges: geometric (factor `ratio`) from lo up to linear_start, then
// uniform steps of `step` up to hi.
inline std::vector<double> mixed_breaks(double lo, double linear_start, double step, double hi,
                                        double ratio = 2.0) {
  std::vector<double> b{lo};
  double x = lo;
  while (x * ratio < linear_start && x * ratio < hi) {
    x *= ratio;
    b.push_back(x);
  }
  if (linear_start > b.back() && linear_start < hi) b.push_back(linear_start);
  const double start = b.back();
  for (std::size_t k = 1;; ++k) {
    const double next = start + static_cast<double>(k) * step;
    if (next >= hi) break;
    b.push_back(next);
  }
  b.push_back(hi);
  return b;
}

}  // namespace fluxspec::quad
