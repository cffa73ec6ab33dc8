#include <catch_amalgamated.hpp>

#include <fluxspec/noise.hpp>
#include <fluxspec/spectroscopy.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace fluxspec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Ordinary least-squares slope of log S against log f, independent of fit_power_law.
double loglog_slope(const PSDEstimate& est, double f_lo, double f_hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& p : est.points) {
    if (p.freq < f_lo || p.freq > f_hi) continue;
    const double x = std::log(p.freq), y = std::log(p.s_phi);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("psd_eval follows the power law plus floor", "[noise]") {
  const PowerLawPSD flat{0.0, 1.0, 0.0, 1e-16};
  for (double f : {1e-3, 1.0, 1e3, 1e7}) CHECK(psd_eval(flat, f) == 1e-16);

  const PowerLawPSD m{2e-12, 10.0, 0.8, 3e-16};
  CHECK(psd_eval(m, 10.0) == 2e-12 + 3e-16);
  CHECK_THAT(psd_eval(m, 1e4), WithinRel(2e-12 * std::pow(1e-3, 0.8) + 3e-16, 1e-14));

  const PowerLawPSD regular{1e-12, 1.0, 0.8, 0.0};
  const PowerLawPSD suspended = regular.scaled(3.0);
  for (double f : {0.1, 2.0, 5e5, 3e7}) CHECK_THAT(psd_eval(suspended, f) / psd_eval(regular, f), WithinRel(3.0, 1e-14));

  CHECK_THROWS_AS(psd_eval(m, 0.0), DomainError);
  CHECK_THROWS_AS(psd_eval(m, -1.0), DomainError);
}

TEST_CASE("psd_eval is nonincreasing in frequency", "[noise][property]") {
  for (double alpha : {0.0, 0.3, 0.8, 1.0, 2.0}) {
    const PowerLawPSD m{1e-12, 1.0, alpha, 1e-17};
    double prev = psd_eval(m, 1e-3);
    for (double f = 1.3e-3; f < 1e8; f *= 1.3) {
      const double s = psd_eval(m, f);
      CHECK(s <= prev);
      CHECK(s > 0.0);
      prev = s;
    }
  }
}

TEST_CASE("PowerLawPSD validation", "[noise]") {
  CHECK_THROWS_AS((PowerLawPSD{-1.0, 1.0, 0.0, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((PowerLawPSD{1.0, 0.0, 0.0, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((PowerLawPSD{1.0, 1.0, -0.5, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((PowerLawPSD{1.0, 1.0, 0.5, -1.0}.validate()), DomainError);
}

TEST_CASE("synthesis of a zero model is silent", "[noise]") {
  const auto traj = synthesize_trajectory(PowerLawPSD{}, 1.0, 1e-3, 42);
  REQUIRE(traj.samples.size() == 1000);
  for (double x : traj.samples) CHECK(x == 0.0);
}

TEST_CASE("synthesis rejects bad sampling", "[noise]") {
  const PowerLawPSD m{1e-12, 1.0, 1.0, 0.0};
  CHECK_THROWS_AS(synthesize_trajectory(m, 1.0, 0.0, 1), DomainError);
  CHECK_THROWS_AS(synthesize_trajectory(m, -1.0, 1e-3, 1), DomainError);
  CHECK_THROWS_AS(synthesize_trajectory(m, 1e-3, 1e-3, 1), DomainError);
}

TEST_CASE("synthesis is bit-reproducible and zero-mean", "[noise][property]") {
  const PowerLawPSD m{1e-12, 1.0, 0.8, 1e-16};
  const auto a = synthesize_trajectory(m, 2.0, 1e-3, 7);
  const auto b = synthesize_trajectory(m, 2.0, 1e-3, 7);
  const auto c = synthesize_trajectory(m, 2.0, 1e-3, 8);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  const double mean = std::accumulate(a.samples.begin(), a.samples.end(), 0.0) / a.samples.size();
  CHECK(std::abs(mean) < 1e-12 * std::sqrt(variance(a.samples)));
}

TEST_CASE("white synthesis variance matches the band integral (Parseval)", "[noise]") {
  const double s = 4e-16, dt = 1e-4, duration = 0.2;
  const PowerLawPSD white{0.0, 1.0, 0.0, s};
  const TrajectorySynthesizer synth(white, duration, dt);
  // Oracle: integral of S over [1/duration, 1/(2 dt)].
  const double expected = s * (1.0 / (2.0 * dt) - 1.0 / duration);
  double acc = 0;
  const int seeds = 120;
  for (int k = 0; k < seeds; ++k) acc += variance(synth(1000 + k).samples);
  CHECK_THAT(acc / seeds, WithinRel(expected, 0.05));
}

TEST_CASE("Welch slope of alpha = 0.8 synthesis recovers the exponent", "[noise]") {
  const PowerLawPSD m{1e-12, 1.0, 0.8, 0.0};
  const double dt = 1e-3, duration = 16.384;
  const TrajectorySynthesizer synth(m, duration, dt);
  double slope = 0;
  const int seeds = 100;
  for (int k = 0; k < seeds; ++k) {
    const auto est = periodogram(synth(k), 8);
    slope += loglog_slope(est, 2.0, 400.0);
  }
  CHECK_THAT(-slope / seeds, WithinAbs(0.8, 0.05));
}

TEST_CASE("synthesize -> periodogram -> fit_power_law round trip", "[noise][property]") {
  const double dt = 2e-3, duration = 65.536;
  for (double alpha : {0.0, 0.5, 0.8, 1.0}) {
    CAPTURE(alpha);
    const PowerLawPSD m{1e-10, 1.0, alpha, 0.0};
    const TrajectorySynthesizer synth(m, duration, dt);
    double a_sum = 0, log_amp = 0;
    const int seeds = 20;
    for (int k = 0; k < seeds; ++k) {
      const auto fit = fit_power_law(periodogram(synth(500 + k), 16), {0.3, 200.0});
      a_sum += fit.alpha;
      log_amp += std::log(fit.amplitude);
    }
    CHECK_THAT(a_sum / seeds, WithinAbs(alpha, 0.1));
    CHECK_THAT(std::exp(log_amp / seeds), WithinRel(1e-10, 0.2));
  }
}

TEST_CASE("periodogram peaks at a pure tone", "[noise]") {
  NoiseTrajectory traj;
  traj.dt = 1e-3;
  const double f0 = 62.5;
  for (int i = 0; i < 8192; ++i) traj.samples.push_back(std::sin(2 * std::numbers::pi * f0 * i * traj.dt));
  const auto est = periodogram(traj, 4);
  const auto peak = std::max_element(est.points.begin(), est.points.end(),
                                     [](const auto& l, const auto& r) { return l.s_phi < r.s_phi; });
  const double df = est.points[1].freq - est.points[0].freq;
  CHECK_THAT(peak->freq, WithinAbs(f0, 0.5 * df));
}

TEST_CASE("white periodogram is flat within its chi-square band", "[noise]") {
  const double s = 1e-16;
  const auto traj = synthesize_trajectory(PowerLawPSD{0.0, 1.0, 0.0, s}, 65.536, 1e-3, 99);
  const auto est = periodogram(traj, 63);
  // Each bin is S chi2_nu / nu with nu = 2 K_eff = 2 (s_phi / sigma)^2; take
  // the two-sided 3-sigma-equivalent (99.73 %) chi-square band.
  const double rel = est.points.front().sigma / est.points.front().s_phi;
  const boost::math::chi_squared chi2(2.0 / (rel * rel));
  const double lo = boost::math::quantile(chi2, 0.00135) / chi2.degrees_of_freedom() * s;
  const double hi = boost::math::quantile(chi2, 0.99865) / chi2.degrees_of_freedom() * s;
  std::size_t outside = 0;
  for (const auto& p : est.points)
    if (p.s_phi < lo || p.s_phi > hi) ++outside;
  CHECK(static_cast<double>(outside) / est.points.size() < 0.01);
  double mean = 0;
  for (const auto& p : est.points) mean += p.s_phi;
  CHECK_THAT(mean / est.points.size(), WithinRel(s, 0.03));
}

TEST_CASE("periodogram obeys Parseval", "[noise]") {
  const auto traj = synthesize_trajectory(PowerLawPSD{0.0, 1.0, 0.0, 2e-16}, 32.768, 1e-3, 5);
  const auto est = periodogram(traj, 15);
  const double df = est.points[1].freq - est.points[0].freq;
  double power = 0;
  for (const auto& p : est.points) power += p.s_phi * df;
  CHECK_THAT(power, WithinRel(variance(traj.samples), 0.02));
}

TEST_CASE("periodogram rejects short input", "[noise]") {
  NoiseTrajectory traj{1e-3, std::vector<double>(20, 0.0), 0};
  CHECK_THROWS_AS(periodogram(traj, 2), DomainError);
  CHECK_THROWS_AS(periodogram(traj, 0), DomainError);
}
