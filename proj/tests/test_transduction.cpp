#include <catch_amalgamated.hpp>

#include <fluxspec/transduction.hpp>

#include <cmath>

using namespace fluxspec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const TransmonModel kSymmetric{20e9, 0.2e9, 0.0, 0.0};
const TransmonModel kAsymmetric{20e9, 0.2e9, 0.2, 0.0};
}  // namespace

TEST_CASE("qubit frequency at the sweet spot", "[transduction]") {
  CHECK_THAT(qubit_freq(kSymmetric, 0.0), WithinRel(std::sqrt(8.0 * 20e9 * 0.2e9) - 0.2e9, 1e-15));
}

TEST_CASE("symmetric SQUID is degenerate at half flux", "[transduction]") {
  CHECK_THROWS_AS(qubit_freq(kSymmetric, 0.5), DomainError);
  CHECK_THROWS_AS(flux_sensitivity(kSymmetric, 0.5), DomainError);
}

TEST_CASE("asymmetric SQUID at half flux", "[transduction]") {
  const double expected = std::sqrt(8.0 * 0.2 * 20e9 * 0.2e9) - 0.2e9;
  CHECK_THAT(qubit_freq(kAsymmetric, 0.5), WithinRel(expected, 1e-12));
  // Approaching half flux from either side converges to the same value.
  CHECK_THAT(qubit_freq(kAsymmetric, 0.5 - 1e-7), WithinRel(expected, 1e-9));
  CHECK_THAT(qubit_freq(kAsymmetric, 0.5 + 1e-7), WithinRel(expected, 1e-9));
  // |cos| sqrt(1 + d^2 tan^2) form, evaluated away from the singular point.
  const double x = std::numbers::pi * 0.4999;
  const double ej = 20e9 * std::abs(std::cos(x)) * std::sqrt(1.0 + 0.04 * std::tan(x) * std::tan(x));
  CHECK_THAT(qubit_freq(kAsymmetric, 0.4999), WithinRel(std::sqrt(8.0 * ej * 0.2e9) - 0.2e9, 1e-12));
}

TEST_CASE("sensitivity vanishes at the sweet spot and is odd", "[transduction]") {
  CHECK(flux_sensitivity(kSymmetric, 0.0) == 0.0);
  for (double phi : {0.05, 0.1, 0.25, 0.33, 0.45})
    CHECK_THAT(flux_sensitivity(kSymmetric, -phi), WithinRel(-flux_sensitivity(kSymmetric, phi), 1e-13));
}

TEST_CASE("analytic sensitivity matches central differences", "[transduction]") {
  const double h = 1e-6;
  for (const auto& model : {kSymmetric, kAsymmetric, TransmonModel{15e9, 0.25e9, 0.1, 0.03}}) {
    const double fd = 2.0 * std::numbers::pi * (qubit_freq(model, 0.25 + h) - qubit_freq(model, 0.25 - h)) / (2.0 * h);
    CHECK_THAT(flux_sensitivity(model, 0.25), WithinRel(fd, 1e-6));
  }
}

TEST_CASE("qubit frequency is even about the flux offset", "[transduction][property]") {
  const TransmonModel m{20e9, 0.2e9, 0.0, 0.07};
  for (double dphi : {0.01, 0.1, 0.2, 0.3, 0.42})
    CHECK_THAT(qubit_freq(m, 0.07 + dphi), WithinRel(qubit_freq(m, 0.07 - dphi), 1e-13));
}

TEST_CASE("transmon regime flag", "[transduction]") {
  CHECK(kSymmetric.transmon_regime());
  CHECK_FALSE((TransmonModel{3e9, 0.2e9, 0.0, 0.0}.transmon_regime()));
  CHECK_THROWS_AS((TransmonModel{-1.0, 0.2e9, 0.0, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((TransmonModel{1e9, 0.2e9, 1.0, 0.0}.validate()), DomainError);
}

TEST_CASE("spline sensitivity of a sampled curve matches the analytic derivative", "[transduction][property]") {
  for (const auto& model : {kSymmetric, kAsymmetric}) {
    const auto curve = sample_tuning_curve(model, -0.4, 0.4, 201);
    double max_sens = 0;
    for (double phi = curve.query_min(); phi <= curve.query_max(); phi += 1e-3)
      max_sens = std::max(max_sens, std::abs(flux_sensitivity(model, phi)));
    for (double phi = curve.query_min(); phi <= curve.query_max(); phi += 1.3e-3) {
      CAPTURE(phi);
      const double exact = flux_sensitivity(model, phi);
      const double spline = flux_sensitivity(curve, phi);
      if (std::abs(phi) > 0.05) CHECK_THAT(spline, WithinRel(exact, 5e-3));
      CHECK_THAT(spline, WithinAbs(exact, 5e-3 * max_sens));
    }
    CHECK_THAT(curve.frequency(0.25), WithinRel(qubit_freq(model, 0.25), 1e-6));
  }
}

TEST_CASE("tuning curve guards its domain", "[transduction]") {
  const auto curve = sample_tuning_curve(kSymmetric, -0.4, 0.4, 201);
  CHECK_THROWS_AS(flux_sensitivity(curve, 0.45), ExtrapolationError);
  CHECK_THROWS_AS(flux_sensitivity(curve, -0.4), ExtrapolationError);  // inside the end margin
  CHECK_NOTHROW(flux_sensitivity(curve, curve.query_max()));
  CHECK_THROWS_AS(FluxTuningCurve({0.0, 0.1, 0.2}, {5e9, 5e9, 5e9}), DomainError);
  CHECK_THROWS_AS(FluxTuningCurve({0.0, 0.2, 0.1, 0.3}, {5e9, 5e9, 5e9, 5e9}), DomainError);
  CHECK_THROWS_AS(FluxTuningCurve({0.0, 0.1, 0.2, 0.3}, {5e9, -1.0, 5e9, 5e9}), DomainError);
}

TEST_CASE("TransductionSource dispatches to either path", "[transduction]") {
  const TransductionSource a = kSymmetric;
  const TransductionSource b = sample_tuning_curve(kSymmetric, -0.4, 0.4, 401);
  CHECK_THAT(flux_sensitivity(b, 0.25), WithinRel(flux_sensitivity(a, 0.25), 1e-4));
  const TransductionSource copy = b;
  CHECK(flux_sensitivity(copy, 0.2) == flux_sensitivity(b, 0.2));
}
