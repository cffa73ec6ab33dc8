#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace fluxspec {

// Fraction of electric-field energy stored in each lossy region.
struct ParticipationRow {
  std::string design_id;
  double p_ms = 0.0;    // metal-substrate interface
  double p_sa = 0.0;    // substrate-air interface
  double p_ma = 0.0;    // metal-air interface
  double p_bulk = 0.0;  // substrate bulk

  void validate() const {
    for (double p : {p_ms, p_sa, p_ma, p_bulk})
      detail::require(std::isfinite(p) && p > 0.0 && p < 1.0,
                      "participation of design '" + design_id + "' must lie in (0, 1)");
  }
};

class ParticipationTable {
public:
  // Maximum relative spread of bulk participations for a shared bulk limit.
  static constexpr double kBulkSpread = 0.10;

  ParticipationTable() = default;
  explicit ParticipationTable(std::vector<ParticipationRow> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_) r.validate();
  }

  const std::vector<ParticipationRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  const ParticipationRow& find(const std::string& id) const {
    for (const auto& r : rows_)
      if (r.design_id == id) return r;
    throw DomainError("participation table has no design '" + id + "'");
  }

  // (max - min) / mean of p_bulk.
  double bulk_spread() const {
    if (rows_.empty()) return 0.0;
    double lo = rows_.front().p_bulk, hi = lo, sum = 0.0;
    for (const auto& r : rows_) {
      lo = std::min(lo, r.p_bulk);
      hi = std::max(hi, r.p_bulk);
      sum += r.p_bulk;
    }
    return (hi - lo) / (sum / static_cast<double>(rows_.size()));
  }

  bool bulk_similar() const { return bulk_spread() <= kBulkSpread; }

private:
  std::vector<ParticipationRow> rows_;
};

// Phenomenological Lorentzian loss channel (e.g. a TLS near the qubit).
struct ResonantChannel {
  double f_k = 0.0;        // Hz
  double rate_peak = 0.0;  // 1/s at f = f_k
  double linewidth = 0.0;  // FWHM, Hz

  double rate(double f) const {
    const double hw = 0.5 * linewidth;
    const double df = f - f_k;
    return rate_peak * hw * hw / (df * df + hw * hw);
  }
};

enum class LossTerm { ms = 0, sa = 1, ma = 2, bulk = 3, other = 4 };
inline constexpr std::array<const char*, 5> kLossTermNames = {"tan_delta_ms", "tan_delta_sa", "tan_delta_ma",
                                                              "tan_delta_bulk", "other_rate"};

struct LossModel {
  double tan_ms = 0.0;
  double tan_sa = 0.0;
  double tan_ma = 0.0;
  double tan_bulk = 0.0;
  double other_rate = 0.0;  // 1/s, frequency independent
  std::vector<ResonantChannel> channels;

  void validate() const {
    for (double t : {tan_ms, tan_sa, tan_ma, tan_bulk, other_rate})
      detail::require(std::isfinite(t) && t >= 0.0, "LossModel: tangents and other_rate must be finite and >= 0");
    for (const auto& c : channels)
      detail::require(c.linewidth > 0.0 && c.rate_peak >= 0.0 && std::isfinite(c.f_k),
                      "LossModel: resonant channels need linewidth > 0 and rate_peak >= 0");
  }

  double term(LossTerm t) const {
    switch (t) {
      case LossTerm::ms: return tan_ms;
      case LossTerm::sa: return tan_sa;
      case LossTerm::ma: return tan_ma;
      case LossTerm::bulk: return tan_bulk;
      case LossTerm::other: return other_rate;
    }
    return 0.0;
  }

  void set(LossTerm t, double v) {
    switch (t) {
      case LossTerm::ms: tan_ms = v; break;
      case LossTerm::sa: tan_sa = v; break;
      case LossTerm::ma: tan_ma = v; break;
      case LossTerm::bulk: tan_bulk = v; break;
      case LossTerm::other: other_rate = v; break;
    }
  }
};

// Coefficient multiplying a term in the decay rate: 2 pi f p_i for tangents, 1 for other_rate.
inline double rate_coefficient(const ParticipationRow& parts, LossTerm t, double f_q) {
  const double w = 2.0 * std::numbers::pi * f_q;
  switch (t) {
    case LossTerm::ms: return w * parts.p_ms;
    case LossTerm::sa: return w * parts.p_sa;
    case LossTerm::ma: return w * parts.p_ma;
    case LossTerm::bulk: return w * parts.p_bulk;
    case LossTerm::other: return 1.0;
  }
  return 0.0;
}

// 1/T1 = 2 pi f_q sum_i p_i tan_i + other_rate (resonant channels excluded).
inline double decay_rate(const ParticipationRow& parts, const LossModel& model, double f_q) {
  if (!(f_q > 0.0) || !std::isfinite(f_q)) throw DomainError("t1_limit: qubit frequency must be > 0");
  model.validate();
  double rate = 0.0;
  for (int t = 0; t < 5; ++t) rate += rate_coefficient(parts, LossTerm(t), f_q) * model.term(LossTerm(t));
  return rate;
}

// Returns +infinity for a lossless budget.
inline double t1_limit(const ParticipationRow& parts, const LossModel& model, double f_q) {
  const double rate = decay_rate(parts, model, f_q);
  return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

struct T1Point {
  double freq = 0.0;  // Hz
  double t1 = 0.0;    // s
  double rate = 0.0;  // 1/s
};

inline std::vector<T1Point> t1_vs_frequency(const ParticipationRow& parts, const LossModel& model,
                                            std::span<const double> f_grid) {
  std::vector<T1Point> out;
  out.reserve(f_grid.size());
  for (std::size_t i = 0; i < f_grid.size(); ++i) {
    if (i > 0 && !(f_grid[i] > f_grid[i - 1])) throw DomainError("t1_vs_frequency: grid must be ascending");
    double rate = decay_rate(parts, model, f_grid[i]);
    for (const auto& c : model.channels) rate += c.rate(f_grid[i]);
    out.push_back({f_grid[i], rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity(), rate});
  }
  return out;
}

struct LossDatum {
  ParticipationRow parts;
  double t1 = 0.0;   // measured, s
  double f_q = 0.0;  // Hz
};

struct LossFitOptions {
  // Default: metal-substrate and bulk tangents only.
  std::array<bool, 5> free = {true, false, false, true, false};
  // Values used for terms that are not fitted.
  LossModel fixed;
  // Weight rates by their own magnitude (constant relative error in T1).
  bool relative_weights = true;
};

struct LossFit {
  LossModel model;
  std::vector<LossTerm> terms;             // free terms, in column order
  std::vector<double> values;              // fitted values per free term
  std::vector<double> uncertainties;       // 1-sigma
  Eigen::MatrixXd covariance;              // free x free
  std::vector<double> residuals;           // per input row: measured - predicted rate, 1/s
  std::vector<double> predicted_t1;        // per input row, s
  double reduced_chi2 = 0.0;
};

namespace detail {

inline std::string describe_combination(const Eigen::VectorXd& v, const std::vector<LossTerm>& terms) {
  std::ostringstream os;
  os.precision(3);
  bool first = true;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) < 1e-6) continue;
    const double c = v[i];
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    os << std::abs(c) << "*" << kLossTermNames[static_cast<std::size_t>(terms[static_cast<std::size_t>(i)])];
    first = false;
  }
  return os.str();
}

}  // namespace detail

// Nonnegative weighted least squares in rate space. With at most five free
// terms the exact NNLS optimum is found by solving every support subset and
// keeping the best feasible one.
inline LossFit fit_loss_tangents(std::span<const LossDatum> data, const LossFitOptions& opts = {}) {
  std::vector<LossTerm> terms;
  for (int t = 0; t < 5; ++t)
    if (opts.free[static_cast<std::size_t>(t)]) terms.push_back(LossTerm(t));
  if (terms.empty()) throw DomainError("fit_loss_tangents: no free terms selected");
  if (data.size() < 2) throw DegeneracyError("fit_loss_tangents: at least 2 rows required");
  if (data.size() < terms.size())
    throw DegeneracyError("fit_loss_tangents: " + std::to_string(data.size()) + " rows cannot determine " +
                          std::to_string(terms.size()) + " free terms");
  opts.fixed.validate();

  const auto m = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(terms.size());
  Eigen::MatrixXd a(m, p);
  Eigen::VectorXd y(m), w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& d = data[static_cast<std::size_t>(i)];
    d.parts.validate();
    if (!(d.t1 > 0.0) || !std::isfinite(d.t1)) throw DomainError("fit_loss_tangents: T1 must be > 0");
    const double rate = 1.0 / d.t1;
    double fixed_rate = 0.0;
    for (int t = 0; t < 5; ++t)
      if (!opts.free[static_cast<std::size_t>(t)])
        fixed_rate += rate_coefficient(d.parts, LossTerm(t), d.f_q) * opts.fixed.term(LossTerm(t));
    y[i] = rate - fixed_rate;
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = rate_coefficient(d.parts, terms[static_cast<std::size_t>(j)], d.f_q);
    w[i] = opts.relative_weights ? 1.0 / (rate * rate) : 1.0;
  }

  // Identifiability on the column-normalised weighted design.
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd aw = sw.asDiagonal() * a;
  const Eigen::VectorXd col_norm = aw.colwise().norm();
  for (Eigen::Index j = 0; j < p; ++j) aw.col(j) /= col_norm[j];
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(aw, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv[p - 1] <= 1e-9 * sv[0]) {
    Eigen::VectorXd null = svd.matrixV().col(p - 1);
    for (Eigen::Index j = 0; j < p; ++j) null[j] /= col_norm[j];
    null /= null.cwiseAbs().maxCoeff();
    throw DegeneracyError("fit_loss_tangents: design matrix is rank deficient; unidentifiable combination " +
                          detail::describe_combination(null, terms));
  }

  const Eigen::VectorXd yw = sw.asDiagonal() * y;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
  const unsigned subsets = 1u << static_cast<unsigned>(p);
  for (unsigned mask = 0; mask < subsets; ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < p; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    if (!cols.empty()) {
      Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c)
        sub.col(static_cast<Eigen::Index>(c)) = aw.col(cols[c]);
      const Eigen::VectorXd z = sub.colPivHouseholderQr().solve(yw);
      bool feasible = true;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (!(z[static_cast<Eigen::Index>(c)] >= 0.0)) feasible = false;
        x[cols[c]] = z[static_cast<Eigen::Index>(c)] / col_norm[cols[c]];
      }
      if (!feasible) continue;
    }
    const double cost = (sw.asDiagonal() * (y - a * x)).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = x;
    }
  }

  LossFit out;
  out.model = opts.fixed;
  out.terms = terms;
  for (Eigen::Index j = 0; j < p; ++j) {
    out.model.set(terms[static_cast<std::size_t>(j)], best[j]);
    out.values.push_back(best[j]);
  }
  const double dof = static_cast<double>(m - p);
  out.reduced_chi2 = dof > 0 ? best_cost / dof : 0.0;
  const Eigen::MatrixXd normal = a.transpose() * w.asDiagonal() * a;
  out.covariance = normal.inverse() * (dof > 0 ? out.reduced_chi2 : 1.0);
  for (Eigen::Index j = 0; j < p; ++j) out.uncertainties.push_back(std::sqrt(std::max(0.0, out.covariance(j, j))));
  for (const auto& d : data) {
    const double pred = decay_rate(d.parts, out.model, d.f_q);
    out.residuals.push_back(1.0 / d.t1 - pred);
    out.predicted_t1.push_back(pred > 0.0 ? 1.0 / pred : std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace fluxspec
