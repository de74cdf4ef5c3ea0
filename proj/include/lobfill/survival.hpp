#pragma once

// Product-limit survival, Aalen-Johansen cumulative incidence, Gray variance
// and log-log confidence bands. All estimators accept per-observation weights.
//
// Curves are right-continuous step functions: value(t) includes the jump at
// t itself, before(t) is the left limit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lobfill/lifecycle.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

enum class Cause : std::uint8_t { Censored = 0, Execution = 1, Cancellation = 2 };

struct Observation {
  double t = 0.0;
  Cause cause = Cause::Censored;
  double weight = 1.0;
};

inline Observation to_observation(const OrderLifecycle& rec) {
  Cause c = Cause::Censored;
  if (rec.outcome == Outcome::Filled) c = Cause::Execution;
  if (rec.outcome == Outcome::Cancelled) c = Cause::Cancellation;
  return {rec.outcome_time, c, 1.0};
}

inline std::vector<Observation> to_observations(std::span<const OrderLifecycle> recs) {
  std::vector<Observation> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(to_observation(r));
  return out;
}

namespace detail {

// Evaluates a right-continuous step function defined at sorted `times`.
inline double step_at(const std::vector<double>& times, const std::vector<double>& values, double t,
                      double initial, bool left_limit) {
  auto it = left_limit ? std::lower_bound(times.begin(), times.end(), t)
                       : std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return initial;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

struct Aggregated {
  std::vector<double> times;
  std::vector<double> at_risk;
  std::vector<std::array<double, 3>> counts;  // indexed by Cause
};

inline Aggregated aggregate(std::span<const Observation> obs) {
  if (obs.empty()) fail(ErrorCode::EmptyInput, "survival estimation needs observations");
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return obs[a].t < obs[b].t; });
  Aggregated agg;
  double total = 0.0;
  for (const auto& o : obs) {
    if (!(o.t > 0.0) || !std::isfinite(o.t)) fail(ErrorCode::EmptyInput, "observation times must be positive and finite");
    if (!(o.weight >= 0.0) || !std::isfinite(o.weight)) fail(ErrorCode::EmptyInput, "observation weights must be finite and non-negative");
    total += o.weight;
  }
  for (std::size_t idx : order) {
    const auto& o = obs[idx];
    if (agg.times.empty() || agg.times.back() != o.t) {
      agg.times.push_back(o.t);
      agg.counts.push_back({0.0, 0.0, 0.0});
    }
    agg.counts.back()[static_cast<std::size_t>(o.cause)] += o.weight;
  }
  agg.at_risk.resize(agg.times.size());
  double n = total;
  for (std::size_t k = 0; k < agg.times.size(); ++k) {
    agg.at_risk[k] = n;
    const auto& c = agg.counts[k];
    n -= c[0] + c[1] + c[2];
    if (n < 1e-12 * total) n = std::max(n, 0.0);
  }
  return agg;
}

}  // namespace detail

struct SurvivalCurve {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> at_risk;
  std::vector<double> deaths;
  std::vector<double> censored;

  double value(double t) const { return detail::step_at(times, values, t, 1.0, false); }
  double before(double t) const { return detail::step_at(times, values, t, 1.0, true); }
};

/// Which observations count as deaths, and whether tied censorings leave the
/// risk set before the deaths at the same instant.
struct KaplanMeierRoles {
  std::array<bool, 3> is_death{false, true, true};
  bool censor_first_on_ties = false;
};

inline SurvivalCurve kaplan_meier(std::span<const Observation> obs, const KaplanMeierRoles& roles = {}) {
  const auto agg = detail::aggregate(obs);
  SurvivalCurve c;
  const std::size_t k_count = agg.times.size();
  c.times = agg.times;
  c.at_risk = agg.at_risk;
  c.values.resize(k_count);
  c.deaths.resize(k_count);
  c.censored.resize(k_count);
  double s = 1.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    double d = 0.0, cens = 0.0;
    for (std::size_t j = 0; j < 3; ++j) (roles.is_death[j] ? d : cens) += agg.counts[k][j];
    c.deaths[k] = d;
    c.censored[k] = cens;
    const double n = roles.censor_first_on_ties ? agg.at_risk[k] - cens : agg.at_risk[k];
    if (d > 0.0 && n > 0.0) s *= std::max(0.0, 1.0 - d / n);
    c.values[k] = s;
  }
  return c;
}

/// Executions are the only deaths; cancellations and censoring are both
/// treated as censoring.
inline SurvivalCurve post_and_wait_fill(std::span<const Observation> obs) {
  KaplanMeierRoles roles;
  roles.is_death = {false, true, false};
  return kaplan_meier(obs, roles);
}

/// Survival of the censoring variable: cancellations and censoring are the
/// deaths, executions leave the risk set first at tied times.
inline SurvivalCurve censoring_survival(std::span<const Observation> obs) {
  KaplanMeierRoles roles;
  roles.is_death = {true, false, true};
  roles.censor_first_on_ties = true;
  return kaplan_meier(obs, roles);
}

struct GrayDiagnostics {
  std::size_t skipped_small_risk_set = 0;  // n_k <= 1
  std::size_t clamped_negative = 0;
};

struct CIFCurve {
  std::vector<double> times;
  std::vector<double> survival;  // all-cause KM
  std::vector<double> at_risk;
  std::array<std::vector<double>, 2> deaths;  // per cause
  std::vector<double> censored;
  std::array<std::vector<double>, 2> cif;
  std::array<std::vector<double>, 2> variance;
  std::array<GrayDiagnostics, 2> gray;

  static std::size_t index(Cause c) { return c == Cause::Execution ? 0 : 1; }

  double value(Cause c, double t) const { return detail::step_at(times, cif[index(c)], t, 0.0, false); }
  double variance_at(Cause c, double t) const {
    return detail::step_at(times, variance[index(c)], t, 0.0, false);
  }
  double survival_at(double t) const { return detail::step_at(times, survival, t, 1.0, false); }
};

/// Gray's variance of the cause-i CIF at every curve time, computed in one
/// pass with prefix sums. Terms with n_k <= 1 are skipped; where the whole
/// risk set dies (n_k = d_k) only the middle sum contributes.
inline std::vector<double> gray_variance(const CIFCurve& c, Cause cause, GrayDiagnostics* diag = nullptr) {
  const std::size_t i = CIFCurve::index(cause);
  const auto& f = c.cif[i];
  const std::size_t k_count = c.times.size();
  std::vector<double> out(k_count, 0.0);
  double a = 0.0, af = 0.0, af2 = 0.0;  // sums of a_k, a_k F_k, a_k F_k^2
  double b = 0.0;
  double g = 0.0, gf = 0.0;  // sums of c_k, c_k F_k
  GrayDiagnostics local;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double n = c.at_risk[k];
    const double di = c.deaths[i][k];
    const double d = c.deaths[0][k] + c.deaths[1][k];
    if (d > 0.0) {
      if (n <= 1.0) {
        ++local.skipped_small_risk_set;
      } else {
        const double s_prev = k == 0 ? 1.0 : c.survival[k - 1];
        const double m = (n - di) / n;
        b += s_prev * s_prev * di * m / ((n - 1.0) * n);
        if (n - d > 0.0) {
          const double ak = d / ((n - 1.0) * (n - d));
          const double ck = s_prev * di * m / ((n - d) * (n - 1.0));
          a += ak;
          af += ak * f[k];
          af2 += ak * f[k] * f[k];
          g += ck;
          gf += ck * f[k];
        }
      }
    }
    const double fj = f[k];
    double v = (fj * fj * a - 2.0 * fj * af + af2) + b - 2.0 * (fj * g - gf);
    if (v < 0.0) {
      ++local.clamped_negative;
      v = 0.0;
    }
    out[k] = v;
  }
  if (diag) *diag = local;
  return out;
}

inline CIFCurve aalen_johansen(std::span<const Observation> obs) {
  const auto agg = detail::aggregate(obs);
  CIFCurve c;
  const std::size_t k_count = agg.times.size();
  c.times = agg.times;
  c.at_risk = agg.at_risk;
  c.survival.resize(k_count);
  c.censored.resize(k_count);
  for (std::size_t i = 0; i < 2; ++i) {
    c.deaths[i].resize(k_count);
    c.cif[i].resize(k_count);
  }
  double s = 1.0;
  std::array<double, 2> f{0.0, 0.0};
  for (std::size_t k = 0; k < k_count; ++k) {
    const double n = agg.at_risk[k];
    const double d1 = agg.counts[k][1], d2 = agg.counts[k][2];
    c.deaths[0][k] = d1;
    c.deaths[1][k] = d2;
    c.censored[k] = agg.counts[k][0];
    if (n > 0.0) {
      f[0] += s * d1 / n;
      f[1] += s * d2 / n;
      s *= std::max(0.0, 1.0 - (d1 + d2) / n);
    }
    c.survival[k] = s;
    c.cif[0][k] = f[0];
    c.cif[1][k] = f[1];
  }
  for (std::size_t i = 0; i < 2; ++i) {
    c.variance[i] = gray_variance(c, i == 0 ? Cause::Execution : Cause::Cancellation, &c.gray[i]);
  }
  return c;
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -INFINITY;
    if (p == 1.0) return INFINITY;
    return std::nan("");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Log-log confidence interval at level alpha (0.05 for a 95% band).
/// Degenerate values (F in {0,1} or zero variance) give a point interval.
inline Interval log_log_ci(double f, double var, double alpha = 0.05) {
  if (!(f > 0.0 && f < 1.0) || !(var > 0.0)) return {f, f};
  const double q = std::abs(normal_quantile(alpha / 2.0));
  const double c = q * std::sqrt(var) / (f * std::log(f));
  double lo = std::pow(f, std::exp(-c));
  double hi = std::pow(f, std::exp(c));
  if (lo > hi) std::swap(lo, hi);
  return {std::clamp(lo, 0.0, 1.0), std::clamp(hi, 0.0, 1.0)};
}

enum class EstimationMode : std::uint8_t { CompetingRisk, PostAndWait };

/// In post-and-wait mode cancellations are relabelled as censoring, so the
/// execution CIF equals one minus the execution-only KM.
inline std::vector<Observation> apply_mode(std::vector<Observation> obs, EstimationMode mode) {
  if (mode == EstimationMode::PostAndWait) {
    for (auto& o : obs) {
      if (o.cause == Cause::Cancellation) o.cause = Cause::Censored;
    }
  }
  return obs;
}

/// Edges e_0 < ... < e_m define buckets [e_j, e_{j+1}); the last bucket also
/// includes its upper edge. Values outside the edges fall in no bucket.
struct BucketAxis {
  std::string feature;
  std::vector<double> edges;

  std::optional<std::size_t> locate(double x) const {
    if (edges.size() < 2 || !(x >= edges.front()) || !(x <= edges.back())) return std::nullopt;
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t j = static_cast<std::size_t>(it - edges.begin());
    if (j == edges.size()) j = edges.size() - 1;
    return j - 1;
  }
  std::size_t count() const { return edges.size() < 2 ? 0 : edges.size() - 1; }
};

struct Bucketing {
  std::vector<BucketAxis> axes;  // one or two
  std::size_t min_count = 200;
};

struct BucketKey {
  std::vector<std::size_t> index;
  auto operator<=>(const BucketKey&) const = default;
};

struct BucketCurve {
  BucketKey key;
  std::vector<std::pair<double, double>> ranges;  // per axis [lo, hi]
  std::size_t count = 0;
  CIFCurve curve;
};

struct ConditionalCurves {
  std::vector<BucketCurve> buckets;
  std::vector<std::pair<BucketKey, std::size_t>> omitted;  // key, population
  std::size_t unbucketed = 0;
};

inline ConditionalCurves conditional_curves(std::span<const OrderLifecycle> records, const Bucketing& spec,
                                            EstimationMode mode = EstimationMode::CompetingRisk) {
  if (spec.axes.empty() || spec.axes.size() > 2) fail(ErrorCode::ConfigInvalid, "bucketing needs one or two axes");
  for (const auto& ax : spec.axes) {
    if (ax.count() == 0) fail(ErrorCode::ConfigInvalid, "axis '" + ax.feature + "' needs at least two edges");
    if (!std::is_sorted(ax.edges.begin(), ax.edges.end()) ||
        std::adjacent_find(ax.edges.begin(), ax.edges.end()) != ax.edges.end()) {
      fail(ErrorCode::ConfigInvalid, "axis '" + ax.feature + "' edges must be strictly increasing");
    }
  }
  std::map<BucketKey, std::vector<Observation>> groups;
  ConditionalCurves out;
  for (const auto& rec : records) {
    BucketKey key;
    bool ok = true;
    for (const auto& ax : spec.axes) {
      const auto v = feature_value(rec.features, ax.feature);
      const auto j = v ? ax.locate(*v) : std::nullopt;
      if (!j) {
        ok = false;
        break;
      }
      key.index.push_back(*j);
    }
    if (!ok) {
      ++out.unbucketed;
      continue;
    }
    groups[key].push_back(to_observation(rec));
  }
  for (auto& [key, obs] : groups) {
    if (obs.size() < spec.min_count) {
      out.omitted.emplace_back(key, obs.size());
      continue;
    }
    BucketCurve bc;
    bc.key = key;
    bc.count = obs.size();
    for (std::size_t a = 0; a < spec.axes.size(); ++a) {
      const auto& e = spec.axes[a].edges;
      bc.ranges.emplace_back(e[key.index[a]], e[key.index[a] + 1]);
    }
    bc.curve = aalen_johansen(apply_mode(std::move(obs), mode));
    out.buckets.push_back(std::move(bc));
  }
  return out;
}

/// Long-format CSV of one cause's CIF with variance and log-log band.
inline std::string format_cif_csv(const CIFCurve& c, Cause cause, double alpha = 0.05) {
  const std::size_t i = CIFCurve::index(cause);
  std::string out = "time,estimate,variance,ci_lo,ci_hi\n";
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const Interval ci = log_log_ci(c.cif[i][k], c.variance[i][k], alpha);
    out += text::format_double(c.times[k]) + ',' + text::format_double(c.cif[i][k]) + ',' +
           text::format_double(c.variance[i][k]) + ',' + text::format_double(ci.lo) + ',' +
           text::format_double(ci.hi) + '\n';
  }
  return out;
}

/// Bucket grid evaluated at a single horizon, one row per bucket.
inline std::string format_bucket_grid_csv(const ConditionalCurves& cc, const Bucketing& spec, Cause cause,
                                          double horizon, double alpha = 0.05) {
  std::string out;
  for (const auto& ax : spec.axes) out += ax.feature + "_lo," + ax.feature + "_hi,";
  out += "count,estimate,variance,ci_lo,ci_hi\n";
  for (const auto& b : cc.buckets) {
    for (const auto& [lo, hi] : b.ranges) out += text::format_double(lo) + ',' + text::format_double(hi) + ',';
    const double f = b.curve.value(cause, horizon);
    const double v = b.curve.variance_at(cause, horizon);
    const Interval ci = log_log_ci(f, v, alpha);
    out += std::to_string(b.count) + ',' + text::format_double(f) + ',' + text::format_double(v) + ',' +
           text::format_double(ci.lo) + ',' + text::format_double(ci.hi) + '\n';
  }
  return out;
}

}  // namespace lobfill
