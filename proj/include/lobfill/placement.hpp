#pragma once

// Limit-versus-market routing: expected saved cost of posting at distance
// delta, its break-even fill probability, the exponential toy model and the
// latency-adjusted variant. Prices are quote units, distances are ticks and
// clean-up costs V are ticks converted through the tick size.

#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lobfill/cleanup_model.hpp"
#include "lobfill/features.hpp"
#include "lobfill/survival.hpp"

namespace lobfill {

struct FeePolicy {
  int level = 0;
  double taker = 0.0;  // epsilon minus
  double maker = 0.0;  // epsilon plus

  double f_minus() const { return 1.0 + taker; }
  double f_plus() const { return 1.0 + maker; }
};

inline constexpr std::array<FeePolicy, 9> kFeeLevels = {{
    {1, 0.0060, 0.0040},
    {2, 0.0040, 0.0025},
    {3, 0.0025, 0.0015},
    {4, 0.0020, 0.0010},
    {5, 0.0018, 0.0008},
    {6, 0.0016, 0.0006},
    {7, 0.0012, 0.0003},
    {8, 0.0008, 0.0000},
    {9, 0.0005, 0.0000},
}};

inline FeePolicy fee_level(int level) {
  if (level < 1 || level > 9) fail(ErrorCode::ConfigInvalid, "fee level must be in 1..9");
  return kFeeLevels[static_cast<std::size_t>(level - 1)];
}

inline FeePolicy zero_fees() { return {0, 0.0, 0.0}; }

struct MarketSnapshot {
  double best_bid = 0.0;
  double best_ask = 0.0;
  double tick = 0.01;
  FeatureVector z;

  double mid() const { return 0.5 * (best_bid + best_ask); }
  Ticks spread_ticks() const { return static_cast<Ticks>(std::llround((best_ask - best_bid) / tick)); }

  static MarketSnapshot from_ticks(Ticks bid, Ticks ask, double tick, FeatureVector z = {}) {
    return {static_cast<double>(bid) * tick, static_cast<double>(ask) * tick, tick, z};
  }
};

inline void check_admissible(const MarketSnapshot& s, double delta) {
  if (!(delta > -static_cast<double>(s.spread_ticks()))) {
    fail(ErrorCode::InadmissibleDistance, "delta must exceed minus the spread");
  }
}

/// Cost of crossing the spread now, relative to the mid.
inline double immediate_cost(const MarketSnapshot& s, const FeePolicy& fees) {
  return fees.f_minus() * s.best_ask - s.mid();
}

/// Gain of a filled limit order over the market order, per unit.
inline double limit_gain(const MarketSnapshot& s, double delta, const FeePolicy& fees) {
  return fees.f_minus() * s.best_ask - fees.f_plus() * (s.best_bid - s.tick * delta);
}

inline double cleanup_penalty(const MarketSnapshot& s, const FeePolicy& fees, double v_ticks) {
  return fees.f_minus() * s.tick * v_ticks;
}

inline double saved_cost(const MarketSnapshot& s, double delta, const FeePolicy& fees, double fill, double v_ticks) {
  check_admissible(s, delta);
  if (!(fill >= 0.0 && fill <= 1.0)) fail(ErrorCode::ConfigInvalid, "fill probability must be in [0,1]");
  return fill * limit_gain(s, delta, fees) - (1.0 - fill) * cleanup_penalty(s, fees, v_ticks);
}

/// Fill probability at which posting and crossing cost the same.
inline double break_even_fill(const MarketSnapshot& s, double delta, const FeePolicy& fees, double v_ticks) {
  check_admissible(s, delta);
  const double pen = cleanup_penalty(s, fees, v_ticks);
  const double denom = limit_gain(s, delta, fees) + pen;
  if (!(denom > 0.0)) fail(ErrorCode::NonpositiveDenominator, "posting never pays at this distance");
  return pen / denom;
}

// ---------------------------------------------------------------------------
// Exponential toy model, unit fee factors, x = distance to the best ask in ticks.

inline double toy_fill(double a, double k, double x) { return a * std::exp(-k * x); }

inline double toy_saved_cost(double a, double k, double v, double x) {
  const double f = toy_fill(a, k, x);
  return f * x - (1.0 - f) * v;
}

struct ToyOptimum {
  double x = 0.0;
  double saved = 0.0;
  bool interior = true;  // k(1+V) <= 1; otherwise the boundary x = 1 is reported
};

inline ToyOptimum toy_optimum(double a, double k, double v) {
  if (!(a > 0.0 && a <= 1.0) || !(k > 0.0)) fail(ErrorCode::ConfigInvalid, "toy model needs 0 < A <= 1 and k > 0");
  if (k * (1.0 + v) <= 1.0) return {1.0 / k - v, (a / k) * std::exp(k * v - 1.0) - v, true};
  return {1.0, toy_saved_cost(a, k, v, 1.0), false};
}

/// Grid maximiser of the toy saved cost on [lo, hi]; ties go to larger x.
inline double toy_grid_argmax(double a, double k, double v, double lo, double hi, double step) {
  double best_x = lo, best = -std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    const double s = toy_saved_cost(a, k, v, x);
    if (s >= best) {
      best = s;
      best_x = x;
    }
  }
  return best_x;
}

struct ToyFit {
  double a = 0.0;
  double k = 0.0;
  double v = 0.0;  // constant clean-up cost, ticks
  double k_standard_error = 0.0;
  bool flat = false;  // k within two standard errors of zero
  std::vector<std::pair<double, double>> points;  // (distance to ask, fill probability)
};

/// Least squares of log F against the distance to the best ask, where F is
/// the post-and-wait fill probability at the horizon per integer distance.
inline ToyFit fit_toy_model(std::span<const OrderLifecycle> records, double horizon, std::size_t min_count = 30) {
  std::map<long long, std::vector<Observation>> groups;
  for (const auto& r : records) {
    const auto x = std::llround(r.features.spread + r.features.delta);
    groups[x].push_back(to_observation(r));
  }
  ToyFit fit;
  for (const auto& [x, obs] : groups) {
    if (obs.size() < min_count) continue;
    const double f = 1.0 - post_and_wait_fill(obs).value(horizon);
    if (f > 0.0) fit.points.emplace_back(static_cast<double>(x), f);
  }
  if (fit.points.size() < 3) fail(ErrorCode::InsufficientBuckets, "toy fit needs at least three distance buckets");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(fit.points.size());
  for (const auto& [x, f] : fit.points) {
    const double y = std::log(f);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  fit.a = std::exp(intercept);
  fit.k = -slope;
  double sse = 0.0;
  for (const auto& [x, f] : fit.points) {
    const double r = std::log(f) - intercept - slope * x;
    sse += r * r;
  }
  const double sxx_c = sxx - sx * sx / n;
  fit.k_standard_error = n > 2.0 && sxx_c > 0.0 ? std::sqrt(sse / (n - 2.0) / sxx_c) : 0.0;
  fit.flat = std::abs(fit.k) <= 2.0 * fit.k_standard_error;
  const auto samples = collect_cleanup_samples(records, horizon);
  fit.v = samples.empty() ? 0.0 : constant_cleanup(samples);
  return fit;
}

// ---------------------------------------------------------------------------
// Latency

/// Distribution of the best ask move over the latency window, in ticks.
class AskMoveDistribution {
 public:
  static AskMoveDistribution empirical(std::vector<double> samples) {
    if (samples.empty()) fail(ErrorCode::EmptyInput, "empirical distribution needs samples");
    std::sort(samples.begin(), samples.end());
    AskMoveDistribution d;
    d.kind_ = Kind::Empirical;
    d.values_ = std::move(samples);
    return d;
  }

  /// Point masses; any missing probability sits at zero.
  static AskMoveDistribution point_masses(std::vector<double> values, std::vector<double> probs) {
    double total = 0.0;
    for (double p : probs) {
      if (p < 0.0) fail(ErrorCode::ConfigInvalid, "negative probability");
      total += p;
    }
    if (values.size() != probs.size() || total > 1.0 + 1e-12) fail(ErrorCode::ConfigInvalid, "invalid point masses");
    AskMoveDistribution d;
    d.kind_ = Kind::Points;
    d.values_ = std::move(values);
    d.probs_ = std::move(probs);
    d.values_.push_back(0.0);
    d.probs_.push_back(std::max(0.0, 1.0 - total));
    return d;
  }

  static AskMoveDistribution gaussian(double mean, double sd) {
    if (!(sd > 0.0)) fail(ErrorCode::ConfigInvalid, "gaussian needs a positive standard deviation");
    AskMoveDistribution d;
    d.kind_ = Kind::Gaussian;
    d.mu_ = mean;
    d.sd_ = sd;
    return d;
  }

  /// P(move <= x).
  double cdf(double x) const {
    switch (kind_) {
      case Kind::Empirical:
        return static_cast<double>(std::upper_bound(values_.begin(), values_.end(), x) - values_.begin()) /
               static_cast<double>(values_.size());
      case Kind::Points: {
        double p = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) p += values_[i] <= x ? probs_[i] : 0.0;
        return p;
      }
      case Kind::Gaussian: return 0.5 * std::erfc(-(x - mu_) / (sd_ * std::sqrt(2.0)));
    }
    return 0.0;
  }

  /// E[move | move <= x]; only meaningful when cdf(x) > 0.
  double mean_below(double x) const {
    switch (kind_) {
      case Kind::Empirical: {
        double s = 0.0;
        std::size_t n = 0;
        for (double v : values_) {
          if (v > x) break;
          s += v;
          ++n;
        }
        return n == 0 ? x : s / static_cast<double>(n);
      }
      case Kind::Points: {
        double s = 0.0, p = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
          if (values_[i] <= x) {
            s += values_[i] * probs_[i];
            p += probs_[i];
          }
        }
        return p > 0.0 ? s / p : x;
      }
      case Kind::Gaussian: {
        const double a = (x - mu_) / sd_;
        const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
        const double cdf_a = 0.5 * std::erfc(-a / std::sqrt(2.0));
        return cdf_a > 0.0 ? mu_ - sd_ * phi / cdf_a : x;
      }
    }
    return x;
  }

 private:
  enum class Kind { Empirical, Points, Gaussian };
  Kind kind_ = Kind::Empirical;
  std::vector<double> values_;
  std::vector<double> probs_;
  double mu_ = 0.0;
  double sd_ = 1.0;
};

inline constexpr double kMaxLatencyRatio = 1e-2;

/// Saved cost when the order reaches the book `latency` seconds late: with
/// probability phi the ask has already dropped through the posted price and
/// the order executes immediately at that improved ask.
inline double latency_saved_cost(const MarketSnapshot& s, double delta, const FeePolicy& fees, double fill,
                                 double v_ticks, const AskMoveDistribution& moves, double latency, double horizon) {
  if (!(latency >= 0.0) || !(horizon > 0.0) || !(latency / horizon < kMaxLatencyRatio)) {
    fail(ErrorCode::LatencyTooLarge, "latency must be below 1% of the horizon");
  }
  const double base = saved_cost(s, delta, fees, fill, v_ticks);
  const double threshold = -(static_cast<double>(s.spread_ticks()) + delta);
  const double phi = moves.cdf(threshold);
  if (phi == 0.0) return base;
  return (1.0 - phi) * base - phi * fees.f_minus() * moves.mean_below(threshold) * s.tick;
}

// ---------------------------------------------------------------------------
// Distance optimisation

using FeaturePredictor = std::function<double(const FeatureVector&)>;

/// Covariates of a hypothetical order at distance delta: delta-dependent
/// fields are recomputed, book-level fields are held.
inline FeatureVector features_at_distance(const FeatureVector& z, Ticks spread, Ticks delta) {
  FeatureVector f = z;
  f.delta = static_cast<double>(delta);
  f.spread = static_cast<double>(spread);
  f.spread_after = static_cast<double>(delta < 0 ? spread + delta : spread);
  f.omega.reset();
  if (delta < 0 && spread > 1) f.omega = aggressiveness_index(delta, spread);
  if (delta < 0) f.priority_volume = 0.0;
  return f;
}

struct DistancePoint {
  Ticks delta = 0;
  double fill = 0.0;
  double cleanup = 0.0;
  double saved = 0.0;
};

enum class Action : std::uint8_t { Market, Limit };

struct PlacementDecision {
  Action action = Action::Market;
  Ticks delta = 0;
  double saved = 0.0;
  std::optional<double> break_even;
  std::vector<DistancePoint> curve;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["action"] = action == Action::Limit ? "limit" : "market";
    j["delta"] = delta;
    j["saved_cost"] = saved;
    j["break_even_fill"] = break_even ? nlohmann::json(*break_even) : nlohmann::json(nullptr);
    return j;
  }
};

inline std::string format_distance_curve_csv(const PlacementDecision& d) {
  std::string out = "delta,fill,cleanup,saved_cost\n";
  for (const auto& p : d.curve) {
    out += std::to_string(p.delta) + ',' + text::format_double(p.fill) + ',' + text::format_double(p.cleanup) + ',' +
           text::format_double(p.saved) + '\n';
  }
  return out;
}

/// Exhaustive search over integer distances in [delta_min, delta_max]
/// (default lower bound: one tick inside the opposite best). Ties go to the
/// larger distance; Market is chosen when no distance saves anything.
inline PlacementDecision optimal_distance(const MarketSnapshot& s, const FeePolicy& fees, const FeaturePredictor& fill,
                                          const FeaturePredictor& cleanup, Ticks delta_max,
                                          std::optional<Ticks> delta_min = std::nullopt) {
  if (!fill || !cleanup) fail(ErrorCode::ModelUnavailable, "fill and clean-up models are required");
  const Ticks spread = s.spread_ticks();
  const Ticks lo = delta_min.value_or(-spread + 1);
  if (lo <= -spread) fail(ErrorCode::InadmissibleDistance, "distance range leaves the admissible set");
  if (delta_max < lo) fail(ErrorCode::ConfigInvalid, "empty distance range");
  PlacementDecision d;
  double best = -std::numeric_limits<double>::infinity();
  for (Ticks delta = lo; delta <= delta_max; ++delta) {
    const FeatureVector f = features_at_distance(s.z, spread, delta);
    DistancePoint p;
    p.delta = delta;
    p.fill = std::clamp(fill(f), 0.0, 1.0);
    p.cleanup = cleanup(f);
    p.saved = saved_cost(s, static_cast<double>(delta), fees, p.fill, p.cleanup);
    d.curve.push_back(p);
    if (p.saved >= best) {
      best = p.saved;
      d.delta = delta;
    }
  }
  d.saved = best;
  d.action = best > 0.0 ? Action::Limit : Action::Market;
  const auto& chosen = d.curve[static_cast<std::size_t>(d.delta - lo)];
  try {
    d.break_even = break_even_fill(s, static_cast<double>(d.delta), fees, chosen.cleanup);
  } catch (const Error&) {
    d.break_even.reset();
  }
  return d;
}

struct DecisionCell {
  int level = 0;
  double fill = 0.0;
  double saved = 0.0;
  Action action = Action::Market;
};

struct DecisionMap {
  std::vector<DecisionCell> cells;
  std::vector<std::pair<int, double>> break_even;  // level, F*
};

inline DecisionMap decision_map(const MarketSnapshot& s, double delta, double v_ticks, std::span<const int> levels,
                                std::span<const double> fills) {
  DecisionMap m;
  for (int level : levels) {
    const FeePolicy fees = fee_level(level);
    m.break_even.emplace_back(level, break_even_fill(s, delta, fees, v_ticks));
    for (double f : fills) {
      const double sc = saved_cost(s, delta, fees, f, v_ticks);
      m.cells.push_back({level, f, sc, sc > 0.0 ? Action::Limit : Action::Market});
    }
  }
  return m;
}

inline std::string format_decision_map_csv(const DecisionMap& m) {
  std::string out = "level,fill,saved_cost,action\n";
  for (const auto& c : m.cells) {
    out += std::to_string(c.level) + ',' + text::format_double(c.fill) + ',' + text::format_double(c.saved) + ',' +
           (c.action == Action::Limit ? "limit" : "market") + '\n';
  }
  return out;
}

}  // namespace lobfill
