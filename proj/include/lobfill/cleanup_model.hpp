#pragma once

// Clean-up cost: the opposite best price move over the horizon for orders
// still resting at T, as bucket means and as a network regressor.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lobfill/fill_model.hpp"

namespace lobfill {

inline double ticks_to_quote(double ticks, double tick_size) { return ticks * tick_size; }

inline double ticks_to_bps(double ticks, double tick_size, double reference_price) {
  if (!(reference_price > 0.0)) fail(ErrorCode::ConfigInvalid, "reference price must be positive");
  return ticks * tick_size / reference_price * 1e4;
}

struct CleanupSample {
  std::size_t record = 0;  // index into the source records
  FeatureVector features;
  double target = 0.0;  // ticks
};

struct CleanupExclusions {
  std::size_t filled_before_horizon = 0;
  std::size_t cancelled_before_horizon = 0;
  std::size_t censored_before_horizon = 0;
  std::size_t missing_move = 0;

  nlohmann::json to_json() const {
    return {{"filled_before_horizon", filled_before_horizon},
            {"cancelled_before_horizon", cancelled_before_horizon},
            {"censored_before_horizon", censored_before_horizon},
            {"missing_move", missing_move}};
  }
};

/// One sample per order that outlived the horizon with a measured move.
inline std::vector<CleanupSample> collect_cleanup_samples(std::span<const OrderLifecycle> records, double horizon,
                                                          CleanupExclusions* excl = nullptr) {
  std::vector<CleanupSample> out;
  CleanupExclusions e;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.outcome_time <= horizon) {
      switch (r.outcome) {
        case Outcome::Filled: ++e.filled_before_horizon; break;
        case Outcome::Cancelled: ++e.cancelled_before_horizon; break;
        case Outcome::Censored: ++e.censored_before_horizon; break;
      }
      continue;
    }
    if (!r.horizon_move) {
      ++e.missing_move;
      continue;
    }
    out.push_back({i, r.features, *r.horizon_move});
  }
  if (excl) *excl = e;
  return out;
}

struct MeanEstimate {
  std::size_t count = 0;
  double mean = 0.0;
  double standard_error = 0.0;
};

inline MeanEstimate mean_with_se(std::span<const double> v) {
  MeanEstimate m;
  m.count = v.size();
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.standard_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return m;
}

/// Unconditional mean move: the constant clean-up cost baseline.
inline double constant_cleanup(std::span<const CleanupSample> samples) {
  if (samples.empty()) fail(ErrorCode::EmptyInput, "no clean-up samples");
  double s = 0.0;
  for (const auto& x : samples) s += x.target;
  return s / static_cast<double>(samples.size());
}

struct CleanupBucket {
  double lo = 0.0;
  double hi = 0.0;
  MeanEstimate estimate;
};

struct CleanupCurve {
  std::string feature;
  std::vector<CleanupBucket> buckets;
  std::vector<std::pair<std::size_t, std::size_t>> omitted;  // bucket index, count
  std::size_t unbucketed = 0;
};

/// Mean target per bucket of `feature`. Buckets follow BucketAxis rules.
inline CleanupCurve bucket_estimate(std::span<const CleanupSample> samples, const BucketAxis& axis,
                                    std::size_t min_count = 200) {
  if (axis.count() == 0) fail(ErrorCode::ConfigInvalid, "bucket axis needs at least two edges");
  std::vector<std::vector<double>> groups(axis.count());
  CleanupCurve c;
  c.feature = axis.feature;
  for (const auto& s : samples) {
    const auto v = feature_value(s.features, axis.feature);
    const auto j = v ? axis.locate(*v) : std::nullopt;
    if (!j) {
      ++c.unbucketed;
      continue;
    }
    groups[*j].push_back(s.target);
  }
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (groups[j].size() < min_count || groups[j].empty()) {
      c.omitted.emplace_back(j, groups[j].size());
      continue;
    }
    c.buckets.push_back({axis.edges[j], axis.edges[j + 1], mean_with_se(groups[j])});
  }
  return c;
}

inline std::string format_cleanup_curve_csv(const CleanupCurve& c) {
  std::string out = c.feature + "_lo," + c.feature + "_hi,count,mean,standard_error\n";
  for (const auto& b : c.buckets) {
    out += text::format_double(b.lo) + ',' + text::format_double(b.hi) + ',' + std::to_string(b.estimate.count) + ',' +
           text::format_double(b.estimate.mean) + ',' + text::format_double(b.estimate.standard_error) + '\n';
  }
  return out;
}

/// Order-statistic quantile with linear interpolation.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(ErrorCode::EmptyInput, "quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

/// Clamps values to the [lo_q, hi_q] empirical quantiles; returns how many
/// values moved.
inline std::size_t winsorize(std::vector<double>& v, double lo_q, double hi_q) {
  if (v.empty()) return 0;
  const double lo = quantile(v, lo_q), hi = quantile(v, hi_q);
  std::size_t n = 0;
  for (double& x : v) {
    const double c = std::clamp(x, lo, hi);
    n += c != x;
    x = c;
  }
  return n;
}

struct CleanupTrainConfig {
  TrainConfig train;
  RegimeMode regime = RegimeMode::Pooled;
  double winsor_low = 0.001;
  double winsor_high = 0.999;
  bool exclude_partial_window = true;
  double horizon = 1.0;
};

struct CleanupTrainReport {
  std::vector<TrainReport> nets;
  std::size_t rows = 0;
  std::size_t excluded_partial_window = 0;
  std::size_t winsorized = 0;
  double constant = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rows"] = rows;
    j["excluded_partial_window"] = excluded_partial_window;
    j["winsorized"] = winsorized;
    j["constant"] = constant;
    j["networks"] = nlohmann::json::array();
    for (const auto& r : nets) {
      j["networks"].push_back({{"train_loss", r.train_loss},
                               {"validation_loss", r.validation_loss},
                               {"best_epoch", r.best_epoch},
                               {"epochs_run", r.epochs_run},
                               {"early_stopped", r.early_stopped}});
    }
    return j;
  }
};

inline RegimeNetwork train_cleanup_model(std::span<const CleanupSample> samples, const CleanupTrainConfig& cfg,
                                         CleanupTrainReport* report = nullptr) {
  CleanupTrainReport rep;
  std::vector<const CleanupSample*> kept;
  for (const auto& s : samples) {
    if (cfg.exclude_partial_window && s.features.partial_window) {
      ++rep.excluded_partial_window;
      continue;
    }
    kept.push_back(&s);
  }
  if (kept.empty()) fail(ErrorCode::EmptyInput, "no clean-up samples to train on");
  std::vector<double> targets;
  for (const auto* s : kept) targets.push_back(s->target);
  rep.winsorized = winsorize(targets, cfg.winsor_low, cfg.winsor_high);
  rep.rows = kept.size();

  RegimeNetwork model;
  model.kind = "cleanup";
  model.mode = cfg.regime;
  model.horizon = cfg.horizon;
  model.features = model_feature_names();
  double total = 0.0;
  for (double t : targets) total += t;
  model.baseline = total / static_cast<double>(targets.size());
  rep.constant = model.baseline;

  auto rows_for = [&](std::optional<PlacementRegime> r) {
    Dataset d;
    d.dim = kModelFeatureNames.size();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (r && regime_of(kept[i]->features.delta) != *r) continue;
      d.push(model_inputs(kept[i]->features), targets[i], 1.0);
    }
    return d;
  };
  auto fit_one = [&](const Dataset& d) {
    TrainReport tr;
    model.nets.push_back(train_mlp(d, OutputActivation::Identity, cfg.train, &tr));
    rep.nets.push_back(tr);
  };
  if (cfg.regime == RegimeMode::Pooled) {
    fit_one(rows_for(std::nullopt));
  } else {
    for (auto r : {PlacementRegime::Passive, PlacementRegime::AtBest, PlacementRegime::Aggressive}) fit_one(rows_for(r));
  }
  if (report) *report = rep;
  return model;
}

}  // namespace lobfill
