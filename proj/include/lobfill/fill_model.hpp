#pragma once

// Fixed-horizon fill probability: censoring-survival weights, training-set
// assembly and a regime-aware network wrapper shared with the clean-up model.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lobfill/lifecycle.hpp"
#include "lobfill/mlp.hpp"
#include "lobfill/survival.hpp"

namespace lobfill {

enum class PlacementRegime : std::uint8_t { Passive = 0, AtBest = 1, Aggressive = 2 };

inline PlacementRegime regime_of(double delta) {
  if (delta > 0.0) return PlacementRegime::Passive;
  if (delta == 0.0) return PlacementRegime::AtBest;
  return PlacementRegime::Aggressive;
}

// ---------------------------------------------------------------------------
// Censoring survival

struct CensoringStrata {
  bool enabled = true;
  std::vector<double> delta_edges;  // passive buckets; empty means deciles of the data
  std::vector<double> omega_edges = {1.0 / 3.0, 2.0 / 3.0};
};

/// Kaplan-Meier curves of the censoring time, one per placement stratum,
/// plus a pooled curve used for strata absent from the fitting data.
class CensoringModel {
 public:
  static CensoringModel fit(std::span<const OrderLifecycle> records, CensoringStrata cfg = {}) {
    if (records.empty()) fail(ErrorCode::EmptyInput, "censoring survival needs records");
    CensoringModel m;
    if (cfg.enabled && cfg.delta_edges.empty()) cfg.delta_edges = passive_deciles(records);
    m.cfg_ = cfg;
    const auto all = to_observations(records);
    m.pooled_ = censoring_survival(all);
    if (cfg.enabled) {
      std::map<std::pair<int, int>, std::vector<Observation>> groups;
      for (std::size_t i = 0; i < records.size(); ++i) groups[m.stratum(records[i].features)].push_back(all[i]);
      for (auto& [key, obs] : groups) m.strata_.emplace(key, censoring_survival(obs));
    }
    return m;
  }

  /// Ĝ(t) for an order with the given insertion features.
  double survival_at(const FeatureVector& f, double t) const { return curve(f).value(t); }
  /// Left limit Ĝ(t-).
  double survival_before(const FeatureVector& f, double t) const { return curve(f).before(t); }

  const SurvivalCurve& curve(const FeatureVector& f) const {
    if (!cfg_.enabled) return pooled_;
    auto it = strata_.find(stratum(f));
    return it == strata_.end() ? pooled_ : it->second;
  }

  std::pair<int, int> stratum(const FeatureVector& f) const {
    const auto r = regime_of(f.delta);
    const auto bucket = [](const std::vector<double>& edges, double x) {
      return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
    };
    switch (r) {
      case PlacementRegime::Passive: return {0, bucket(cfg_.delta_edges, f.delta)};
      case PlacementRegime::AtBest: return {1, 0};
      case PlacementRegime::Aggressive: return {2, bucket(cfg_.omega_edges, f.omega.value_or(0.0))};
    }
    return {0, 0};
  }

  const SurvivalCurve& pooled() const { return pooled_; }
  std::size_t stratum_count() const { return strata_.size(); }
  const CensoringStrata& config() const { return cfg_; }

 private:
  static std::vector<double> passive_deciles(std::span<const OrderLifecycle> records) {
    std::vector<double> d;
    for (const auto& r : records) {
      if (r.features.delta > 0.0) d.push_back(r.features.delta);
    }
    std::vector<double> edges;
    if (d.empty()) return edges;
    std::sort(d.begin(), d.end());
    for (int q = 1; q < 10; ++q) {
      const std::size_t k = std::min(d.size() - 1, static_cast<std::size_t>(q * d.size() / 10));
      if (edges.empty() || d[k] > edges.back()) edges.push_back(d[k]);
    }
    return edges;
  }

  CensoringStrata cfg_;
  SurvivalCurve pooled_;
  std::map<std::pair<int, int>, SurvivalCurve> strata_;
};

// ---------------------------------------------------------------------------
// IPCW labels and weights

struct IpcwConfig {
  double horizon = 1.0;
  double survival_floor = 0.01;
};

struct IpcwResult {
  std::vector<double> labels;   // 1 when filled within the horizon
  std::vector<double> weights;  // 0 when censored before min(E, T)
  std::size_t floored = 0;
  std::size_t zero_weight = 0;
};

inline bool filled_within(const OrderLifecycle& r, double horizon) {
  return r.outcome == Outcome::Filled && r.outcome_time <= horizon;
}

/// Executions by T get 1/Ĝ(E-), orders alive past T get 1/Ĝ(T), orders
/// cancelled or censored before T get 0. Ĝ is floored to bound the weights.
inline IpcwResult ipcw_weights(std::span<const OrderLifecycle> records, const CensoringModel& g,
                               const IpcwConfig& cfg = {}) {
  IpcwResult out;
  out.labels.reserve(records.size());
  out.weights.reserve(records.size());
  for (const auto& r : records) {
    double surv = -1.0;
    if (filled_within(r, cfg.horizon)) {
      surv = g.survival_before(r.features, r.outcome_time);
    } else if (r.outcome_time > cfg.horizon) {
      surv = g.survival_at(r.features, cfg.horizon);
    }
    out.labels.push_back(filled_within(r, cfg.horizon) ? 1.0 : 0.0);
    if (surv < 0.0) {
      out.weights.push_back(0.0);
      ++out.zero_weight;
      continue;
    }
    if (surv < cfg.survival_floor) {
      surv = cfg.survival_floor;
      ++out.floored;
    }
    out.weights.push_back(1.0 / surv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regime-aware network

enum class RegimeMode : std::uint8_t { Pooled, Split };

inline std::string to_string(RegimeMode m) { return m == RegimeMode::Pooled ? "pooled" : "split"; }

inline RegimeMode parse_regime_mode(const std::string& s) {
  if (s == "pooled") return RegimeMode::Pooled;
  if (s == "split") return RegimeMode::Split;
  fail(ErrorCode::ConfigInvalid, "regime mode must be 'pooled' or 'split', got '" + s + "'");
}

/// One pooled network, or three networks for passive, at-best and aggressive
/// placements.
struct RegimeNetwork {
  std::string kind;  // "fill" or "cleanup"
  RegimeMode mode = RegimeMode::Pooled;
  double horizon = 1.0;
  std::vector<std::string> features;
  std::vector<Mlp> nets;
  double baseline = 0.0;  // unconditional mean of the training target
  std::optional<TimeRange> train_range;

  static constexpr const char* kFormat = "lobfill-model";
  static constexpr int kVersion = 1;

  const Mlp& net_for(const FeatureVector& f) const {
    if (nets.empty()) fail(ErrorCode::ModelUnavailable, kind + " model has no network");
    if (mode == RegimeMode::Pooled) return nets[0];
    if (nets.size() != 3) fail(ErrorCode::ModelUnavailable, kind + " split model needs three networks");
    return nets[static_cast<std::size_t>(regime_of(f.delta))];
  }

  double predict(const FeatureVector& f) const {
    const auto x = model_inputs(f);
    return net_for(f).predict(x);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["kind"] = kind;
    j["regime"] = to_string(mode);
    j["horizon"] = horizon;
    j["features"] = features;
    j["baseline"] = baseline;
    if (train_range) j["train_range"] = {train_range->first_ns, train_range->last_ns};
    j["networks"] = nlohmann::json::array();
    for (const auto& n : nets) j["networks"].push_back(n.to_json());
    return j;
  }

  static RegimeNetwork from_json(const nlohmann::json& j) {
    RegimeNetwork m;
    try {
      if (j.at("format").get<std::string>() != kFormat) fail(ErrorCode::ParseError, "not a model file");
      if (j.at("version").get<int>() != kVersion) fail(ErrorCode::ParseError, "unsupported model version");
      m.kind = j.at("kind").get<std::string>();
      m.mode = parse_regime_mode(j.at("regime").get<std::string>());
      m.horizon = j.at("horizon").get<double>();
      m.features = j.at("features").get<std::vector<std::string>>();
      m.baseline = j.value("baseline", 0.0);
      if (j.contains("train_range")) {
        const auto& r = j.at("train_range");
        m.train_range = TimeRange{r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>()};
      }
      for (const auto& n : j.at("networks")) m.nets.push_back(Mlp::from_json(n));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("model file: ") + e.what());
    }
    const std::size_t want = m.mode == RegimeMode::Pooled ? 1 : 3;
    if (m.nets.size() != want) fail(ErrorCode::ParseError, "model file has the wrong number of networks");
    for (const auto& n : m.nets) {
      if (n.input_dim() != m.features.size()) fail(ErrorCode::DimensionMismatch, "network input differs from feature list");
    }
    return m;
  }
};

inline std::vector<std::string> model_feature_names() {
  return {kModelFeatureNames.begin(), kModelFeatureNames.end()};
}

// ---------------------------------------------------------------------------
// Training

struct FillTrainConfig {
  IpcwConfig ipcw;
  CensoringStrata strata;
  TrainConfig train;
  RegimeMode regime = RegimeMode::Pooled;
  bool exclude_partial_window = true;
  std::size_t importance_repeats = 3;
};

struct FillTrainReport {
  std::vector<TrainReport> nets;
  std::size_t rows = 0;
  std::size_t excluded_partial_window = 0;
  std::size_t zero_weight = 0;
  std::size_t floored = 0;
  std::size_t positives = 0;
  std::vector<std::vector<FeatureImportance>> importance;  // per network

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rows"] = rows;
    j["excluded_partial_window"] = excluded_partial_window;
    j["zero_weight_rows"] = zero_weight;
    j["weight_floor_applied"] = floored;
    j["positives"] = positives;
    j["networks"] = nlohmann::json::array();
    for (const auto& r : nets) {
      j["networks"].push_back({{"train_loss", r.train_loss},
                               {"validation_loss", r.validation_loss},
                               {"best_epoch", r.best_epoch},
                               {"epochs_run", r.epochs_run},
                               {"early_stopped", r.early_stopped},
                               {"train_rows", r.train_rows},
                               {"validation_rows", r.validation_rows}});
    }
    j["importance"] = nlohmann::json::array();
    for (const auto& ranking : importance) {
      nlohmann::json r = nlohmann::json::array();
      for (const auto& f : ranking) r.push_back({{"feature", f.name}, {"score", f.score}});
      j["importance"].push_back(r);
    }
    return j;
  }
};

/// Feature rows with IPCW labels and weights, in record order.
struct FillTrainingSet {
  std::vector<const OrderLifecycle*> records;
  Dataset data;
  std::size_t excluded_partial_window = 0;
  std::size_t floored = 0;
};

inline FillTrainingSet build_fill_training_set(std::span<const OrderLifecycle> records, const CensoringModel& g,
                                               const FillTrainConfig& cfg) {
  FillTrainingSet ts;
  ts.data.dim = kModelFeatureNames.size();
  const auto ipcw = ipcw_weights(records, g, cfg.ipcw);
  ts.floored = ipcw.floored;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (cfg.exclude_partial_window && records[i].features.partial_window) {
      ++ts.excluded_partial_window;
      continue;
    }
    ts.records.push_back(&records[i]);
    ts.data.push(model_inputs(records[i].features), ipcw.labels[i], ipcw.weights[i]);
  }
  return ts;
}

inline Dataset regime_rows(const FillTrainingSet& ts, PlacementRegime r) {
  Dataset d;
  d.dim = ts.data.dim;
  for (std::size_t i = 0; i < ts.records.size(); ++i) {
    if (regime_of(ts.records[i]->features.delta) == r) d.push(ts.data.row(i), ts.data.y[i], ts.data.w[i]);
  }
  return d;
}

inline Dataset trailing_validation(const Dataset& d, double fraction) {
  const std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d.size())));
  return d.slice(d.size() - n_val, d.size());
}

/// Permutation importance on the trailing validation block (non-zero weights).
inline std::vector<FeatureImportance> validation_importance(const Mlp& net, const Dataset& rows,
                                                            const std::vector<std::string>& names,
                                                            const TrainConfig& train, std::size_t repeats) {
  Dataset val = trailing_validation(rows, train.validation_fraction);
  if (val.size() == 0) val = rows;
  Dataset nonzero;
  nonzero.dim = val.dim;
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (val.w[i] > 0.0) nonzero.push(val.row(i), val.y[i], val.w[i]);
  }
  if (nonzero.size() == 0) return {};
  return permutation_importance(net, nonzero, names, train.seed, repeats);
}

inline RegimeNetwork train_fill_model(std::span<const OrderLifecycle> records, const FillTrainConfig& cfg,
                                      FillTrainReport* report = nullptr) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "no lifecycle records to train on");
  const auto g = CensoringModel::fit(records, cfg.strata);
  const auto ts = build_fill_training_set(records, g, cfg);
  FillTrainReport rep;
  rep.rows = ts.data.size();
  rep.excluded_partial_window = ts.excluded_partial_window;
  rep.floored = ts.floored;
  for (std::size_t i = 0; i < ts.data.size(); ++i) {
    rep.zero_weight += ts.data.w[i] == 0.0;
    rep.positives += ts.data.w[i] > 0.0 && ts.data.y[i] > 0.5;
  }

  RegimeNetwork model;
  model.kind = "fill";
  model.mode = cfg.regime;
  model.horizon = cfg.ipcw.horizon;
  model.features = model_feature_names();
  model.train_range = insert_range(records);
  {
    double wy = 0.0, ws = 0.0;
    for (std::size_t i = 0; i < ts.data.size(); ++i) {
      wy += ts.data.w[i] * ts.data.y[i];
      ws += ts.data.w[i];
    }
    model.baseline = ws > 0.0 ? wy / ws : 0.0;
  }
  auto fit_one = [&](const Dataset& d) {
    TrainReport tr;
    model.nets.push_back(train_mlp(d, OutputActivation::Sigmoid, cfg.train, &tr));
    rep.nets.push_back(tr);
  };
  if (cfg.regime == RegimeMode::Pooled) {
    fit_one(ts.data);
  } else {
    for (auto r : {PlacementRegime::Passive, PlacementRegime::AtBest, PlacementRegime::Aggressive}) fit_one(regime_rows(ts, r));
  }
  if (cfg.importance_repeats > 0) {
    for (std::size_t k = 0; k < model.nets.size(); ++k) {
      const Dataset rows = cfg.regime == RegimeMode::Pooled ? ts.data : regime_rows(ts, static_cast<PlacementRegime>(k));
      rep.importance.push_back(validation_importance(model.nets[k], rows, model.features, cfg.train, cfg.importance_repeats));
    }
  }
  if (report) *report = rep;
  return model;
}

}  // namespace lobfill
