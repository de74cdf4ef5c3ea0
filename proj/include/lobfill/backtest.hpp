#pragma once

// Limit-or-market decision backtest over replayed orders.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lobfill/fill_model.hpp"
#include "lobfill/lifecycle.hpp"
#include "lobfill/placement.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

struct EligibilityConfig {
  double horizon = 1.0;
  double min_size = 0.0;
  double max_size_ats_multiple = 5.0;
  double max_distance = std::numeric_limits<double>::infinity();  // ticks
};

struct EligibilityReport {
  std::size_t total = 0;
  std::size_t too_small = 0;
  std::size_t too_large = 0;
  std::size_t too_far = 0;
  std::size_t died_before_horizon = 0;  // cancelled or censored before T
  std::size_t selected = 0;

  nlohmann::json to_json() const {
    return {{"total", total},     {"too_small", too_small}, {"too_large", too_large},
            {"too_far", too_far}, {"died_before_horizon", died_before_horizon}, {"selected", selected}};
  }
};

/// Orders filled by T or still alive at T, within the size and distance bounds.
inline std::vector<OrderLifecycle> select_eligible(std::span<const OrderLifecycle> records, const EligibilityConfig& cfg,
                                                   double average_trade_size, EligibilityReport* report = nullptr) {
  if (!(average_trade_size > 0.0)) fail(ErrorCode::InsufficientTrades, "average trade size is not positive");
  const double max_size = cfg.max_size_ats_multiple * average_trade_size;
  EligibilityReport rep;
  rep.total = records.size();
  std::vector<OrderLifecycle> out;
  for (const auto& r : records) {
    if (r.size < cfg.min_size) {
      ++rep.too_small;
    } else if (r.size > max_size) {
      ++rep.too_large;
    } else if (r.features.delta > cfg.max_distance) {
      ++rep.too_far;
    } else if (r.outcome != Outcome::Filled && r.outcome_time < cfg.horizon) {
      ++rep.died_before_horizon;
    } else {
      out.push_back(r);
    }
  }
  rep.selected = out.size();
  if (report) *report = rep;
  return out;
}

enum class Label : std::uint8_t { Market = 0, Limit = 1, Excluded = 2 };

inline std::string to_string(Label l) {
  switch (l) {
    case Label::Market: return "0";
    case Label::Limit: return "1";
    case Label::Excluded: return "excluded";
  }
  return "excluded";
}

inline Label label_outcome(const OrderLifecycle& r, double horizon) {
  if (r.outcome == Outcome::Filled && r.outcome_time <= horizon) return Label::Limit;
  if (!r.horizon_move) fail(ErrorCode::MissingPriceMove, "order " + std::to_string(r.order_id) + " has no price move at T");
  if (*r.horizon_move < 0.0) return Label::Limit;
  if (*r.horizon_move > 0.0) return Label::Market;
  return Label::Excluded;
}

struct ModelSpec {
  std::string id;
  std::string fill_kind;     // "exponential" or "mlp"
  std::string cleanup_kind;  // "constant" or "mlp"
  FeaturePredictor fill;
  FeaturePredictor cleanup;  // ticks
};

inline FeaturePredictor exponential_fill_predictor(double a, double k) {
  return [a, k](const FeatureVector& z) { return std::clamp(toy_fill(a, k, z.spread + z.delta), 0.0, 1.0); };
}

inline FeaturePredictor constant_predictor(double v) {
  return [v](const FeatureVector&) { return v; };
}

inline FeaturePredictor network_predictor(RegimeNetwork net) {
  return [net = std::move(net)](const FeatureVector& z) { return net.predict(z); };
}

/// Models I, II and III from a fitted exponential curve, a constant clean-up
/// cost and the two networks.
inline std::vector<ModelSpec> standard_models(const ToyFit& exp_fit, const RegimeNetwork& fill_net,
                                              const RegimeNetwork& cleanup_net) {
  const double v = cleanup_net.baseline;
  return {
      {"I", "exponential", "constant", exponential_fill_predictor(exp_fit.a, exp_fit.k), constant_predictor(v)},
      {"II", "mlp", "constant", network_predictor(fill_net), constant_predictor(v)},
      {"III", "mlp", "mlp", network_predictor(fill_net), network_predictor(cleanup_net)},
  };
}

struct ActionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;

  nlohmann::json to_json() const { return {{"precision", precision}, {"recall", recall}, {"f_score", f_score}}; }
};

/// Counts indexed [label][decision], 0 = Market, 1 = Limit.
struct Confusion {
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};

  void add(Label label, Label decision) { ++counts[static_cast<int>(label)][static_cast<int>(decision)]; }
  std::size_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }

  ActionMetrics metrics(Label action) const {
    const int a = static_cast<int>(action), b = 1 - a;
    const double tp = static_cast<double>(counts[a][a]);
    const double fp = static_cast<double>(counts[b][a]);
    const double fn = static_cast<double>(counts[a][b]);
    ActionMetrics m;
    m.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    m.f_score = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
  }

  nlohmann::json to_json() const {
    return {{"label_market_decision_market", counts[0][0]},
            {"label_market_decision_limit", counts[0][1]},
            {"label_limit_decision_market", counts[1][0]},
            {"label_limit_decision_limit", counts[1][1]}};
  }
};

struct BacktestConfig {
  FeePolicy fees = fee_level(9);
  double tick = 0.01;
  double horizon = 1.0;
  std::optional<TimeRange> train_range;
};

struct ModelResult {
  std::string id;
  std::string fill_kind;
  std::string cleanup_kind;
  Confusion confusion;
  ActionMetrics limit;
  ActionMetrics market;
};

struct RecordDecision {
  OrderId order_id = 0;
  std::int64_t insert_ts_ns = 0;
  double delta = 0.0;
  Label label = Label::Excluded;
  std::vector<double> saved;
  std::vector<Label> decisions;
};

struct BacktestResult {
  std::vector<ModelResult> models;
  std::vector<RecordDecision> rows;
  std::size_t evaluated = 0;
  std::size_t excluded_ties = 0;
  std::size_t skipped_ask = 0;
  std::optional<TimeRange> test_range;

  const ModelResult& model(const std::string& id) const {
    for (const auto& m : models) {
      if (m.id == id) return m;
    }
    fail(ErrorCode::ModelUnavailable, "no backtest result for model " + id);
  }
};

inline void check_disjoint(const TimeRange& train, const TimeRange& test) {
  if (train.overlaps(test)) fail(ErrorCode::PeriodOverlap, "training and test periods intersect");
}

inline Label decide(const OrderLifecycle& r, const ModelSpec& m, const BacktestConfig& cfg, double* saved_out = nullptr) {
  if (!m.fill || !m.cleanup) fail(ErrorCode::ModelUnavailable, "model " + m.id + " is missing a component");
  const auto s = MarketSnapshot::from_ticks(r.best_bid_before, r.best_ask_before, cfg.tick, r.features);
  const double fill = std::clamp(m.fill(r.features), 0.0, 1.0);
  const double saved = saved_cost(s, r.features.delta, cfg.fees, fill, m.cleanup(r.features));
  if (saved_out) *saved_out = saved;
  return saved > 0.0 ? Label::Limit : Label::Market;
}

/// Scores every model on the bid-side records; records with a zero price
/// move are excluded from all metrics.
inline BacktestResult run_backtest(std::span<const OrderLifecycle> records, std::span<const ModelSpec> models,
                                   const BacktestConfig& cfg) {
  BacktestResult out;
  if (!records.empty()) {
    out.test_range = insert_range(records);
    if (cfg.train_range) check_disjoint(*cfg.train_range, *out.test_range);
  }
  for (const auto& m : models) out.models.push_back({m.id, m.fill_kind, m.cleanup_kind, {}, {}, {}});
  for (const auto& r : records) {
    if (r.side != Side::Bid) {
      ++out.skipped_ask;
      continue;
    }
    const Label label = label_outcome(r, cfg.horizon);
    if (label == Label::Excluded) {
      ++out.excluded_ties;
      continue;
    }
    RecordDecision row{r.order_id, r.insert_ts_ns, r.features.delta, label, {}, {}};
    for (std::size_t k = 0; k < models.size(); ++k) {
      double saved = 0.0;
      const Label d = decide(r, models[k], cfg, &saved);
      out.models[k].confusion.add(label, d);
      row.saved.push_back(saved);
      row.decisions.push_back(d);
    }
    out.rows.push_back(std::move(row));
    ++out.evaluated;
  }
  for (auto& m : out.models) {
    m.limit = m.confusion.metrics(Label::Limit);
    m.market = m.confusion.metrics(Label::Market);
  }
  return out;
}

inline nlohmann::json backtest_json(const BacktestResult& r, const BacktestConfig& cfg) {
  nlohmann::json j;
  j["fee_level"] = cfg.fees.level;
  j["horizon"] = cfg.horizon;
  j["evaluated"] = r.evaluated;
  j["excluded_ties"] = r.excluded_ties;
  j["skipped_ask"] = r.skipped_ask;
  if (r.test_range) j["test_range"] = {r.test_range->first_ns, r.test_range->last_ns};
  if (cfg.train_range) j["train_range"] = {cfg.train_range->first_ns, cfg.train_range->last_ns};
  j["models"] = nlohmann::json::array();
  for (const auto& m : r.models) {
    j["models"].push_back({{"id", m.id},
                           {"fill", m.fill_kind},
                           {"cleanup", m.cleanup_kind},
                           {"confusion", m.confusion.to_json()},
                           {"limit", m.limit.to_json()},
                           {"market", m.market.to_json()}});
  }
  return j;
}

inline std::string format_backtest_csv(const BacktestResult& r) {
  std::string out = "order_id,insert_ts_ns,delta,label";
  for (const auto& m : r.models) out += ",saved_" + m.id + ",decision_" + m.id;
  out += '\n';
  for (const auto& row : r.rows) {
    out += std::to_string(row.order_id) + ',' + std::to_string(row.insert_ts_ns) + ',' + text::format_double(row.delta) +
           ',' + to_string(row.label);
    for (std::size_t k = 0; k < row.decisions.size(); ++k) {
      out += ',' + text::format_double(row.saved[k]) + ',' + to_string(row.decisions[k]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace lobfill
