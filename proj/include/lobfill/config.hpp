#pragma once

// Pipeline configuration: a flat `key = value` file ('#' starts a comment)
// plus `key=value` overrides. Unknown keys are rejected.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lobfill/backtest.hpp"
#include "lobfill/cleanup_model.hpp"
#include "lobfill/fill_model.hpp"
#include "lobfill/lifecycle.hpp"
#include "lobfill/synth_flow.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

struct PipelineConfig {
  double tick_size = 0.01;
  double horizon = 1.0;
  TrackerConfig tracker;
  int fee_level = 9;
  std::uint64_t seed = 1;
  bool seed_set = false;
  TrainConfig train;
  RegimeMode regime = RegimeMode::Pooled;
  double survival_floor = 0.01;
  CensoringStrata strata;
  bool exclude_partial_window = true;
  double winsor_low = 0.001;
  double winsor_high = 0.999;
  EligibilityConfig eligibility;
  GroundTruthConfig synth;
  double synth_duration = 3600.0;

  TrackerConfig tracker_config() const {
    TrackerConfig t = tracker;
    t.horizon = horizon;
    return t;
  }

  FillTrainConfig fill_config() const {
    FillTrainConfig c;
    c.ipcw = {horizon, survival_floor};
    c.strata = strata;
    c.train = train;
    c.train.seed = seed;
    c.regime = regime;
    c.exclude_partial_window = exclude_partial_window;
    return c;
  }

  CleanupTrainConfig cleanup_config() const {
    CleanupTrainConfig c;
    c.train = train;
    c.train.seed = seed;
    c.regime = regime;
    c.winsor_low = winsor_low;
    c.winsor_high = winsor_high;
    c.exclude_partial_window = exclude_partial_window;
    c.horizon = horizon;
    return c;
  }

  BacktestConfig backtest_config() const {
    BacktestConfig c;
    c.fees = lobfill::fee_level(fee_level);
    c.tick = tick_size;
    c.horizon = horizon;
    return c;
  }

  EligibilityConfig eligibility_config() const {
    EligibilityConfig e = eligibility;
    e.horizon = horizon;
    return e;
  }

  GroundTruthConfig synth_config() const {
    GroundTruthConfig g = synth;
    g.seed = seed;
    g.horizon = horizon;
    return g;
  }
};

namespace detail {

inline double as_double(std::string_view key, std::string_view v) {
  try {
    return text::parse_double(v);
  } catch (const Error&) {
    fail(ErrorCode::ConfigInvalid, std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
}

template <class Int>
Int as_int(std::string_view key, std::string_view v) {
  try {
    return text::parse_int<Int>(v);
  } catch (const Error&) {
    fail(ErrorCode::ConfigInvalid, std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
}

inline bool as_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::ConfigInvalid, std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

inline std::vector<double> as_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  if (text::trim(v).empty()) return out;
  for (auto part : text::split(v, ',')) out.push_back(as_double(key, part));
  return out;
}

using Setter = std::function<void(PipelineConfig&, std::string_view key, std::string_view value)>;

inline const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto num = [&t](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, std::string_view k, std::string_view v) { member(c) = as_double(k, v); };
    };
    auto count = [&t](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, std::string_view k, std::string_view v) {
        member(c) = as_int<std::size_t>(k, v);
      };
    };
    auto flag = [&t](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, std::string_view k, std::string_view v) { member(c) = as_bool(k, v); };
    };
    auto list = [&t](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, std::string_view k, std::string_view v) { member(c) = as_list(k, v); };
    };

    num("tick_size", [](PipelineConfig& c) -> double& { return c.tick_size; });
    num("horizon", [](PipelineConfig& c) -> double& { return c.horizon; });
    t["depth_mode"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      if (v == "bps") {
        c.tracker.depth.mode = DepthFilter::Mode::BasisPoints;
      } else if (v == "levels") {
        c.tracker.depth.mode = DepthFilter::Mode::Levels;
      } else {
        fail(ErrorCode::ConfigInvalid, std::string(k) + ": expected bps or levels");
      }
    };
    num("depth_value", [](PipelineConfig& c) -> double& { return c.tracker.depth.value; });
    count("event_window", [](PipelineConfig& c) -> std::size_t& { return c.tracker.event_window; });
    count("trade_window", [](PipelineConfig& c) -> std::size_t& { return c.tracker.trade_window; });
    t["crossing"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      if (v == "reject") {
        c.tracker.crossing = CrossingPolicy::Reject;
      } else if (v == "match") {
        c.tracker.crossing = CrossingPolicy::Match;
      } else {
        fail(ErrorCode::ConfigInvalid, std::string(k) + ": expected reject or match");
      }
    };
    t["fee_level"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.fee_level = as_int<int>(k, v);
      lobfill::fee_level(c.fee_level);
    };
    t["seed"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.seed = as_int<std::uint64_t>(k, v);
      c.seed_set = true;
    };

    num("train.learning_rate", [](PipelineConfig& c) -> double& { return c.train.learning_rate; });
    num("train.momentum", [](PipelineConfig& c) -> double& { return c.train.momentum; });
    count("train.batch_size", [](PipelineConfig& c) -> std::size_t& { return c.train.batch_size; });
    count("train.max_epochs", [](PipelineConfig& c) -> std::size_t& { return c.train.max_epochs; });
    count("train.patience", [](PipelineConfig& c) -> std::size_t& { return c.train.patience; });
    num("train.validation_fraction", [](PipelineConfig& c) -> double& { return c.train.validation_fraction; });
    t["train.hidden"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.train.hidden.clear();
      for (auto part : text::split(v, ',')) c.train.hidden.push_back(as_int<std::size_t>(k, part));
    };
    t["regime"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      try {
        c.regime = parse_regime_mode(std::string(v));
      } catch (const Error& e) {
        fail(ErrorCode::ConfigInvalid, std::string(k) + ": " + e.what());
      }
    };
    num("ipcw.survival_floor", [](PipelineConfig& c) -> double& { return c.survival_floor; });
    flag("strata.enabled", [](PipelineConfig& c) -> bool& { return c.strata.enabled; });
    list("strata.delta_edges", [](PipelineConfig& c) -> std::vector<double>& { return c.strata.delta_edges; });
    list("strata.omega_edges", [](PipelineConfig& c) -> std::vector<double>& { return c.strata.omega_edges; });
    flag("exclude_partial_window", [](PipelineConfig& c) -> bool& { return c.exclude_partial_window; });
    num("cleanup.winsor_low", [](PipelineConfig& c) -> double& { return c.winsor_low; });
    num("cleanup.winsor_high", [](PipelineConfig& c) -> double& { return c.winsor_high; });

    num("eligibility.min_size", [](PipelineConfig& c) -> double& { return c.eligibility.min_size; });
    num("eligibility.max_size_ats_multiple",
        [](PipelineConfig& c) -> double& { return c.eligibility.max_size_ats_multiple; });
    num("eligibility.max_distance", [](PipelineConfig& c) -> double& { return c.eligibility.max_distance; });

    num("synth.duration", [](PipelineConfig& c) -> double& { return c.synth_duration; });
    t["synth.start_ts_ns"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.start_ts_ns = as_int<std::int64_t>(k, v);
    };
    num("synth.probe_rate", [](PipelineConfig& c) -> double& { return c.synth.probe_rate; });
    num("synth.bid_share", [](PipelineConfig& c) -> double& { return c.synth.bid_share; });
    t["synth.delta_max"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.delta_max = as_int<Ticks>(k, v);
    };
    flag("synth.allow_aggressive", [](PipelineConfig& c) -> bool& { return c.synth.allow_aggressive; });
    t["synth.size_min"] = [](PipelineConfig& c, std::string_view k, std::string_view v) { c.synth.size_min = as_int<int>(k, v); };
    t["synth.size_max"] = [](PipelineConfig& c, std::string_view k, std::string_view v) { c.synth.size_max = as_int<int>(k, v); };
    num("synth.market_order_rate", [](PipelineConfig& c) -> double& { return c.synth.market_order_rate; });
    num("synth.anchor_size", [](PipelineConfig& c) -> double& { return c.synth.anchor_size; });
    num("synth.gap_rate", [](PipelineConfig& c) -> double& { return c.synth.gap_rate; });
    num("synth.exec_base", [](PipelineConfig& c) -> double& { return c.synth.hazard.exec_base; });
    num("synth.exec_delta_decay", [](PipelineConfig& c) -> double& { return c.synth.hazard.exec_delta_decay; });
    num("synth.exec_aggressive_boost", [](PipelineConfig& c) -> double& { return c.synth.hazard.exec_aggressive_boost; });
    t["synth.spread_split"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.hazard.spread_split = as_int<Ticks>(k, v);
    };
    num("synth.exec_wide_spread", [](PipelineConfig& c) -> double& { return c.synth.hazard.exec_wide_spread; });
    num("synth.exec_imbalance", [](PipelineConfig& c) -> double& { return c.synth.hazard.exec_imbalance; });
    num("synth.cancel_base", [](PipelineConfig& c) -> double& { return c.synth.hazard.cancel_base; });
    num("synth.cancel_delta_slope", [](PipelineConfig& c) -> double& { return c.synth.hazard.cancel_delta_slope; });
    t["synth.start_mid"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.price.start_mid = as_int<Ticks>(k, v);
    };
    t["synth.min_spread"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.price.min_spread = as_int<Ticks>(k, v);
    };
    t["synth.max_spread"] = [](PipelineConfig& c, std::string_view k, std::string_view v) {
      c.synth.price.max_spread = as_int<Ticks>(k, v);
    };
    num("synth.step_rate", [](PipelineConfig& c) -> double& { return c.synth.price.step_rate; });
    list("synth.regime_drifts", [](PipelineConfig& c) -> std::vector<double>& { return c.synth.price.regime_drifts; });
    num("synth.regime_switch_rate", [](PipelineConfig& c) -> double& { return c.synth.price.regime_switch_rate; });
    num("synth.flow_tilt", [](PipelineConfig& c) -> double& { return c.synth.price.flow_tilt; });
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::setters()) out.push_back(k);
  return out;
}

inline void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value) {
  const auto it = detail::setters().find(key);
  if (it == detail::setters().end()) fail(ErrorCode::ConfigInvalid, "unknown config key '" + std::string(key) + "'");
  it->second(c, key, text::trim(value));
}

/// Applies a `key=value` override.
inline void apply_override(PipelineConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) fail(ErrorCode::ConfigInvalid, "override must be key=value: '" + std::string(assignment) + "'");
  apply_setting(c, text::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_text(PipelineConfig& c, std::string_view content) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (!line.empty()) {
      if (line.find('=') == std::string_view::npos) {
        fail(ErrorCode::ConfigInvalid, "config line " + std::to_string(line_no) + " is not key = value");
      }
      apply_override(c, line);
    }
    start = end + 1;
  }
}

inline void validate(const PipelineConfig& c) {
  if (!(c.horizon > 0.0)) fail(ErrorCode::ConfigInvalid, "horizon must be positive");
  if (!(c.tick_size > 0.0)) fail(ErrorCode::ConfigInvalid, "tick_size must be positive");
  if (!(c.tracker.depth.value > 0.0)) fail(ErrorCode::ConfigInvalid, "depth_value must be positive");
  if (c.train.batch_size == 0 || c.train.hidden.empty()) fail(ErrorCode::ConfigInvalid, "bad network training settings");
  if (!(c.train.validation_fraction > 0.0 && c.train.validation_fraction < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "train.validation_fraction must be in (0, 1)");
  }
  if (!(c.winsor_low >= 0.0 && c.winsor_low < c.winsor_high && c.winsor_high <= 1.0)) {
    fail(ErrorCode::ConfigInvalid, "winsor quantiles must satisfy 0 <= low < high <= 1");
  }
}

inline PipelineConfig load_pipeline_config(const std::string& path, const std::vector<std::string>& overrides) {
  PipelineConfig c;
  if (!path.empty()) apply_config_text(c, text::read_file(path));
  for (const auto& o : overrides) apply_override(c, o);
  validate(c);
  return c;
}

}  // namespace lobfill
