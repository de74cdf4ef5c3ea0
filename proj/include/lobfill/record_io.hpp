#pragma once

// Feature matrix CSV: one row per order lifecycle with its insertion features,
// outcome, price move at the horizon and, optionally, IPCW label and weight.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lobfill/fill_model.hpp"
#include "lobfill/lifecycle.hpp"
#include "lobfill/message_io.hpp"
#include "lobfill/placement.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Filled: return "filled";
    case Outcome::Cancelled: return "cancelled";
    case Outcome::Censored: return "censored";
  }
  return "censored";
}

inline Outcome parse_outcome(std::string_view s) {
  if (s == "filled") return Outcome::Filled;
  if (s == "cancelled") return Outcome::Cancelled;
  if (s == "censored") return Outcome::Censored;
  fail(ErrorCode::ParseError, "unknown outcome '" + std::string(s) + "'");
}

namespace detail {

inline constexpr std::array<std::pair<std::string_view, double FeatureVector::*>, 14> kFeatureColumns = {{
    {"delta", &FeatureVector::delta},
    {"spread", &FeatureVector::spread},
    {"spread_after", &FeatureVector::spread_after},
    {"imbalance_best", &FeatureVector::imbalance_best},
    {"imbalance_add", &FeatureVector::imbalance_add},
    {"priority_volume", &FeatureVector::priority_volume},
    {"size", &FeatureVector::size},
    {"signed_flow", &FeatureVector::signed_flow},
    {"flow_imbalance", &FeatureVector::flow_imbalance},
    {"signed_traded", &FeatureVector::signed_traded},
    {"traded_imbalance", &FeatureVector::traded_imbalance},
    {"time_since_trade", &FeatureVector::time_since_trade},
    {"median_trade_duration", &FeatureVector::median_trade_duration},
    {"volatility", &FeatureVector::volatility},
}};

inline std::string opt(const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); }

}  // namespace detail

/// `ipcw`, when given, must be index-aligned with `records`.
inline std::string format_feature_matrix_csv(std::span<const OrderLifecycle> records,
                                             const IpcwResult* ipcw = nullptr) {
  using text::format_double;
  std::string out =
      "order_id,side,insert_ts_ns,price_ticks,order_size,outcome,outcome_time,fill_ratio,filled_by_horizon,"
      "best_bid_before,best_ask_before";
  for (const auto& [name, _] : detail::kFeatureColumns) out += ',' + std::string(name);
  out += ",omega,partial_window,horizon_move,label,weight\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out += std::to_string(r.order_id) + ',' + std::string(to_string(r.side)) + ',' + std::to_string(r.insert_ts_ns) + ',' +
           std::to_string(r.price) + ',' + format_double(r.size) + ',' + to_string(r.outcome) + ',' +
           format_double(r.outcome_time) + ',' + format_double(r.fill_ratio) + ',' + format_double(r.filled_by_horizon) +
           ',' + std::to_string(r.best_bid_before) + ',' + std::to_string(r.best_ask_before);
    for (const auto& [_, member] : detail::kFeatureColumns) out += ',' + format_double(r.features.*member);
    out += ',' + detail::opt(r.features.omega) + ',' + (r.features.partial_window ? "1" : "0") + ',' +
           detail::opt(r.horizon_move);
    if (ipcw) {
      out += ',' + format_double(ipcw->labels[i]) + ',' + format_double(ipcw->weights[i]);
    } else {
      out += ",,";
    }
    out += '\n';
  }
  return out;
}

inline std::vector<OrderLifecycle> parse_feature_matrix_csv(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty()) fail(ErrorCode::ParseError, "feature matrix has no header");
  const text::Header h(rows.front());
  const std::size_t iid = h.index("order_id"), iside = h.index("side"), its = h.index("insert_ts_ns"),
                    iprice = h.index("price_ticks"), isize = h.index("order_size"), iout = h.index("outcome"),
                    itime = h.index("outcome_time"), iratio = h.index("fill_ratio"),
                    ihor = h.index("filled_by_horizon"), ibid = h.index("best_bid_before"),
                    iask = h.index("best_ask_before"), iomega = h.index("omega"),
                    ipartial = h.index("partial_window"), imove = h.index("horizon_move");
  std::array<std::size_t, detail::kFeatureColumns.size()> ifeat{};
  for (std::size_t k = 0; k < ifeat.size(); ++k) ifeat[k] = h.index(detail::kFeatureColumns[k].first);

  std::vector<OrderLifecycle> out;
  out.reserve(rows.size() - 1);
  for (std::size_t n = 1; n < rows.size(); ++n) {
    const auto f = text::split(rows[n]);
    if (f.size() != h.size()) fail(ErrorCode::ParseError, "feature matrix row " + std::to_string(n) + " has the wrong width");
    OrderLifecycle r;
    r.order_id = text::parse_int<OrderId>(f[iid]);
    r.side = parse_side(f[iside]);
    r.insert_ts_ns = text::parse_int<std::int64_t>(f[its]);
    r.price = text::parse_int<Ticks>(f[iprice]);
    r.size = text::parse_double(f[isize]);
    r.outcome = parse_outcome(f[iout]);
    r.outcome_time = text::parse_double(f[itime]);
    r.fill_ratio = text::parse_double(f[iratio]);
    r.filled_by_horizon = text::parse_double(f[ihor]);
    r.best_bid_before = text::parse_int<Ticks>(f[ibid]);
    r.best_ask_before = text::parse_int<Ticks>(f[iask]);
    for (std::size_t k = 0; k < ifeat.size(); ++k) r.features.*(detail::kFeatureColumns[k].second) = text::parse_double(f[ifeat[k]]);
    if (!f[iomega].empty()) r.features.omega = text::parse_double(f[iomega]);
    r.features.partial_window = f[ipartial] == "1";
    if (!f[imove].empty()) r.horizon_move = text::parse_double(f[imove]);
    out.push_back(r);
  }
  return out;
}

inline std::vector<OrderLifecycle> read_feature_matrix(const std::string& path) {
  return parse_feature_matrix_csv(text::read_file(path));
}

/// Splits by insertion time: records inserted before the cut go to the
/// first part. The cut is the insertion time of the record at `fraction`.
inline std::pair<std::vector<OrderLifecycle>, std::vector<OrderLifecycle>> split_by_time(
    std::span<const OrderLifecycle> records, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorCode::ConfigInvalid, "split fraction must be in (0, 1)");
  if (records.empty()) fail(ErrorCode::EmptyInput, "nothing to split");
  std::vector<std::int64_t> ts;
  ts.reserve(records.size());
  for (const auto& r : records) ts.push_back(r.insert_ts_ns);
  std::sort(ts.begin(), ts.end());
  const auto cut = ts[static_cast<std::size_t>(fraction * static_cast<double>(ts.size() - 1))];
  std::pair<std::vector<OrderLifecycle>, std::vector<OrderLifecycle>> out;
  for (const auto& r : records) (r.insert_ts_ns < cut ? out.first : out.second).push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// JSON views

inline nlohmann::json features_to_json(const FeatureVector& f) {
  nlohmann::json j;
  for (const auto& [name, member] : detail::kFeatureColumns) j[std::string(name)] = f.*member;
  j["omega"] = f.omega ? nlohmann::json(*f.omega) : nlohmann::json(nullptr);
  j["partial_window"] = f.partial_window;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline FeatureVector features_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::ParseError, "features must be a JSON object");
  FeatureVector f;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "omega") {
        if (!value.is_null()) f.omega = value.get<double>();
        continue;
      }
      if (key == "partial_window") {
        f.partial_window = value.get<bool>();
        continue;
      }
      const auto it = std::find_if(detail::kFeatureColumns.begin(), detail::kFeatureColumns.end(),
                                   [&](const auto& c) { return c.first == key; });
      if (it == detail::kFeatureColumns.end()) fail(ErrorCode::ParseError, "unknown feature '" + key + "'");
      f.*(it->second) = value.get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "feature '" + key + "': " + e.what());
    }
  }
  return f;
}

inline nlohmann::json tracker_report_json(const TrackerReport& r) {
  return {{"messages", r.messages},
          {"adds", r.adds},
          {"tracked", r.tracked},
          {"filtered_depth", r.filtered_depth},
          {"one_sided_book", r.one_sided_book},
          {"marketable_excluded", r.marketable_excluded},
          {"crossed_rejected", r.crossed_rejected},
          {"sequence_gaps", r.sequence_gaps},
          {"censored_at_gap", r.censored_at_gap},
          {"censored_at_end", r.censored_at_end},
          {"trades", r.trades},
          {"traded_volume", r.traded_volume},
          {"average_trade_size", r.average_trade_size()},
          {"first_ts_ns", r.first_ts_ns},
          {"last_ts_ns", r.last_ts_ns}};
}

inline nlohmann::json toy_fit_json(const ToyFit& t) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [x, f] : t.points) pts.push_back({x, f});
  return {{"a", t.a}, {"k", t.k}, {"v", t.v}, {"k_standard_error", t.k_standard_error}, {"flat", t.flat}, {"points", pts}};
}

inline ToyFit toy_fit_from_json(const nlohmann::json& j) {
  ToyFit t;
  try {
    t.a = j.at("a").get<double>();
    t.k = j.at("k").get<double>();
    t.v = j.at("v").get<double>();
    t.k_standard_error = j.value("k_standard_error", 0.0);
    t.flat = j.value("flat", false);
    if (j.contains("points")) {
      for (const auto& p : j.at("points")) t.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("exponential fit: ") + e.what());
  }
  return t;
}

inline nlohmann::json read_json(const std::string& path) {
  const std::string content = text::read_file(path);
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
}

inline RegimeNetwork read_model(const std::string& path) { return RegimeNetwork::from_json(read_json(path)); }

}  // namespace lobfill
