#pragma once

// Covariates observed at order insertion: position in the book, best-queue
// and flow imbalances, aggressiveness, priority volume, trade activity and a
// rolling realized volatility.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "lobfill/order_book.hpp"

namespace lobfill {

struct FeatureVector {
  double delta = 0.0;          // ticks from same-side best before insertion
  double spread = 0.0;         // ticks, before insertion
  double spread_after = 0.0;   // ticks, after insertion
  double imbalance_best = 0.0;
  double imbalance_add = 0.0;
  std::optional<double> omega;  // aggressive orders only
  double priority_volume = 0.0;
  double size = 0.0;
  double signed_flow = 0.0;
  double flow_imbalance = 0.0;
  double signed_traded = 0.0;
  double traded_imbalance = 0.0;
  double time_since_trade = 0.0;       // seconds
  double median_trade_duration = 0.0;  // seconds
  double volatility = 0.0;             // %/trade
  bool partial_window = false;

  bool operator==(const FeatureVector&) const = default;
};

/// Column order of the model input vector. `omega` is imputed as 0 for
/// non-aggressive rows; the two regime indicators let a pooled model
/// separate passive, at-best and aggressive placements.
inline constexpr std::array<std::string_view, 17> kModelFeatureNames = {
    "delta",          "spread",          "spread_after",     "imbalance_best",
    "imbalance_add",  "omega",           "priority_volume",  "size",
    "signed_flow",    "flow_imbalance",  "signed_traded",    "traded_imbalance",
    "time_since_trade", "median_trade_duration", "volatility", "is_aggressive",
    "is_at_best",
};

inline std::vector<double> model_inputs(const FeatureVector& f) {
  return {f.delta,
          f.spread,
          f.spread_after,
          f.imbalance_best,
          f.imbalance_add,
          f.omega.value_or(0.0),
          f.priority_volume,
          f.size,
          f.signed_flow,
          f.flow_imbalance,
          f.signed_traded,
          f.traded_imbalance,
          f.time_since_trade,
          f.median_trade_duration,
          f.volatility,
          f.delta < 0.0 ? 1.0 : 0.0,
          f.delta == 0.0 ? 1.0 : 0.0};
}

/// Looks a feature up by its column name. Returns nullopt for an absent omega.
inline std::optional<double> feature_value(const FeatureVector& f, std::string_view name) {
  if (name == "omega") return f.omega;
  const auto row = model_inputs(f);
  for (std::size_t i = 0; i < kModelFeatureNames.size(); ++i) {
    if (kModelFeatureNames[i] == name) return row[i];
  }
  fail(ErrorCode::ConfigInvalid, "unknown feature '" + std::string(name) + "'");
}

struct FlowEvent {
  MessageKind kind = MessageKind::Add;
  Side side = Side::Bid;
  double volume = 0.0;
};

struct TradePrint {
  std::int64_t ts_ns = 0;
  Side side = Side::Bid;  // side of the resting order
  double size = 0.0;
  Ticks price = 0;
};

/// Bounded buffers of the last m book events and the last n trades.
class RollingWindows {
 public:
  explicit RollingWindows(std::size_t event_window = 50, std::size_t trade_window = 50)
      : event_window_(event_window), trade_window_(trade_window) {}

  void record_event(const FlowEvent& e) {
    events_.push_back(e);
    if (events_.size() > event_window_) events_.pop_front();
    ++events_seen_;
  }

  void record_trade(const TradePrint& t) {
    trades_.push_back(t);
    if (trades_.size() > trade_window_) trades_.pop_front();
    ++trades_seen_;
  }

  const std::deque<FlowEvent>& events() const { return events_; }
  const std::deque<TradePrint>& trades() const { return trades_; }
  std::size_t event_window() const { return event_window_; }
  std::size_t trade_window() const { return trade_window_; }
  std::uint64_t events_seen() const { return events_seen_; }
  std::uint64_t trades_seen() const { return trades_seen_; }

  bool full() const { return events_.size() >= event_window_ && trades_.size() >= trade_window_; }

 private:
  std::size_t event_window_;
  std::size_t trade_window_;
  std::deque<FlowEvent> events_;
  std::deque<TradePrint> trades_;
  std::uint64_t events_seen_ = 0;
  std::uint64_t trades_seen_ = 0;
};

/// Bid side: p^b - p. Ask side: p - p^a. Negative inside the spread.
inline Ticks distance_at_insertion(Side side, Ticks price, const TopOfBook& before) {
  const auto best = before.best(side);
  if (!best) fail(ErrorCode::EmptySide, "no best price on the order's side");
  return side == Side::Bid ? *best - price : price - *best;
}

inline double imbalance(double bid, double ask) {
  const double total = bid + ask;
  if (!(total > 0.0)) return 0.0;
  return (bid - ask) / total;
}

inline double best_imbalance(const TopOfBook& after) {
  if (!after.two_sided()) fail(ErrorCode::EmptySide, "best imbalance needs both sides");
  return imbalance(after.bid_volume, after.ask_volume);
}

/// Added-volume imbalance over the event window (the new order included).
inline double limit_flow_imbalance(const RollingWindows& w) {
  double bid = 0.0, ask = 0.0;
  for (const auto& e : w.events()) {
    if (e.kind != MessageKind::Add) continue;
    (e.side == Side::Bid ? bid : ask) += e.volume;
  }
  return imbalance(bid, ask);
}

/// omega = delta / (1 - psi), equivalently (psi - psi*) / (psi - 1).
inline double aggressiveness_index(Ticks delta, Ticks spread) {
  if (spread <= 1) fail(ErrorCode::SpreadTooNarrow, "aggressiveness needs a spread above one tick");
  if (delta > 0 || delta <= -spread) {
    fail(ErrorCode::InadmissibleDistance, "aggressiveness needs -spread < delta <= 0");
  }
  return static_cast<double>(delta) / static_cast<double>(1 - spread);
}

inline double priority_volume(const OrderBook& after, OrderId id) { return after.priority_volume(id); }

/// Square root of the mean squared log-return of consecutive prices, as a
/// fraction per trade.
inline double realized_volatility(std::span<const double> prices) {
  if (prices.size() < 2) fail(ErrorCode::InsufficientTrades, "volatility needs at least two trades");
  double sum = 0.0;
  for (std::size_t i = 1; i < prices.size(); ++i) {
    const double r = std::log(prices[i] / prices[i - 1]);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(prices.size() - 1));
}

/// Signed book-flow over the event window: bid additions and ask removals
/// push it up, ask additions and bid removals push it down.
inline std::pair<double, double> signed_flow(const RollingWindows& w) {
  double net = 0.0, gross = 0.0;
  for (const auto& e : w.events()) {
    const double sign_side = e.side == Side::Bid ? 1.0 : -1.0;
    const double sign_kind = e.kind == MessageKind::Add ? 1.0 : -1.0;
    net += sign_side * sign_kind * e.volume;
    gross += e.volume;
  }
  return {net, gross > 0.0 ? net / gross : 0.0};
}

/// Taker viewpoint: volume traded against resting asks minus volume traded
/// against resting bids.
inline std::pair<double, double> signed_traded(const RollingWindows& w) {
  double on_bid = 0.0, on_ask = 0.0;
  for (const auto& t : w.trades()) (t.side == Side::Bid ? on_bid : on_ask) += t.size;
  const double total = on_bid + on_ask;
  return {on_ask - on_bid, total > 0.0 ? (on_ask - on_bid) / total : 0.0};
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

/// Builds the covariate vector for `order` (an Add already applied to
/// `after`). `before` is the top of book just before the insertion and the
/// windows already contain the new order's event.
inline FeatureVector assemble_features(const Level3Message& order, const TopOfBook& before,
                                       const OrderBook& after, const RollingWindows& w) {
  if (!before.two_sided()) fail(ErrorCode::EmptySide, "features need a two-sided book");
  const TopOfBook top_after = after.top();
  if (!top_after.two_sided()) fail(ErrorCode::EmptySide, "features need a two-sided book");

  FeatureVector f;
  const Ticks delta = distance_at_insertion(order.side, order.price, before);
  const Ticks spread = *before.spread();
  f.delta = static_cast<double>(delta);
  f.spread = static_cast<double>(spread);
  f.spread_after = static_cast<double>(*top_after.spread());
  f.imbalance_best = best_imbalance(top_after);
  f.imbalance_add = limit_flow_imbalance(w);
  if (delta < 0 && spread > 1) f.omega = aggressiveness_index(delta, spread);
  f.priority_volume = priority_volume(after, order.order_id);
  f.size = order.size;
  std::tie(f.signed_flow, f.flow_imbalance) = signed_flow(w);
  std::tie(f.signed_traded, f.traded_imbalance) = signed_traded(w);

  const auto& trades = w.trades();
  if (!trades.empty()) {
    f.time_since_trade = 1e-9 * static_cast<double>(order.ts_ns - trades.back().ts_ns);
  }
  if (trades.size() >= 2) {
    std::vector<double> durations;
    std::vector<double> prices;
    durations.reserve(trades.size() - 1);
    prices.reserve(trades.size());
    for (std::size_t i = 0; i < trades.size(); ++i) {
      prices.push_back(static_cast<double>(trades[i].price));
      if (i > 0) durations.push_back(1e-9 * static_cast<double>(trades[i].ts_ns - trades[i - 1].ts_ns));
    }
    f.median_trade_duration = median(std::move(durations));
    f.volatility = 100.0 * realized_volatility(prices);
  }
  f.partial_window = !w.full();
  return f;
}

/// Book plus rolling windows, advanced together one message at a time.
class MarketState {
 public:
  explicit MarketState(CrossingPolicy policy = CrossingPolicy::Reject, std::size_t event_window = 50,
                       std::size_t trade_window = 50)
      : book_(policy), windows_(event_window, trade_window) {}

  ApplyResult apply(const Level3Message& msg) {
    ApplyResult r = book_.apply(msg);
    if (r.kind == MessageKind::Add) {
      const Side resting = opposite(r.side);
      for (const auto& fill : r.fills) {
        windows_.record_event({MessageKind::Execute, resting, fill.size});
      }
      for (const auto& fill : r.fills) windows_.record_trade({msg.ts_ns, resting, fill.size, fill.price});
      if (r.added > 0.0) windows_.record_event({MessageKind::Add, r.side, r.added});
    } else if (r.kind == MessageKind::Cancel) {
      windows_.record_event({MessageKind::Cancel, r.side, r.cancelled});
    } else {
      double traded = 0.0;
      for (const auto& fill : r.fills) traded += fill.size;
      windows_.record_event({MessageKind::Execute, r.side, traded});
      windows_.record_trade({msg.ts_ns, r.side, traded, r.price});
    }
    return r;
  }

  const OrderBook& book() const { return book_; }
  OrderBook& book() { return book_; }
  const RollingWindows& windows() const { return windows_; }

 private:
  OrderBook book_;
  RollingWindows windows_;
};

}  // namespace lobfill
