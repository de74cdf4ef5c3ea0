#pragma once

// Replays a level-3 stream and emits one lifecycle record per tracked order:
// its birth state, covariates at insertion, and how it died (or when it was
// last seen alive).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lobfill/features.hpp"

namespace lobfill {

enum class Outcome : std::uint8_t { Filled, Cancelled, Censored };

struct OrderLifecycle {
  OrderId order_id = 0;
  Side side = Side::Bid;
  std::int64_t insert_ts_ns = 0;
  Ticks price = 0;
  double size = 0.0;
  Outcome outcome = Outcome::Censored;
  double outcome_time = 0.0;   // seconds after insertion, > 0
  double fill_ratio = 0.0;     // executed / size at death or censoring
  double filled_by_horizon = 0.0;  // executed / size within the horizon
  Ticks best_bid_before = 0;
  Ticks best_ask_before = 0;
  FeatureVector features;
  /// Opposite best price move over the horizon, in ticks, oriented so that a
  /// positive value is adverse for the order: p^a(t+T) - p^a(t) for bids,
  /// p^b(t) - p^b(t+T) for asks. Present only when the order outlived T.
  std::optional<double> horizon_move;

  bool operator==(const OrderLifecycle&) const = default;
};

/// Which insertions are tracked: within `value` basis points of the mid, or
/// within the `value` best price levels of the order's side.
struct DepthFilter {
  enum class Mode : std::uint8_t { BasisPoints, Levels };
  Mode mode = Mode::BasisPoints;
  double value = 20.0;

  bool accepts(Side side, Ticks price, const OrderBook& before) const {
    const TopOfBook top = before.top();
    if (mode == Mode::BasisPoints) {
      const double mid = *top.mid();
      return std::abs(static_cast<double>(price) - mid) / mid * 1e4 <= value;
    }
    return static_cast<double>(before.levels_better_than(side, price)) < value;
  }
};

struct TrackerConfig {
  double horizon = 1.0;  // seconds
  DepthFilter depth;
  std::size_t event_window = 50;
  std::size_t trade_window = 50;
  CrossingPolicy crossing = CrossingPolicy::Reject;
};

struct TrackerReport {
  std::uint64_t messages = 0;
  std::uint64_t adds = 0;
  std::uint64_t tracked = 0;
  std::uint64_t filtered_depth = 0;
  std::uint64_t one_sided_book = 0;
  std::uint64_t marketable_excluded = 0;
  std::uint64_t crossed_rejected = 0;
  std::uint64_t sequence_gaps = 0;
  std::uint64_t censored_at_gap = 0;
  std::uint64_t censored_at_end = 0;
  std::uint64_t trades = 0;
  double traded_volume = 0.0;
  std::int64_t first_ts_ns = 0;
  std::int64_t last_ts_ns = 0;

  double average_trade_size() const {
    return trades == 0 ? 0.0 : traded_volume / static_cast<double>(trades);
  }
};

class LifecycleTracker {
 public:
  explicit LifecycleTracker(TrackerConfig cfg)
      : cfg_(cfg),
        state_(cfg.crossing, cfg.event_window, cfg.trade_window),
        horizon_ns_(static_cast<std::int64_t>(std::llround(cfg.horizon * 1e9))) {}

  void on_message(const Level3Message& msg) {
    if (report_.messages == 0) report_.first_ts_ns = msg.ts_ns;
    ++report_.messages;
    const auto last_seq = state_.book().last_seq();
    if (last_seq && msg.seq > *last_seq + 1) {
      ++report_.sequence_gaps;
      censor_all(last_ts_, report_.censored_at_gap);
      state_.book().resync(msg.seq);
    }
    resolve_horizons(msg.ts_ns);

    if (msg.kind == MessageKind::Add) {
      on_add(msg);
    } else {
      on_removal(msg);
    }
    last_ts_ = msg.ts_ns;
    report_.last_ts_ns = msg.ts_ns;
  }

  /// Censors everything still alive at the last observed timestamp and
  /// returns the records in insertion order.
  std::vector<OrderLifecycle> finish() {
    for (auto& p : pending_) {
      if (p.due_ns <= last_ts_) record_move(p);
    }
    pending_.clear();
    censor_all(last_ts_, report_.censored_at_end);
    return std::move(records_);
  }

  const TrackerReport& report() const { return report_; }
  const OrderBook& book() const { return state_.book(); }
  const MarketState& state() const { return state_; }

 private:
  struct Live {
    std::size_t record = 0;
    double executed = 0.0;
    double executed_by_horizon = 0.0;
  };
  struct Pending {
    std::int64_t due_ns = 0;
    std::size_t record = 0;
    OrderId id = 0;
    Ticks reference = 0;
  };

  void on_add(const Level3Message& msg) {
    ++report_.adds;
    const TopOfBook before = state_.book().top();
    ApplyResult r;
    try {
      r = state_.apply(msg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CrossedBook) throw;
      ++report_.crossed_rejected;
      return;
    }
    count_trades(r);
    handle_fills(r, msg.ts_ns);
    if (r.marketable) {
      ++report_.marketable_excluded;
      return;
    }
    if (!before.two_sided()) {
      ++report_.one_sided_book;
      return;
    }
    if (!accepts_depth(msg, before)) {
      ++report_.filtered_depth;
      return;
    }
    OrderLifecycle rec;
    rec.order_id = msg.order_id;
    rec.side = msg.side;
    rec.insert_ts_ns = msg.ts_ns;
    rec.price = msg.price;
    rec.size = msg.size;
    rec.best_bid_before = *before.best_bid;
    rec.best_ask_before = *before.best_ask;
    rec.features = assemble_features(msg, before, state_.book(), state_.windows());
    records_.push_back(rec);
    const std::size_t idx = records_.size() - 1;
    live_.emplace(msg.order_id, Live{idx, 0.0, 0.0});
    const Side opp = opposite(msg.side);
    pending_.push_back({msg.ts_ns + horizon_ns_, idx, msg.order_id, *before.best(opp)});
    ++report_.tracked;
  }

  bool accepts_depth(const Level3Message& msg, const TopOfBook& before) const {
    const double mid = *before.mid();
    if (cfg_.depth.mode == DepthFilter::Mode::BasisPoints) {
      return std::abs(static_cast<double>(msg.price) - mid) / mid * 1e4 <= cfg_.depth.value;
    }
    // Levels better than the order, counted on the book without it.
    std::size_t better = state_.book().levels_better_than(msg.side, msg.price);
    return static_cast<double>(better) < cfg_.depth.value;
  }

  void on_removal(const Level3Message& msg) {
    const ApplyResult r = state_.apply(msg);
    if (r.kind == MessageKind::Cancel) {
      if (r.removed) {
        auto it = live_.find(msg.order_id);
        if (it != live_.end()) {
          close(it, Outcome::Cancelled, msg.ts_ns);
        }
      }
      return;
    }
    count_trades(r);
    handle_fills(r, msg.ts_ns);
  }

  void count_trades(const ApplyResult& r) {
    for (const auto& f : r.fills) {
      ++report_.trades;
      report_.traded_volume += f.size;
    }
  }

  void handle_fills(const ApplyResult& r, std::int64_t ts) {
    for (const auto& f : r.fills) {
      auto it = live_.find(f.id);
      if (it == live_.end()) continue;
      OrderLifecycle& rec = records_[it->second.record];
      it->second.executed += f.size;
      if (ts - rec.insert_ts_ns <= horizon_ns_) it->second.executed_by_horizon += f.size;
      if (f.complete) close(it, Outcome::Filled, ts);
    }
  }

  void close(std::unordered_map<OrderId, Live>::iterator it, Outcome outcome, std::int64_t ts) {
    OrderLifecycle& rec = records_[it->second.record];
    rec.outcome = outcome;
    rec.outcome_time = lifetime_seconds(rec.insert_ts_ns, ts);
    rec.fill_ratio = outcome == Outcome::Filled ? 1.0 : std::clamp(it->second.executed / rec.size, 0.0, 1.0);
    rec.filled_by_horizon = std::clamp(it->second.executed_by_horizon / rec.size, 0.0, 1.0);
    if (outcome == Outcome::Filled && it->second.executed_by_horizon >= it->second.executed) {
      rec.filled_by_horizon = 1.0;
    }
    live_.erase(it);
  }

  // Lifetimes are clamped to one nanosecond so every observation time is
  // strictly positive.
  static double lifetime_seconds(std::int64_t from, std::int64_t to) {
    return 1e-9 * static_cast<double>(std::max<std::int64_t>(to - from, 1));
  }

  void censor_all(std::int64_t ts, std::uint64_t& counter) {
    std::vector<OrderId> ids;
    ids.reserve(live_.size());
    for (const auto& [id, _] : live_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (OrderId id : ids) {
      close(live_.find(id), Outcome::Censored, ts);
      ++counter;
    }
    // Orders cut off by a gap before their horizon cannot be measured.
    std::erase_if(pending_, [&](const Pending& p) { return p.due_ns > ts; });
  }

  // Called before a message with timestamp `next_ts` is applied: the book
  // currently shows the state for every instant in [last_ts, next_ts).
  void resolve_horizons(std::int64_t next_ts) {
    while (!pending_.empty() && pending_.front().due_ns < next_ts) {
      record_move(pending_.front());
      pending_.pop_front();
    }
  }

  void record_move(const Pending& p) {
    OrderLifecycle& rec = records_[p.record];
    const bool alive = live_.contains(p.id) && records_[live_.at(p.id).record].order_id == p.id;
    if (!alive) return;
    const Side opp = opposite(rec.side);
    const auto now = state_.book().best(opp);
    if (!now) return;
    const double move = static_cast<double>(*now - p.reference);
    rec.horizon_move = rec.side == Side::Bid ? move : -move;
  }

  TrackerConfig cfg_;
  MarketState state_;
  std::int64_t horizon_ns_;
  std::int64_t last_ts_ = 0;
  std::vector<OrderLifecycle> records_;
  std::unordered_map<OrderId, Live> live_;
  std::deque<Pending> pending_;
  TrackerReport report_;
};

struct TrackResult {
  std::vector<OrderLifecycle> records;
  TrackerReport report;
};

inline TrackResult track_lifecycles(std::span<const Level3Message> stream, const TrackerConfig& cfg) {
  if (stream.empty()) fail(ErrorCode::EmptyStream, "no messages to replay");
  LifecycleTracker tracker(cfg);
  for (const auto& m : stream) tracker.on_message(m);
  TrackResult out;
  out.records = tracker.finish();
  out.report = tracker.report();
  return out;
}

/// Closed range of insertion timestamps.
struct TimeRange {
  std::int64_t first_ns = 0;
  std::int64_t last_ns = 0;

  bool overlaps(const TimeRange& o) const { return first_ns <= o.last_ns && o.first_ns <= last_ns; }
  bool operator==(const TimeRange&) const = default;
};

inline TimeRange insert_range(std::span<const OrderLifecycle> records) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "no records");
  TimeRange r{records.front().insert_ts_ns, records.front().insert_ts_ns};
  for (const auto& rec : records) {
    r.first_ns = std::min(r.first_ns, rec.insert_ts_ns);
    r.last_ns = std::max(r.last_ns, rec.insert_ts_ns);
  }
  return r;
}

/// x -> P(R > x) over the within-horizon fill ratios of `records`.
class FillRatioCurve {
 public:
  explicit FillRatioCurve(std::vector<double> ratios) : ratios_(std::move(ratios)) {
    if (ratios_.empty()) fail(ErrorCode::EmptyInput, "fill ratio curve needs records");
    std::sort(ratios_.begin(), ratios_.end());
  }

  double exceedance(double x) const {
    auto it = std::upper_bound(ratios_.begin(), ratios_.end(), x);
    return static_cast<double>(ratios_.end() - it) / static_cast<double>(ratios_.size());
  }

  /// Distinct ratio values; the curve steps down at each of them.
  std::vector<double> breakpoints() const {
    std::vector<double> b = ratios_;
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

  std::size_t size() const { return ratios_.size(); }

 private:
  std::vector<double> ratios_;
};

inline FillRatioCurve fill_ratio_icdf(std::span<const OrderLifecycle> records) {
  std::vector<double> r;
  r.reserve(records.size());
  for (const auto& rec : records) r.push_back(rec.filled_by_horizon);
  return FillRatioCurve(std::move(r));
}

}  // namespace lobfill
