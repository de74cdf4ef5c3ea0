#pragma once

// Price-time priority limit order book driven by level-3 messages.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lobfill/error.hpp"

namespace lobfill {

using OrderId = std::uint64_t;
using Ticks = std::int64_t;

enum class Side : std::uint8_t { Bid, Ask };
enum class MessageKind : std::uint8_t { Add, Cancel, Execute };

constexpr Side opposite(Side s) { return s == Side::Bid ? Side::Ask : Side::Bid; }

/// One exchange event. Prices are integer ticks; sizes are in quote units.
/// For Cancel, `size` is the cancelled amount (0 means the whole remainder).
/// For Execute, `exec_size` is the traded amount.
struct Level3Message {
  std::uint64_t seq = 0;
  std::int64_t ts_ns = 0;
  MessageKind kind = MessageKind::Add;
  OrderId order_id = 0;
  Side side = Side::Bid;
  Ticks price = 0;
  double size = 0.0;
  double exec_size = 0.0;

  bool operator==(const Level3Message&) const = default;
};

struct QueueEntry {
  OrderId id = 0;
  double remaining = 0.0;

  bool operator==(const QueueEntry&) const = default;
};

struct PriceLevel {
  std::deque<QueueEntry> queue;
  double volume = 0.0;

  bool operator==(const PriceLevel&) const = default;
};

struct Fill {
  OrderId id = 0;
  double size = 0.0;
  bool complete = false;
  Ticks price = 0;
};

/// What a message did to the book. `fills` lists resting orders hit by an
/// Execute (or by a marketable Add when matching is enabled).
struct ApplyResult {
  MessageKind kind = MessageKind::Add;
  Side side = Side::Bid;
  Ticks price = 0;
  double added = 0.0;
  double cancelled = 0.0;
  bool removed = false;
  bool marketable = false;
  std::vector<Fill> fills;
};

/// Best prices and the volume resting at them. Sides may be empty.
struct TopOfBook {
  std::optional<Ticks> best_bid;
  std::optional<Ticks> best_ask;
  double bid_volume = 0.0;
  double ask_volume = 0.0;

  bool two_sided() const { return best_bid && best_ask; }
  std::optional<Ticks> best(Side s) const { return s == Side::Bid ? best_bid : best_ask; }
  double volume(Side s) const { return s == Side::Bid ? bid_volume : ask_volume; }
  std::optional<Ticks> spread() const {
    if (!two_sided()) return std::nullopt;
    return *best_ask - *best_bid;
  }
  std::optional<double> mid() const {
    if (!two_sided()) return std::nullopt;
    return 0.5 * static_cast<double>(*best_bid + *best_ask);
  }
};

/// How an Add priced through the opposite best is handled. Level-3 feeds
/// never publish crossing adds, so `Reject` is the replay default; `Match`
/// executes the order against resting liquidity and rests the remainder.
enum class CrossingPolicy : std::uint8_t { Reject, Match };

class OrderBook {
 public:
  struct Location {
    Side side = Side::Bid;
    Ticks price = 0;

    bool operator==(const Location&) const = default;
  };

  explicit OrderBook(CrossingPolicy policy = CrossingPolicy::Reject) : policy_(policy) {}

  /// Applies one message. Throws SequenceGap without touching the book when
  /// `msg.seq` is not the successor of the last applied seq; call `resync`
  /// to accept the jump. CrossedBook consumes the seq but leaves the book
  /// unchanged.
  ApplyResult apply(const Level3Message& msg) {
    check_sequence(msg);
    ApplyResult result;
    switch (msg.kind) {
      case MessageKind::Add: result = apply_add(msg); break;
      case MessageKind::Cancel: result = apply_cancel(msg); break;
      case MessageKind::Execute: result = apply_execute(msg); break;
    }
    last_seq_ = msg.seq;
    return result;
  }

  /// Accepts a sequence jump: the next message must carry `next_seq`.
  void resync(std::uint64_t next_seq) {
    if (next_seq == 0) {
      last_seq_.reset();
    } else {
      last_seq_ = next_seq - 1;
    }
  }

  std::optional<std::uint64_t> last_seq() const { return last_seq_; }
  CrossingPolicy crossing_policy() const { return policy_; }

  std::optional<Ticks> best_bid() const {
    if (bids_.empty()) return std::nullopt;
    return bids_.begin()->first;
  }
  std::optional<Ticks> best_ask() const {
    if (asks_.empty()) return std::nullopt;
    return asks_.begin()->first;
  }
  std::optional<Ticks> best(Side s) const { return s == Side::Bid ? best_bid() : best_ask(); }

  TopOfBook top() const {
    TopOfBook t;
    if (!bids_.empty()) {
      t.best_bid = bids_.begin()->first;
      t.bid_volume = bids_.begin()->second.volume;
    }
    if (!asks_.empty()) {
      t.best_ask = asks_.begin()->first;
      t.ask_volume = asks_.begin()->second.volume;
    }
    return t;
  }

  const PriceLevel* level(Side s, Ticks price) const {
    if (s == Side::Bid) {
      auto it = bids_.find(price);
      return it == bids_.end() ? nullptr : &it->second;
    }
    auto it = asks_.find(price);
    return it == asks_.end() ? nullptr : &it->second;
  }

  double volume_at(Side s, Ticks price) const {
    const PriceLevel* lvl = level(s, price);
    return lvl ? lvl->volume : 0.0;
  }

  std::size_t level_count(Side s) const { return s == Side::Bid ? bids_.size() : asks_.size(); }
  std::size_t order_count() const { return index_.size(); }

  /// Number of non-empty levels on `s` priced strictly better than `price`.
  std::size_t levels_better_than(Side s, Ticks price) const {
    std::size_t n = 0;
    if (s == Side::Bid) {
      for (auto it = bids_.begin(); it != bids_.end() && it->first > price; ++it) ++n;
    } else {
      for (auto it = asks_.begin(); it != asks_.end() && it->first < price; ++it) ++n;
    }
    return n;
  }

  bool contains(OrderId id) const { return index_.contains(id); }

  std::optional<Location> find(OrderId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> remaining(OrderId id) const {
    auto loc = find(id);
    if (!loc) return std::nullopt;
    for (const auto& e : level(loc->side, loc->price)->queue) {
      if (e.id == id) return e.remaining;
    }
    return std::nullopt;
  }

  /// Liquidity that trades before `id` under price-time priority: all volume
  /// at strictly better prices on its side plus the orders ahead of it in
  /// its own queue.
  double priority_volume(OrderId id) const {
    auto loc = find(id);
    if (!loc) fail(ErrorCode::OrderNotFound, "order " + std::to_string(id) + " not in book");
    double ahead = 0.0;
    auto accumulate = [&](const auto& levels) {
      for (const auto& [price, lvl] : levels) {
        if (price == loc->price) {
          for (const auto& e : lvl.queue) {
            if (e.id == id) break;
            ahead += e.remaining;
          }
          break;
        }
        ahead += lvl.volume;
      }
    };
    if (loc->side == Side::Bid) {
      accumulate(bids_);
    } else {
      accumulate(asks_);
    }
    return ahead;
  }

  /// Visits levels of one side from the best price outwards.
  template <class Fn>
  void for_each_level(Side s, Fn&& fn) const {
    if (s == Side::Bid) {
      for (const auto& [p, lvl] : bids_) fn(p, lvl);
    } else {
      for (const auto& [p, lvl] : asks_) fn(p, lvl);
    }
  }

  bool operator==(const OrderBook& o) const {
    return bids_ == o.bids_ && asks_ == o.asks_ && index_ == o.index_ && last_seq_ == o.last_seq_;
  }

 private:
  using BidLevels = std::map<Ticks, PriceLevel, std::greater<>>;
  using AskLevels = std::map<Ticks, PriceLevel>;

  static constexpr double kSizeEpsilon = 1e-12;

  void check_sequence(const Level3Message& msg) const {
    if (!last_seq_) return;
    if (msg.seq <= *last_seq_) {
      fail(ErrorCode::InvalidMessage, "seq " + std::to_string(msg.seq) + " not increasing");
    }
    if (msg.seq != *last_seq_ + 1) {
      fail(ErrorCode::SequenceGap,
           "expected seq " + std::to_string(*last_seq_ + 1) + ", got " + std::to_string(msg.seq));
    }
  }

  bool crosses(Side s, Ticks price) const {
    if (s == Side::Bid) {
      auto ask = best_ask();
      return ask && price >= *ask;
    }
    auto bid = best_bid();
    return bid && price <= *bid;
  }

  PriceLevel& level_ref(Side s, Ticks price) {
    return s == Side::Bid ? bids_[price] : asks_[price];
  }

  void erase_level_if_empty(Side s, Ticks price) {
    if (s == Side::Bid) {
      auto it = bids_.find(price);
      if (it != bids_.end() && it->second.queue.empty()) bids_.erase(it);
    } else {
      auto it = asks_.find(price);
      if (it != asks_.end() && it->second.queue.empty()) asks_.erase(it);
    }
  }

  ApplyResult apply_add(const Level3Message& msg) {
    if (msg.price <= 0) fail(ErrorCode::InvalidMessage, "add with non-positive price");
    if (!(msg.size > 0.0)) fail(ErrorCode::InvalidMessage, "add with non-positive size");
    if (index_.contains(msg.order_id)) {
      fail(ErrorCode::InvalidMessage, "duplicate order id " + std::to_string(msg.order_id));
    }
    ApplyResult r;
    r.kind = MessageKind::Add;
    r.side = msg.side;
    r.price = msg.price;
    double size = msg.size;
    if (crosses(msg.side, msg.price)) {
      if (policy_ == CrossingPolicy::Reject) {
        last_seq_ = msg.seq;
        fail(ErrorCode::CrossedBook, "add " + std::to_string(msg.order_id) + " at " +
                                         std::to_string(msg.price) + " crosses the book");
      }
      r.marketable = true;
      size = match_marketable(msg.side, msg.price, size, r.fills);
    }
    if (size > kSizeEpsilon * msg.size) {
      PriceLevel& lvl = level_ref(msg.side, msg.price);
      lvl.queue.push_back({msg.order_id, size});
      lvl.volume += size;
      index_.emplace(msg.order_id, Location{msg.side, msg.price});
      r.added = size;
    }
    return r;
  }

  double match_marketable(Side side, Ticks limit, double size, std::vector<Fill>& fills) {
    const Side resting = opposite(side);
    while (size > 0.0 && crosses(side, limit)) {
      const Ticks px = *best(resting);
      PriceLevel& lvl = level_ref(resting, px);
      while (size > 0.0 && !lvl.queue.empty()) {
        QueueEntry& head = lvl.queue.front();
        const double take = std::min(size, head.remaining);
        size -= take;
        head.remaining -= take;
        lvl.volume -= take;
        const bool complete = head.remaining <= kSizeEpsilon;
        fills.push_back({head.id, take, complete, px});
        if (complete) {
          index_.erase(head.id);
          lvl.queue.pop_front();
        }
      }
      if (lvl.queue.empty()) erase_level_if_empty(resting, px);
    }
    return size;
  }

  ApplyResult apply_cancel(const Level3Message& msg) {
    auto it = index_.find(msg.order_id);
    if (it == index_.end()) {
      fail(ErrorCode::UnknownOrderId, "cancel of unknown order " + std::to_string(msg.order_id));
    }
    const Location loc = it->second;
    PriceLevel& lvl = level_ref(loc.side, loc.price);
    auto pos = std::find_if(lvl.queue.begin(), lvl.queue.end(),
                            [&](const QueueEntry& e) { return e.id == msg.order_id; });
    ApplyResult r;
    r.kind = MessageKind::Cancel;
    r.side = loc.side;
    r.price = loc.price;
    const bool full = msg.size <= 0.0 || msg.size >= pos->remaining - kSizeEpsilon;
    if (full) {
      r.cancelled = pos->remaining;
      r.removed = true;
      lvl.volume -= pos->remaining;
      lvl.queue.erase(pos);
      index_.erase(it);
      erase_level_if_empty(loc.side, loc.price);
    } else {
      r.cancelled = msg.size;
      pos->remaining -= msg.size;
      lvl.volume -= msg.size;
    }
    return r;
  }

  // The referenced order trades first; any surplus continues through the
  // level from the FIFO head. In a price-time feed the referenced order is
  // the head, so this is plain FIFO consumption.
  ApplyResult apply_execute(const Level3Message& msg) {
    auto it = index_.find(msg.order_id);
    if (it == index_.end()) {
      fail(ErrorCode::UnknownOrderId, "execute of unknown order " + std::to_string(msg.order_id));
    }
    if (!(msg.exec_size > 0.0)) fail(ErrorCode::InvalidMessage, "execute with non-positive size");
    const Location loc = it->second;
    PriceLevel& lvl = level_ref(loc.side, loc.price);
    if (msg.exec_size > lvl.volume * (1.0 + 1e-12) + kSizeEpsilon) {
      fail(ErrorCode::InvalidMessage, "execute of " + std::to_string(msg.exec_size) +
                                          " exceeds level liquidity");
    }
    ApplyResult r;
    r.kind = MessageKind::Execute;
    r.side = loc.side;
    r.price = loc.price;

    double left = msg.exec_size;
    auto consume = [&](std::deque<QueueEntry>::iterator pos) {
      const double take = std::min(left, pos->remaining);
      left -= take;
      pos->remaining -= take;
      lvl.volume -= take;
      const bool complete = pos->remaining <= kSizeEpsilon;
      r.fills.push_back({pos->id, take, complete, loc.price});
      if (complete) {
        index_.erase(pos->id);
        return lvl.queue.erase(pos);
      }
      return std::next(pos);
    };
    auto pos = std::find_if(lvl.queue.begin(), lvl.queue.end(),
                            [&](const QueueEntry& e) { return e.id == msg.order_id; });
    consume(pos);
    for (auto q = lvl.queue.begin(); left > kSizeEpsilon && q != lvl.queue.end();) {
      q = consume(q);
    }
    if (lvl.queue.empty()) {
      lvl.volume = 0.0;
      erase_level_if_empty(loc.side, loc.price);
    }
    return r;
  }

  CrossingPolicy policy_;
  BidLevels bids_;
  AskLevels asks_;
  std::unordered_map<OrderId, Location> index_;
  std::optional<std::uint64_t> last_seq_;
};

/// Swaps sides and reflects prices around `pivot` (price -> pivot - price).
inline Level3Message mirrored(const Level3Message& m, Ticks pivot) {
  Level3Message out = m;
  out.side = opposite(m.side);
  out.price = pivot - m.price;
  return out;
}

}  // namespace lobfill
