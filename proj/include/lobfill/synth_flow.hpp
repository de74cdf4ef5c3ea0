#pragma once

// Seeded level-3 flow with planted, state-dependent hazards.
//
// Two anchor orders hold the best bid and ask around a lazy tick random
// walk. Probe orders arrive as a Poisson stream; each draws execution and
// cancellation clocks at birth from rates fixed by (delta, spread, I_best)
// measured on the book exactly as the lifecycle tracker will see it. A walk
// step that would cross a resting probe executes the probe first, so the
// stream always replays cleanly; such fills are flagged in the truth rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lobfill/error.hpp"
#include "lobfill/features.hpp"
#include "lobfill/mlp.hpp"
#include "lobfill/order_book.hpp"
#include "lobfill/survival.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

struct HazardConfig {
  double exec_base = 1.0;              // per second
  double exec_delta_decay = 0.3;       // exp(-decay * delta) for delta >= 0
  double exec_aggressive_boost = 1.0;  // 1 + boost * omega for delta < 0
  Ticks spread_split = 4;              // spreads above this get exec_wide_spread
  double exec_wide_spread = 1.0;
  double exec_imbalance = 0.0;         // 1 - c * bucket(own-side I_best), c in [0, 1)
  double cancel_base = 0.5;
  double cancel_delta_slope = 0.0;     // 1 + slope * max(delta, 0)
};

struct PriceConfig {
  Ticks start_mid = 10000;
  Ticks min_spread = 2;
  Ticks max_spread = 6;
  double step_rate = 1.0;                    // walk steps per second
  std::vector<double> regime_drifts = {0.0};  // ticks per second
  double regime_switch_rate = 0.0;
  double flow_tilt = 0.0;  // market-order sell share is 0.5 - tilt * sign(drift)
};

struct GroundTruthConfig {
  std::uint64_t seed = 1;
  std::int64_t start_ts_ns = 0;
  double horizon = 1.0;  // T for the truth columns
  HazardConfig hazard;
  PriceConfig price;
  double probe_rate = 5.0;  // probe arrivals per second
  double bid_share = 0.5;
  Ticks delta_max = 10;
  bool allow_aggressive = true;  // probes may be placed inside the spread
  int size_min = 1;
  int size_max = 3;
  double market_order_rate = 2.0;
  double anchor_size = 10.0;
  double gap_rate = 0.0;  // sequence gaps per second
};

struct HazardInputs {
  Side side = Side::Bid;
  Ticks delta = 0;
  Ticks spread = 2;
  double imbalance_best = 0.0;
};

struct HazardRates {
  double exec = 0.0;
  double cancel = 0.0;
};

inline void validate(const GroundTruthConfig& c) {
  auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  const auto& h = c.hazard;
  const auto& p = c.price;
  if (!(std::isfinite(h.exec_base) && h.exec_base > 0.0)) fail(ErrorCode::ConfigInvalid, "exec_base must be positive");
  if (!finite_nonneg(h.exec_delta_decay) || !finite_nonneg(h.exec_aggressive_boost) ||
      !(std::isfinite(h.exec_wide_spread) && h.exec_wide_spread > 0.0) || !finite_nonneg(h.cancel_base) ||
      !finite_nonneg(h.cancel_delta_slope)) {
    fail(ErrorCode::ConfigInvalid, "hazard multipliers must be finite and non-negative");
  }
  if (!(h.exec_imbalance >= 0.0 && h.exec_imbalance < 1.0)) fail(ErrorCode::ConfigInvalid, "exec_imbalance must be in [0, 1)");
  if (p.min_spread < 1 || p.max_spread < p.min_spread) fail(ErrorCode::ConfigInvalid, "need 1 <= min_spread <= max_spread");
  if (!finite_nonneg(p.step_rate) || !finite_nonneg(p.regime_switch_rate)) fail(ErrorCode::ConfigInvalid, "rates must be non-negative");
  if (p.regime_drifts.empty()) fail(ErrorCode::ConfigInvalid, "at least one regime is required");
  for (double d : p.regime_drifts) {
    if (!std::isfinite(d) || std::abs(d) > p.step_rate) fail(ErrorCode::ConfigInvalid, "|drift| must not exceed step_rate");
  }
  if (!(p.flow_tilt >= 0.0 && p.flow_tilt <= 0.5)) fail(ErrorCode::ConfigInvalid, "flow_tilt must be in [0, 0.5]");
  if (!(std::isfinite(c.probe_rate) && c.probe_rate > 0.0)) fail(ErrorCode::ConfigInvalid, "probe_rate must be positive");
  if (!(c.bid_share >= 0.0 && c.bid_share <= 1.0)) fail(ErrorCode::ConfigInvalid, "bid_share must be in [0, 1]");
  if (c.delta_max < 0 || c.size_min < 1 || c.size_max < c.size_min) fail(ErrorCode::ConfigInvalid, "bad probe placement ranges");
  if (!finite_nonneg(c.market_order_rate) || !finite_nonneg(c.gap_rate)) fail(ErrorCode::ConfigInvalid, "rates must be non-negative");
  if (!(c.anchor_size >= 2.0)) fail(ErrorCode::ConfigInvalid, "anchor_size must be at least 2");
  if (!(std::isfinite(c.horizon) && c.horizon > 0.0)) fail(ErrorCode::ConfigInvalid, "horizon must be positive");
  const Ticks reach = p.max_spread + c.delta_max + 1;
  if (p.start_mid <= 2 * reach) fail(ErrorCode::ConfigInvalid, "start_mid too close to zero");
}

inline int imbalance_bucket(double own_side_imbalance) {
  if (own_side_imbalance > 1.0 / 3.0) return 1;
  if (own_side_imbalance < -1.0 / 3.0) return -1;
  return 0;
}

inline HazardRates hazard_rates(const HazardConfig& h, const HazardInputs& z) {
  double exec = h.exec_base;
  if (z.delta >= 0) {
    exec *= std::exp(-h.exec_delta_decay * static_cast<double>(z.delta));
  } else {
    exec *= 1.0 + h.exec_aggressive_boost * aggressiveness_index(z.delta, z.spread);
  }
  if (z.spread > h.spread_split) exec *= h.exec_wide_spread;
  const double own = z.side == Side::Bid ? z.imbalance_best : -z.imbalance_best;
  exec *= 1.0 - h.exec_imbalance * imbalance_bucket(own);
  const double cancel = h.cancel_base * (1.0 + h.cancel_delta_slope * static_cast<double>(std::max<Ticks>(z.delta, 0)));
  return {exec, cancel};
}

inline HazardInputs hazard_inputs(Side side, const FeatureVector& f) {
  return {side, static_cast<Ticks>(std::llround(f.delta)), static_cast<Ticks>(std::llround(f.spread)), f.imbalance_best};
}

/// Execution CIF at T under constant competing hazards.
inline double competing_cif(double exec, double cancel, double horizon) {
  const double total = exec + cancel;
  if (!(total > 0.0)) return 0.0;
  return exec / total * -std::expm1(-total * horizon);
}

/// Fill probability with cancellation treated as censoring.
inline double post_and_wait_probability(double exec, double horizon) { return -std::expm1(-exec * horizon); }

struct TrueFill {
  double cif = 0.0;
  double post_and_wait = 0.0;
};

inline TrueFill true_fill_probability(const GroundTruthConfig& c, const HazardInputs& z, double horizon) {
  const auto r = hazard_rates(c.hazard, z);
  return {competing_cif(r.exec, r.cancel, horizon), post_and_wait_probability(r.exec, horizon)};
}

inline double sample_exponential(std::mt19937_64& rng, double rate) {
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::log1p(-uniform01(rng)) / rate;
}

/// One observation from independent exponential clocks; rate 0 disables a clock.
inline Observation sample_competing_exponential(std::mt19937_64& rng, double exec, double cancel, double censor) {
  const double te = sample_exponential(rng, exec);
  const double tc = sample_exponential(rng, cancel);
  const double tz = sample_exponential(rng, censor);
  if (te <= tc && te <= tz) return {te, Cause::Execution, 1.0};
  if (tc <= tz) return {tc, Cause::Cancellation, 1.0};
  return {tz, Cause::Censored, 1.0};
}

struct TruthRow {
  OrderId order_id = 0;
  Side side = Side::Bid;
  std::int64_t insert_ts_ns = 0;
  Ticks delta = 0;
  Ticks spread = 0;
  double imbalance_best = 0.0;
  double lambda_exec = 0.0;
  double lambda_cancel = 0.0;
  double cif_exec = 0.0;
  double cif_cancel = 0.0;
  double post_and_wait = 0.0;
  bool crossed = false;  // filled by a walk step before its own clocks fired
};

struct SynthStats {
  std::uint64_t probes = 0;
  std::uint64_t clock_fills = 0;
  std::uint64_t clock_cancels = 0;
  std::uint64_t crossing_fills = 0;
  std::uint64_t walk_steps = 0;
  std::uint64_t market_orders = 0;
  std::uint64_t regime_switches = 0;
  std::uint64_t gaps = 0;
};

struct SynthFlow {
  std::vector<Level3Message> messages;
  std::vector<TruthRow> truth;
  SynthStats stats;
};

namespace detail {

class FlowBuilder {
 public:
  FlowBuilder(const GroundTruthConfig& c, double duration) : c_(c), duration_(duration), rng_(c.seed) {}

  SynthFlow run() {
    const auto& p = c_.price;
    ref_ = p.start_mid;
    regime_ = p.regime_drifts.size() > 1 ? static_cast<std::size_t>(rng_() % p.regime_drifts.size()) : 0;
    place_anchors(0.0, draw_spread());

    double next_probe = draw(c_.probe_rate);
    double next_step = draw(p.step_rate);
    double next_mo = draw(c_.market_order_rate);
    double next_regime = p.regime_drifts.size() > 1 ? draw(p.regime_switch_rate) : kNever;
    double next_gap = draw(c_.gap_rate);

    for (;;) {
      const double next_clock = clocks_.empty() ? kNever : clocks_.top().t;
      const double t = std::min({next_probe, next_step, next_mo, next_regime, next_gap, next_clock});
      if (!(t <= duration_)) break;
      if (t == next_clock) {
        const Clock ck = clocks_.top();
        clocks_.pop();
        fire_clock(ck);
      } else if (t == next_probe) {
        add_probe(t);
        next_probe = t + draw(c_.probe_rate);
      } else if (t == next_step) {
        walk_step(t);
        next_step = t + draw(p.step_rate);
      } else if (t == next_mo) {
        market_order(t);
        next_mo = t + draw(c_.market_order_rate);
      } else if (t == next_regime) {
        switch_regime();
        next_regime = t + draw(p.regime_switch_rate);
      } else {
        gap();
        next_gap = t + draw(c_.gap_rate);
      }
    }
    for (auto& row : out_.truth) row.crossed = crossed_.contains(row.order_id);
    return std::move(out_);
  }

 private:
  static constexpr double kNever = std::numeric_limits<double>::infinity();

  struct Probe {
    Side side = Side::Bid;
    Ticks price = 0;
    double size = 0.0;
  };
  struct Clock {
    double t = 0.0;
    OrderId id = 0;
    bool exec = false;
    bool operator>(const Clock& o) const { return t != o.t ? t > o.t : id > o.id; }
  };

  double draw(double rate) { return sample_exponential(rng_, rate); }

  Ticks draw_spread() {
    const auto& p = c_.price;
    return p.min_spread + static_cast<Ticks>(rng_() % static_cast<std::uint64_t>(p.max_spread - p.min_spread + 1));
  }

  std::int64_t ts(double t) const { return c_.start_ts_ns + static_cast<std::int64_t>(std::llround(t * 1e9)); }

  void emit(double t, MessageKind kind, OrderId id, Side side, Ticks price, double size, double exec_size = 0.0) {
    Level3Message m{next_seq_++, ts(t), kind, id, side, price, size, exec_size};
    book_.apply(m);
    out_.messages.push_back(m);
  }

  void place_anchors(double t, Ticks spread) {
    const Ticks bid = ref_ - spread / 2;
    const Ticks ask = bid + spread;
    if (bid_anchor_) emit(t, MessageKind::Cancel, bid_anchor_, Side::Bid, 0, 0.0);
    if (ask_anchor_) emit(t, MessageKind::Cancel, ask_anchor_, Side::Ask, 0, 0.0);
    std::vector<OrderId> hit;
    for (const auto& [id, pr] : probes_) {
      if ((pr.side == Side::Bid && pr.price >= ask) || (pr.side == Side::Ask && pr.price <= bid)) hit.push_back(id);
    }
    for (OrderId id : hit) {
      const auto pr = probes_.at(id);
      emit(t, MessageKind::Execute, id, pr.side, pr.price, 0.0, pr.size);
      probes_.erase(id);
      crossed_.insert(id);
      ++out_.stats.crossing_fills;
    }
    ask_anchor_ = next_id_++;
    emit(t, MessageKind::Add, ask_anchor_, Side::Ask, ask, c_.anchor_size);
    bid_anchor_ = next_id_++;
    emit(t, MessageKind::Add, bid_anchor_, Side::Bid, bid, c_.anchor_size);
  }

  void walk_step(double t) {
    const auto& p = c_.price;
    const double up = 0.5 + p.regime_drifts[regime_] / (2.0 * p.step_rate);
    ref_ += uniform01(rng_) < up ? 1 : -1;
    place_anchors(t, draw_spread());
    ++out_.stats.walk_steps;
  }

  void add_probe(double t) {
    const Side side = uniform01(rng_) < c_.bid_share ? Side::Bid : Side::Ask;
    const TopOfBook before = book_.top();
    const Ticks spread = *before.spread();
    const Ticks lo = c_.allow_aggressive ? -(spread - 1) : 0;
    const Ticks delta = lo + static_cast<Ticks>(rng_() % static_cast<std::uint64_t>(c_.delta_max - lo + 1));
    const Ticks price = side == Side::Bid ? *before.best_bid - delta : *before.best_ask + delta;
    const double size =
        static_cast<double>(c_.size_min + static_cast<int>(rng_() % static_cast<std::uint64_t>(c_.size_max - c_.size_min + 1)));
    const OrderId id = next_id_++;
    emit(t, MessageKind::Add, id, side, price, size);
    probes_[id] = {side, price, size};

    const HazardInputs z{side, delta, spread, best_imbalance(book_.top())};
    const auto r = hazard_rates(c_.hazard, z);
    const double te = draw(r.exec);
    const double tc = draw(r.cancel);
    if (te <= tc) {
      clocks_.push({t + te, id, true});
    } else {
      clocks_.push({t + tc, id, false});
    }
    TruthRow row;
    row.order_id = id;
    row.side = side;
    row.insert_ts_ns = ts(t);
    row.delta = delta;
    row.spread = spread;
    row.imbalance_best = z.imbalance_best;
    row.lambda_exec = r.exec;
    row.lambda_cancel = r.cancel;
    row.cif_exec = competing_cif(r.exec, r.cancel, c_.horizon);
    row.cif_cancel = competing_cif(r.cancel, r.exec, c_.horizon);
    row.post_and_wait = post_and_wait_probability(r.exec, c_.horizon);
    out_.truth.push_back(row);
    ++out_.stats.probes;
  }

  void fire_clock(const Clock& ck) {
    const auto it = probes_.find(ck.id);
    if (it == probes_.end()) return;
    const Probe pr = it->second;
    probes_.erase(it);
    if (ck.exec) {
      emit(ck.t, MessageKind::Execute, ck.id, pr.side, pr.price, 0.0, pr.size);
      ++out_.stats.clock_fills;
    } else {
      emit(ck.t, MessageKind::Cancel, ck.id, pr.side, pr.price, 0.0);
      ++out_.stats.clock_cancels;
    }
  }

  void market_order(double t) {
    const double drift = c_.price.regime_drifts[regime_];
    const double sign = drift > 0.0 ? 1.0 : (drift < 0.0 ? -1.0 : 0.0);
    const bool sell = uniform01(rng_) < 0.5 - c_.price.flow_tilt * sign;
    const OrderId anchor = sell ? bid_anchor_ : ask_anchor_;
    const auto loc = book_.find(anchor);
    const auto left = book_.remaining(anchor);
    if (!loc || !left || *left <= 1.0) return;
    emit(t, MessageKind::Execute, anchor, loc->side, loc->price, 0.0, 1.0);
    ++out_.stats.market_orders;
  }

  void switch_regime() {
    const std::size_t n = c_.price.regime_drifts.size();
    regime_ = (regime_ + 1 + static_cast<std::size_t>(rng_() % (n - 1))) % n;
    ++out_.stats.regime_switches;
  }

  void gap() {
    next_seq_ += 1 + rng_() % 3;
    book_.resync(next_seq_);
    ++out_.stats.gaps;
  }

  const GroundTruthConfig& c_;
  double duration_;
  std::mt19937_64 rng_;
  OrderBook book_;
  SynthFlow out_;
  std::uint64_t next_seq_ = 1;
  OrderId next_id_ = 1;
  OrderId bid_anchor_ = 0;
  OrderId ask_anchor_ = 0;
  Ticks ref_ = 0;
  std::size_t regime_ = 0;
  std::map<OrderId, Probe> probes_;
  std::set<OrderId> crossed_;
  std::priority_queue<Clock, std::vector<Clock>, std::greater<>> clocks_;
};

}  // namespace detail

inline SynthFlow generate_flow(const GroundTruthConfig& config, double duration) {
  validate(config);
  if (!(std::isfinite(duration) && duration > 0.0)) fail(ErrorCode::ConfigInvalid, "duration must be positive");
  return detail::FlowBuilder(config, duration).run();
}

inline std::string format_truth_csv(const std::vector<TruthRow>& rows) {
  std::string out =
      "order_id,side,insert_ts_ns,delta,spread,imbalance_best,lambda_exec,lambda_cancel,cif_exec_T,cif_cancel_T,"
      "post_and_wait_T,crossed\n";
  using text::format_double;
  for (const auto& r : rows) {
    out += std::to_string(r.order_id) + ',' + (r.side == Side::Bid ? "bid" : "ask") + ',' +
           std::to_string(r.insert_ts_ns) + ',' + std::to_string(r.delta) + ',' + std::to_string(r.spread) + ',' +
           format_double(r.imbalance_best) + ',' + format_double(r.lambda_exec) + ',' + format_double(r.lambda_cancel) +
           ',' + format_double(r.cif_exec) + ',' + format_double(r.cif_cancel) + ',' + format_double(r.post_and_wait) +
           ',' + (r.crossed ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace lobfill
