#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>

#include "lobfill/lifecycle.hpp"
#include "lobfill/message_io.hpp"
#include "lobfill/synth_flow.hpp"

namespace lobfill {
namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

GroundTruthConfig busy_config() {
  GroundTruthConfig c;
  c.seed = 7;
  c.hazard.exec_imbalance = 0.3;
  c.hazard.exec_wide_spread = 0.7;
  c.hazard.cancel_delta_slope = 0.1;
  c.price.step_rate = 2.0;
  c.price.regime_drifts = {-1.0, 0.0, 1.0};
  c.price.regime_switch_rate = 0.05;
  c.price.flow_tilt = 0.3;
  c.gap_rate = 0.02;
  return c;
}

/// Probe with rates exec + cancel whatever its placement.
GroundTruthConfig flat_config(double exec, double cancel) {
  GroundTruthConfig c;
  c.seed = 11;
  c.hazard.exec_base = exec;
  c.hazard.exec_delta_decay = 0.0;
  c.hazard.exec_aggressive_boost = 0.0;
  c.hazard.cancel_base = cancel;
  c.price.step_rate = 0.0;
  c.probe_rate = 20.0;
  return c;
}

TEST(TrueFill, ClosedForms) {
  EXPECT_DOUBLE_EQ(competing_cif(1.3, 0.0, 0.7), 1.0 - std::exp(-1.3 * 0.7));
  EXPECT_NEAR(competing_cif(0.8, 0.8, 1e3), 0.5, 1e-15);
  EXPECT_NEAR(competing_cif(2.0, 1.0, 1.0), 2.0 / 3.0 * (1.0 - std::exp(-3.0)), 1e-15);
  EXPECT_DOUBLE_EQ(post_and_wait_probability(2.0, 1.0), 1.0 - std::exp(-2.0));
  EXPECT_EQ(competing_cif(0.0, 0.0, 1.0), 0.0);
}

TEST(TrueFill, UsesPlantedRates) {
  GroundTruthConfig c;
  c.hazard.exec_base = 2.0;
  c.hazard.exec_delta_decay = 0.0;
  c.hazard.cancel_base = 1.0;
  const auto f = true_fill_probability(c, {Side::Bid, 3, 4, 0.0}, 1.0);
  EXPECT_NEAR(f.cif, 2.0 / 3.0 * (1.0 - std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(f.post_and_wait, 1.0 - std::exp(-2.0), 1e-15);
}

TEST(Hazard, StrictlyDecreasingInDistance) {
  HazardConfig h;
  for (Ticks spread = 2; spread <= 8; ++spread) {
    double prev = std::numeric_limits<double>::infinity();
    for (Ticks d = -(spread - 1); d <= 10; ++d) {
      const double rate = hazard_rates(h, {Side::Bid, d, spread, 0.0}).exec;
      EXPECT_LT(rate, prev) << "spread " << spread << " delta " << d;
      prev = rate;
    }
  }
}

TEST(Hazard, ImbalanceIsOrientedBySide) {
  HazardConfig h;
  h.exec_imbalance = 0.5;
  const double heavy_bid = hazard_rates(h, {Side::Bid, 0, 2, 0.8}).exec;
  const double light_bid = hazard_rates(h, {Side::Bid, 0, 2, -0.8}).exec;
  EXPECT_DOUBLE_EQ(heavy_bid, 0.5);
  EXPECT_DOUBLE_EQ(light_bid, 1.5);
  EXPECT_DOUBLE_EQ(hazard_rates(h, {Side::Ask, 0, 2, -0.8}).exec, heavy_bid);
}

TEST(SampleCompeting, RespectsDisabledClocks) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(sample_competing_exponential(rng, 1.0, 0.0, 0.0).cause, Cause::Execution);
  }
}

TEST(GenerateFlow, ReplaysCleanlyWithGapsAndRegimes) {
  const auto flow = generate_flow(busy_config(), 600.0);
  ASSERT_GT(flow.stats.probes, 2000u);
  EXPECT_GT(flow.stats.crossing_fills, 0u);
  EXPECT_GT(flow.stats.gaps, 0u);
  EXPECT_GT(flow.stats.regime_switches, 0u);

  OrderBook book;
  for (const auto& m : flow.messages) {
    if (book.last_seq() && m.seq != *book.last_seq() + 1) book.resync(m.seq);
    ASSERT_NO_THROW(book.apply(m)) << "seq " << m.seq;
  }
  for (std::size_t i = 1; i < flow.messages.size(); ++i) {
    ASSERT_LE(flow.messages[i - 1].ts_ns, flow.messages[i].ts_ns);
  }

  const auto tracked = track_lifecycles(flow.messages, TrackerConfig{});
  EXPECT_EQ(tracked.report.crossed_rejected, 0u);
  EXPECT_EQ(tracked.report.sequence_gaps, flow.stats.gaps);

  std::uint64_t crossed = 0;
  for (const auto& r : flow.truth) crossed += r.crossed ? 1 : 0;
  EXPECT_EQ(crossed, flow.stats.crossing_fills);
}

TEST(GenerateFlow, TruthMatchesTrackerFeatures) {
  const auto flow = generate_flow(busy_config(), 300.0);
  const auto tracked = track_lifecycles(flow.messages, TrackerConfig{});
  std::map<OrderId, const OrderLifecycle*> by_id;
  for (const auto& r : tracked.records) by_id[r.order_id] = &r;
  std::size_t matched = 0;
  for (const auto& t : flow.truth) {
    const auto it = by_id.find(t.order_id);
    if (it == by_id.end()) continue;
    ++matched;
    const auto& f = it->second->features;
    EXPECT_EQ(f.delta, static_cast<double>(t.delta));
    EXPECT_EQ(f.spread, static_cast<double>(t.spread));
    EXPECT_EQ(f.imbalance_best, t.imbalance_best);
    EXPECT_EQ(it->second->side, t.side);
  }
  EXPECT_EQ(matched, flow.truth.size());
}

TEST(GenerateFlow, ZeroCancellationHazardEmitsNoCancels) {
  auto c = flat_config(1.0, 0.0);
  const auto flow = generate_flow(c, 200.0);
  ASSERT_GT(flow.stats.clock_fills, 1000u);
  for (const auto& m : flow.messages) EXPECT_NE(m.kind, MessageKind::Cancel);
}

TEST(GenerateFlow, FixedSeedIsByteIdentical) {
  const auto a = format_messages_csv(generate_flow(busy_config(), 120.0).messages);
  const auto b = format_messages_csv(generate_flow(busy_config(), 120.0).messages);
  EXPECT_EQ(a, b);
  const auto ta = format_truth_csv(generate_flow(busy_config(), 120.0).truth);
  const auto tb = format_truth_csv(generate_flow(busy_config(), 120.0).truth);
  EXPECT_EQ(ta, tb);
  auto other = busy_config();
  other.seed = 8;
  EXPECT_NE(a, format_messages_csv(generate_flow(other, 120.0).messages));
}

TEST(GenerateFlow, MeanLifetimeMatchesRate) {
  const double rate = 1.5;
  const double duration = 600.0;
  const auto flow = generate_flow(flat_config(1.0, 0.5), duration);
  std::set<OrderId> probes;
  for (const auto& t : flow.truth) probes.insert(t.order_id);

  const std::int64_t cutoff = static_cast<std::int64_t>((duration - 20.0 / rate) * 1e9);
  std::map<OrderId, std::int64_t> born;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& m : flow.messages) {
    if (!probes.contains(m.order_id)) continue;
    if (m.kind == MessageKind::Add) {
      if (m.ts_ns <= cutoff) born[m.order_id] = m.ts_ns;
      continue;
    }
    const auto it = born.find(m.order_id);
    if (it == born.end()) continue;
    total += static_cast<double>(m.ts_ns - it->second) * 1e-9;
    ++n;
    born.erase(it);
  }
  ASSERT_GE(n, 10000u);
  EXPECT_TRUE(born.empty());
  EXPECT_NEAR(total / static_cast<double>(n), 1.0 / rate, 0.02 / rate);
}

TEST(GenerateFlow, RejectsInvalidConfig) {
  auto c = busy_config();
  c.probe_rate = 0.0;
  EXPECT_EQ(code_of([&] { generate_flow(c, 10.0); }), ErrorCode::ConfigInvalid);
  c = busy_config();
  c.price.regime_drifts = {3.0};
  EXPECT_EQ(code_of([&] { generate_flow(c, 10.0); }), ErrorCode::ConfigInvalid);
  c = busy_config();
  c.hazard.cancel_base = -1.0;
  EXPECT_EQ(code_of([&] { generate_flow(c, 10.0); }), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code_of([&] { generate_flow(busy_config(), 0.0); }), ErrorCode::ConfigInvalid);
}

TEST(TruthCsv, HeaderAndRow) {
  TruthRow r;
  r.order_id = 5;
  r.delta = -1;
  r.spread = 3;
  r.lambda_exec = 2.0;
  r.lambda_cancel = 1.0;
  r.cif_exec = 0.5;
  r.crossed = true;
  const auto csv = format_truth_csv({r});
  EXPECT_EQ(csv,
            "order_id,side,insert_ts_ns,delta,spread,imbalance_best,lambda_exec,lambda_cancel,cif_exec_T,cif_cancel_T,"
            "post_and_wait_T,crossed\n5,bid,0,-1,3,0,2,1,0.5,0,0,1\n");
}

}  // namespace
}  // namespace lobfill
