#include <gtest/gtest.h>

#include <random>

#include "lobfill/cleanup_model.hpp"
#include "lobfill/lifecycle.hpp"
#include "test_util.hpp"

namespace lobfill {
namespace {

using testing::kMs;
using testing::kSec;
using testing::Script;

OrderLifecycle rec(Outcome o, double t, std::optional<double> move, double delta = 1.0) {
  OrderLifecycle r;
  r.outcome = o;
  r.outcome_time = t;
  r.horizon_move = move;
  r.features.delta = delta;
  r.features.spread = 4.0;
  r.features.spread_after = 4.0;
  r.features.volatility = delta;
  return r;
}

TEST(CleanupSamples, FilledBeforeHorizonExcluded) {
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Filled, 0.3, std::nullopt), rec(Outcome::Cancelled, 1.7, 2.0)};
  CleanupExclusions ex;
  const auto s = collect_cleanup_samples(rs, 1.0, &ex);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].record, 1u);
  EXPECT_EQ(s[0].target, 2.0);
  EXPECT_EQ(ex.filled_before_horizon, 1u);
  EXPECT_EQ(ex.cancelled_before_horizon, 0u);
}

TEST(CleanupSamples, ExclusionReasonsAreCounted) {
  const std::vector<OrderLifecycle> rs = {
      rec(Outcome::Filled, 0.5, std::nullopt),    rec(Outcome::Cancelled, 0.2, std::nullopt),
      rec(Outcome::Censored, 0.9, std::nullopt),  rec(Outcome::Censored, 1.5, std::nullopt),
      rec(Outcome::Filled, 1.2, -1.0),            rec(Outcome::Censored, 1.0, std::nullopt)};
  CleanupExclusions ex;
  const auto s = collect_cleanup_samples(rs, 1.0, &ex);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].target, -1.0);
  EXPECT_EQ(ex.filled_before_horizon, 1u);
  EXPECT_EQ(ex.cancelled_before_horizon, 1u);
  EXPECT_EQ(ex.censored_before_horizon, 2u);
  EXPECT_EQ(ex.missing_move, 1u);
}

TEST(CleanupSamples, ScriptedDayMatchesHandList) {
  Script s;
  s.add(0, 100, Side::Bid, 10000, 5)
      .add(0, 101, Side::Ask, 10004, 5)
      .add(1 * kSec, 1, Side::Bid, 10001, 1)
      .add(1 * kSec, 2, Side::Bid, 9999, 1)
      .add(1 * kSec + 100 * kMs, 3, Side::Bid, 9998, 1)
      .execute(1 * kSec + 300 * kMs, 1, Side::Bid, 10001, 1)
      .cancel(1 * kSec + 500 * kMs, 2, Side::Bid, 9999)
      .add(1 * kSec + 800 * kMs, 110, Side::Ask, 10003, 1)
      .add(2 * kSec, 4, Side::Bid, 9997, 1)
      .cancel(2 * kSec + 500 * kMs, 110, Side::Ask, 10003)
      .add(2 * kSec + 500 * kMs, 6, Side::Bid, 9995, 1)
      .cancel(3 * kSec, 3, Side::Bid, 9998)
      .add(3 * kSec + 500 * kMs, 5, Side::Bid, 9996, 1)
      .cancel(4 * kSec, 4, Side::Bid, 9997);
  TrackerConfig cfg;
  cfg.horizon = 1.0;
  const auto res = track_lifecycles(s.messages(), cfg);
  CleanupExclusions ex;
  const auto samples = collect_cleanup_samples(res.records, 1.0, &ex);
  std::vector<std::pair<OrderId, double>> got;
  for (const auto& x : samples) got.emplace_back(res.records[x.record].order_id, x.target);
  const std::vector<std::pair<OrderId, double>> want = {{3, -1.0}, {4, 1.0}, {6, 0.0}};
  EXPECT_EQ(got, want);
  EXPECT_EQ(ex.filled_before_horizon, 1u);     // order 1
  EXPECT_EQ(ex.cancelled_before_horizon, 2u);  // orders 2 and 110
  EXPECT_EQ(ex.censored_before_horizon, 1u);   // order 5
  EXPECT_EQ(ex.missing_move, 0u);
}

std::vector<CleanupSample> samples_from(const std::vector<std::pair<double, double>>& vol_target) {
  std::vector<CleanupSample> out;
  for (std::size_t i = 0; i < vol_target.size(); ++i) {
    CleanupSample s;
    s.record = i;
    s.features.volatility = vol_target[i].first;
    s.target = vol_target[i].second;
    out.push_back(s);
  }
  return out;
}

TEST(BucketEstimate, SingleBucketEqualsGlobalMean) {
  const auto s = samples_from({{0.1, 1.0}, {0.2, -2.0}, {0.3, 4.0}, {0.9, 3.0}});
  const auto c = bucket_estimate(s, {"volatility", {0.0, 1.0}}, 1);
  ASSERT_EQ(c.buckets.size(), 1u);
  EXPECT_DOUBLE_EQ(c.buckets[0].estimate.mean, constant_cleanup(s));
  EXPECT_EQ(c.buckets[0].estimate.count, 4u);
  // Sample sd of {1,-2,4,3} is sqrt(7); SE = sqrt(7)/2.
  EXPECT_NEAR(c.buckets[0].estimate.standard_error, std::sqrt(7.0) / 2.0, 1e-12);
}

TEST(BucketEstimate, PartitionConsistency) {
  std::mt19937_64 rng(3);
  std::vector<std::pair<double, double>> v;
  for (int i = 0; i < 500; ++i) v.emplace_back(uniform01(rng), std::round(6.0 * uniform01(rng) - 3.0));
  const auto s = samples_from(v);
  const auto fine = bucket_estimate(s, {"volatility", {0.0, 0.25, 0.5, 0.75, 1.0}}, 1);
  const auto coarse = bucket_estimate(s, {"volatility", {0.0, 0.5, 1.0}}, 1);
  ASSERT_EQ(fine.buckets.size(), 4u);
  ASSERT_EQ(coarse.buckets.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    const auto& a = fine.buckets[2 * k].estimate;
    const auto& b = fine.buckets[2 * k + 1].estimate;
    const double pooled = (a.mean * static_cast<double>(a.count) + b.mean * static_cast<double>(b.count)) /
                          static_cast<double>(a.count + b.count);
    EXPECT_NEAR(coarse.buckets[k].estimate.mean, pooled, 1e-12);
    EXPECT_EQ(coarse.buckets[k].estimate.count, a.count + b.count);
  }
}

TEST(BucketEstimate, SparseBucketsOmittedAndReported) {
  const auto s = samples_from({{0.1, 1.0}, {0.2, 1.0}, {0.7, 5.0}, {2.0, 0.0}});
  const auto c = bucket_estimate(s, {"volatility", {0.0, 0.5, 1.0}}, 2);
  ASSERT_EQ(c.buckets.size(), 1u);
  ASSERT_EQ(c.omitted.size(), 1u);
  EXPECT_EQ(c.omitted[0], std::make_pair(std::size_t{1}, std::size_t{1}));
  EXPECT_EQ(c.unbucketed, 1u);
  EXPECT_EQ(format_cleanup_curve_csv(c), "volatility_lo,volatility_hi,count,mean,standard_error\n0,0.5,2,1,0\n");
}

TEST(BucketEstimate, ConstantOfEmptySetFails) {
  try {
    constant_cleanup(std::vector<CleanupSample>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Winsorize, ClampsTails) {
  std::vector<double> v;
  for (int i = 0; i <= 1000; ++i) v.push_back(static_cast<double>(i));
  v.push_back(1e9);
  // 1002 values: the 0.1% and 99.9% quantiles are 1.001 and 999.999.
  const std::size_t moved = winsorize(v, 0.001, 0.999);
  EXPECT_EQ(moved, 4u);
  EXPECT_DOUBLE_EQ(v[0], 1.001);
  EXPECT_GT(v.front(), 0.0);
  EXPECT_LT(v.back(), 1e9);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.9), 5.0);
}

TEST(Units, TickConversions) {
  EXPECT_DOUBLE_EQ(ticks_to_quote(200.0, 0.01), 2.0);
  EXPECT_NEAR(ticks_to_bps(200.0, 0.01, 20000.0), 1.0, 1e-12);
  EXPECT_THROW(ticks_to_bps(1.0, 0.01, 0.0), Error);
}

CleanupTrainConfig quick_config() {
  CleanupTrainConfig c;
  c.train.hidden = {16, 16};
  c.train.batch_size = 32;
  c.train.learning_rate = 0.01;
  c.train.max_epochs = 100;
  c.train.patience = 100;
  c.train.seed = 5;
  return c;
}

TEST(TrainCleanup, ConstantTargetIsReproduced) {
  std::mt19937_64 rng(7);
  std::vector<CleanupSample> s;
  for (int i = 0; i < 400; ++i) {
    CleanupSample x;
    x.features.delta = std::round(10.0 * uniform01(rng));
    x.features.volatility = uniform01(rng);
    x.features.imbalance_best = uniform01(rng) - 0.5;
    x.target = 1.75;
    s.push_back(x);
  }
  CleanupTrainReport rep;
  const auto m = train_cleanup_model(s, quick_config(), &rep);
  EXPECT_EQ(m.kind, "cleanup");
  EXPECT_EQ(rep.constant, 1.75);
  EXPECT_EQ(rep.winsorized, 0u);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(m.predict(s[static_cast<std::size_t>(i)].features), 1.75, 1e-3);
}

TEST(TrainCleanup, ZeroNetworkPredictsZero) {
  RegimeNetwork m;
  m.kind = "cleanup";
  m.features = model_feature_names();
  m.nets.push_back(Mlp::zeros(Mlp::default_layers(m.features.size()), OutputActivation::Identity));
  EXPECT_EQ(m.predict(FeatureVector{}), 0.0);
}

TEST(TrainCleanup, GradientCheckOnTrainedRegressor) {
  std::mt19937_64 rng(11);
  std::vector<CleanupSample> s;
  for (int i = 0; i < 300; ++i) {
    CleanupSample x;
    x.features.volatility = uniform01(rng);
    x.features.delta = std::round(5.0 * uniform01(rng));
    x.target = 4.0 * x.features.volatility + (uniform01(rng) - 0.5);
    s.push_back(x);
  }
  auto cfg = quick_config();
  cfg.train.max_epochs = 10;
  const auto m = train_cleanup_model(s, cfg);
  Dataset d;
  d.dim = kModelFeatureNames.size();
  for (int i = 0; i < 30; ++i) d.push(model_inputs(s[static_cast<std::size_t>(i)].features), s[static_cast<std::size_t>(i)].target);
  const auto res = gradient_check(m.nets[0], m.nets[0].standardizer().apply(d), 500, 1);
  EXPECT_GT(res.checked, 100u);
  EXPECT_LE(res.max_relative_error, 1e-4);
}

TEST(TrainCleanup, PartialWindowRowsExcludedByDefault) {
  std::vector<CleanupSample> s;
  for (int i = 0; i < 50; ++i) {
    CleanupSample x;
    x.features.partial_window = i < 5;
    x.features.delta = static_cast<double>(i % 4);
    x.target = static_cast<double>(i % 3);
    s.push_back(x);
  }
  CleanupTrainReport rep;
  auto cfg = quick_config();
  cfg.train.max_epochs = 2;
  train_cleanup_model(s, cfg, &rep);
  EXPECT_EQ(rep.excluded_partial_window, 5u);
  EXPECT_EQ(rep.rows, 45u);
  EXPECT_NO_THROW((void)rep.to_json().dump());
}

TEST(TrainCleanup, Deterministic) {
  std::vector<CleanupSample> s;
  for (int i = 0; i < 100; ++i) {
    CleanupSample x;
    x.features.delta = static_cast<double>(i % 7);
    x.target = static_cast<double>(i % 5) - 2.0;
    s.push_back(x);
  }
  auto cfg = quick_config();
  cfg.train.max_epochs = 5;
  EXPECT_EQ(train_cleanup_model(s, cfg).to_json(), train_cleanup_model(s, cfg).to_json());
}

}  // namespace
}  // namespace lobfill
