#include <gtest/gtest.h>

#include <random>

#include "lobfill/fill_model.hpp"

namespace lobfill {
namespace {

OrderLifecycle rec(Outcome outcome, double t, double delta = 1.0, double spread = 4.0) {
  OrderLifecycle r;
  r.outcome = outcome;
  r.outcome_time = t;
  r.features.delta = delta;
  r.features.spread = spread;
  r.features.spread_after = delta < 0 ? spread + delta : spread;
  if (delta < 0 && spread > 1) r.features.omega = delta / (1.0 - spread);
  r.features.size = 1.0;
  return r;
}

CensoringStrata pooled_only() {
  CensoringStrata s;
  s.enabled = false;
  return s;
}

TEST(CensoringModel, NoCensoringGivesUnitCurve) {
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Filled, 0.1), rec(Outcome::Filled, 0.5),
                                          rec(Outcome::Filled, 2.0)};
  const auto g = CensoringModel::fit(rs, pooled_only());
  for (double t : {0.0, 0.1, 0.5, 1.0, 5.0}) EXPECT_EQ(g.survival_at(rs[0].features, t), 1.0);
}

TEST(CensoringModel, SwapRolesToyOfFour) {
  // Censoring deaths at 0.2 (cancel) and 0.7 (censor); executions leave the risk set.
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Cancelled, 0.2), rec(Outcome::Filled, 0.5),
                                          rec(Outcome::Censored, 0.7), rec(Outcome::Filled, 1.0)};
  const auto g = CensoringModel::fit(rs, pooled_only());
  const auto& f = rs[0].features;
  EXPECT_DOUBLE_EQ(g.survival_at(f, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(g.survival_at(f, 0.2), 0.75);
  EXPECT_DOUBLE_EQ(g.survival_at(f, 0.6), 0.75);
  EXPECT_DOUBLE_EQ(g.survival_at(f, 0.7), 0.375);
  EXPECT_DOUBLE_EQ(g.survival_at(f, 2.0), 0.375);
  EXPECT_DOUBLE_EQ(g.survival_before(f, 0.7), 0.75);
}

TEST(CensoringModel, EmptyInput) {
  try {
    CensoringModel::fit(std::vector<OrderLifecycle>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(CensoringModel, IdenticalStrataMatchPooled) {
  const std::vector<std::pair<Outcome, double>> base = {
      {Outcome::Cancelled, 0.2}, {Outcome::Filled, 0.3}, {Outcome::Censored, 0.9},
      {Outcome::Cancelled, 1.4}, {Outcome::Filled, 0.6}, {Outcome::Cancelled, 0.6}};
  std::vector<OrderLifecycle> rs;
  for (double delta : {2.0, 0.0, -1.0}) {
    for (const auto& [o, t] : base) rs.push_back(rec(o, t, delta));
  }
  CensoringStrata cfg;
  cfg.delta_edges = {5.0};
  const auto g = CensoringModel::fit(rs, cfg);
  EXPECT_EQ(g.stratum_count(), 3u);
  for (const auto& r : rs) {
    for (double t : {0.1, 0.2, 0.6, 0.9, 1.4, 3.0}) {
      EXPECT_DOUBLE_EQ(g.survival_at(r.features, t), g.pooled().value(t));
    }
  }
}

TEST(CensoringModel, StrataFollowRegimeAndBuckets) {
  std::vector<OrderLifecycle> rs;
  for (int i = 1; i <= 20; ++i) rs.push_back(rec(Outcome::Cancelled, 0.1 * i, static_cast<double>(i)));
  rs.push_back(rec(Outcome::Filled, 0.5, 0.0));
  rs.push_back(rec(Outcome::Cancelled, 0.5, -1.0, 4.0));  // omega 1/3
  rs.push_back(rec(Outcome::Cancelled, 0.5, -2.0, 4.0));  // omega 2/3
  const auto g = CensoringModel::fit(rs);
  EXPECT_EQ(g.config().delta_edges.size(), 9u);
  EXPECT_EQ(g.stratum(rs[0].features).first, 0);
  EXPECT_NE(g.stratum(rs[0].features), g.stratum(rs[19].features));
  EXPECT_EQ(g.stratum(rs[20].features), std::make_pair(1, 0));
  EXPECT_EQ(g.stratum(rs[21].features), std::make_pair(2, 1));
  EXPECT_EQ(g.stratum(rs[22].features), std::make_pair(2, 2));
  // A stratum with no fitting data falls back to the pooled curve.
  const auto absent = rec(Outcome::Filled, 1.0, -0.5, 20.0);
  EXPECT_EQ(&g.curve(absent.features), &g.pooled());
}

TEST(Ipcw, NoCensoringGivesUnitWeights) {
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Filled, 0.1), rec(Outcome::Filled, 0.9),
                                          rec(Outcome::Filled, 1.5), rec(Outcome::Filled, 3.0)};
  const auto g = CensoringModel::fit(rs, pooled_only());
  const auto w = ipcw_weights(rs, g, {1.0, 0.01});
  EXPECT_EQ(w.weights, (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(w.labels, (std::vector<double>{1, 1, 0, 0}));
}

TEST(Ipcw, SurvivorWeightIsReciprocalOfCensoringSurvival) {
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Cancelled, 0.5), rec(Outcome::Cancelled, 2.0)};
  const auto g = CensoringModel::fit(rs, pooled_only());
  EXPECT_DOUBLE_EQ(g.survival_at(rs[1].features, 1.0), 0.5);
  const auto w = ipcw_weights(rs, g, {1.0, 0.01});
  EXPECT_EQ(w.weights[0], 0.0);
  EXPECT_DOUBLE_EQ(w.weights[1], 2.0);
  EXPECT_EQ(w.labels[1], 0.0);
  EXPECT_EQ(w.zero_weight, 1u);
}

TEST(Ipcw, WeightedFillFractionEqualsKaplanMeier) {
  const std::vector<OrderLifecycle> rs = {rec(Outcome::Filled, 0.1),   rec(Outcome::Cancelled, 0.3),
                                          rec(Outcome::Filled, 0.4),   rec(Outcome::Censored, 0.6),
                                          rec(Outcome::Filled, 0.8),   rec(Outcome::Cancelled, 1.5)};
  const auto g = CensoringModel::fit(rs, pooled_only());
  const auto w = ipcw_weights(rs, g, {1.0, 0.01});
  EXPECT_EQ(w.floored, 0u);
  double num = 0.0, total = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    num += w.weights[i] * w.labels[i];
    total += w.weights[i];
  }
  std::vector<Observation> obs;
  for (const auto& r : rs) obs.push_back(to_observation(r));
  const double km_fill = 1.0 - post_and_wait_fill(obs).value(1.0);
  EXPECT_NEAR(km_fill, 0.6875, 1e-12);
  EXPECT_NEAR(num / static_cast<double>(rs.size()), km_fill, 1e-12);
  EXPECT_NEAR(total, static_cast<double>(rs.size()), 1e-12);
}

TEST(Ipcw, IdentityHoldsOnRandomTiedData) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<OrderLifecycle> rs;
    const int n = 5 + static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      const double t = 0.25 * static_cast<double>(1 + rng() % 8);
      const auto o = static_cast<Outcome>(rng() % 3);
      rs.push_back(rec(o, t));
    }
    const auto g = CensoringModel::fit(rs, pooled_only());
    const auto w = ipcw_weights(rs, g, {1.0, 0.01});
    double num = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) num += w.weights[i] * w.labels[i];
    std::vector<Observation> obs;
    for (const auto& r : rs) obs.push_back(to_observation(r));
    EXPECT_NEAR(num / n, 1.0 - post_and_wait_fill(obs).value(1.0), 1e-12) << "trial " << trial;
    double total = 0.0;
    for (double x : w.weights) total += x;
    EXPECT_NEAR(total, n, 1e-9) << "trial " << trial;
  }
}

TEST(Ipcw, FloorCapsWeights) {
  std::vector<OrderLifecycle> rs;
  for (int i = 0; i < 200; ++i) rs.push_back(rec(Outcome::Cancelled, 0.001 * (i + 1)));
  rs.push_back(rec(Outcome::Filled, 0.9));
  const auto g = CensoringModel::fit(rs, pooled_only());
  const auto w = ipcw_weights(rs, g, {1.0, 0.01});
  EXPECT_EQ(w.floored, 1u);
  EXPECT_DOUBLE_EQ(w.weights.back(), 100.0);
}

TEST(RegimeNetwork, ZeroNetworkPredictsHalf) {
  RegimeNetwork m;
  m.kind = "fill";
  m.features = model_feature_names();
  m.nets.push_back(Mlp::zeros(Mlp::default_layers(m.features.size()), OutputActivation::Sigmoid));
  EXPECT_EQ(m.predict(rec(Outcome::Filled, 1.0, 3.0).features), 0.5);
}

TEST(RegimeNetwork, MissingNetworkIsUnavailable) {
  RegimeNetwork m;
  m.kind = "fill";
  try {
    m.predict(FeatureVector{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelUnavailable);
  }
}

TEST(RegimeNetwork, SplitModeRoutesByDistance) {
  RegimeNetwork m;
  m.kind = "cleanup";
  m.mode = RegimeMode::Split;
  m.features = model_feature_names();
  for (double bias : {1.0, 2.0, 3.0}) {
    Mlp net = Mlp::zeros(Mlp::default_layers(m.features.size()), OutputActivation::Identity);
    net.parameters().back() = bias;
    m.nets.push_back(net);
  }
  EXPECT_EQ(m.predict(rec(Outcome::Filled, 1.0, 2.0).features), 1.0);
  EXPECT_EQ(m.predict(rec(Outcome::Filled, 1.0, 0.0).features), 2.0);
  EXPECT_EQ(m.predict(rec(Outcome::Filled, 1.0, -1.0).features), 3.0);
}

TEST(RegimeNetwork, JsonRoundTrip) {
  RegimeNetwork m;
  m.kind = "fill";
  m.mode = RegimeMode::Split;
  m.horizon = 2.5;
  m.baseline = 0.25;
  m.features = model_feature_names();
  for (std::uint64_t s = 1; s <= 3; ++s) m.nets.emplace_back(Mlp::default_layers(m.features.size()), OutputActivation::Sigmoid, s);
  const auto back = RegimeNetwork::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.kind, m.kind);
  EXPECT_EQ(back.mode, m.mode);
  EXPECT_EQ(back.horizon, m.horizon);
  EXPECT_EQ(back.baseline, m.baseline);
  EXPECT_EQ(back.features, m.features);
  ASSERT_EQ(back.nets.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.nets[i], m.nets[i]);
  const auto z = rec(Outcome::Filled, 1.0, -1.0).features;
  EXPECT_EQ(back.predict(z), m.predict(z));
}

TEST(RegimeNetwork, MalformedFilesAreRejected) {
  RegimeNetwork m;
  m.kind = "fill";
  m.features = model_feature_names();
  m.nets.emplace_back(Mlp::default_layers(m.features.size()), OutputActivation::Sigmoid, 1);
  auto j = m.to_json();
  auto bad_format = j;
  bad_format["format"] = "other";
  auto bad_count = j;
  bad_count["regime"] = "split";
  auto bad_version = j;
  bad_version["version"] = 99;
  for (const auto& b : {bad_format, bad_count, bad_version}) {
    try {
      RegimeNetwork::from_json(b);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ParseError);
    }
  }
  auto bad_dim = j;
  bad_dim["features"].erase(0);
  EXPECT_THROW(RegimeNetwork::from_json(bad_dim), Error);
}

TEST(RegimeMode, Parse) {
  EXPECT_EQ(parse_regime_mode("pooled"), RegimeMode::Pooled);
  EXPECT_EQ(parse_regime_mode("split"), RegimeMode::Split);
  EXPECT_THROW(parse_regime_mode("three"), Error);
}

// Fill probability decreasing in delta; cancellations independent of it.
std::vector<OrderLifecycle> planted_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OrderLifecycle> rs;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = static_cast<double>(static_cast<int>(rng() % 9) - 2);
    const double exec_rate = 2.0 * std::exp(-0.5 * (delta + 2.0));
    const double e = -std::log(1.0 - uniform01(rng)) / exec_rate;
    const double c = -std::log(1.0 - uniform01(rng)) / 0.7;
    auto r = e < c ? rec(Outcome::Filled, e, delta, 6.0) : rec(Outcome::Cancelled, c, delta, 6.0);
    r.features.partial_window = i < 10;
    r.features.imbalance_best = uniform01(rng) - 0.5;
    rs.push_back(r);
  }
  return rs;
}

FillTrainConfig quick_fill_config() {
  FillTrainConfig c;
  c.train.hidden = {16, 16};
  c.train.batch_size = 64;
  c.train.learning_rate = 0.02;
  c.train.max_epochs = 30;
  c.train.seed = 3;
  return c;
}

TEST(TrainFillModel, PooledModelLearnsDistanceEffect) {
  const auto rs = planted_records(4000, 9);
  FillTrainReport rep;
  const auto m = train_fill_model(rs, quick_fill_config(), &rep);
  EXPECT_EQ(m.kind, "fill");
  EXPECT_EQ(m.nets.size(), 1u);
  EXPECT_EQ(rep.excluded_partial_window, 10u);
  EXPECT_EQ(rep.rows, 3990u);
  EXPECT_GT(rep.zero_weight, 0u);
  ASSERT_EQ(rep.importance.size(), 1u);
  EXPECT_EQ(rep.importance[0].front().name, "delta");
  FeatureVector near = rs[0].features, far = rs[0].features;
  near.delta = -1.0;
  near.omega = 0.2;
  far.delta = 6.0;
  far.omega.reset();
  EXPECT_GT(m.predict(near), m.predict(far));
  EXPECT_NO_THROW((void)rep.to_json().dump());
}

TEST(TrainFillModel, SplitModelTrainsThreeNetworks) {
  const auto rs = planted_records(3000, 11);
  FillTrainConfig c = quick_fill_config();
  c.regime = RegimeMode::Split;
  c.importance_repeats = 0;
  FillTrainReport rep;
  const auto m = train_fill_model(rs, c, &rep);
  EXPECT_EQ(m.nets.size(), 3u);
  EXPECT_EQ(rep.nets.size(), 3u);
  EXPECT_TRUE(rep.importance.empty());
}

TEST(TrainFillModel, Deterministic) {
  const auto rs = planted_records(1000, 13);
  const auto a = train_fill_model(rs, quick_fill_config());
  const auto b = train_fill_model(rs, quick_fill_config());
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(TrainFillModel, BaselineIsWeightedFillRate) {
  const auto rs = planted_records(2000, 17);
  FillTrainConfig c = quick_fill_config();
  c.exclude_partial_window = false;
  c.importance_repeats = 0;
  c.strata.enabled = false;
  const auto m = train_fill_model(rs, c);
  std::vector<Observation> obs;
  for (const auto& r : rs) obs.push_back(to_observation(r));
  EXPECT_NEAR(m.baseline, 1.0 - post_and_wait_fill(obs).value(1.0), 1e-9);
}

}  // namespace
}  // namespace lobfill
