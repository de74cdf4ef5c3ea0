// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lobfill/lobfill.hpp"

namespace fs = std::filesystem;
using namespace lobfill;

namespace {

struct Outcome_ {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::vector<OrderLifecycle> probes_only(const SynthFlow& flow, const std::vector<OrderLifecycle>& recs) {
  std::set<OrderId> ids;
  for (const auto& t : flow.truth) ids.insert(t.order_id);
  std::vector<OrderLifecycle> out;
  for (const auto& r : recs) {
    if (ids.contains(r.order_id)) out.push_back(r);
  }
  return out;
}

// 1. KM against e^{-t} with independent censoring.
Outcome_ km_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::vector<Observation> obs;
  obs.reserve(10000);
  for (int i = 0; i < 10000; ++i) obs.push_back(sample_competing_exponential(rng, 1.0, 0.0, 0.5));
  const auto km = kaplan_meier(obs);
  double sup = 0.0;
  double prev = 1.0;
  for (std::size_t k = 0; k < km.times.size() && km.times[k] <= 3.0; ++k) {
    const double truth = std::exp(-km.times[k]);
    sup = std::max({sup, std::abs(km.values[k] - truth), std::abs(prev - truth)});
    prev = km.values[k];
  }
  sup = std::max(sup, std::abs(km.value(3.0) - std::exp(-3.0)));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {sup <= 0.02 && secs < 5.0, "sup|S-e^-t| on [0,3] = " + num(sup) + ", runtime " + num(secs) + " s"};
}

// 2. Aalen-Johansen with two exponential causes.
Outcome_ aj_consistency() {
  std::mt19937_64 rng(20240602);
  std::vector<Observation> obs;
  for (int i = 0; i < 10000; ++i) obs.push_back(sample_competing_exponential(rng, 2.0, 1.0, 0.0));
  const auto aj = aalen_johansen(obs);
  const double truth = (2.0 / 3.0) * (1.0 - std::exp(-3.0));
  const double err = std::abs(aj.value(Cause::Execution, 1.0) - truth);
  double identity = 0.0;
  for (std::size_t k = 0; k < aj.times.size(); ++k) {
    identity = std::max(identity, std::abs(aj.cif[0][k] + aj.cif[1][k] + aj.survival[k] - 1.0));
  }
  return {err <= 0.02 && identity <= 1e-12,
          "|F1(1)-truth| = " + num(err) + ", max|F1+F2+S-1| = " + num(identity)};
}

// 3. IPC-weighted execution frequency equals one minus the post-and-wait KM.
Outcome_ ipcw_equivalence() {
  double worst = 0.0;
  std::size_t floored = 0;
  CensoringStrata pooled;
  pooled.enabled = false;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 1 + static_cast<int>(rng() % 20);
    const bool tied = seed % 2 == 0;
    std::vector<OrderLifecycle> rs;
    for (int i = 0; i < n; ++i) {
      OrderLifecycle r;
      r.order_id = static_cast<OrderId>(i + 1);
      r.outcome = static_cast<Outcome>(rng() % 3);
      r.outcome_time = tied ? 0.25 * static_cast<double>(1 + rng() % 8) : 0.01 + 2.0 * uniform01(rng);
      rs.push_back(r);
    }
    const auto g = CensoringModel::fit(rs, pooled);
    const auto w = ipcw_weights(rs, g, IpcwConfig{1.0, 0.01});
    floored += w.floored;
    double weighted = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) weighted += w.weights[i] * w.labels[i];
    const auto obs = to_observations(rs);
    const double km = 1.0 - post_and_wait_fill(obs).value(1.0);
    worst = std::max(worst, std::abs(weighted / n - km));
  }
  return {worst <= 1e-9, "max deviation over 1000 instances = " + num(worst) + ", floored weights " + std::to_string(floored)};
}

// 4. Backprop against central differences for both network kinds.
Outcome_ gradient_checks() {
  const std::size_t dim = kModelFeatureNames.size();
  double worst[2] = {0.0, 0.0};
  std::size_t checked = 0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    std::mt19937_64 rng(1000 + draw);
    for (int kind = 0; kind < 2; ++kind) {
      const auto act = kind == 0 ? OutputActivation::Sigmoid : OutputActivation::Identity;
      const Mlp net(Mlp::default_layers(dim), act, 7919 * draw + static_cast<std::uint64_t>(kind));
      Dataset d;
      std::vector<double> row(dim);
      for (int i = 0; i < 16; ++i) {
        for (auto& v : row) v = 4.0 * uniform01(rng) - 2.0;
        const double target = kind == 0 ? (uniform01(rng) < 0.5 ? 0.0 : 1.0) : 6.0 * uniform01(rng) - 3.0;
        d.push(row, target, 0.2 + 2.0 * uniform01(rng));
      }
      const auto res = gradient_check(net, d, 60, draw);
      worst[kind] = std::max(worst[kind], res.max_relative_error);
      checked += res.checked;
    }
  }
  return {worst[0] <= 1e-4 && worst[1] <= 1e-4 && checked > 0,
          "max relative error fill " + num(worst[0]) + ", clean-up " + num(worst[1]) + " over " +
              std::to_string(checked) + " parameters"};
}

// 5. Grid argmax of the exponential toy model against 1/k - V.
Outcome_ toy_closed_form() {
  std::mt19937_64 rng(20240605);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double k = 0.05 + 0.9 * uniform01(rng);
    const double v = (1.0 / k - 1.0) * uniform01(rng);
    const double a = 0.05 + 0.95 * uniform01(rng);
    const double x = toy_grid_argmax(a, k, v, 0.0, 1.0 / k + 5.0, 1e-4);
    worst = std::max(worst, std::abs(x - (1.0 / k - v)));
  }
  return {worst <= 1e-3, "max |argmax - (1/k - V)| = " + num(worst)};
}

// 6. Break-even fill probabilities of the worked fee example.
Outcome_ worked_fees() {
  const auto s = MarketSnapshot::from_ticks(1999950, 2000050, 0.01);
  const double v = 200.0;  // ticks
  // Bid 19,999.50, ask 20,000.50, V = 2.00; level 1 fees 0.60%/0.40%, level 9 0.05%/0%.
  const double hand1 = 1.006 * 2.0 / (1.006 * 20000.50 - 1.004 * 19999.50 + 1.006 * 2.0);
  const double hand9 = 1.0005 * 2.0 / (1.0005 * 20000.50 - 1.0 * 19999.50 + 1.0005 * 2.0);
  const double f1 = break_even_fill(s, 0.0, fee_level(1), v);
  const double f9 = break_even_fill(s, 0.0, fee_level(9), v);
  bool flips = true;
  for (const auto& [level, fstar] : {std::pair{1, f1}, std::pair{9, f9}}) {
    const std::vector<int> lv{level};
    const std::vector<double> around{fstar - 1e-9, fstar + 1e-9};
    const auto m = decision_map(s, 0.0, v, lv, around);
    flips = flips && m.cells[0].action == Action::Market && m.cells[1].action == Action::Limit;
  }
  const bool ok = std::abs(f1 - hand1) <= 1e-6 && std::abs(f9 - hand9) <= 1e-6 && flips;
  return {ok, "F*(1) = " + num(f1) + " vs " + num(hand1) + ", F*(9) = " + num(f9) + " vs " + num(hand9) +
                  (flips ? ", map flips at F*" : ", map does not flip at F*")};
}

// 7. Fill probability by distance bucket on flow whose execution hazard decreases in delta.
Outcome_ monotone_fill() {
  GroundTruthConfig c;
  c.seed = 42;
  c.hazard.cancel_delta_slope = 0.1;
  c.price.step_rate = 1.0;
  c.gap_rate = 0.01;
  const auto flow = generate_flow(c, 3600.0);
  const auto recs = probes_only(flow, track_lifecycles(flow.messages, TrackerConfig{}).records);
  BucketAxis ax{"delta", {}};
  for (int e = -5; e <= 11; ++e) ax.edges.push_back(e - 0.5);
  const auto cc = conditional_curves(recs, Bucketing{{ax}, 200});
  std::size_t inversions = 0;
  bool within = true;
  for (std::size_t j = 1; j < cc.buckets.size(); ++j) {
    const auto& a = cc.buckets[j - 1].curve;
    const auto& b = cc.buckets[j].curve;
    const double fa = a.value(Cause::Execution, 1.0), fb = b.value(Cause::Execution, 1.0);
    if (fb > fa) {
      ++inversions;
      const double se = std::sqrt(a.variance_at(Cause::Execution, 1.0) + b.variance_at(Cause::Execution, 1.0));
      within = within && fb - fa <= 2.0 * se;
    }
  }
  const bool ok = cc.buckets.size() >= 2 && (inversions == 0 || (inversions == 1 && within));
  return {ok, std::to_string(cc.buckets.size()) + " buckets, " + std::to_string(inversions) + " inversions"};
}

// 8. Bucketed clean-up cost is zero without drift and mu*T with drift mu.
Outcome_ cleanup_null() {
  std::string detail;
  bool ok = true;
  for (const auto& [seed, mu] : {std::pair<std::uint64_t, double>{101, 0.0}, {102, 0.5}}) {
    GroundTruthConfig c;
    c.seed = seed;
    c.price.step_rate = 1.0;
    c.price.regime_drifts = {mu};
    c.price.min_spread = 4;
    c.price.max_spread = 8;
    c.bid_share = 1.0;
    c.allow_aggressive = false;
    const auto flow = generate_flow(c, 3600.0);
    const auto recs = probes_only(flow, track_lifecycles(flow.messages, TrackerConfig{}).records);
    const auto samples = collect_cleanup_samples(recs, 1.0);
    const auto curve = bucket_estimate(samples, BucketAxis{"delta", {-0.5, 2.5, 5.5, 10.5}}, 200);
    double worst_z = 0.0;
    for (const auto& b : curve.buckets) {
      const double z = std::abs(b.estimate.mean - mu * 1.0) / b.estimate.standard_error;
      worst_z = std::max(worst_z, z);
      ok = ok && std::abs(b.estimate.mean - mu * 1.0) <= 2.0 * b.estimate.standard_error;
    }
    ok = ok && curve.buckets.size() == 3;
    detail += (detail.empty() ? "" : "; ") + std::string("mu=") + num(mu) + ": " + std::to_string(curve.buckets.size()) +
              " buckets, max |V-muT|/SE = " + num(worst_z);
  }
  return {ok, detail};
}

// 9. Limit-action F-scores order III >= II >= I on planted flow.
Outcome_ backtest_ordering() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GroundTruthConfig c;
    c.seed = seed;
    c.hazard.exec_imbalance = 0.5;
    c.hazard.exec_wide_spread = 0.6;
    c.hazard.cancel_delta_slope = 0.1;
    c.price.step_rate = 8.0;
    c.price.regime_drifts = {-6.0, 0.0, 6.0};
    c.price.regime_switch_rate = 1.0 / 60.0;
    c.price.flow_tilt = 0.45;
    c.market_order_rate = 10.0;
    c.probe_rate = 20.0;
    c.bid_share = 0.7;
    const auto flow = generate_flow(c, 3600.0);
    const auto tr = track_lifecycles(flow.messages, TrackerConfig{});
    const auto& recs = tr.records;
    const std::size_t cut = recs.size() * 6 / 10;
    const std::vector<OrderLifecycle> train(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(cut));
    const std::vector<OrderLifecycle> test(recs.begin() + static_cast<std::ptrdiff_t>(cut + 50), recs.end());

    FillTrainConfig fc;
    fc.importance_repeats = 0;
    fc.train.seed = seed;
    const auto fill = train_fill_model(train, fc);
    CleanupTrainConfig cl_cfg;
    cl_cfg.train.seed = seed;
    auto cleanup = train_cleanup_model(collect_cleanup_samples(train, 1.0), cl_cfg);
    cleanup.train_range = insert_range(train);
    const auto toy = fit_toy_model(train, 1.0);
    const auto models = standard_models(toy, fill, cleanup);

    const auto eligible = select_eligible(test, EligibilityConfig{}, tr.report.average_trade_size());
    BacktestConfig bc;
    bc.train_range = fill.train_range;
    const auto res = run_backtest(eligible, models, bc);
    const double f1 = res.model("I").limit.f_score, f2 = res.model("II").limit.f_score,
                 f3 = res.model("III").limit.f_score;
    ok = ok && f3 >= f2 && f2 >= f1;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " " + num(f1) + " <= " +
              num(f2) + " <= " + num(f3);
  }
  return {ok, detail};
}

// 10. Latency correction vanishes when no ask move reaches the posted price.
Outcome_ latency_degeneracy() {
  std::mt19937_64 rng(20240610);
  std::size_t equal = 0, moved = 0;
  for (int i = 0; i < 100; ++i) {
    const Ticks bid = 1000 + static_cast<Ticks>(rng() % 100000);
    const Ticks spread = 1 + static_cast<Ticks>(rng() % 10);
    const double delta = static_cast<double>(-(spread - 1) + static_cast<Ticks>(rng() % static_cast<std::uint64_t>(spread + 10)));
    const auto s = MarketSnapshot::from_ticks(bid, bid + spread, 0.01);
    const auto fees = fee_level(1 + static_cast<int>(rng() % 9));
    const double fill = uniform01(rng), v = 10.0 * uniform01(rng);
    const double threshold = -(static_cast<double>(spread) + delta);
    std::vector<double> above;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int j = 0; j < n; ++j) above.push_back(threshold + 0.5 + 10.0 * uniform01(rng));
    const auto moves = i % 2 == 0 ? AskMoveDistribution::empirical(above)
                                  : AskMoveDistribution::point_masses(above, std::vector<double>(above.size(), 1.0 / n));
    const double latency = 0.009 * uniform01(rng);
    const double base = saved_cost(s, delta, fees, fill, v);
    equal += latency_saved_cost(s, delta, fees, fill, v, moves, latency, 1.0) == base;
    // Control: moving one atom through the price must change the cost.
    std::vector<double> through = above;
    through[0] = threshold - 1.0;
    const auto crossing = AskMoveDistribution::empirical(through);
    moved += latency_saved_cost(s, delta, fees, fill, v, crossing, latency, 1.0) != base;
  }
  return {equal == 100, std::to_string(equal) + "/100 exactly equal; control changed in " + std::to_string(moved) + "/100"};
}

// 11. synth -> replay -> features -> train -> backtest through the CLI, twice.
Outcome_ determinism() {
  const fs::path root = fs::temp_directory_path() / ("lobfill_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cli = LOBFILL_CLI;
  const std::string conf = std::string(LOBFILL_SOURCE_DIR) + "/configs/quick.conf";
  auto run = [&](const fs::path& dir) {
    fs::create_directories(dir);
    const std::string d = dir.string() + "/";
    const std::string common = " --config " + conf + " --seed 11";
    const std::vector<std::string> steps = {
        "synth" + common + " --out-dir " + d,
        "replay" + common + " --input " + d + "messages.csv --out " + d + "replay.json --strict",
        "features" + common + " --input " + d + "messages.csv --out " + d + "features.csv --report " + d +
            "tracker.json --split 0.6 --train-out " + d + "train.csv --test-out " + d + "test.csv",
        "train-fill" + common + " --input " + d + "train.csv --model " + d + "fill.json --report " + d +
            "fill_report.json --exp-fit " + d + "exp.json",
        "train-cleanup" + common + " --input " + d + "train.csv --model " + d + "cleanup.json --report " + d +
            "cleanup_report.json",
        "backtest" + common + " --input " + d + "test.csv --fill-model " + d + "fill.json --cleanup-model " + d +
            "cleanup.json --exp-fit " + d + "exp.json --features-report " + d + "tracker.json --out " + d +
            "metrics.json --decisions " + d + "decisions.csv",
    };
    for (const auto& s : steps) {
      if (std::system((cli + " " + s + " > /dev/null").c_str()) != 0) return "step failed: " + s.substr(0, s.find(' '));
    }
    return std::string();
  };
  const auto err_a = run(root / "a");
  const auto err_b = err_a.empty() ? run(root / "b") : err_a;
  if (!err_a.empty() || !err_b.empty()) return {false, err_a.empty() ? err_b : err_a};
  std::size_t files = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    const auto name = e.path().filename();
    if (text::read_file(e.path().string()) != text::read_file((root / "b" / name).string())) {
      ++differ;
      if (first_diff.empty()) first_diff = name.string();
    }
  }
  const auto metrics = nlohmann::json::parse(text::read_file((root / "a" / "metrics.json").string()));
  const std::size_t evaluated = metrics.value("evaluated", std::size_t{0});
  fs::remove_all(root);
  return {differ == 0 && files >= 15 && evaluated > 0,
          std::to_string(files) + " artifacts, " + std::to_string(differ) + " differ" +
              (first_diff.empty() ? "" : " (first: " + first_diff + ")") + ", " + std::to_string(evaluated) +
              " orders backtested"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome_()>>> criteria = {
      {"Kaplan-Meier consistency", km_consistency},
      {"Aalen-Johansen consistency", aj_consistency},
      {"IPCW and Kaplan-Meier equivalence", ipcw_equivalence},
      {"gradient checks", gradient_checks},
      {"exponential toy model closed form", toy_closed_form},
      {"worked fee example", worked_fees},
      {"fill probability monotone in distance", monotone_fill},
      {"clean-up cost null and drift", cleanup_null},
      {"backtest ordering III >= II >= I", backtest_ordering},
      {"latency degeneracy", latency_degeneracy},
      {"pipeline determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.contains(id)) continue;
    Outcome_ r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << r.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
