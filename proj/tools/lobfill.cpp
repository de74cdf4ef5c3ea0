// lobfill: command-line pipeline over level-3 message logs.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lobfill/lobfill.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lobfill;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  PipelineConfig load() const {
    auto overrides = sets;
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    return load_pipeline_config(config, overrides);
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value configuration file");
  sub->add_option("--set", c.sets, "override a configuration key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "shorthand for --set seed=N");
}

void require_seed(const PipelineConfig& c, const std::string& what) {
  if (!c.seed_set) fail(ErrorCode::ConfigInvalid, what + " needs an explicit seed (config key 'seed' or --seed)");
}

void require_input(const std::string& path, const std::string& flag) {
  if (path.empty()) fail(ErrorCode::InputMissing, flag + " is required");
  if (!fs::exists(path)) fail(ErrorCode::InputMissing, path + " does not exist");
}

/// Writes to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  text::write_file(path, content);
}

void emit_json(const std::string& path, const json& j) { emit(path, j.dump(2) + '\n'); }

std::vector<OrderLifecycle> load_records(const std::string& path) {
  require_input(path, "--input");
  auto recs = read_feature_matrix(path);
  if (recs.empty()) fail(ErrorCode::EmptyInput, path + " has no records");
  return recs;
}

json stats_json(const SynthStats& s) {
  return {{"probes", s.probes},
          {"clock_fills", s.clock_fills},
          {"clock_cancels", s.clock_cancels},
          {"crossing_fills", s.crossing_fills},
          {"walk_steps", s.walk_steps},
          {"market_orders", s.market_orders},
          {"regime_switches", s.regime_switches},
          {"gaps", s.gaps}};
}

Cause parse_cause(const std::string& s) {
  if (s == "execution") return Cause::Execution;
  if (s == "cancellation") return Cause::Cancellation;
  fail(ErrorCode::ConfigInvalid, "cause must be execution or cancellation");
}

EstimationMode parse_mode(const std::string& s) {
  if (s == "competing") return EstimationMode::CompetingRisk;
  if (s == "post-and-wait") return EstimationMode::PostAndWait;
  fail(ErrorCode::ConfigInvalid, "mode must be competing or post-and-wait");
}

/// Half-integer edges for small integer-valued features, deciles otherwise.
std::vector<double> default_edges(std::span<const OrderLifecycle> recs, const std::string& feature) {
  std::vector<double> v;
  for (const auto& r : recs) {
    if (const auto x = feature_value(r.features, feature)) v.push_back(*x);
  }
  if (v.empty()) fail(ErrorCode::EmptyInput, "no values for feature '" + feature + "'");
  std::vector<double> distinct = v;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool integral =
      std::all_of(distinct.begin(), distinct.end(), [](double x) { return std::isfinite(x) && x == std::round(x); });
  std::vector<double> edges;
  if (integral && distinct.size() <= 40) {
    for (double d : distinct) edges.push_back(d - 0.5);
    edges.push_back(distinct.back() + 0.5);
    return edges;
  }
  for (int k = 0; k <= 10; ++k) edges.push_back(quantile(v, k / 10.0));
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (edges.size() < 2) fail(ErrorCode::InsufficientBuckets, "feature '" + feature + "' is constant");
  return edges;
}

std::vector<double> parse_list(std::string_view s) {
  std::vector<double> out;
  for (auto p : text::split(s, ',')) out.push_back(text::parse_double(p));
  return out;
}

Bucketing make_bucketing(std::span<const OrderLifecycle> recs, const std::vector<std::string>& by,
                         const std::vector<std::string>& edge_specs, std::size_t min_count) {
  std::map<std::string, std::vector<double>> explicit_edges;
  for (const auto& e : edge_specs) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigInvalid, "--edges expects feature=e0,e1,...");
    explicit_edges[e.substr(0, eq)] = parse_list(std::string_view(e).substr(eq + 1));
  }
  Bucketing spec;
  spec.min_count = min_count;
  for (const auto& f : by) {
    const auto it = explicit_edges.find(f);
    spec.axes.push_back({f, it != explicit_edges.end() ? it->second : default_edges(recs, f)});
  }
  return spec;
}

std::string bucket_curves_csv(const ConditionalCurves& cc, const Bucketing& spec, Cause cause, double alpha) {
  std::string prefix;
  for (const auto& ax : spec.axes) prefix += ax.feature + "_lo," + ax.feature + "_hi,";
  std::string out = prefix + "count,time,estimate,variance,ci_lo,ci_hi\n";
  for (const auto& b : cc.buckets) {
    std::string key;
    for (const auto& [lo, hi] : b.ranges) key += text::format_double(lo) + ',' + text::format_double(hi) + ',';
    key += std::to_string(b.count) + ',';
    const auto body = format_cif_csv(b.curve, cause, alpha);
    const auto rows = text::lines(body);
    for (std::size_t k = 1; k < rows.size(); ++k) out += key + std::string(rows[k]) + '\n';
  }
  return out;
}

json omitted_json(const ConditionalCurves& cc) {
  json j = json::array();
  for (const auto& [key, n] : cc.omitted) j.push_back({{"bucket", key.index}, {"count", n}});
  return j;
}

// ---------------------------------------------------------------------------
// Route helpers

struct Predictors {
  FeaturePredictor fill;
  FeaturePredictor cleanup;
  std::string fill_kind;
  std::string cleanup_kind;
};

Predictors load_predictors(const std::string& fill_model, const std::string& cleanup_model, const std::string& exp_fit,
                           std::optional<double> cleanup_constant) {
  Predictors p;
  std::optional<ToyFit> toy;
  if (!exp_fit.empty()) {
    require_input(exp_fit, "--exp-fit");
    toy = toy_fit_from_json(read_json(exp_fit));
  }
  if (!fill_model.empty()) {
    require_input(fill_model, "--fill-model");
    p.fill = network_predictor(read_model(fill_model));
    p.fill_kind = "mlp";
  } else if (toy) {
    p.fill = exponential_fill_predictor(toy->a, toy->k);
    p.fill_kind = "exponential";
  } else {
    fail(ErrorCode::ModelUnavailable, "a fill model (--fill-model or --exp-fit) is required");
  }
  if (cleanup_constant) {
    p.cleanup = constant_predictor(*cleanup_constant);
    p.cleanup_kind = "constant";
  } else if (!cleanup_model.empty()) {
    require_input(cleanup_model, "--cleanup-model");
    p.cleanup = network_predictor(read_model(cleanup_model));
    p.cleanup_kind = "mlp";
  } else if (toy) {
    p.cleanup = constant_predictor(toy->v);
    p.cleanup_kind = "constant";
  } else {
    fail(ErrorCode::ModelUnavailable, "a clean-up model (--cleanup-model, --cleanup-constant or --exp-fit) is required");
  }
  return p;
}

MarketSnapshot read_snapshot(const std::string& path, double tick) {
  require_input(path, "--snapshot");
  const json j = read_json(path);
  Ticks bid = 0, ask = 0;
  FeatureVector z;
  try {
    bid = j.at("best_bid").get<Ticks>();
    ask = j.at("best_ask").get<Ticks>();
    if (j.contains("features")) z = features_from_json(j.at("features"));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, "snapshot: " + std::string(e.what()));
  }
  if (ask <= bid) fail(ErrorCode::CrossedBook, "snapshot best ask must exceed best bid");
  z.spread = static_cast<double>(ask - bid);
  return MarketSnapshot::from_ticks(bid, ask, tick, z);
}

std::vector<double> unit_grid(double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::llround(1.0 / step));
  for (int i = 0; i <= n; ++i) g.push_back(static_cast<double>(i) / n);
  return g;
}

struct SurfaceRow {
  Ticks spread = 0;
  PlacementDecision decision;
};

std::vector<SurfaceRow> placement_surface(const MarketSnapshot& s, const FeePolicy& fees, const Predictors& p,
                                          Ticks delta_max, Ticks max_spread) {
  std::vector<SurfaceRow> rows;
  const auto bid = static_cast<Ticks>(std::llround(s.best_bid / s.tick));
  for (Ticks psi = 1; psi <= max_spread; ++psi) {
    FeatureVector z = s.z;
    z.spread = static_cast<double>(psi);
    const auto snap = MarketSnapshot::from_ticks(bid, bid + psi, s.tick, z);
    rows.push_back({psi, optimal_distance(snap, fees, p.fill, p.cleanup, delta_max)});
  }
  return rows;
}

std::string surface_csv(const std::vector<SurfaceRow>& rows) {
  std::string out = "spread,delta_star,saved_cost,action,break_even_fill\n";
  for (const auto& r : rows) {
    out += std::to_string(r.spread) + ',' + std::to_string(r.decision.delta) + ',' +
           text::format_double(r.decision.saved) + ',' + (r.decision.action == Action::Limit ? "limit" : "market") +
           ',' + (r.decision.break_even ? text::format_double(*r.decision.break_even) : std::string()) + '\n';
  }
  return out;
}

DecisionMap map_at(const MarketSnapshot& s, const PlacementDecision& d, double step) {
  const auto& chosen = *std::find_if(d.curve.begin(), d.curve.end(), [&](const auto& p) { return p.delta == d.delta; });
  std::vector<int> levels(kFeeLevels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = kFeeLevels[i].level;
  const auto fills = unit_grid(step);
  return decision_map(s, static_cast<double>(d.delta), chosen.cleanup, levels, fills);
}

json break_even_json(const DecisionMap& m) {
  json j = json::array();
  for (const auto& [level, f] : m.break_even) j.push_back({{"level", level}, {"break_even_fill", f}});
  return j;
}

// ---------------------------------------------------------------------------
// Report helpers

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string svg_chart(const std::string& title, const std::vector<Series>& series, const std::string& xlabel,
                      const std::string& ylabel, bool steps = false) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  constexpr double W = 520, H = 320, L = 60, R = 20, T = 30, B = 45;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  std::string out = "<figure><svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"320\">";
  out += "<text x=\"" + fixed2(W / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>";
  if (!(x0 <= x1)) return out + "<text x=\"60\" y=\"160\">no data</text></svg></figure>";
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  out += "<rect x=\"" + fixed2(L) + "\" y=\"" + fixed2(T) + "\" width=\"" + fixed2(W - L - R) + "\" height=\"" +
         fixed2(H - T - B) + "\" fill=\"none\" stroke=\"#999\"/>";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out += "<text x=\"" + fixed2(px(xv)) + "\" y=\"" + fixed2(H - B + 15) + "\" text-anchor=\"middle\" font-size=\"10\">" +
           text::format_double(std::round(xv * 1000) / 1000) + "</text>";
    out += "<text x=\"" + fixed2(L - 4) + "\" y=\"" + fixed2(py(yv) + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
           text::format_double(std::round(yv * 1000) / 1000) + "</text>";
  }
  out += "<text x=\"" + fixed2(W / 2) + "\" y=\"" + fixed2(H - 8) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         xlabel + "</text>";
  out += "<text x=\"14\" y=\"" + fixed2(H / 2) + "\" font-size=\"11\" transform=\"rotate(-90 14 " + fixed2(H / 2) +
         ")\" text-anchor=\"middle\">" + ylabel + "</text>";
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    std::optional<double> prev_y;
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (steps && prev_y) pts += fixed2(px(x)) + ',' + fixed2(py(*prev_y)) + ' ';
      pts += fixed2(px(x)) + ',' + fixed2(py(y)) + ' ';
      prev_y = y;
    }
    const char* c = colors[i % 5];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>";
    out += "<text x=\"" + fixed2(L + 8) + "\" y=\"" + fixed2(T + 14 + 13.0 * static_cast<double>(i)) +
           "\" font-size=\"11\" fill=\"" + c + "\">" + series[i].name + "</text>";
  }
  return out + "</svg></figure>\n";
}

std::string html_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = "<table><tr>";
  for (const auto& h : header) out += "<th>" + h + "</th>";
  out += "</tr>";
  for (const auto& r : rows) {
    out += "<tr>";
    for (const auto& c : r) out += "<td>" + c + "</td>";
    out += "</tr>";
  }
  return out + "</table>\n";
}

Series cif_series(const CIFCurve& c, Cause cause, const std::string& name) {
  Series s{name, {{0.0, 0.0}}};
  const std::size_t i = CIFCurve::index(cause);
  for (std::size_t k = 0; k < c.times.size(); ++k) s.points.emplace_back(c.times[k], c.cif[i][k]);
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands

struct ReplayArgs {
  Common common;
  std::string input, out;
  bool strict = false;
};

int run_replay(const ReplayArgs& a) {
  const auto cfg = a.common.load();
  require_input(a.input, "--input");
  const auto msgs = read_messages(a.input);
  const auto summary = replay_stream(msgs, cfg.tracker.crossing);
  json j = summary.to_json();
  j["input"] = fs::path(a.input).filename().string();
  emit_json(a.out, j);
  return a.strict && summary.error_count() > 0 ? 3 : 0;
}

struct FeaturesArgs {
  Common common;
  std::string input, out, report, train_out, test_out;
  std::optional<double> split;
};

int run_features(const FeaturesArgs& a) {
  const auto cfg = a.common.load();
  require_input(a.input, "--input");
  const auto msgs = read_messages(a.input);
  const auto tr = track_lifecycles(msgs, cfg.tracker_config());
  emit(a.out, format_feature_matrix_csv(tr.records));
  json rep = tracker_report_json(tr.report);
  rep["horizon"] = cfg.horizon;
  rep["records"] = tr.records.size();
  if (a.split) {
    if (a.train_out.empty() || a.test_out.empty()) {
      fail(ErrorCode::ConfigInvalid, "--split needs --train-out and --test-out");
    }
    const auto [train, test] = split_by_time(tr.records, *a.split);
    text::write_file(a.train_out, format_feature_matrix_csv(train));
    text::write_file(a.test_out, format_feature_matrix_csv(test));
    rep["split"] = {{"fraction", *a.split}, {"train_records", train.size()}, {"test_records", test.size()}};
  }
  if (!a.report.empty()) emit_json(a.report, rep);
  return 0;
}

struct SurvivalArgs {
  Common common;
  std::string input, out, grid, summary, mode = "competing", cause = "execution";
  std::vector<std::string> by, edges;
  std::size_t min_count = 200;
  double alpha = 0.05;
};

int run_survival(const SurvivalArgs& a) {
  const auto cfg = a.common.load();
  const auto recs = load_records(a.input);
  const auto mode = parse_mode(a.mode);
  const auto cause = parse_cause(a.cause);
  if (a.by.size() > 2) fail(ErrorCode::ConfigInvalid, "--by accepts at most two features");
  json summary = {{"records", recs.size()}, {"mode", a.mode}, {"cause", a.cause}, {"horizon", cfg.horizon}};
  if (a.by.empty()) {
    const auto curve = aalen_johansen(apply_mode(to_observations(recs), mode));
    emit(a.out, format_cif_csv(curve, cause, a.alpha));
    summary["estimate_at_horizon"] = curve.value(cause, cfg.horizon);
    summary["variance_at_horizon"] = curve.variance_at(cause, cfg.horizon);
  } else {
    const auto spec = make_bucketing(recs, a.by, a.edges, a.min_count);
    const auto cc = conditional_curves(recs, spec, mode);
    emit(a.out, bucket_curves_csv(cc, spec, cause, a.alpha));
    if (!a.grid.empty()) emit(a.grid, format_bucket_grid_csv(cc, spec, cause, cfg.horizon, a.alpha));
    summary["buckets"] = cc.buckets.size();
    summary["omitted"] = omitted_json(cc);
    summary["unbucketed"] = cc.unbucketed;
    json axes = json::array();
    for (const auto& ax : spec.axes) axes.push_back({{"feature", ax.feature}, {"edges", ax.edges}});
    summary["axes"] = axes;
  }
  if (!a.summary.empty()) emit_json(a.summary, summary);
  return 0;
}

struct TrainFillArgs {
  Common common;
  std::string input, model, report, exp_fit, weights;
};

int run_train_fill(const TrainFillArgs& a) {
  const auto cfg = a.common.load();
  require_seed(cfg, "train-fill");
  const auto recs = load_records(a.input);
  const auto fc = cfg.fill_config();
  FillTrainReport rep;
  const auto model = train_fill_model(recs, fc, &rep);
  emit_json(a.model, model.to_json());
  if (!a.report.empty()) {
    json j = rep.to_json();
    j["seed"] = cfg.seed;
    emit_json(a.report, j);
  }
  if (!a.exp_fit.empty()) emit_json(a.exp_fit, toy_fit_json(fit_toy_model(recs, cfg.horizon)));
  if (!a.weights.empty()) {
    const auto g = CensoringModel::fit(recs, fc.strata);
    const auto w = ipcw_weights(recs, g, fc.ipcw);
    emit(a.weights, format_feature_matrix_csv(recs, &w));
  }
  return 0;
}

struct TrainCleanupArgs {
  Common common;
  std::string input, model, report, curve;
  std::vector<std::string> edges;
  std::size_t min_count = 200;
};

int run_train_cleanup(const TrainCleanupArgs& a) {
  const auto cfg = a.common.load();
  require_seed(cfg, "train-cleanup");
  const auto recs = load_records(a.input);
  CleanupExclusions excl;
  const auto samples = collect_cleanup_samples(recs, cfg.horizon, &excl);
  CleanupTrainReport rep;
  auto model = train_cleanup_model(samples, cfg.cleanup_config(), &rep);
  model.train_range = insert_range(recs);
  emit_json(a.model, model.to_json());
  if (!a.report.empty()) {
    json j = rep.to_json();
    j["samples"] = samples.size();
    j["exclusions"] = excl.to_json();
    j["seed"] = cfg.seed;
    emit_json(a.report, j);
  }
  if (!a.curve.empty()) {
    const auto spec = make_bucketing(recs, {"volatility"}, a.edges, a.min_count);
    emit(a.curve, format_cleanup_curve_csv(bucket_estimate(samples, spec.axes.front(), a.min_count)));
  }
  return 0;
}

struct RouteArgs {
  Common common;
  std::string snapshot, fill_model, cleanup_model, exp_fit, out, curve, map, surface;
  std::optional<double> cleanup_constant;
  Ticks delta_max = 10;
  Ticks max_spread = 10;
  double map_step = 0.01;
};

int run_route(const RouteArgs& a) {
  const auto cfg = a.common.load();
  const auto snap = read_snapshot(a.snapshot, cfg.tick_size);
  const auto pred = load_predictors(a.fill_model, a.cleanup_model, a.exp_fit, a.cleanup_constant);
  const auto fees = fee_level(cfg.fee_level);
  const auto d = optimal_distance(snap, fees, pred.fill, pred.cleanup, a.delta_max);
  const auto m = map_at(snap, d, a.map_step);
  json j = d.to_json();
  j["fee_level"] = cfg.fee_level;
  j["fill_model"] = pred.fill_kind;
  j["cleanup_model"] = pred.cleanup_kind;
  j["best_bid"] = snap.best_bid;
  j["best_ask"] = snap.best_ask;
  j["spread_ticks"] = snap.spread_ticks();
  j["break_even_by_level"] = break_even_json(m);
  emit_json(a.out, j);
  if (!a.curve.empty()) emit(a.curve, format_distance_curve_csv(d));
  if (!a.map.empty()) emit(a.map, format_decision_map_csv(m));
  if (!a.surface.empty()) emit(a.surface, surface_csv(placement_surface(snap, fees, pred, a.delta_max, a.max_spread)));
  return 0;
}

struct BacktestArgs {
  Common common;
  std::string input, fill_model, cleanup_model, exp_fit, features_report, out, decisions;
  std::optional<double> ats;
  std::vector<std::string> models;
};

int run_backtest_cmd(const BacktestArgs& a) {
  const auto cfg = a.common.load();
  const auto recs = load_records(a.input);
  double ats = 0.0;
  if (a.ats) {
    ats = *a.ats;
  } else if (!a.features_report.empty()) {
    require_input(a.features_report, "--features-report");
    ats = read_json(a.features_report).value("average_trade_size", 0.0);
  } else {
    fail(ErrorCode::InputMissing, "--ats or --features-report is required");
  }
  for (const auto& [path, flag] : {std::pair{a.fill_model, "--fill-model"}, {a.cleanup_model, "--cleanup-model"},
                                   {a.exp_fit, "--exp-fit"}}) {
    require_input(path, flag);
  }
  const auto fill = read_model(a.fill_model);
  const auto cleanup = read_model(a.cleanup_model);
  const auto toy = toy_fit_from_json(read_json(a.exp_fit));
  auto all = standard_models(toy, fill, cleanup);
  std::vector<ModelSpec> chosen;
  if (a.models.empty()) {
    chosen = all;
  } else {
    for (const auto& id : a.models) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const ModelSpec& m) { return m.id == id; });
      if (it == all.end()) fail(ErrorCode::ModelUnavailable, "unknown model '" + id + "'");
      chosen.push_back(*it);
    }
  }
  EligibilityReport er;
  const auto eligible = select_eligible(recs, cfg.eligibility_config(), ats, &er);
  auto bc = cfg.backtest_config();
  bc.train_range = fill.train_range;
  if (cleanup.train_range && !eligible.empty()) check_disjoint(*cleanup.train_range, insert_range(eligible));
  const auto result = run_backtest(eligible, chosen, bc);
  json j = backtest_json(result, bc);
  j["eligibility"] = er.to_json();
  j["average_trade_size"] = ats;
  emit_json(a.out, j);
  if (!a.decisions.empty()) emit(a.decisions, format_backtest_csv(result));
  return 0;
}

struct SynthArgs {
  Common common;
  std::string messages, truth, stats, out_dir;
  std::optional<double> duration;
};

int run_synth(const SynthArgs& a) {
  const auto cfg = a.common.load();
  require_seed(cfg, "synth");
  const double duration = a.duration.value_or(cfg.synth_duration);
  const auto flow = generate_flow(cfg.synth_config(), duration);
  const auto path = [&](const std::string& given, const char* name) {
    if (!given.empty() || a.out_dir.empty()) return given;
    return (fs::path(a.out_dir) / name).string();
  };
  emit(path(a.messages, "messages.csv"), format_messages_csv(flow.messages));
  if (const auto p = path(a.truth, "truth.csv"); !p.empty()) emit(p, format_truth_csv(flow.truth));
  if (const auto p = path(a.stats, "stats.json"); !p.empty()) {
    json j = stats_json(flow.stats);
    j["seed"] = cfg.seed;
    j["duration"] = duration;
    j["messages"] = flow.messages.size();
    emit_json(p, j);
  }
  return 0;
}

struct ReportArgs {
  Common common;
  std::string input, fill_model, cleanup_model, exp_fit, snapshot, out_dir;
  std::size_t min_count = 200;
  Ticks delta_max = 10;
  Ticks max_spread = 10;
};

int run_report(const ReportArgs& a) {
  const auto cfg = a.common.load();
  const auto recs = load_records(a.input);
  if (a.out_dir.empty()) fail(ErrorCode::ConfigInvalid, "--out-dir is required");
  fs::create_directories(a.out_dir);
  const auto file = [&](const std::string& name) { return (fs::path(a.out_dir) / name).string(); };
  std::vector<std::string> written;
  const auto put = [&](const std::string& name, const std::string& content) {
    text::write_file(file(name), content);
    written.push_back(name);
  };
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>lobfill report</title><style>"
      "body{font-family:sans-serif;max-width:1100px;margin:auto}table{border-collapse:collapse;margin:8px 0}"
      "td,th{border:1px solid #ccc;padding:2px 6px;text-align:right}figure{display:inline-block;margin:4px}"
      "</style></head><body>\n<h1>Fill probability report</h1>\n";

  std::size_t filled = 0, cancelled = 0, censored = 0;
  for (const auto& r : recs) {
    (r.outcome == Outcome::Filled ? filled : r.outcome == Outcome::Cancelled ? cancelled : censored)++;
  }
  html += "<h2>Data</h2>" + html_table({"records", "filled", "cancelled", "censored", "horizon (s)", "tick", "fee level"},
                                       {{std::to_string(recs.size()), std::to_string(filled), std::to_string(cancelled),
                                         std::to_string(censored), text::format_double(cfg.horizon),
                                         text::format_double(cfg.tick_size), std::to_string(cfg.fee_level)}});

  // Fill ratios.
  const auto icdf = fill_ratio_icdf(recs);
  std::string icdf_csv = "fill_ratio,exceedance\n";
  Series icdf_s{"P(R > x)", {}};
  std::vector<double> xs{0.0};
  for (double b : icdf.breakpoints()) xs.push_back(b);
  for (double x : xs) {
    icdf_csv += text::format_double(x) + ',' + text::format_double(icdf.exceedance(x)) + '\n';
    icdf_s.points.emplace_back(x, icdf.exceedance(x));
  }
  put("fill_ratio_icdf.csv", icdf_csv);

  // Unconditional curves.
  const auto obs = to_observations(recs);
  const auto competing = aalen_johansen(apply_mode(obs, EstimationMode::CompetingRisk));
  const auto paw = aalen_johansen(apply_mode(obs, EstimationMode::PostAndWait));
  put("cif_execution_competing.csv", format_cif_csv(competing, Cause::Execution));
  put("cif_cancellation_competing.csv", format_cif_csv(competing, Cause::Cancellation));
  put("fill_post_and_wait.csv", format_cif_csv(paw, Cause::Execution));
  html += "<h2>Lifetimes</h2>\n" + svg_chart("Fill ratio exceedance", {icdf_s}, "x", "P(R > x)", true) +
          svg_chart("Cumulative incidence",
                    {cif_series(competing, Cause::Execution, "execution (competing)"),
                     cif_series(competing, Cause::Cancellation, "cancellation (competing)"),
                     cif_series(paw, Cause::Execution, "execution (post and wait)")},
                    "seconds", "probability", true);
  html += html_table({"estimate at T", "execution CIF", "cancellation CIF", "post-and-wait fill"},
                     {{"value", text::format_double(competing.value(Cause::Execution, cfg.horizon)),
                       text::format_double(competing.value(Cause::Cancellation, cfg.horizon)),
                       text::format_double(paw.value(Cause::Execution, cfg.horizon))}});

  // Conditional fill probabilities.
  const auto by_delta = make_bucketing(recs, {"delta"}, {}, a.min_count);
  const auto cc_delta = conditional_curves(recs, by_delta, EstimationMode::PostAndWait);
  put("fill_by_delta.csv", format_bucket_grid_csv(cc_delta, by_delta, Cause::Execution, cfg.horizon));
  Series delta_s{"post-and-wait fill at T", {}};
  for (const auto& b : cc_delta.buckets) {
    delta_s.points.emplace_back(0.5 * (b.ranges[0].first + b.ranges[0].second), b.curve.value(Cause::Execution, cfg.horizon));
  }
  const auto grid_spec = make_bucketing(recs, {"delta", "spread"}, {}, a.min_count);
  const auto cc_grid = conditional_curves(recs, grid_spec, EstimationMode::PostAndWait);
  put("fill_by_delta_spread.csv", format_bucket_grid_csv(cc_grid, grid_spec, Cause::Execution, cfg.horizon));
  std::vector<std::vector<std::string>> grid_rows;
  for (const auto& b : cc_grid.buckets) {
    grid_rows.push_back({text::format_double(b.ranges[0].first) + " to " + text::format_double(b.ranges[0].second),
                         text::format_double(b.ranges[1].first) + " to " + text::format_double(b.ranges[1].second),
                         std::to_string(b.count), fixed2(b.curve.value(Cause::Execution, cfg.horizon))});
  }
  html += "<h2>Fill probability by placement</h2>\n" + svg_chart("Fill probability by distance", {delta_s}, "delta (ticks)", "F(T)") +
          html_table({"delta", "spread", "count", "F(T)"}, grid_rows);

  // Clean-up cost.
  const auto samples = collect_cleanup_samples(recs, cfg.horizon);
  html += "<h2>Clean-up cost</h2>\n";
  if (!samples.empty()) {
    const auto vol_spec = make_bucketing(recs, {"volatility"}, {}, a.min_count);
    const auto curve = bucket_estimate(samples, vol_spec.axes.front(), a.min_count);
    put("cleanup_by_volatility.csv", format_cleanup_curve_csv(curve));
    Series mean{"mean", {}}, lo{"mean - 2 SE", {}}, hi{"mean + 2 SE", {}};
    for (const auto& b : curve.buckets) {
      const double x = 0.5 * (b.lo + b.hi);
      mean.points.emplace_back(x, b.estimate.mean);
      lo.points.emplace_back(x, b.estimate.mean - 2 * b.estimate.standard_error);
      hi.points.emplace_back(x, b.estimate.mean + 2 * b.estimate.standard_error);
    }
    html += svg_chart("Clean-up cost by volatility", {mean, lo, hi}, "volatility", "ticks") +
            "<p>Unconditional mean: " + text::format_double(constant_cleanup(samples)) + " ticks over " +
            std::to_string(samples.size()) + " orders.</p>\n";
  } else {
    html += "<p>No order outlived the horizon.</p>\n";
  }

  // Exponential fit.
  std::optional<ToyFit> toy;
  if (!a.exp_fit.empty()) {
    require_input(a.exp_fit, "--exp-fit");
    toy = toy_fit_from_json(read_json(a.exp_fit));
  } else {
    try {
      toy = fit_toy_model(recs, cfg.horizon);
    } catch (const Error& e) {
      html += "<p>Exponential fit unavailable: " + std::string(e.what()) + "</p>\n";
    }
  }
  if (toy) {
    text::write_file(file("exp_fit.json"), toy_fit_json(*toy).dump(2) + '\n');
    written.push_back("exp_fit.json");
    Series pts{"empirical", toy->points}, fit{"A exp(-k x)", {}};
    if (!toy->points.empty()) {
      for (double x = toy->points.front().first; x <= toy->points.back().first + 1e-9; x += 0.25) {
        fit.points.emplace_back(x, toy_fill(toy->a, toy->k, x));
      }
    }
    html += "<h2>Exponential fill model</h2>\n" + svg_chart("Fill probability by distance to ask", {pts, fit}, "ticks", "F(T)") +
            html_table({"A", "k", "k SE", "V (ticks)"}, {{text::format_double(toy->a), text::format_double(toy->k),
                                                        text::format_double(toy->k_standard_error),
                                                        text::format_double(toy->v)}});
  }

  // Decisions at a reference snapshot.
  if ((!a.fill_model.empty() || toy) && (!a.cleanup_model.empty() || toy)) {
    Predictors pred;
    if (!a.fill_model.empty()) {
      require_input(a.fill_model, "--fill-model");
      pred.fill = network_predictor(read_model(a.fill_model));
      pred.fill_kind = "mlp";
    } else {
      pred.fill = exponential_fill_predictor(toy->a, toy->k);
      pred.fill_kind = "exponential";
    }
    if (!a.cleanup_model.empty()) {
      require_input(a.cleanup_model, "--cleanup-model");
      pred.cleanup = network_predictor(read_model(a.cleanup_model));
      pred.cleanup_kind = "mlp";
    } else {
      pred.cleanup = constant_predictor(toy->v);
      pred.cleanup_kind = "constant";
    }
    MarketSnapshot snap;
    if (!a.snapshot.empty()) {
      snap = read_snapshot(a.snapshot, cfg.tick_size);
    } else {
      const auto& r = recs.back();
      snap = MarketSnapshot::from_ticks(r.best_bid_before, r.best_ask_before, cfg.tick_size, r.features);
    }
    const auto fees = fee_level(cfg.fee_level);
    const auto d = optimal_distance(snap, fees, pred.fill, pred.cleanup, a.delta_max);
    const auto m = map_at(snap, d, 0.01);
    const auto surf = placement_surface(snap, fees, pred, a.delta_max, a.max_spread);
    put("distance_curve.csv", format_distance_curve_csv(d));
    put("decision_map.csv", format_decision_map_csv(m));
    put("placement_surface.csv", surface_csv(surf));
    json dj = d.to_json();
    dj["break_even_by_level"] = break_even_json(m);
    dj["fill_model"] = pred.fill_kind;
    dj["cleanup_model"] = pred.cleanup_kind;
    text::write_file(file("decision.json"), dj.dump(2) + '\n');
    written.push_back("decision.json");
    Series saved{"saved cost", {}}, fillp{"fill probability", {}};
    for (const auto& p : d.curve) {
      saved.points.emplace_back(static_cast<double>(p.delta), p.saved);
      fillp.points.emplace_back(static_cast<double>(p.delta), p.fill);
    }
    Series delta_star{"optimal distance", {}};
    for (const auto& r : surf) delta_star.points.emplace_back(static_cast<double>(r.spread), static_cast<double>(r.decision.delta));
    std::vector<std::vector<std::string>> be_rows;
    for (const auto& [level, f] : m.break_even) be_rows.push_back({std::to_string(level), text::format_double(f)});
    html += "<h2>Placement (" + pred.fill_kind + " fill, " + pred.cleanup_kind + " clean-up)</h2>\n" +
            "<p>Reference book: bid " + text::format_double(snap.best_bid) + ", ask " + text::format_double(snap.best_ask) +
            ". Decision: <b>" + (d.action == Action::Limit ? "limit" : "market") + "</b> at distance " +
            std::to_string(d.delta) + ", saved cost " + text::format_double(d.saved) + ".</p>\n" +
            svg_chart("Saved cost by distance", {saved}, "delta (ticks)", "quote units") +
            svg_chart("Fill probability by distance", {fillp}, "delta (ticks)", "F(T)") +
            svg_chart("Optimal distance by spread", {delta_star}, "spread (ticks)", "delta*") +
            "<h3>Break-even fill probability by fee level</h3>" + html_table({"level", "F*"}, be_rows);
  }

  html += "<h2>Files</h2><ul>";
  for (const auto& w : written) html += "<li><a href=\"" + w + "\">" + w + "</a></li>";
  html += "</ul>\n</body></html>\n";
  text::write_file(file("index.html"), html);
  written.push_back("index.html");
  emit_json(file("manifest.json"), {{"files", written}, {"records", recs.size()}, {"horizon", cfg.horizon}});
  return 0;
}

int print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fill probability estimation and limit order placement over level-3 data", "lobfill"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  ReplayArgs replay;
  auto* s_replay = app.add_subcommand("replay", "rebuild the book from a message log and report validation errors");
  add_common(s_replay, replay.common);
  s_replay->add_option("--input", replay.input, "message log (.csv or .ndjson)")->required();
  s_replay->add_option("--out", replay.out, "summary JSON (default stdout)");
  s_replay->add_flag("--strict", replay.strict, "exit with status 3 when any message was rejected");

  FeaturesArgs feat;
  auto* s_feat = app.add_subcommand("features", "track order lifecycles and export the feature matrix");
  add_common(s_feat, feat.common);
  s_feat->add_option("--input", feat.input, "message log")->required();
  s_feat->add_option("--out", feat.out, "feature matrix CSV (default stdout)");
  s_feat->add_option("--report", feat.report, "tracker report JSON");
  s_feat->add_option("--split", feat.split, "training share of a time-ordered split");
  s_feat->add_option("--train-out", feat.train_out, "training part of the split");
  s_feat->add_option("--test-out", feat.test_out, "test part of the split");

  SurvivalArgs surv;
  auto* s_surv = app.add_subcommand("survival", "cumulative incidence curves, optionally bucketed");
  add_common(s_surv, surv.common);
  s_surv->add_option("--input", surv.input, "feature matrix CSV")->required();
  s_surv->add_option("--by", surv.by, "bucket by this feature (at most twice)");
  s_surv->add_option("--edges", surv.edges, "bucket edges, feature=e0,e1,...");
  s_surv->add_option("--mode", surv.mode, "competing | post-and-wait");
  s_surv->add_option("--cause", surv.cause, "execution | cancellation");
  s_surv->add_option("--min-count", surv.min_count, "smallest bucket that gets a curve");
  s_surv->add_option("--alpha", surv.alpha, "confidence band level");
  s_surv->add_option("--out", surv.out, "long-format curve CSV (default stdout)");
  s_surv->add_option("--grid", surv.grid, "bucket grid at the horizon");
  s_surv->add_option("--summary", surv.summary, "summary JSON");

  TrainFillArgs tf;
  auto* s_tf = app.add_subcommand("train-fill", "train the fill probability network");
  add_common(s_tf, tf.common);
  s_tf->add_option("--input", tf.input, "training feature matrix")->required();
  s_tf->add_option("--model", tf.model, "model JSON (default stdout)");
  s_tf->add_option("--report", tf.report, "training report JSON");
  s_tf->add_option("--exp-fit", tf.exp_fit, "exponential fill curve fit JSON");
  s_tf->add_option("--weights", tf.weights, "feature matrix with IPCW labels and weights");

  TrainCleanupArgs tc;
  auto* s_tc = app.add_subcommand("train-cleanup", "train the clean-up cost network");
  add_common(s_tc, tc.common);
  s_tc->add_option("--input", tc.input, "training feature matrix")->required();
  s_tc->add_option("--model", tc.model, "model JSON (default stdout)");
  s_tc->add_option("--report", tc.report, "training report JSON");
  s_tc->add_option("--curve", tc.curve, "clean-up cost by volatility bucket CSV");
  s_tc->add_option("--edges", tc.edges, "volatility bucket edges, volatility=e0,e1,...");
  s_tc->add_option("--min-count", tc.min_count, "smallest bucket that gets an estimate");

  RouteArgs route;
  auto* s_route = app.add_subcommand("route", "limit or market, and at which distance");
  add_common(s_route, route.common);
  s_route->add_option("--snapshot", route.snapshot, "JSON with best_bid, best_ask (ticks) and features")->required();
  s_route->add_option("--fill-model", route.fill_model, "fill network JSON");
  s_route->add_option("--cleanup-model", route.cleanup_model, "clean-up network JSON");
  s_route->add_option("--exp-fit", route.exp_fit, "exponential fit JSON (fill and constant clean-up)");
  s_route->add_option("--cleanup-constant", route.cleanup_constant, "constant clean-up cost in ticks");
  s_route->add_option("--delta-max", route.delta_max, "largest distance searched");
  s_route->add_option("--max-spread", route.max_spread, "largest spread in the surface");
  s_route->add_option("--map-step", route.map_step, "fill probability step of the decision map");
  s_route->add_option("--out", route.out, "decision JSON (default stdout)");
  s_route->add_option("--curve", route.curve, "saved cost by distance CSV");
  s_route->add_option("--map", route.map, "decision map by fee level CSV");
  s_route->add_option("--surface", route.surface, "optimal distance by spread CSV");

  BacktestArgs bt;
  auto* s_bt = app.add_subcommand("backtest", "score models I, II and III on held-out orders");
  add_common(s_bt, bt.common);
  s_bt->add_option("--input", bt.input, "test feature matrix")->required();
  s_bt->add_option("--fill-model", bt.fill_model, "fill network JSON")->required();
  s_bt->add_option("--cleanup-model", bt.cleanup_model, "clean-up network JSON")->required();
  s_bt->add_option("--exp-fit", bt.exp_fit, "exponential fit JSON")->required();
  s_bt->add_option("--ats", bt.ats, "average trade size");
  s_bt->add_option("--features-report", bt.features_report, "tracker report holding the average trade size");
  s_bt->add_option("--models", bt.models, "subset of I, II, III")->delimiter(',');
  s_bt->add_option("--out", bt.out, "metrics JSON (default stdout)");
  s_bt->add_option("--decisions", bt.decisions, "per-order decision CSV");

  SynthArgs syn;
  auto* s_syn = app.add_subcommand("synth", "generate a message log with known hazards");
  add_common(s_syn, syn.common);
  s_syn->add_option("--duration", syn.duration, "seconds of flow (default synth.duration)");
  s_syn->add_option("--messages", syn.messages, "message CSV (default stdout)");
  s_syn->add_option("--truth", syn.truth, "per-order truth CSV");
  s_syn->add_option("--stats", syn.stats, "generator counters JSON");
  s_syn->add_option("--out-dir", syn.out_dir, "directory for messages.csv, truth.csv and stats.json");

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "HTML and CSV bundle with curves and decision maps");
  add_common(s_rep, rep.common);
  s_rep->add_option("--input", rep.input, "feature matrix")->required();
  s_rep->add_option("--fill-model", rep.fill_model, "fill network JSON");
  s_rep->add_option("--cleanup-model", rep.cleanup_model, "clean-up network JSON");
  s_rep->add_option("--exp-fit", rep.exp_fit, "exponential fit JSON");
  s_rep->add_option("--snapshot", rep.snapshot, "reference book for the placement section");
  s_rep->add_option("--min-count", rep.min_count, "smallest bucket that gets a curve");
  s_rep->add_option("--delta-max", rep.delta_max, "largest distance searched");
  s_rep->add_option("--max-spread", rep.max_spread, "largest spread in the surface");
  s_rep->add_option("--out-dir", rep.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(std::string(to_string(ErrorCode::ConfigInvalid)), e.what());
    return 2;
  }

  try {
    if (*s_replay) return run_replay(replay);
    if (*s_feat) return run_features(feat);
    if (*s_surv) return run_survival(surv);
    if (*s_tf) return run_train_fill(tf);
    if (*s_tc) return run_train_cleanup(tc);
    if (*s_route) return run_route(route);
    if (*s_bt) return run_backtest_cmd(bt);
    if (*s_syn) return run_synth(syn);
    if (*s_rep) return run_report(rep);
  } catch (const Error& e) {
    return print_error(std::string(to_string(e.code())), e.message());
  } catch (const std::exception& e) {
    return print_error("Internal", e.what());
  }
  return 0;
}
