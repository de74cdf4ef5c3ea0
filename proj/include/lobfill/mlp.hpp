#pragma once

// Fully connected ReLU network with a single output, trained by mini-batch
// SGD with momentum on a weighted, normalized loss. Used both as a fill
// classifier (sigmoid output, cross-entropy) and as a regressor (identity
// output, squared error).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lobfill/error.hpp"

namespace lobfill {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

/// Row-major design matrix with targets and per-row weights.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }

  void push(std::span<const double> features, double target, double weight = 1.0) {
    if (dim == 0 && y.empty()) dim = features.size();
    if (features.size() != dim) fail(ErrorCode::DimensionMismatch, "row has wrong dimension");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(target);
    w.push_back(weight);
  }

  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset d;
    d.dim = dim;
    d.x.assign(x.begin() + static_cast<std::ptrdiff_t>(begin * dim), x.begin() + static_cast<std::ptrdiff_t>(end * dim));
    d.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end));
    d.w.assign(w.begin() + static_cast<std::ptrdiff_t>(begin), w.begin() + static_cast<std::ptrdiff_t>(end));
    return d;
  }
};

/// Per-feature affine standardization, fitted once and then frozen.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  static Standardizer fit(const Dataset& d) {
    Standardizer s = identity(d.dim);
    const std::size_t n = d.size();
    if (n == 0) return s;
    for (std::size_t j = 0; j < d.dim; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += d.x[i * d.dim + j];
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = d.x[i * d.dim + j] - m;
        v += e * e;
      }
      const double sd = std::sqrt(v / static_cast<double>(n));
      s.mean[j] = m;
      s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
  }

  Dataset apply(const Dataset& d) const {
    Dataset out = d;
    for (std::size_t i = 0; i < d.size(); ++i) {
      apply(d.row(i), std::span<double>(out.x.data() + i * d.dim, d.dim));
    }
    return out;
  }
};

enum class OutputActivation : std::uint8_t { Sigmoid, Identity };

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

class Mlp {
 public:
  static constexpr double kProbabilityClamp = 1e-15;

  Mlp() = default;

  /// He-uniform weights, zero biases.
  Mlp(std::vector<std::size_t> layers, OutputActivation out, std::uint64_t seed)
      : layers_(std::move(layers)), output_(out), standardizer_(Standardizer::identity(layers_.at(0))) {
    validate_layers();
    params_.assign(parameter_count(layers_), 0.0);
    std::mt19937_64 rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      const std::size_t in = layers_[l], outn = layers_[l + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(in));
      for (std::size_t k = 0; k < in * outn; ++k) params_[off + k] = (2.0 * uniform01(rng) - 1.0) * bound;
      off += in * outn + outn;
    }
  }

  static Mlp zeros(std::vector<std::size_t> layers, OutputActivation out) {
    Mlp m;
    m.layers_ = std::move(layers);
    m.output_ = out;
    m.validate_layers();
    m.standardizer_ = Standardizer::identity(m.layers_[0]);
    m.params_.assign(parameter_count(m.layers_), 0.0);
    return m;
  }

  static std::vector<std::size_t> default_layers(std::size_t input_dim) { return {input_dim, 32, 32, 32, 1}; }

  static std::size_t parameter_count(const std::vector<std::size_t>& layers) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l] * layers[l + 1] + layers[l + 1];
    return n;
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_[0]; }
  const std::vector<std::size_t>& layers() const { return layers_; }
  OutputActivation output() const { return output_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  const Standardizer& standardizer() const { return standardizer_; }
  void set_standardizer(Standardizer s) {
    if (s.mean.size() != input_dim() || s.scale.size() != input_dim()) {
      fail(ErrorCode::DimensionMismatch, "standardizer dimension differs from network input");
    }
    standardizer_ = std::move(s);
  }

  /// Pre-activation of the output unit for an already standardized input.
  double logit_standardized(std::span<const double> z) const {
    std::vector<double> a(z.begin(), z.end()), next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      const std::size_t in = layers_[l], outn = layers_[l + 1];
      next.assign(outn, 0.0);
      const double* wt = params_.data() + off;
      const double* b = wt + in * outn;
      for (std::size_t o = 0; o < outn; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += wt[o * in + i] * a[i];
        next[o] = (l + 2 < layers_.size()) ? std::max(s, 0.0) : s;
      }
      off += in * outn + outn;
      a.swap(next);
    }
    return a[0];
  }

  double activate(double z) const {
    if (output_ == OutputActivation::Identity) return z;
    return std::clamp(sigmoid(z), kProbabilityClamp, 1.0 - kProbabilityClamp);
  }

  /// Prediction for a raw (unstandardized) input row.
  double predict(std::span<const double> x) const {
    if (x.size() != input_dim()) {
      fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(x.size()) + " features, model expects " +
                                             std::to_string(input_dim()));
    }
    std::vector<double> z(x.size());
    standardizer_.apply(x, z);
    return activate(logit_standardized(z));
  }

  double sample_loss(double logit, double y) const {
    if (output_ == OutputActivation::Sigmoid) return softplus(logit) - y * logit;
    const double e = logit - y;
    return e * e;
  }

  /// Weighted mean loss over rows `idx` of a standardized dataset; when
  /// `grad` is non-null it receives d(loss)/d(params). Zero total weight
  /// gives zero loss and zero gradient.
  double loss_and_gradient(const Dataset& data, std::span<const std::size_t> idx, std::vector<double>* grad) const {
    if (data.dim != input_dim()) fail(ErrorCode::DimensionMismatch, "dataset dimension differs from network input");
    if (grad) grad->assign(params_.size(), 0.0);
    double wsum = 0.0;
    for (std::size_t i : idx) wsum += data.w[i];
    if (!(wsum > 0.0)) return 0.0;

    const std::size_t nl = layers_.size() - 1;
    std::vector<std::vector<double>> acts(nl + 1);
    std::vector<std::size_t> offsets(nl);
    {
      std::size_t off = 0;
      for (std::size_t l = 0; l < nl; ++l) {
        offsets[l] = off;
        off += layers_[l] * layers_[l + 1] + layers_[l + 1];
      }
    }
    std::vector<double> delta, prev_delta;
    double total = 0.0;
    for (std::size_t i : idx) {
      const double wi = data.w[i];
      if (wi == 0.0) continue;
      auto r = data.row(i);
      acts[0].assign(r.begin(), r.end());
      for (std::size_t l = 0; l < nl; ++l) {
        const std::size_t in = layers_[l], outn = layers_[l + 1];
        const double* wt = params_.data() + offsets[l];
        const double* b = wt + in * outn;
        auto& out = acts[l + 1];
        out.assign(outn, 0.0);
        for (std::size_t o = 0; o < outn; ++o) {
          double s = b[o];
          for (std::size_t k = 0; k < in; ++k) s += wt[o * in + k] * acts[l][k];
          out[o] = (l + 1 < nl) ? std::max(s, 0.0) : s;
        }
      }
      const double z = acts[nl][0];
      total += wi * sample_loss(z, data.y[i]);
      if (!grad) continue;
      const double dz = output_ == OutputActivation::Sigmoid ? sigmoid(z) - data.y[i] : 2.0 * (z - data.y[i]);
      delta.assign(1, wi * dz / wsum);
      for (std::size_t l = nl; l-- > 0;) {
        const std::size_t in = layers_[l], outn = layers_[l + 1];
        const double* wt = params_.data() + offsets[l];
        double* gw = grad->data() + offsets[l];
        double* gb = gw + in * outn;
        for (std::size_t o = 0; o < outn; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          gb[o] += d;
          for (std::size_t k = 0; k < in; ++k) gw[o * in + k] += d * acts[l][k];
        }
        if (l == 0) break;
        prev_delta.assign(in, 0.0);
        for (std::size_t o = 0; o < outn; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          for (std::size_t k = 0; k < in; ++k) prev_delta[k] += wt[o * in + k] * d;
        }
        for (std::size_t k = 0; k < in; ++k) {
          if (!(acts[l][k] > 0.0)) prev_delta[k] = 0.0;
        }
        delta.swap(prev_delta);
      }
    }
    return total / wsum;
  }

  double loss(const Dataset& standardized) const {
    std::vector<std::size_t> idx(standardized.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return loss_and_gradient(standardized, idx, nullptr);
  }

  /// Sign pattern of every hidden pre-activation over the given rows.
  std::vector<bool> activation_pattern(const Dataset& data, std::span<const std::size_t> idx) const {
    std::vector<bool> pattern;
    std::vector<double> a, next;
    for (std::size_t i : idx) {
      auto r = data.row(i);
      a.assign(r.begin(), r.end());
      std::size_t off = 0;
      for (std::size_t l = 0; l + 2 < layers_.size(); ++l) {
        const std::size_t in = layers_[l], outn = layers_[l + 1];
        const double* wt = params_.data() + off;
        const double* b = wt + in * outn;
        next.assign(outn, 0.0);
        for (std::size_t o = 0; o < outn; ++o) {
          double s = b[o];
          for (std::size_t k = 0; k < in; ++k) s += wt[o * in + k] * a[k];
          pattern.push_back(s > 0.0);
          next[o] = std::max(s, 0.0);
        }
        off += in * outn + outn;
        a.swap(next);
      }
    }
    return pattern;
  }

  /// Zeroes the output weights and sets the output bias so the initial
  /// prediction is the weighted mean target of `d`.
  void start_at_baseline(const Dataset& d) {
    double wy = 0.0, ws = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      wy += d.w[i] * d.y[i];
      ws += d.w[i];
    }
    if (!(ws > 0.0)) return;
    double mean = wy / ws;
    if (output_ == OutputActivation::Sigmoid) {
      mean = std::clamp(mean, 1e-6, 1.0 - 1e-6);
      mean = std::log(mean / (1.0 - mean));
    }
    const std::size_t last_in = layers_[layers_.size() - 2];
    const std::size_t off = params_.size() - last_in - 1;
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(off), params_.end() - 1, 0.0);
    params_.back() = mean;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["layers"] = layers_;
    j["output"] = output_ == OutputActivation::Sigmoid ? "sigmoid" : "identity";
    j["parameters"] = params_;
    j["mean"] = standardizer_.mean;
    j["scale"] = standardizer_.scale;
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp m;
    try {
      m.layers_ = j.at("layers").get<std::vector<std::size_t>>();
      const auto out = j.at("output").get<std::string>();
      if (out == "sigmoid") {
        m.output_ = OutputActivation::Sigmoid;
      } else if (out == "identity") {
        m.output_ = OutputActivation::Identity;
      } else {
        fail(ErrorCode::ParseError, "unknown output activation '" + out + "'");
      }
      m.validate_layers();
      m.params_ = j.at("parameters").get<std::vector<double>>();
      m.standardizer_.mean = j.at("mean").get<std::vector<double>>();
      m.standardizer_.scale = j.at("scale").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("model network: ") + e.what());
    }
    if (m.params_.size() != parameter_count(m.layers_) || m.standardizer_.mean.size() != m.layers_[0] ||
        m.standardizer_.scale.size() != m.layers_[0]) {
      fail(ErrorCode::DimensionMismatch, "model parameters do not match layer shapes");
    }
    return m;
  }

  bool operator==(const Mlp& o) const {
    return layers_ == o.layers_ && output_ == o.output_ && params_ == o.params_ &&
           standardizer_.mean == o.standardizer_.mean && standardizer_.scale == o.standardizer_.scale;
  }

 private:
  void validate_layers() const {
    if (layers_.size() < 2 || layers_.back() != 1 || std::find(layers_.begin(), layers_.end(), 0u) != layers_.end()) {
      fail(ErrorCode::ConfigInvalid, "network needs >= 2 non-empty layers ending in one output");
    }
  }

  std::vector<std::size_t> layers_;
  OutputActivation output_ = OutputActivation::Sigmoid;
  std::vector<double> params_;
  Standardizer standardizer_;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden = {32, 32, 32};
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  std::size_t zero_weight_rows = 0;
};

/// Fits the standardizer on the training block, then runs SGD with momentum.
/// The validation block is the trailing `validation_fraction` of the rows
/// (rows are expected in time order). The parameters with the lowest
/// validation loss are restored at the end.
inline Mlp train_mlp(const Dataset& data, OutputActivation out, const TrainConfig& cfg, TrainReport* report = nullptr) {
  if (data.size() == 0) fail(ErrorCode::EmptyInput, "no training rows");
  TrainReport rep;
  Dataset kept;
  kept.dim = data.dim;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data.w[i]) || data.w[i] < 0.0) fail(ErrorCode::ConfigInvalid, "sample weights must be finite and >= 0");
    if (data.w[i] == 0.0) {
      ++rep.zero_weight_rows;
      continue;
    }
    kept.push(data.row(i), data.y[i], data.w[i]);
  }
  if (kept.size() == 0) fail(ErrorCode::EmptyInput, "every training row has zero weight");
  if (out == OutputActivation::Sigmoid) {
    bool has0 = false, has1 = false;
    for (double y : kept.y) (y > 0.5 ? has1 : has0) = true;
    if (!(has0 && has1)) fail(ErrorCode::SingleClass, "training labels contain a single class");
  }

  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(kept.size())));
  if (kept.size() - n_val == 0) n_val = 0;
  const std::size_t n_train = kept.size() - n_val;
  const Dataset train_raw = kept.slice(0, n_train);
  const Dataset val_raw = kept.slice(n_train, kept.size());
  rep.train_rows = n_train;
  rep.validation_rows = n_val;

  std::vector<std::size_t> layers{data.dim};
  layers.insert(layers.end(), cfg.hidden.begin(), cfg.hidden.end());
  layers.push_back(1);
  Mlp model(layers, out, cfg.seed);
  model.set_standardizer(Standardizer::fit(train_raw));
  model.start_at_baseline(train_raw);
  const Dataset train = model.standardizer().apply(train_raw);
  const Dataset val = model.standardizer().apply(val_raw);
  const Dataset& monitor = n_val > 0 ? val : train;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> velocity(model.parameters().size(), 0.0), grad;
  std::vector<double> best = model.parameters();
  double best_loss = model.loss(monitor);
  std::size_t since_best = 0;
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < n_train; start += bs) {
      const std::size_t end = std::min(n_train, start + bs);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      const double l = model.loss_and_gradient(train, batch, &grad);
      if (!std::isfinite(l)) fail(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
      auto& p = model.parameters();
      for (std::size_t k = 0; k < p.size(); ++k) {
        velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grad[k];
        p[k] += velocity[k];
      }
    }
    const double tl = model.loss(train);
    const double vl = n_val > 0 ? model.loss(val) : tl;
    if (!std::isfinite(tl) || !std::isfinite(vl)) fail(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
    rep.train_loss.push_back(tl);
    rep.validation_loss.push_back(vl);
    rep.epochs_run = epoch;
    if (vl < best_loss) {
      best_loss = vl;
      best = model.parameters();
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  model.parameters() = best;
  if (report) *report = rep;
  return model;
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Compares backprop with central differences on a random subset of
/// parameters. `standardized` must already be in network input space.
/// Parameters whose perturbation flips a ReLU on the batch are skipped: the
/// loss is not differentiable there.
inline GradientCheckResult gradient_check(const Mlp& model, const Dataset& standardized, std::size_t n_params,
                                          std::uint64_t seed, double h = 1e-5) {
  std::vector<std::size_t> idx(standardized.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> grad;
  model.loss_and_gradient(standardized, idx, &grad);
  const auto base_pattern = model.activation_pattern(standardized, idx);

  std::vector<std::size_t> which(model.parameters().size());
  std::iota(which.begin(), which.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  shuffle_in_place(which, rng);
  if (n_params < which.size()) which.resize(n_params);

  GradientCheckResult res;
  Mlp probe = model;
  for (std::size_t k : which) {
    const double orig = probe.parameters()[k];
    probe.parameters()[k] = orig + h;
    const double lp = probe.loss_and_gradient(standardized, idx, nullptr);
    const bool kink_p = probe.activation_pattern(standardized, idx) != base_pattern;
    probe.parameters()[k] = orig - h;
    const double lm = probe.loss_and_gradient(standardized, idx, nullptr);
    const bool kink_m = probe.activation_pattern(standardized, idx) != base_pattern;
    probe.parameters()[k] = orig;
    if (kink_p || kink_m) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = grad[k];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    res.max_relative_error = std::max(res.max_relative_error, rel);
    ++res.checked;
  }
  return res;
}

struct FeatureImportance {
  std::string name;
  std::size_t index = 0;
  double score = 0.0;
};

/// Increase in weighted loss when one input column is permuted, averaged
/// over `repeats` shuffles. `raw` is in original feature space.
inline std::vector<FeatureImportance> permutation_importance(const Mlp& model, const Dataset& raw,
                                                             const std::vector<std::string>& names,
                                                             std::uint64_t seed, std::size_t repeats = 3) {
  if (raw.size() == 0) fail(ErrorCode::EmptyInput, "importance needs validation rows");
  if (raw.dim != model.input_dim()) fail(ErrorCode::DimensionMismatch, "validation rows do not match model input");
  const Dataset base = model.standardizer().apply(raw);
  const double base_loss = model.loss(base);
  std::vector<FeatureImportance> out;
  std::mt19937_64 rng(seed);
  for (std::size_t j = 0; j < raw.dim; ++j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      Dataset perm = base;
      std::vector<std::size_t> p(raw.size());
      std::iota(p.begin(), p.end(), std::size_t{0});
      shuffle_in_place(p, rng);
      for (std::size_t i = 0; i < raw.size(); ++i) perm.x[i * raw.dim + j] = base.x[p[i] * raw.dim + j];
      acc += model.loss(perm) - base_loss;
    }
    out.push_back({j < names.size() ? names[j] : "x" + std::to_string(j), j, acc / static_cast<double>(repeats)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

}  // namespace lobfill
