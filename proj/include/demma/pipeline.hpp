#pragma once

// Model container, losses, training loop, prediction and region-split metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "demma/adam.hpp"
#include "demma/auto_lstm.hpp"
#include "demma/autodiff.hpp"
#include "demma/data_io.hpp"
#include "demma/error.hpp"
#include "demma/forecaster.hpp"
#include "demma/mixture.hpp"
#include "demma/random.hpp"

namespace demma {

inline constexpr int kModelFormatVersion = 1;

struct Hyperparameters {
  std::size_t predictors = 0;  // n
  std::size_t window = 7;      // T
  std::size_t hidden = 64;     // m
  std::size_t heads = 4;       // d
  double tau = 0.5;
  double weight = 0.5;         // w: reconstruction share of the combined loss

  void validate() const {
    if (predictors == 0) throw ConfigError("model needs at least one predictor");
    if (window == 0) throw ConfigError("window length must be >= 1");
    if (hidden == 0) throw ConfigError("hidden size must be >= 1");
    if (heads == 0 || hidden % heads != 0) {
      throw ConfigError("head count " + std::to_string(heads) + " must divide hidden size " + std::to_string(hidden));
    }
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
    if (!(weight >= 0.0 && weight <= 1.0)) throw ConfigError("loss weight w must lie in [0, 1]");
  }
  bool operator==(const Hyperparameters&) const = default;
};

struct DemmaModel {
  int format_version = kModelFormatVersion;
  Hyperparameters hp;
  LstmParams encoder;
  LstmParams decoder;
  AffineParams projection;  // decoder hidden -> predictors
  ForecasterParams forecaster;
  Standardization standardization;  // training-part predictor statistics

  static DemmaModel init(const Hyperparameters& hp, std::uint64_t seed) {
    hp.validate();
    std::mt19937_64 rng(seed);
    DemmaModel model;
    model.hp = hp;
    model.encoder = LstmParams::init(hp.predictors, hp.hidden, rng);
    model.decoder = LstmParams::init(hp.predictors, hp.hidden, rng);
    model.projection = AffineParams::init(hp.hidden, hp.predictors, rng);
    model.forecaster = ForecasterParams::init(hp.hidden, hp.heads, rng);
    model.standardization.mean.assign(hp.predictors, 0.0);
    model.standardization.stddev.assign(hp.predictors, 1.0);
    return model;
  }

  template <class F>
  void for_each_parameter(F&& f) {
    encoder.for_each_parameter("encoder", f);
    decoder.for_each_parameter("decoder", f);
    projection.for_each_parameter("projection", f);
    forecaster.for_each_parameter("forecaster", f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<DemmaModel*>(this)->for_each_parameter(
        [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::vector<Tensor*> parameter_pointers() {
    std::vector<Tensor*> out;
    for_each_parameter([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
  }
  std::vector<NamedTensor> named_parameters() {
    std::vector<NamedTensor> out;
    for_each_parameter([&](const std::string& n, Tensor& t) { out.push_back({n, &t}); });
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  /// Component shapes must agree with the hyperparameters.
  void validate() const {
    hp.validate();
    const DemmaModel ref = zeros_like(hp);
    std::vector<std::pair<std::string, std::vector<std::size_t>>> expected;
    ref.for_each_parameter([&](const std::string& n, const Tensor& t) { expected.push_back({n, t.shape()}); });
    std::size_t k = 0;
    for_each_parameter([&](const std::string& n, const Tensor& t) {
      if (k >= expected.size() || expected[k].first != n || expected[k].second != t.shape()) {
        throw ShapeError("model parameter '" + n + "' has shape " + t.shape_string() + " inconsistent with hyperparameters");
      }
      ++k;
    });
    if (k != expected.size()) throw ShapeError("model has the wrong number of parameter tensors");
    if (standardization.size() != hp.predictors || standardization.stddev.size() != hp.predictors) {
      throw ShapeError("standardization statistics do not match the predictor count");
    }
  }

  static DemmaModel zeros_like(const Hyperparameters& hp) {
    DemmaModel m;
    m.hp = hp;
    m.encoder = LstmParams::zeros(hp.predictors, hp.hidden);
    m.decoder = LstmParams::zeros(hp.predictors, hp.hidden);
    m.projection = {Tensor(hp.hidden, hp.predictors), Tensor(1, hp.predictors)};
    m.forecaster = ForecasterParams::zeros(hp.hidden, hp.heads);
    m.standardization.mean.assign(hp.predictors, 0.0);
    m.standardization.stddev.assign(hp.predictors, 1.0);
    return m;
  }

  bool operator==(const DemmaModel& o) const {
    if (format_version != o.format_version || !(hp == o.hp) || !(standardization == o.standardization)) return false;
    std::vector<const Tensor*> a, b;
    for_each_parameter([&](const std::string&, const Tensor& t) { a.push_back(&t); });
    o.for_each_parameter([&](const std::string&, const Tensor& t) { b.push_back(&t); });
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(*a[i] == *b[i])) return false;
    }
    return true;
  }
};

struct ModelVars {
  LstmVars encoder;
  LstmVars decoder;
  AffineVars projection;
  ForecasterVars forecaster;
};

inline ModelVars bind(Binder& b, const DemmaModel& m) {
  ModelVars v;
  v.encoder = bind(b, m.encoder);
  v.decoder = bind(b, m.decoder);
  v.projection = bind(b, m.projection);
  v.forecaster = bind(b, m.forecaster);
  return v;
}

// ---------------------------------------------------------------------------
// Losses

/// q = CDF(y) under the fitted mixture.
inline double quantile_transform(double y, const MixtureParams& theta) {
  if (!(y >= 0.0)) throw DomainError("quantile_transform requires y >= 0");
  return mixture_cdf(y, theta);
}

inline double quantile_loss(double q, double qhat, double tau) {
  const double e = q - qhat;
  return std::max(tau * e, (tau - 1.0) * e);
}

inline double quantile_loss(std::span<const double> q, std::span<const double> qhat, double tau) {
  if (q.size() != qhat.size()) throw ShapeError("quantile_loss length mismatch");
  if (q.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += quantile_loss(q[i], qhat[i], tau);
  return s / static_cast<double>(q.size());
}

inline double combined_loss(double recon, double quant, double w) { return w * recon + (1.0 - w) * quant; }

struct BatchLosses {
  Var total;
  Var reconstruction;
  Var quantile;
  Var prediction;  // B x 1
};

/// Forward pass of the full model on one batch. `q` holds the batch's
/// quantile targets (B values).
inline BatchLosses model_losses(const ModelVars& v, const Hyperparameters& hp, const std::vector<Tensor>& steps,
                                std::span<const double> q, bool teacher_forcing) {
  Tape& tape = *v.encoder.w_input.tape;
  if (steps.size() != hp.window) {
    throw ShapeError("batch window " + std::to_string(steps.size()) + " != model window " + std::to_string(hp.window));
  }
  std::vector<Var> x;
  x.reserve(steps.size());
  for (const Tensor& s : steps) x.push_back(tape.constant(s));
  const EncodedWindow enc = encode(x, v.encoder);
  const Var recon = reconstruction_loss(x, decode_reconstruct(enc, x, v.decoder, v.projection, teacher_forcing));
  const Var qhat = forecaster_forward(enc, v.forecaster);
  const Var quant = pinball(tape.constant(Tensor(q.size(), 1, std::vector<double>(q.begin(), q.end()))), qhat, hp.tau);
  const Var total = add(scale(recon, hp.weight), scale(quant, 1.0 - hp.weight));
  return {total, recon, quant, qhat};
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  SplitConfig split;  // ratios (7:2:1) and window length, applied by the caller

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    split.validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;      // 1-based
  double train_loss = 0.0;    // mean combined loss over the epoch's batches (teacher forced)
  double val_loss = 0.0;      // validation combined loss (autoregressive decoder)
  double recon = 0.0;         // validation reconstruction loss
  double quantile = 0.0;      // validation quantile loss
};

struct TrainResult {
  DemmaModel model;  // best-validation snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_quantile = 0.0;
};

inline void write_train_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,train_loss,val_loss,recon,quantile\n" << std::setprecision(17);
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.recon << ',' << e.quantile << '\n';
  }
}

inline std::vector<double> quantile_targets(const WindowedDataset& w, const MixtureParams& theta) {
  std::vector<double> q;
  q.reserve(w.size());
  for (double y : w.targets) q.push_back(quantile_transform(y, theta));
  return q;
}

struct LossSummary {
  double total = 0.0;
  double reconstruction = 0.0;
  double quantile = 0.0;
};

/// Batch-size-weighted mean losses over a dataset with frozen weights.
inline LossSummary evaluate_losses(const DemmaModel& model, const WindowedDataset& data, std::span<const double> q,
                                   std::size_t batch_size, bool teacher_forcing = false) {
  LossSummary s;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    Binder b(tape, false);
    const ModelVars v = bind(b, model);
    const BatchLosses l = model_losses(v, model.hp, batch_steps(data, idx), q.subspan(start, end - start), teacher_forcing);
    const double k = static_cast<double>(end - start);
    s.total += k * tape.value(l.total).item();
    s.reconstruction += k * tape.value(l.reconstruction).item();
    s.quantile += k * tape.value(l.quantile).item();
  }
  const double n = static_cast<double>(data.size());
  return {s.total / n, s.reconstruction / n, s.quantile / n};
}

struct ModelGradCheckConfig {
  Hyperparameters hp{.predictors = 2, .window = 3, .hidden = 4, .heads = 2, .tau = 0.3, .weight = 0.4};
  std::size_t batch = 5;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool teacher_forcing = true;
  AdjointFault fault = AdjointFault::kNone;
};

/// Finite-difference check of the combined objective with respect to every
/// model parameter, on random standard-normal inputs and quantile targets
/// spread over (0, 1).
inline GradCheckReport model_gradient_check(const ModelGradCheckConfig& cfg) {
  DemmaModel model = DemmaModel::init(cfg.hp, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x2545F4914F6CDD1DULL);
  std::vector<Tensor> steps(cfg.hp.window, Tensor(cfg.batch, cfg.hp.predictors));
  for (Tensor& t : steps)
    for (double& v : t.values()) v = standard_normal(rng);
  std::vector<double> q(cfg.batch);
  for (double& v : q) v = 0.05 + 0.9 * uniform01(rng);
  std::vector<NamedTensor> named = model.named_parameters();
  auto loss = [&](Tape& tape, const std::vector<Var>& vars) {
    Binder b(tape, vars);
    return model_losses(bind(b, model), model.hp, steps, q, cfg.teacher_forcing).total;
  };
  return gradient_check(named, loss, cfg.step, cfg.tolerance, cfg.fault);
}

/// One optimizer step on a batch (teacher forcing); returns the batch's
/// combined loss before the update.
inline double train_step(DemmaModel& model, Adam& adam, const std::vector<Tensor>& steps, std::span<const double> q) {
  Tape tape;
  Binder b(tape, true);
  const ModelVars v = bind(b, model);
  const BatchLosses l = model_losses(v, model.hp, steps, q, true);
  const double loss = tape.value(l.total).item();
  if (!std::isfinite(loss)) return loss;
  tape.backward(l.total);
  std::vector<Tensor> grads;
  grads.reserve(b.vars().size());
  for (Var p : b.vars()) grads.push_back(tape.grad(p));
  adam.step(grads);
  return loss;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains a fresh model (initialized from cfg.seed) on `train`, keeping the
/// snapshot with the lowest validation combined loss. hp.predictors and
/// hp.window are taken from the data.
inline TrainResult train(const WindowedDataset& train_part, const WindowedDataset& val_part,
                         const MixtureParams& theta, Hyperparameters hp, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_part.empty()) throw ConfigError("training part has no windows");
  if (val_part.empty()) throw ConfigError("validation part has no windows");
  if (val_part.window != train_part.window || val_part.predictors != train_part.predictors) {
    throw ShapeError("training and validation windows differ in shape");
  }
  theta.validate();
  hp.predictors = train_part.predictors;
  hp.window = train_part.window;
  hp.validate();

  const std::vector<double> q_train = quantile_targets(train_part, theta);
  const std::vector<double> q_val = quantile_targets(val_part, theta);

  TrainResult result;
  DemmaModel model = DemmaModel::init(hp, cfg.seed);
  model.standardization = train_part.stats;
  Adam adam(model.parameter_pointers(), {.learning_rate = cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  std::vector<std::size_t> order(train_part.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> q_batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_portable(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      q_batch.clear();
      for (std::size_t i : idx) q_batch.push_back(q_train[i]);
      const double loss = train_step(model, adam, batch_steps(train_part, idx), q_batch);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch " << batch_index;
        throw DivergenceError(os.str());
      }
      sum += loss * static_cast<double>(end - start);
    }
    const LossSummary val = evaluate_losses(model, val_part, q_val, cfg.batch_size);
    if (!std::isfinite(val.total)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const EpochLog entry{epoch, sum / static_cast<double>(order.size()), val.total, val.reconstruction, val.quantile};
    result.log.push_back(entry);
    if (val.total < result.best_val_loss) {
      result.best_val_loss = val.total;
      result.best_val_quantile = val.quantile;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction and metrics

struct Predictions {
  std::vector<double> quantile;  // q-hat
  std::vector<double> value;     // y-hat = mixture quantile of q-hat
};

inline Predictions predict(const DemmaModel& model, const MixtureParams& theta, const WindowedDataset& data,
                           std::size_t batch_size = 256) {
  if (data.predictors != model.hp.predictors || data.window != model.hp.window) {
    std::ostringstream os;
    os << "windows are n=" << data.predictors << ", T=" << data.window << " but the model expects n="
       << model.hp.predictors << ", T=" << model.hp.window;
    throw ShapeError(os.str());
  }
  Predictions p;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    Binder b(tape, false);
    const ModelVars v = bind(b, model);
    std::vector<Var> x;
    for (const Tensor& s : batch_steps(data, idx)) x.push_back(tape.constant(s));
    const Tensor q = tape.value(forecaster_forward(encode(x, v.encoder), v.forecaster));
    for (double qi : q.values()) {
      p.quantile.push_back(qi);
      p.value.push_back(mixture_quantile(qi, theta));
    }
  }
  return p;
}

struct RegionMetric {
  std::size_t count = 0;
  std::optional<double> rmse;  // empty when the region has no samples
};

struct MetricsReport {
  double split_quantile = 0.6;
  double threshold = 0.0;  // empirical split_quantile of the targets
  std::size_t count = 0;
  double total_rmse = 0.0;
  RegionMetric zero, moderate, extreme;
};

/// RMSE overall and over zero (y = 0), moderate (0 < y <= θ) and extreme
/// (y > θ) targets, θ = linear-interpolation empirical quantile of y.
inline MetricsReport evaluate(std::span<const double> yhat, std::span<const double> y, double split_quantile = 0.6) {
  if (yhat.size() != y.size()) {
    throw ShapeError("evaluate: " + std::to_string(yhat.size()) + " predictions vs " + std::to_string(y.size()) + " targets");
  }
  if (y.empty()) throw InsufficientDataError("evaluate needs at least one target");
  if (!(split_quantile >= 0.0 && split_quantile <= 1.0)) throw ConfigError("split quantile must lie in [0, 1]");
  for (double v : y) {
    if (!(v >= 0.0)) throw DomainError("evaluate: targets must be >= 0");
  }
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  MetricsReport r;
  r.split_quantile = split_quantile;
  r.threshold = detail::sorted_quantile(sorted, split_quantile);
  r.count = y.size();
  double total = 0.0, zero = 0.0, moderate = 0.0, extreme = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e2 = (yhat[i] - y[i]) * (yhat[i] - y[i]);
    total += e2;
    if (y[i] == 0.0) {
      zero += e2;
      ++r.zero.count;
    } else if (y[i] <= r.threshold) {
      moderate += e2;
      ++r.moderate.count;
    } else {
      extreme += e2;
      ++r.extreme.count;
    }
  }
  r.total_rmse = std::sqrt(total / static_cast<double>(y.size()));
  auto finish = [](RegionMetric& m, double s) {
    if (m.count > 0) m.rmse = std::sqrt(s / static_cast<double>(m.count));
  };
  finish(r.zero, zero);
  finish(r.moderate, moderate);
  finish(r.extreme, extreme);
  return r;
}

}  // namespace demma
