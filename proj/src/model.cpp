#include "thermocast/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "thermocast/errors.hpp"
#include "thermocast/init.hpp"
#include "thermocast/io.hpp"
#include "thermocast/ops.hpp"

namespace thermocast {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Geometry {
  std::size_t conv1_steps, conv2_steps, pooled_steps, flat;
};

Geometry geometry(const ModelConfig& c) {
  Geometry g{};
  g.conv1_steps = c.window - c.kernel_size + 1;
  g.conv2_steps = g.conv1_steps - c.kernel_size + 1;
  g.pooled_steps = (g.conv2_steps - c.pool) / c.pool + 1;
  g.flat = g.pooled_steps * c.conv2_filters;
  return g;
}

// Parameter index layout, fixed by build order.
enum Slot : std::size_t {
  kConv1K, kConv1B, kConv2K, kConv2B,
  kLstm1W, kLstm1U, kLstm1B,
  kLstm2W, kLstm2U, kLstm2B,
  kLstm3W, kLstm3U, kLstm3B,
  kBiFwdW, kBiFwdU, kBiFwdB,
  kBiBwdW, kBiBwdU, kBiBwdB,
  kAttnQ, kAttnK, kAttnV,
  kDense1W, kDense1B, kDense2W, kDense2B,
  kSlotCount
};

LSTMParams lstm_at(std::span<const Var> p, std::size_t first) { return {p[first], p[first + 1], p[first + 2]}; }

}  // namespace

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.window = 6;
  c.conv1_filters = 4;
  c.conv2_filters = 2;
  c.lstm_units = 3;
  c.bilstm_units = 2;
  c.dense_units = 3;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ContractError(std::string("model config: ") + name + " must be positive");
  };
  positive(window, "window");
  positive(kernel_size, "kernel_size");
  positive(conv1_filters, "conv1_filters");
  positive(conv2_filters, "conv2_filters");
  positive(pool, "pool");
  positive(lstm_units, "lstm_units");
  positive(bilstm_units, "bilstm_units");
  positive(dense_units, "dense_units");
  if (window < 2 * (kernel_size - 1) + pool) {
    throw ContractError("model config: window " + std::to_string(window) + " too short for two convolutions of width " +
                        std::to_string(kernel_size) + " and pool " + std::to_string(pool));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ContractError("model config: dropout must be in [0, 1)");
}

ShapeTrace expected_trace(const ModelConfig& c, std::size_t batch) {
  const Geometry g = geometry(c);
  const std::size_t b = batch, t = c.window;
  return {
      {"Conv1D", {b, g.conv1_steps, c.conv1_filters}},
      {"Conv1D", {b, g.conv2_steps, c.conv2_filters}},
      {"MaxPooling1D", {b, g.pooled_steps, c.conv2_filters}},
      {"Flatten", {b, g.flat}},
      {"RepeatVector", {b, t, g.flat}},
      {"LSTM", {b, t, c.lstm_units}},
      {"Dropout", {b, t, c.lstm_units}},
      {"LSTM", {b, t, c.lstm_units}},
      {"Dropout", {b, t, c.lstm_units}},
      {"LSTM", {b, t, c.lstm_units}},
      {"Bidirectional LSTM", {b, t, 2 * c.bilstm_units}},
      {"Self-Attention", {b, t, 2 * c.bilstm_units}},
      {"Dense", {b, t, c.dense_units}},
      {"Dense", {b, 1}},
  };
}

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m(cfg, seed);
  const Geometry g = geometry(cfg);
  InitRng rng(seed);
  auto add = [&](std::string name, Tensor t) { m.params_.push_back({std::move(name), std::move(t)}); };
  const std::size_t k = cfg.kernel_size;

  add("conv1.kernels", glorot_uniform({k, 1, cfg.conv1_filters}, k, k * cfg.conv1_filters, rng));
  add("conv1.bias", Tensor({cfg.conv1_filters}));
  add("conv2.kernels",
      glorot_uniform({k, cfg.conv1_filters, cfg.conv2_filters}, k * cfg.conv1_filters, k * cfg.conv2_filters, rng));
  add("conv2.bias", Tensor({cfg.conv2_filters}));

  auto add_lstm = [&](const std::string& name, std::size_t in, std::size_t units) {
    add(name + ".input_weights", glorot_uniform({4 * units, in}, in, 4 * units, rng));
    add(name + ".recurrent_weights", glorot_uniform({4 * units, units}, units, 4 * units, rng));
    add(name + ".bias", lstm_bias(units, cfg.forget_bias));
  };
  add_lstm("lstm1", g.flat, cfg.lstm_units);
  add_lstm("lstm2", cfg.lstm_units, cfg.lstm_units);
  add_lstm("lstm3", cfg.lstm_units, cfg.lstm_units);
  add_lstm("bilstm.forward", cfg.lstm_units, cfg.bilstm_units);
  add_lstm("bilstm.backward", cfg.lstm_units, cfg.bilstm_units);

  const std::size_t d = 2 * cfg.bilstm_units;
  add("attention.query", glorot_uniform({d, d}, d, d, rng));
  add("attention.key", glorot_uniform({d, d}, d, d, rng));
  add("attention.value", glorot_uniform({d, d}, d, d, rng));
  add("dense1.weights", glorot_uniform({d, cfg.dense_units}, d, cfg.dense_units, rng));
  add("dense1.bias", Tensor({cfg.dense_units}));
  add("dense2.weights", glorot_uniform({cfg.dense_units, 1}, cfg.dense_units, 1, rng));
  add("dense2.bias", Tensor({1}));

  GradTape tape;
  std::vector<Var> vars;
  for (const NamedTensor& p : m.params_) vars.push_back(tape.constant(p.value));
  ForwardOptions opts;
  opts.trace = true;
  const ForwardResult dry = m.forward(vars, tape.constant(Tensor({1, cfg.window, 1})), opts);
  const ShapeTrace want = expected_trace(cfg, 1);
  for (std::size_t i = 0; i < std::max(want.size(), dry.trace.size()); ++i) {
    const std::string expected = i < want.size() ? want[i].layer + " " + to_string(want[i].shape) : "<none>";
    const std::string actual = i < dry.trace.size() ? dry.trace[i].layer + " " + to_string(dry.trace[i].shape) : "<none>";
    if (expected != actual) {
      throw ShapeError("shape trace row " + std::to_string(i + 1) + ": expected " + expected + ", got " + actual);
    }
  }
  m.trace_ = dry.trace;
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& p : params_) n += p.value.numel();
  return n;
}

ForwardResult Model::forward(std::span<const Var> p, const Var& x, const ForwardOptions& opts) const {
  if (p.size() != kSlotCount) {
    throw ContractError("forward: expected " + std::to_string(kSlotCount) + " parameters, got " +
                        std::to_string(p.size()));
  }
  const ModelConfig& c = config_;
  if (x.shape().size() != 3 || x.shape()[1] != c.window || x.shape()[2] != 1) {
    throw ShapeError("model input must be (B, " + std::to_string(c.window) + ", 1), got " + to_string(x.shape()));
  }
  ForwardResult res;
  auto mark = [&](const char* name, const Var& v) {
    if (opts.trace) res.trace.push_back({name, v.shape()});
  };
  const bool factor = opts.factor_repeat && !opts.trace;
  std::uint64_t dropout_calls = 0;
  auto drop = [&](const Var& v) {
    return dropout(v, c.dropout_rate, opts.mode, splitmix(opts.dropout_seed ^ splitmix(++dropout_calls)));
  };

  Var h = relu(conv1d(x, {p[kConv1K], p[kConv1B]}));
  mark("Conv1D", h);
  h = relu(conv1d(h, {p[kConv2K], p[kConv2B]}));
  mark("Conv1D", h);
  h = maxpool1d(h, c.pool, c.pool);
  mark("MaxPooling1D", h);
  h = flatten(h);
  mark("Flatten", h);
  if (factor) {
    const Var proj = add_bias(matmul(h, transpose(p[kLstm1W])), p[kLstm1B]);
    h = lstm_recurrence(repeat_vector(proj, c.window), p[kLstm1U], true);
  } else {
    h = repeat_vector(h, c.window);
    mark("RepeatVector", h);
    h = lstm(h, lstm_at(p, kLstm1W), true);
  }
  mark("LSTM", h);
  h = drop(h);
  mark("Dropout", h);
  h = lstm(h, lstm_at(p, kLstm2W), true);
  mark("LSTM", h);
  h = drop(h);
  mark("Dropout", h);
  h = lstm(h, lstm_at(p, kLstm3W), true);
  mark("LSTM", h);
  h = bilstm(h, lstm_at(p, kBiFwdW), lstm_at(p, kBiBwdW));
  mark("Bidirectional LSTM", h);
  AttentionOutput att = self_attention(h, {p[kAttnQ], p[kAttnK], p[kAttnV]});
  h = att.output;
  res.attention = std::move(att.weights);
  mark("Self-Attention", h);
  h = dense(h, {p[kDense1W], p[kDense1B]}, c.dense_activation);
  mark("Dense", h);
  if (c.reduction == SequenceReduction::LastStep) {
    h = select_step(h, c.window - 1);
  } else {
    Var acc = select_step(h, 0);
    for (std::size_t t = 1; t < c.window; ++t) acc = add(acc, select_step(h, t));
    h = scale(acc, 1.0 / static_cast<double>(c.window));
  }
  h = dense(h, {p[kDense2W], p[kDense2B]}, Activation::Linear);
  mark("Dense", h);
  res.output = h;
  return res;
}

std::vector<Var> bind_parameters(GradTape& tape, const Model& model) {
  std::vector<Var> vars;
  vars.reserve(model.parameters().size());
  for (const NamedTensor& p : model.parameters()) vars.push_back(tape.parameter(p.value));
  return vars;
}

Tensor Model::predict(const Tensor& inputs, std::size_t batch_size) const {
  if (inputs.rank() != 3 || inputs.dim(1) != config_.window || inputs.dim(2) != 1) {
    throw ShapeError("predict: inputs must be (N, " + std::to_string(config_.window) + ", 1), got " +
                     to_string(inputs.shape()));
  }
  const std::size_t n = inputs.dim(0);
  const std::size_t w = config_.window;
  Tensor out({n, 1});
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    GradTape tape;
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const NamedTensor& p : params_) vars.push_back(tape.constant(p.value));
    Tensor chunk({count, w, 1}, std::vector<double>(inputs.raw() + start * w, inputs.raw() + (start + count) * w));
    const ForwardResult r = forward(vars, tape.constant(std::move(chunk)));
    std::copy_n(r.output.value().raw(), count, out.raw() + start);
  }
  return out;
}

Evaluation evaluate(const Model& model, const WindowedDataset& data, const ScalerParams& scaler) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  const Tensor pred = model.predict(data.inputs);
  Evaluation ev;
  ev.metrics.mse_scaled = mse(data.targets, pred);
  ev.metrics.rmse_scaled = rmse(ev.metrics.mse_scaled);
  ev.actual = unscale(data.targets.data(), scaler);
  ev.predicted = unscale(pred.data(), scaler);
  ev.metrics.mse_original = mse(ev.actual, ev.predicted);
  ev.metrics.rmse_original = rmse(ev.metrics.mse_original);
  ev.dates.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) ev.dates.push_back(data.target_date(i));
  return ev;
}

void export_predictions(const Evaluation& eval, const std::string& path) {
  std::string out = "date,actual,predicted\n";
  for (std::size_t i = 0; i < eval.actual.size(); ++i) {
    out += format_date(eval.dates[i]) + "," + format_double(eval.actual[i]) + "," + format_double(eval.predicted[i]) +
           "\n";
  }
  write_file_atomic(path, out);
}

namespace {

std::vector<Tensor> snapshot(const Model& model) {
  std::vector<Tensor> out;
  out.reserve(model.parameters().size());
  for (const NamedTensor& p : model.parameters()) out.push_back(p.value);
  return out;
}

void restore(Model& model, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) model.parameters()[i].value = values[i];
}

// Gathers windows `idx` into a batch.
std::pair<Tensor, Tensor> gather(const WindowedDataset& d, std::span<const std::size_t> idx) {
  const std::size_t w = d.window;
  Tensor x({idx.size(), w, 1});
  Tensor y({idx.size(), 1});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(d.inputs.raw() + idx[i] * w, w, x.raw() + i * w);
    y[i] = d.targets[idx[i]];
  }
  return {std::move(x), std::move(y)};
}

}  // namespace

TrainReport train_windows(Model& model, const WindowedDataset& train_set, const TrainConfig& cfg,
                          const NAdamConfig& nadam) {
  cfg.validate();
  if (train_set.size() == 0) throw ContractError("train: empty training set");
  if (train_set.window != model.config().window) {
    throw ShapeError("train: dataset window " + std::to_string(train_set.window) + " differs from model window " +
                     std::to_string(model.config().window));
  }
  const auto started = std::chrono::steady_clock::now();

  // Optional validation tail drives early stopping instead of the training loss.
  std::size_t fit_count = train_set.size();
  std::optional<WindowedDataset> validation;
  if (cfg.validation_fraction > 0.0) {
    const auto held = static_cast<std::size_t>(std::floor(static_cast<double>(fit_count) * cfg.validation_fraction));
    if (held == 0 || held >= fit_count) {
      throw ContractError("train: validation_fraction leaves an empty split");
    }
    fit_count -= held;
    validation = train_set.slice(fit_count, train_set.size());
  }

  TrainReport report;
  NAdamState opt;
  EarlyStopState stopper;
  std::mt19937_64 shuffle_rng(splitmix(cfg.seed));
  std::vector<std::size_t> order(fit_count);
  std::vector<Tensor> last_good = snapshot(model);
  std::vector<Tensor> values;
  std::vector<Tensor> grads;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with raw engine output, independent of library distributions.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

    double weighted = 0.0;
    for (std::size_t start = 0; start < fit_count; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, fit_count - start);
      auto [xb, yb] = gather(train_set, std::span(order).subspan(start, count));
      GradTape tape;
      const std::vector<Var> vars = bind_parameters(tape, model);
      ForwardOptions fo;
      fo.mode = Mode::Train;
      fo.dropout_seed = splitmix(cfg.seed ^ splitmix(report.steps + 1));
      const ForwardResult fr = model.forward(vars, tape.constant(std::move(xb)), fo);
      const Var loss = mse_loss(fr.output, tape.constant(std::move(yb)));
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        restore(model, last_good);
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(report.steps + 1) + "; parameters restored to the last completed epoch");
      }
      const Gradients g = tape.backward(loss);
      grads.clear();
      for (const Var& v : vars) grads.push_back(g.of(v));
      if (cfg.clip_norm > 0.0) clip_global_norm(grads, cfg.clip_norm);

      values.clear();
      for (NamedTensor& p : model.parameters()) values.push_back(std::move(p.value));
      const double lr = lr_at(report.steps, cfg);
      nadam_apply(opt, nadam, values, grads, lr);
      for (std::size_t i = 0; i < values.size(); ++i) model.parameters()[i].value = std::move(values[i]);
      report.final_lr = lr;
      report.steps += 1;
      weighted += loss_value * static_cast<double>(count);
    }
    const double epoch_loss = weighted / static_cast<double>(fit_count);
    report.loss_history.push_back(epoch_loss);
    double monitored = epoch_loss;
    if (validation) monitored = mse(validation->targets, model.predict(validation->inputs));
    report.monitored_history.push_back(monitored);
    report.stopped_epoch = epoch + 1;

    values = snapshot(model);
    const StopDecision d = early_stop_update(stopper, monitored, cfg, values);
    restore(model, values);
    if (d == StopDecision::Stop) {
      report.early_stopped = true;
      report.stop_reason = stopper.diagnostic;
      break;
    }
    last_good = snapshot(model);
  }
  if (!report.early_stopped) report.stop_reason = "epoch budget reached";
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainReport train(Model& model, const PreparedData& data, const TrainConfig& cfg, const NAdamConfig& nadam) {
  const auto started = std::chrono::steady_clock::now();
  TrainReport report = train_windows(model, data.train, cfg, nadam);
  report.train_metrics = evaluate(model, data.train, data.scaler).metrics;
  report.test_metrics = evaluate(model, data.test, data.scaler).metrics;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace thermocast
