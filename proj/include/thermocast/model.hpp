#pragma once

// The convolutional-recurrent-attention forecaster: architecture, training
// loop and evaluation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermocast/datapipe.hpp"
#include "thermocast/layers.hpp"
#include "thermocast/optim.hpp"
#include "thermocast/tape.hpp"

namespace thermocast {

/// How the per-step Dense(dense_units) output collapses to one vector.
enum class SequenceReduction { LastStep, MeanOverTime };

struct ModelConfig {
  std::size_t window = 30;
  std::size_t kernel_size = 2;
  std::size_t conv1_filters = 256;
  std::size_t conv2_filters = 128;
  std::size_t pool = 2;
  std::size_t lstm_units = 100;
  std::size_t bilstm_units = 128;  // per direction
  std::size_t dense_units = 100;
  double dropout_rate = 0.3;
  double forget_bias = 1.0;
  Activation dense_activation = Activation::Relu;
  SequenceReduction reduction = SequenceReduction::LastStep;

  /// Same layer sequence with tiny widths, for fast gradient and
  /// convergence checks.
  static ModelConfig miniature();
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TraceRow {
  std::string layer;
  Shape shape;
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};
using ShapeTrace = std::vector<TraceRow>;

/// Output shape of every layer for a batch of `batch` windows, derived from
/// the configuration alone.
ShapeTrace expected_trace(const ModelConfig& cfg, std::size_t batch);

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ForwardOptions {
  Mode mode = Mode::Infer;
  std::uint64_t dropout_seed = 0;
  /// Project the flattened features through the first LSTM's input weights
  /// once and repeat the projection, instead of repeating the features and
  /// projecting every step. Same values, about window-times less work.
  bool factor_repeat = true;
  /// Record per-layer output shapes; forces factor_repeat off so the
  /// repeated tensor exists.
  bool trace = false;
};

struct ForwardResult {
  Var output;        // [B, 1]
  Tensor attention;  // [B, T, T]
  ShapeTrace trace;
};

class Model {
 public:
  /// Initializes parameters from `seed` and verifies the shape trace of a
  /// dry run on a zero window. Throws ShapeError naming the first row that
  /// disagrees with expected_trace().
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ShapeTrace& shape_trace() const noexcept { return trace_; }

  std::vector<NamedTensor>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Runs the stack on tape-bound parameters (one Var per parameters()
  /// entry, same order) and an input of shape [B, window, 1].
  ForwardResult forward(std::span<const Var> params, const Var& x, const ForwardOptions& opts = {}) const;

  /// Inference-mode predictions [N, 1] for inputs [N, window, 1].
  Tensor predict(const Tensor& inputs, std::size_t batch_size = 64) const;

 private:
  Model(ModelConfig cfg, std::uint64_t seed) : config_(cfg), seed_(seed) {}

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<NamedTensor> params_;
  ShapeTrace trace_;
};

/// Binds every parameter as a gradient leaf on `tape`, in order.
std::vector<Var> bind_parameters(GradTape& tape, const Model& model);

struct Metrics {
  double mse_scaled = 0.0;
  double rmse_scaled = 0.0;
  double mse_original = 0.0;
  double rmse_original = 0.0;
};

struct Evaluation {
  Metrics metrics;
  std::vector<Day> dates;
  std::vector<double> actual;     // original units
  std::vector<double> predicted;  // original units
};

Evaluation evaluate(const Model& model, const WindowedDataset& data, const ScalerParams& scaler);

/// CSV with header "date,actual,predicted", one row per window.
void export_predictions(const Evaluation& eval, const std::string& path);

struct TrainReport {
  std::vector<double> loss_history;        // mean training loss per epoch
  std::vector<double> monitored_history;   // loss early stopping watched
  std::size_t stopped_epoch = 0;           // epochs run
  bool early_stopped = false;
  std::string stop_reason;
  std::size_t steps = 0;
  double final_lr = 0.0;
  Metrics train_metrics;
  Metrics test_metrics;
  double wall_seconds = 0.0;
};

/// Mini-batch NAdam on the training windows with per-step learning-rate
/// decay and early stopping, then metrics on both splits. Deterministic for a
/// given seed. Throws NumericError on a non-finite batch loss after restoring
/// the parameters of the last completed epoch.
TrainReport train(Model& model, const PreparedData& data, const TrainConfig& cfg, const NAdamConfig& nadam = {});

/// The loop alone, without the final metrics.
TrainReport train_windows(Model& model, const WindowedDataset& train_set, const TrainConfig& cfg,
                          const NAdamConfig& nadam = {});

}  // namespace thermocast
