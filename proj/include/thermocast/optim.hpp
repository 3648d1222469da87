#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermocast/tape.hpp"

namespace thermocast {

/// Mean squared error (1/n) * sum (y_i - yhat_i)^2.
double mse(std::span<const double> y, std::span<const double> y_hat);
double mse(const Tensor& y, const Tensor& y_hat);
/// Square root of an MSE value.
double rmse(double mse_value);

/// Differentiable MSE over tensors of identical shape.
Var mse_loss(const Var& prediction, const Var& target);

struct TrainConfig {
  double init_lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 42;
  /// Fraction of the training windows (taken from its end) held out to drive
  /// early stopping. 0 monitors the training loss.
  double validation_fraction = 0.0;
  /// Global gradient-norm clip; 0 disables. Not part of the reference
  /// training recipe.
  double clip_norm = 0.0;

  /// Inverse-time decay coefficient init_lr / epochs.
  double decay() const { return init_lr / static_cast<double>(epochs); }
  void validate() const;
};

/// init_lr / (1 + decay * step), where step counts optimizer updates already
/// applied.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct NAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Momentum schedule mu_t = beta1 * (1 - 0.5 * base^(t / horizon)).
  double schedule_base = 0.96;
  double schedule_horizon = 250.0;
  /// Replaces the schedule with a constant mu when set.
  std::optional<double> fixed_momentum;
  bool bias_correction = true;

  double momentum(std::size_t t) const;
};

struct NAdamState {
  std::size_t step = 0;
  double mu_product = 1.0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Nesterov-Adam update of every parameter in place. Moment buffers are
/// created on the first call.
void nadam_apply(NAdamState& state, const NAdamConfig& cfg, std::span<Tensor> params,
                 std::span<const Tensor> grads, double lr);

enum class StopDecision { Continue, Stop };

struct EarlyStopState {
  double best_loss = 0.0;
  bool has_best = false;
  std::size_t epochs_since_improvement = 0;
  std::vector<Tensor> best_parameters;
  std::string diagnostic;
};

/// Improvement means epoch_loss < best_loss - min_delta; it snapshots the
/// parameters and resets the counter. Stops once the counter reaches
/// patience, or immediately on a non-finite loss, and on stop restores the
/// best snapshot into `params`.
StopDecision early_stop_update(EarlyStopState& state, double epoch_loss, const TrainConfig& cfg,
                               std::span<Tensor> params);

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// pre-clip norm.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

}  // namespace thermocast
