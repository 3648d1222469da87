#include "thermocast/optim.hpp"

#include <cmath>

#include "thermocast/errors.hpp"
#include "thermocast/ops.hpp"

namespace thermocast {

double mse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw ContractError("mse: length mismatch " + std::to_string(y.size()) + " vs " + std::to_string(y_hat.size()));
  }
  if (y.empty()) throw ContractError("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    total += d * d;
  }
  return total / static_cast<double>(y.size());
}

double mse(const Tensor& y, const Tensor& y_hat) { return mse(y.data(), y_hat.data()); }

double rmse(double mse_value) {
  if (!(mse_value >= 0.0)) throw ContractError("rmse: negative or NaN mse " + std::to_string(mse_value));
  return std::sqrt(mse_value);
}

Var mse_loss(const Var& prediction, const Var& target) {
  const Var diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

void TrainConfig::validate() const {
  if (!(init_lr > 0.0)) throw ContractError("init_lr must be positive");
  if (epochs == 0) throw ContractError("epochs must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (!(min_delta >= 0.0)) throw ContractError("min_delta must be non-negative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation_fraction must be in [0, 1)");
  }
  if (!(clip_norm >= 0.0)) throw ContractError("clip_norm must be non-negative");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  return cfg.init_lr / (1.0 + cfg.decay() * static_cast<double>(step));
}

double NAdamConfig::momentum(std::size_t t) const {
  if (fixed_momentum) return *fixed_momentum;
  return beta1 * (1.0 - 0.5 * std::pow(schedule_base, static_cast<double>(t) / schedule_horizon));
}

void nadam_apply(NAdamState& state, const NAdamConfig& cfg, std::span<Tensor> params,
                 std::span<const Tensor> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ContractError("nadam: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw ContractError("nadam: parameter " + std::to_string(i) + " has shape " + to_string(params[i].shape()) +
                          " but gradient " + to_string(grads[i].shape()));
    }
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  } else if (state.m.size() != params.size()) {
    throw ContractError("nadam: parameter count changed between steps");
  }

  state.step += 1;
  const std::size_t t = state.step;
  const double mu_t = cfg.momentum(t);
  const double mu_next = cfg.momentum(t + 1);
  state.mu_product *= mu_t;
  const double mu_prod = state.mu_product;
  const double beta1 = cfg.beta1, beta2 = cfg.beta2;
  const double v_correction = 1.0 - std::pow(beta2, static_cast<double>(t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i].raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    const double* g = grads[i].raw();
    const std::size_t n = params[i].numel();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      double m_hat, v_hat;
      if (cfg.bias_correction) {
        m_hat = mu_next * m[j] / (1.0 - mu_prod * mu_next) + (1.0 - mu_t) * g[j] / (1.0 - mu_prod);
        v_hat = v[j] / v_correction;
      } else {
        m_hat = mu_next * m[j] + (1.0 - mu_t) * g[j];
        v_hat = v[j];
      }
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

StopDecision early_stop_update(EarlyStopState& state, double epoch_loss, const TrainConfig& cfg,
                               std::span<Tensor> params) {
  auto restore = [&] {
    if (!state.has_best) return;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = state.best_parameters[i];
  };
  if (!std::isfinite(epoch_loss)) {
    state.diagnostic = "non-finite loss " + std::to_string(epoch_loss) + " after " +
                       std::to_string(state.epochs_since_improvement) + " epochs without improvement";
    restore();
    return StopDecision::Stop;
  }
  if (!state.has_best || epoch_loss < state.best_loss - cfg.min_delta) {
    state.best_loss = epoch_loss;
    state.has_best = true;
    state.epochs_since_improvement = 0;
    state.best_parameters.assign(params.begin(), params.end());
    return StopDecision::Continue;
  }
  state.epochs_since_improvement += 1;
  if (state.epochs_since_improvement >= cfg.patience) {
    state.diagnostic = "no improvement beyond min_delta for " + std::to_string(state.epochs_since_improvement) +
                       " epochs";
    restore();
    return StopDecision::Stop;
  }
  return StopDecision::Continue;
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= f;
    }
  }
  return norm;
}

}  // namespace thermocast
