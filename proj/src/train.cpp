#include "stgcrnn/train.hpp"

#include <chrono>
#include <cmath>

#include "stgcrnn/errors.hpp"
#include "stgcrnn/rng.hpp"

namespace stgcrnn::train {

void TrainConfig::validate() const {
  if (base_lr <= 0.0) throw ConfigError("base_lr: must be positive");
  if (decay_every == 0) throw ConfigError("decay_every: must be positive");
  if (decay_ratio <= 0.0) throw ConfigError("decay_ratio: must be positive");
  if (min_lr <= 0.0) throw ConfigError("min_lr: must be positive");
  if (min_lr > base_lr) throw ConfigError("min_lr: must not exceed base_lr");
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (hidden_units == 0) throw ConfigError("hidden_units: must be positive");
  if (num_layers == 0) throw ConfigError("num_layers: must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm: must be non-negative");
}

double lr_schedule(const TrainConfig& config, std::size_t epoch) {
  const double lr =
      config.base_lr * std::pow(config.decay_ratio,
                                static_cast<double>(epoch / config.decay_every));
  return std::max(lr, config.min_lr);
}

ad::Tensor rmse_loss(ad::Tape& tape, std::span<const ad::Tensor> preds,
                     std::span<const ad::Tensor> targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw ContractError("rmse_loss: got " + std::to_string(preds.size()) +
                        " predictions for " + std::to_string(targets.size()) + " targets");
  std::size_t count = 0;
  ad::Tensor total;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    if (preds[t].rows() != targets[t].rows() || preds[t].cols() != targets[t].cols())
      throw ShapeError("rmse_loss: step " + std::to_string(t) + " shapes disagree");
    const ad::Tensor d = tape.sub(preds[t], targets[t]);
    const ad::Tensor sq = tape.sum_all(tape.hadamard(d, d));
    total = t == 0 ? sq : tape.add(total, sq);
    count += preds[t].size();
  }
  return tape.sqrt_scalar(tape.scale(total, 1.0 / static_cast<double>(count)));
}

AdamState AdamState::for_params(std::span<const ad::Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const ad::Tensor> params, AdamState& state, double lr) {
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state covers " + std::to_string(state.m.size()) +
                        " tensors, got " + std::to_string(params.size()));
  for (const auto& p : params) {
    if (!p.has_grad())
      throw ContractError("adam_step: parameter without gradient");
    for (const double g : p.grad())
      if (std::isnan(g))
        throw PoisonedStateError("adam_step: NaN gradient, step refused");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = p.grad();
    auto& x = p.values();
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      x[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void clip_gradients(std::span<const ad::Tensor> params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& p : params)
    for (const double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (const ad::Tensor& pc : params) {
    ad::Tensor p = pc;
    for (double& g : p.grad()) g *= factor;
  }
}

namespace {

std::vector<std::vector<double>> snapshot(std::span<const ad::Tensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.values());
  return out;
}

void restore(std::span<const ad::Tensor> params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor p = params[i];
    p.values() = snap[i];
  }
}

}  // namespace

double validation_rmse(const model::GCRNNModel& model, const data::WindowSet& windows,
                       std::size_t batch_size) {
  double sq_sum = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, windows.size()); ++i)
      idx.push_back(i);
    const data::Batch batch = data::materialize_batch(windows, idx);
    ad::Tape tape(false);
    const auto preds =
        model::forward(tape, model, batch.inputs, model::DecodeMode::autoregressive);
    for (std::size_t t = 0; t < preds.size(); ++t) {
      const auto& p = preds[t].values();
      const auto& y = batch.targets[t].values();
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double d = p[k] - y[k];
        sq_sum += d * d;
      }
      count += p.size();
    }
  }
  if (count == 0) throw ContractError("validation_rmse: no windows");
  return std::sqrt(sq_sum / static_cast<double>(count));
}

FitResult fit(model::GCRNNModel& model, const data::WindowSet& train_windows,
              const data::WindowSet& valid_windows, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  if (train_windows.size() == 0) throw ContractError("fit: empty training split");
  if (valid_windows.size() == 0) throw ContractError("fit: empty validation split");

  const auto params = model.parameters();
  AdamState adam = AdamState::for_params(params);
  Rng shuffle_rng(config.seed);

  FitResult result;
  auto best = snapshot(params);
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;

  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const double lr = lr_schedule(config, epoch);
    shuffle_rng.shuffle(order);

    double loss_weighted = 0.0;
    std::size_t loss_samples = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      const std::size_t b = end - start;
      // a final 1-element batch is dropped; anything larger is kept
      if (b == 1 && start != 0) continue;
      const data::Batch batch = data::materialize_batch(
          train_windows, std::span<const std::size_t>(order.data() + start, b));

      ad::Tape tape;
      const auto preds = model::forward(tape, model, batch.inputs,
                                        model::DecodeMode::teacher_forcing, batch.targets);
      const ad::Tensor loss = rmse_loss(tape, preds, batch.targets);
      const double loss_value = loss.value();
      model.zero_grads();
      tape.backward(loss);
      clip_gradients(params, config.clip_norm);
      adam_step(params, adam, lr);

      loss_weighted += loss_value * static_cast<double>(b);
      loss_samples += b;
    }

    const double valid = validation_rmse(model, valid_windows, config.batch_size);
    if (!std::isfinite(valid))
      throw PoisonedStateError("fit: validation RMSE is not finite at epoch " +
                               std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_samples ? loss_weighted / static_cast<double>(loss_samples) : 0.0;
    rec.valid_rmse = valid;
    rec.lr = lr;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (valid < best_valid) {
      best_valid = valid;
      best_epoch = epoch;
      best = snapshot(params);
      bad_epochs = 0;
      if (!options.checkpoint_path.empty())
        model::save_checkpoint(model, options.checkpoint_extra_json, options.checkpoint_path);
    } else {
      ++bad_epochs;
      if (bad_epochs > config.patience) {
        result.early_stopped = true;
        break;
      }
    }
    if (options.stop_when && options.stop_when(rec)) break;
  }

  restore(params, best);
  result.best_epoch = best_epoch;
  result.best_valid_rmse = best_valid;
  return result;
}

}  // namespace stgcrnn::train
