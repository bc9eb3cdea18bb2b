#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stgcrnn/autodiff.hpp"
#include "stgcrnn/data.hpp"
#include "stgcrnn/model.hpp"

namespace stgcrnn::train {

struct TrainConfig {
  double base_lr = 1e-3;
  std::size_t decay_every = 10;  ///< epochs
  double decay_ratio = 0.1;
  double min_lr = 2e-6;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 50;  ///< non-improving epochs tolerated before stopping
  std::size_t hidden_units = 64;
  std::size_t num_layers = 2;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  ///< global-norm gradient clip; 0 disables

  void validate() const;
};

/// lr = max(base_lr * decay_ratio^floor(epoch / decay_every), min_lr)
double lr_schedule(const TrainConfig& config, std::size_t epoch);

/// sqrt of the mean squared difference over all steps and entries;
/// differentiable with subgradient 0 at exactly zero loss.
ad::Tensor rmse_loss(ad::Tape& tape, std::span<const ad::Tensor> preds,
                     std::span<const ad::Tensor> targets);

/// Adam moment accumulators, one slot per parameter tensor.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState for_params(std::span<const ad::Tensor> params);
};

/// One Adam update from the gradients currently on the parameters. Any NaN
/// gradient refuses the whole step (PoisonedStateError) without mutating
/// parameters or state.
void adam_step(std::span<const ad::Tensor> params, AdamState& state, double lr);

/// Scale gradients so their global L2 norm is at most max_norm (no-op if 0).
void clip_gradients(std::span<const ad::Tensor> params, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_rmse = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_rmse = 0.0;
  bool early_stopped = false;
};

struct FitOptions {
  std::function<void(const EpochRecord&)> on_epoch;  ///< optional
  std::filesystem::path checkpoint_path;  ///< save best model here when set
  std::string checkpoint_extra_json;
  std::function<bool(const EpochRecord&)> stop_when;  ///< optional extra stop rule
};

/// Epoch loop: seeded shuffled batches, teacher-forced decode, RMSE loss,
/// Adam with the step-decay schedule, per-epoch autoregressive validation
/// RMSE, best-checkpoint tracking and early stopping. The model ends with the
/// best-validation parameters. Bitwise reproducible for a fixed seed.
FitResult fit(model::GCRNNModel& model, const data::WindowSet& train_windows,
              const data::WindowSet& valid_windows, const TrainConfig& config,
              const FitOptions& options = {});

/// Validation RMSE (normalized units) of autoregressive predictions.
double validation_rmse(const model::GCRNNModel& model, const data::WindowSet& windows,
                       std::size_t batch_size);

}  // namespace stgcrnn::train
