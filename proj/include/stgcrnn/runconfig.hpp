#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "stgcrnn/data.hpp"
#include "stgcrnn/model.hpp"
#include "stgcrnn/train.hpp"

namespace stgcrnn {

/// Fully-resolved run configuration. Parsed from a JSON document with unknown
/// keys rejected; APP_<KEY> environment variables override file values.
struct RunConfig {
  // graph / convolution
  std::string conv_kind = "diffusion_dual";
  int order = 2;  ///< K
  double epsilon = 0.01;
  std::string laplacian_kind = "sym_normalized";
  std::string lambda_max_mode = "power_iteration";
  std::string cheb_recurrence = "standard";

  // model
  std::size_t history = 12;   ///< T
  std::size_t horizon = 12;   ///< T'
  std::size_t hidden_units = 64;
  std::size_t num_layers = 2;
  std::string target_feature = "pm25";

  // training
  double base_lr = 1e-3;
  std::size_t decay_every = 10;
  double decay_ratio = 0.1;
  double min_lr = 2e-6;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 50;
  double clip_norm = 0.0;
  double validation_fraction = 0.1;
  std::string normalization = "minmax";
  std::size_t stride = 1;
  std::uint64_t seed = 0;

  // data
  std::string graph;    ///< graph JSON path
  std::string dataset;  ///< dataset cache path
  std::string split_boundary;  ///< ISO timestamp; empty uses test_fraction
  double test_fraction = 0.2;
  std::string units = "dimensionless";

  std::string to_json() const;
  void validate() const;

  model::ModelConfig model_config(std::size_t input_dim) const;
  train::TrainConfig train_config() const;
  data::NormalizationMode normalization_mode() const;
};

/// Parse a config document; throws ConfigError naming the offending field.
RunConfig run_config_from_json(const std::string& text);

/// Load from file, then apply APP_<UPPERCASED KEY> environment overrides.
RunConfig load_run_config(const std::filesystem::path& path, bool apply_env = true);

/// Apply environment overrides to an existing config.
void apply_env_overrides(RunConfig& config);

}  // namespace stgcrnn
