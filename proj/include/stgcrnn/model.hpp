#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgcrnn/autodiff.hpp"
#include "stgcrnn/conv.hpp"
#include "stgcrnn/graph.hpp"

namespace stgcrnn::model {

/// GRU cell whose gate transforms are graph convolutions. The three filters
/// share kind and order; biases live inside the filters.
struct GCRNNCell {
  conv::GConvFilter reset_filter;      // Theta_r, b_r
  conv::GConvFilter update_filter;     // Theta_u, b_u
  conv::GConvFilter candidate_filter;  // Theta_C, b_C
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

GCRNNCell make_cell(conv::ConvKind kind, int order, std::size_t input_dim,
                    std::size_t hidden_dim, Rng& rng);

/// r = sigma(Theta_r *G [X, H] + b_r)
/// u = sigma(Theta_u *G [X, H] + b_u)
/// C = tanh(Theta_C *G [X, r (*) H] + b_C)
/// H' = u (*) H + (1 - u) (*) C
ad::Tensor cell_step(ad::Tape& tape, const conv::GraphOperator& op, const GCRNNCell& cell,
                     const ad::Tensor& x_t, const ad::Tensor& h_prev);

struct ModelConfig {
  conv::ConvKind kind = conv::ConvKind::diffusion_dual;
  int order = 2;  ///< K
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t history = 12;  ///< T
  std::size_t horizon = 12;  ///< T'
  graph::LaplacianKind laplacian_kind = graph::LaplacianKind::sym_normalized;
  graph::LambdaMaxMode lambda_mode = graph::LambdaMaxMode::power_iteration;
  graph::ChebRecurrence recurrence = graph::ChebRecurrence::standard;
};

/// Encoder-decoder forecaster. Encoder layer 1 consumes input_dim features;
/// the decoder bottom layer consumes the previous width-1 output; the final
/// state of each encoder layer initializes the matching decoder layer. The
/// projection is a per-node affine map shared across nodes.
struct GCRNNModel {
  ModelConfig config;
  std::vector<std::string> node_ids;
  Mat adjacency;  ///< W the operator context was built from
  conv::GraphOperator op;
  std::vector<GCRNNCell> encoder;
  std::vector<GCRNNCell> decoder;
  ad::Tensor proj_weight;  ///< [hidden, 1]
  ad::Tensor proj_bias;    ///< [1, 1]

  /// All learnable tensors in a fixed order (encoder cells, decoder cells,
  /// projection; within a cell: reset, update, candidate; theta before bias).
  std::vector<ad::Tensor> parameters() const;
  void zero_grads() const;
};

GCRNNModel make_model(const ModelConfig& config, const Mat& adjacency,
                      std::vector<std::string> node_ids, std::uint64_t seed);

/// Run the encoder over `inputs` (length T, each [rows x input_dim]) and
/// return the final hidden state of every layer.
std::vector<ad::Tensor> encode(ad::Tape& tape, const GCRNNModel& model,
                               std::span<const ad::Tensor> inputs);

enum class DecodeMode { teacher_forcing, autoregressive };

/// Run the decoder for `steps` steps from the given layer states. The first
/// input is the zero start signal; later inputs are the previous target
/// (teacher forcing) or the previous projected output (autoregressive).
std::vector<ad::Tensor> decode(ad::Tape& tape, const GCRNNModel& model,
                               std::vector<ad::Tensor> states, std::size_t steps,
                               DecodeMode mode,
                               std::span<const ad::Tensor> targets = {});

/// encode + decode over the model's configured horizon (or `steps` if given).
std::vector<ad::Tensor> forward(ad::Tape& tape, const GCRNNModel& model,
                                std::span<const ad::Tensor> inputs, DecodeMode mode,
                                std::span<const ad::Tensor> targets = {},
                                std::optional<std::size_t> steps = {});

/// Learnable scalars in one cell: 3 * (taps * (input+hidden) * hidden + hidden).
std::size_t cell_parameter_count(const GCRNNCell& cell);

/// Closed-form total over encoder, decoder and projection.
std::size_t count_parameters(const GCRNNModel& model);

/// Versioned JSON checkpoint: config, graph, all parameter tensors and a
/// caller-owned metadata document. Round-trips bit-exactly.
void save_checkpoint(const GCRNNModel& model, const std::string& extra_json,
                     const std::filesystem::path& path);

struct Checkpoint {
  GCRNNModel model;
  std::string extra_json;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stgcrnn::model
