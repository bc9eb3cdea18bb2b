#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stgcrnn/autodiff.hpp"
#include "stgcrnn/graph.hpp"
#include "stgcrnn/rng.hpp"

namespace stgcrnn::conv {

enum class ConvKind { spectral, diffusion_rw, diffusion_dual };

ConvKind conv_kind_from_string(const std::string& s);
std::string to_string(ConvKind k);

/// Number of propagation matrices the operator uses (2 for the dual walk).
std::size_t transition_count(ConvKind kind);

/// Learnable graph filter: theta is [(K+1) * M * f_in, f_out] with tap blocks
/// ordered matrix-major (all powers of the first propagation matrix, then the
/// second), power-minor; bias is [1, f_out].
struct GConvFilter {
  ConvKind kind = ConvKind::spectral;
  int order = 0;  ///< K
  std::size_t f_in = 0, f_out = 0;
  ad::Tensor theta;
  ad::Tensor bias;
};

/// Glorot-uniform theta in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero bias.
GConvFilter make_filter(ConvKind kind, int order, std::size_t f_in, std::size_t f_out,
                        Rng& rng);

/// Immutable operator context shared by every filter of a model: the scaled
/// Laplacian for the spectral operator or the transition matrices for the
/// diffusion operators. Signals passed through it hold stacked blocks of
/// num_nodes rows (one block per batch element).
struct GraphOperator {
  ConvKind kind = ConvKind::spectral;
  graph::ChebRecurrence recurrence = graph::ChebRecurrence::standard;
  std::size_t num_nodes = 0;
  double lambda_max = 0.0;  ///< spectral only, as used for scaling
  std::shared_ptr<const Mat> l_scaled;
  std::vector<std::shared_ptr<const Mat>> transitions;
};

GraphOperator make_graph_operator(const Mat& W, ConvKind kind,
                                  graph::LaplacianKind lap_kind,
                                  graph::LambdaMaxMode lambda_mode,
                                  graph::ChebRecurrence recurrence);

/// Chebyshev filter: stacks [T_0(L~)X ... T_K(L~)X] along features and applies
/// theta plus bias. Differentiable in X, theta and bias.
ad::Tensor spectral_gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                          const ad::Tensor& x);

/// Diffusion filter: stacks [P^0 X ... P^K X] for each transition matrix P and
/// applies theta plus bias. Powers are built iteratively, never materialized.
ad::Tensor diffusion_gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                           const ad::Tensor& x);

/// Dispatch on the operator kind.
ad::Tensor gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                 const ad::Tensor& x);

/// The stacked propagation taps for input x (shared between gate filters).
std::vector<ad::Tensor> propagation_taps(ad::Tape& tape, const GraphOperator& op, int order,
                                         const ad::Tensor& x);

/// Filter application on precomputed taps.
ad::Tensor apply_filter(ad::Tape& tape, const GConvFilter& filter,
                        std::span<const ad::Tensor> taps);

}  // namespace stgcrnn::conv
