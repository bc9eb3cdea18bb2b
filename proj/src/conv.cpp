#include "stgcrnn/conv.hpp"

#include <cmath>

#include "stgcrnn/errors.hpp"

namespace stgcrnn::conv {

ConvKind conv_kind_from_string(const std::string& s) {
  if (s == "spectral") return ConvKind::spectral;
  if (s == "diffusion_rw") return ConvKind::diffusion_rw;
  if (s == "diffusion_dual") return ConvKind::diffusion_dual;
  throw ConfigError("unknown conv kind: " + s);
}

std::string to_string(ConvKind k) {
  switch (k) {
    case ConvKind::spectral: return "spectral";
    case ConvKind::diffusion_rw: return "diffusion_rw";
    case ConvKind::diffusion_dual: return "diffusion_dual";
  }
  return "?";
}

std::size_t transition_count(ConvKind kind) {
  return kind == ConvKind::diffusion_dual ? 2 : 1;
}

GConvFilter make_filter(ConvKind kind, int order, std::size_t f_in, std::size_t f_out,
                        Rng& rng) {
  if (order < 0) throw ConfigError("make_filter: order must be >= 0");
  const std::size_t taps = (static_cast<std::size_t>(order) + 1) * transition_count(kind);
  const std::size_t rows = taps * f_in;
  const double a = std::sqrt(6.0 / static_cast<double>(rows + f_out));
  std::vector<double> theta(rows * f_out);
  for (auto& v : theta) v = rng.uniform(-a, a);

  GConvFilter filter;
  filter.kind = kind;
  filter.order = order;
  filter.f_in = f_in;
  filter.f_out = f_out;
  filter.theta = ad::Tensor::leaf(rows, f_out, std::move(theta), true);
  filter.bias = ad::Tensor::zeros(1, f_out, true);
  return filter;
}

GraphOperator make_graph_operator(const Mat& W, ConvKind kind,
                                  graph::LaplacianKind lap_kind,
                                  graph::LambdaMaxMode lambda_mode,
                                  graph::ChebRecurrence recurrence) {
  GraphOperator op;
  op.kind = kind;
  op.recurrence = recurrence;
  op.num_nodes = W.rows();
  if (kind == ConvKind::spectral) {
    auto bundle = graph::make_bundle(W, lap_kind, lambda_mode);
    op.lambda_max = bundle.lambda_max;
    op.l_scaled = std::make_shared<Mat>(std::move(bundle.L_scaled));
  } else {
    auto set = graph::transition_set(W, kind == ConvKind::diffusion_dual
                                            ? graph::TransitionMode::dual_random_walk
                                            : graph::TransitionMode::random_walk);
    for (auto& m : set.matrices)
      op.transitions.push_back(std::make_shared<Mat>(std::move(m)));
  }
  return op;
}

namespace {

void check_filter(const GraphOperator& op, const GConvFilter& filter, const ad::Tensor& x,
                  ConvKind expected) {
  if (filter.kind != expected)
    throw ConfigError("gconv: filter kind " + to_string(filter.kind) +
                      " does not match operator " + to_string(expected));
  if (op.kind != expected)
    throw ConfigError("gconv: operator kind " + to_string(op.kind) + ", expected " +
                      to_string(expected));
  if (x.cols() != filter.f_in)
    throw ConfigError("gconv: input has " + std::to_string(x.cols()) +
                      " features, filter expects " + std::to_string(filter.f_in));
  const std::size_t taps =
      (static_cast<std::size_t>(filter.order) + 1) * transition_count(filter.kind);
  if (filter.theta.rows() != taps * filter.f_in || filter.theta.cols() != filter.f_out)
    throw ConfigError("gconv: theta shape " + std::to_string(filter.theta.rows()) + "x" +
                      std::to_string(filter.theta.cols()) + " inconsistent with K=" +
                      std::to_string(filter.order) + ", f_in=" + std::to_string(filter.f_in) +
                      ", f_out=" + std::to_string(filter.f_out));
}

std::vector<ad::Tensor> chebyshev_taps(ad::Tape& tape, const GraphOperator& op, int order,
                                       const ad::Tensor& x) {
  std::vector<ad::Tensor> taps;
  taps.reserve(static_cast<std::size_t>(order) + 1);
  taps.push_back(x);
  if (order >= 1) taps.push_back(tape.graph_matmul(op.l_scaled, x));
  const double factor = op.recurrence == graph::ChebRecurrence::standard ? 2.0 : 1.0;
  for (int k = 2; k <= order; ++k) {
    ad::Tensor t = tape.graph_matmul(op.l_scaled, taps[static_cast<std::size_t>(k - 1)],
                                     factor);
    taps.push_back(tape.sub(t, taps[static_cast<std::size_t>(k - 2)]));
  }
  return taps;
}

std::vector<ad::Tensor> diffusion_taps(ad::Tape& tape, const GraphOperator& op, int order,
                                       const ad::Tensor& x) {
  std::vector<ad::Tensor> taps;
  taps.reserve((static_cast<std::size_t>(order) + 1) * op.transitions.size());
  for (const auto& p : op.transitions) {
    ad::Tensor v = x;
    taps.push_back(v);
    for (int k = 1; k <= order; ++k) {
      v = tape.graph_matmul(p, v);
      taps.push_back(v);
    }
  }
  return taps;
}

}  // namespace

std::vector<ad::Tensor> propagation_taps(ad::Tape& tape, const GraphOperator& op, int order,
                                         const ad::Tensor& x) {
  if (x.rows() % op.num_nodes != 0)
    throw ShapeError("propagation_taps: signal rows " + std::to_string(x.rows()) +
                     " not a multiple of node count " + std::to_string(op.num_nodes));
  return op.kind == ConvKind::spectral ? chebyshev_taps(tape, op, order, x)
                                       : diffusion_taps(tape, op, order, x);
}

ad::Tensor apply_filter(ad::Tape& tape, const GConvFilter& filter,
                        std::span<const ad::Tensor> taps) {
  return tape.linear_taps(taps, filter.theta, filter.bias);
}

ad::Tensor spectral_gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                          const ad::Tensor& x) {
  check_filter(op, filter, x, ConvKind::spectral);
  const auto taps = chebyshev_taps(tape, op, filter.order, x);
  return apply_filter(tape, filter, taps);
}

ad::Tensor diffusion_gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                           const ad::Tensor& x) {
  check_filter(op, filter, x, filter.kind);
  if (filter.kind == ConvKind::spectral)
    throw ConfigError("diffusion_gconv: filter kind is spectral");
  const auto taps = diffusion_taps(tape, op, filter.order, x);
  return apply_filter(tape, filter, taps);
}

ad::Tensor gconv(ad::Tape& tape, const GraphOperator& op, const GConvFilter& filter,
                 const ad::Tensor& x) {
  return op.kind == ConvKind::spectral ? spectral_gconv(tape, op, filter, x)
                                       : diffusion_gconv(tape, op, filter, x);
}

}  // namespace stgcrnn::conv
