#include "stgcrnn/autodiff.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>

namespace stgcrnn::ad {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes disagree: " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::leaf(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("Tensor::leaf: " + std::to_string(values.size()) +
                     " values for shape " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->rows = rows;
  t.d_->cols = cols;
  t.d_->values = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return leaf(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  return leaf(rows, cols, std::vector<double>(rows * cols, value));
}

Tensor Tensor::scalar(double value) { return leaf(1, 1, {value}); }

Tensor Tensor::from_mat(const Mat& m, bool requires_grad) {
  return leaf(m.rows(), m.cols(), m.vec(), requires_grad);
}

double Tensor::value() const {
  if (!is_scalar()) throw ContractError("Tensor::value: tensor is " + shape_str(*this));
  return d_->values[0];
}

void Tensor::ensure_grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
}

void Tensor::zero_grad() { d_->grad.assign(d_->values.size(), 0.0); }

Mat Tensor::to_mat() const { return Mat(rows(), cols(), d_->values); }

// ---- op metadata --------------------------------------------------------------

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::graph_matmul: return "graph_matmul";
    case OpKind::linear_taps: return "linear_taps";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::hadamard: return "hadamard";
    case OpKind::gru_blend: return "gru_blend";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::scale: return "scale";
    case OpKind::concat_columns: return "concat_columns";
    case OpKind::add_row_bias: return "add_row_bias";
    case OpKind::sum_all: return "sum_all";
    case OpKind::sqrt_scalar: return "sqrt_scalar";
  }
  return "?";
}

// ---- forward kernels ----------------------------------------------------------

void Tape::run_forward(const Node& node, std::vector<double>& out) {
  const auto& in = node.inputs;
  switch (node.kind) {
    case OpKind::matmul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      detail::gemm(false, false, a.rows(), b.cols(), a.cols(), 1.0, a.values().data(),
                   b.values().data(), 0.0, out.data());
      break;
    }
    case OpKind::graph_matmul: {
      const Mat& p = *node.pmat;
      const Tensor& x = in[0];
      const std::size_t n = p.rows();
      const std::size_t f = x.cols();
      const std::size_t blocks = x.rows() / n;
      for (std::size_t b = 0; b < blocks; ++b) {
        detail::gemm(false, false, n, f, n, node.alpha, p.data(),
                     x.values().data() + b * n * f, 0.0, out.data() + b * n * f);
      }
      break;
    }
    case OpKind::linear_taps: {
      const std::size_t num_taps = in.size() - 2;
      const Tensor& theta = in[num_taps];
      const Tensor& bias = in[num_taps + 1];
      const std::size_t r = in[0].rows();
      const std::size_t f = in[0].cols();
      const std::size_t fo = theta.cols();
      for (std::size_t i = 0; i < r; ++i)
        std::memcpy(out.data() + i * fo, bias.values().data(), fo * sizeof(double));
      for (std::size_t k = 0; k < num_taps; ++k) {
        detail::gemm(false, false, r, fo, f, 1.0, in[k].values().data(),
                     theta.values().data() + k * f * fo, 1.0, out.data());
      }
      break;
    }
    case OpKind::add: {
      const auto& a = in[0].values();
      const auto& b = in[1].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
      break;
    }
    case OpKind::sub: {
      const auto& a = in[0].values();
      const auto& b = in[1].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
      break;
    }
    case OpKind::hadamard: {
      const auto& a = in[0].values();
      const auto& b = in[1].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
      break;
    }
    case OpKind::gru_blend: {
      const auto& u = in[0].values();
      const auto& h = in[1].values();
      const auto& c = in[2].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = u[i] * h[i] + (1.0 - u[i]) * c[i];
      break;
    }
    case OpKind::sigmoid: {
      const auto& x = in[0].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
      break;
    }
    case OpKind::tanh: {
      const auto& x = in[0].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    }
    case OpKind::scale: {
      const auto& x = in[0].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = node.alpha * x[i];
      break;
    }
    case OpKind::concat_columns: {
      const std::size_t r = in[0].rows();
      std::size_t total = 0;
      for (const auto& x : in) total += x.cols();
      std::size_t off = 0;
      for (const auto& x : in) {
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < r; ++i)
          std::memcpy(out.data() + i * total + off, x.values().data() + i * c,
                      c * sizeof(double));
        off += c;
      }
      break;
    }
    case OpKind::add_row_bias: {
      const Tensor& x = in[0];
      const auto& b = in[1].values();
      const std::size_t c = x.cols();
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.values()[i * c + j] + b[j];
      break;
    }
    case OpKind::sum_all: {
      double s = 0.0;
      for (double v : in[0].values()) s += v;
      out[0] = s;
      break;
    }
    case OpKind::sqrt_scalar: {
      const double x = in[0].values()[0];
      if (x < 0.0) throw ContractError("sqrt_scalar: negative input");
      out[0] = std::sqrt(x);
      break;
    }
  }
}

// ---- backward kernels ---------------------------------------------------------

void Tape::run_backward(const Node& node) {
  const auto& in = node.inputs;
  const std::vector<double>& gy = node.output.grad();
  const auto wants = [](const Tensor& t) { return t.requires_grad(); };

  switch (node.kind) {
    case OpKind::matmul: {
      Tensor a = in[0], b = in[1];
      if (wants(a)) {
        a.ensure_grad();
        detail::gemm(false, true, a.rows(), a.cols(), b.cols(), 1.0, gy.data(),
                     b.values().data(), 1.0, a.grad().data());
      }
      if (wants(b)) {
        b.ensure_grad();
        detail::gemm(true, false, b.rows(), b.cols(), a.rows(), 1.0, a.values().data(),
                     gy.data(), 1.0, b.grad().data());
      }
      break;
    }
    case OpKind::graph_matmul: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      const Mat& p = *node.pmat;
      const std::size_t n = p.rows();
      const std::size_t f = x.cols();
      const std::size_t blocks = x.rows() / n;
      for (std::size_t b = 0; b < blocks; ++b) {
        detail::gemm(true, false, n, f, n, node.alpha, p.data(), gy.data() + b * n * f, 1.0,
                     x.grad().data() + b * n * f);
      }
      break;
    }
    case OpKind::linear_taps: {
      const std::size_t num_taps = in.size() - 2;
      Tensor theta = in[num_taps];
      Tensor bias = in[num_taps + 1];
      const std::size_t r = in[0].rows();
      const std::size_t f = in[0].cols();
      const std::size_t fo = theta.cols();
      for (std::size_t k = 0; k < num_taps; ++k) {
        Tensor tap = in[k];
        if (wants(tap)) {
          tap.ensure_grad();
          detail::gemm(false, true, r, f, fo, 1.0, gy.data(),
                       theta.values().data() + k * f * fo, 1.0, tap.grad().data());
        }
        if (wants(theta)) {
          theta.ensure_grad();
          detail::gemm(true, false, f, fo, r, 1.0, tap.values().data(), gy.data(), 1.0,
                       theta.grad().data() + k * f * fo);
        }
      }
      if (wants(bias)) {
        bias.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < fo; ++j) bias.grad()[j] += gy[i * fo + j];
      }
      break;
    }
    case OpKind::add: {
      for (int s = 0; s < 2; ++s) {
        Tensor t = in[s];
        if (!wants(t)) continue;
        t.ensure_grad();
        auto& g = t.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
      break;
    }
    case OpKind::sub: {
      if (Tensor a = in[0]; wants(a)) {
        a.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) a.grad()[i] += gy[i];
      }
      if (Tensor b = in[1]; wants(b)) {
        b.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) b.grad()[i] -= gy[i];
      }
      break;
    }
    case OpKind::hadamard: {
      Tensor a = in[0], b = in[1];
      if (wants(a)) {
        a.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) a.grad()[i] += gy[i] * b.values()[i];
      }
      if (wants(b)) {
        b.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) b.grad()[i] += gy[i] * a.values()[i];
      }
      break;
    }
    case OpKind::gru_blend: {
      Tensor u = in[0], h = in[1], c = in[2];
      if (wants(u)) {
        u.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i)
          u.grad()[i] += gy[i] * (h.values()[i] - c.values()[i]);
      }
      if (wants(h)) {
        h.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) h.grad()[i] += gy[i] * u.values()[i];
      }
      if (wants(c)) {
        c.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) c.grad()[i] += gy[i] * (1.0 - u.values()[i]);
      }
      break;
    }
    case OpKind::sigmoid: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      const auto& y = node.output.values();
      for (std::size_t i = 0; i < gy.size(); ++i) x.grad()[i] += gy[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case OpKind::tanh: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      const auto& y = node.output.values();
      for (std::size_t i = 0; i < gy.size(); ++i) x.grad()[i] += gy[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case OpKind::scale: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) x.grad()[i] += node.alpha * gy[i];
      break;
    }
    case OpKind::concat_columns: {
      const std::size_t r = in[0].rows();
      std::size_t total = 0;
      for (const auto& x : in) total += x.cols();
      std::size_t off = 0;
      for (const Tensor& xin : in) {
        Tensor x = xin;
        const std::size_t c = x.cols();
        if (wants(x)) {
          x.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) x.grad()[i * c + j] += gy[i * total + off + j];
        }
        off += c;
      }
      break;
    }
    case OpKind::add_row_bias: {
      Tensor x = in[0], b = in[1];
      const std::size_t c = x.cols();
      if (wants(x)) {
        x.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) x.grad()[i] += gy[i];
      }
      if (wants(b)) {
        b.ensure_grad();
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) b.grad()[j] += gy[i * c + j];
      }
      break;
    }
    case OpKind::sum_all: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      const double g = gy[0];
      for (auto& v : x.grad()) v += g;
      break;
    }
    case OpKind::sqrt_scalar: {
      Tensor x = in[0];
      if (!wants(x)) break;
      x.ensure_grad();
      const double y = node.output.values()[0];
      if (y > 0.0) x.grad()[0] += gy[0] * 0.5 / y;
      // subgradient 0 at exactly zero
      break;
    }
  }
}

// ---- Tape ---------------------------------------------------------------------

Tensor Tape::record(Node&& node) {
  run_forward(node, node.output.values());
  bool any_grad = false;
  for (const auto& t : node.inputs) any_grad = any_grad || t.requires_grad();
  node.output.d_->requires_grad = recording_ && any_grad;
  Tensor out = node.output;
  if (recording_) {
    out.d_->node_id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a) + " vs " +
                     shape_str(b));
  }
  Node n{OpKind::matmul, {a, b}, Tensor::zeros(a.rows(), b.cols())};
  return record(std::move(n));
}

Tensor Tape::graph_matmul(std::shared_ptr<const Mat> p, const Tensor& x, double alpha) {
  if (!p || p->rows() == 0 || p->rows() != p->cols())
    throw ShapeError("graph_matmul: operator must be square and non-empty");
  if (x.rows() % p->rows() != 0) {
    throw ShapeError("graph_matmul: row count " + shape_str(x) +
                     " is not a multiple of operator size " + std::to_string(p->rows()));
  }
  Node n{OpKind::graph_matmul, {x}, Tensor::zeros(x.rows(), x.cols()), alpha, std::move(p)};
  return record(std::move(n));
}

Tensor Tape::linear_taps(std::span<const Tensor> taps, const Tensor& theta,
                         const Tensor& bias) {
  if (taps.empty()) throw ShapeError("linear_taps: no taps");
  for (const auto& t : taps) require_same_shape("linear_taps", taps[0], t);
  const std::size_t f = taps[0].cols();
  if (theta.rows() != taps.size() * f) {
    throw ShapeError("linear_taps: theta is " + shape_str(theta) + ", expected " +
                     std::to_string(taps.size() * f) + " rows for " +
                     std::to_string(taps.size()) + " taps of width " + std::to_string(f));
  }
  if (bias.rows() != 1 || bias.cols() != theta.cols()) {
    throw ShapeError("linear_taps: bias is " + shape_str(bias) + ", expected 1x" +
                     std::to_string(theta.cols()));
  }
  Node n{OpKind::linear_taps, {}, Tensor::zeros(taps[0].rows(), theta.cols())};
  n.inputs.assign(taps.begin(), taps.end());
  n.inputs.push_back(theta);
  n.inputs.push_back(bias);
  return record(std::move(n));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return record(Node{OpKind::add, {a, b}, Tensor::zeros(a.rows(), a.cols())});
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return record(Node{OpKind::sub, {a, b}, Tensor::zeros(a.rows(), a.cols())});
}

Tensor Tape::hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  return record(Node{OpKind::hadamard, {a, b}, Tensor::zeros(a.rows(), a.cols())});
}

Tensor Tape::gru_blend(const Tensor& u, const Tensor& h_prev, const Tensor& cand) {
  require_same_shape("gru_blend", u, h_prev);
  require_same_shape("gru_blend", u, cand);
  return record(Node{OpKind::gru_blend, {u, h_prev, cand}, Tensor::zeros(u.rows(), u.cols())});
}

Tensor Tape::sigmoid(const Tensor& x) {
  return record(Node{OpKind::sigmoid, {x}, Tensor::zeros(x.rows(), x.cols())});
}

Tensor Tape::tanh(const Tensor& x) {
  return record(Node{OpKind::tanh, {x}, Tensor::zeros(x.rows(), x.cols())});
}

Tensor Tape::scale(const Tensor& x, double c) {
  return record(Node{OpKind::scale, {x}, Tensor::zeros(x.rows(), x.cols()), c});
}

Tensor Tape::concat_columns(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_columns: no operands");
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.rows() != xs[0].rows()) {
      throw ShapeError("concat_columns: row counts disagree: " + shape_str(xs[0]) + " vs " +
                       shape_str(x));
    }
    total += x.cols();
  }
  Node n{OpKind::concat_columns, {}, Tensor::zeros(xs[0].rows(), total)};
  n.inputs.assign(xs.begin(), xs.end());
  return record(std::move(n));
}

Tensor Tape::concat_columns(const Tensor& a, const Tensor& b) {
  const Tensor xs[2] = {a, b};
  return concat_columns(std::span<const Tensor>(xs, 2));
}

Tensor Tape::add_row_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_bias: bias is " + shape_str(bias) + ", expected 1x" +
                     std::to_string(x.cols()));
  }
  return record(Node{OpKind::add_row_bias, {x, bias}, Tensor::zeros(x.rows(), x.cols())});
}

Tensor Tape::sum_all(const Tensor& x) {
  return record(Node{OpKind::sum_all, {x}, Tensor::zeros(1, 1)});
}

Tensor Tape::sqrt_scalar(const Tensor& x) {
  if (!x.is_scalar()) throw ContractError("sqrt_scalar: input is " + shape_str(x));
  return record(Node{OpKind::sqrt_scalar, {x}, Tensor::zeros(1, 1)});
}

void Tape::backward(const Tensor& loss, bool release) {
  if (!recording_) throw ContractError("backward: tape is not recording");
  if (!loss.defined() || !loss.is_scalar())
    throw ContractError("backward: loss must be a scalar");
  if (nodes_.empty()) throw ContractError("backward: record is empty");

  Tensor l = loss;
  l.ensure_grad();
  l.grad()[0] += 1.0;

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    Node& n = nodes_[idx];
    if (n.output.requires_grad() && n.output.has_grad()) run_backward(n);
    if (release) {
      n.inputs.clear();
      n.output = Tensor();
      n.pmat.reset();
    }
  }
  if (release) nodes_.clear();
}

bool Tape::replay_matches() const {
  std::vector<double> scratch;
  for (const Node& n : nodes_) {
    scratch.assign(n.output.size(), 0.0);
    run_forward(n, scratch);
    if (std::memcmp(scratch.data(), n.output.values().data(),
                    scratch.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

// ---- gradient check -------------------------------------------------------------

double gradient_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params,
                      double step) {
  if (step <= 0.0) throw ContractError("gradient_check: step must be positive");

  const auto eval = [&f]() {
    Tape t(false);
    Tensor y = f(t);
    if (!y.is_scalar()) throw ContractError("gradient_check: f must produce a scalar");
    return y.value();
  };

  const double probe1 = eval();
  const double probe2 = eval();
  if (std::bit_cast<std::uint64_t>(probe1) != std::bit_cast<std::uint64_t>(probe2))
    throw DeterminismError("gradient_check: two forward passes disagree");

  for (const Tensor& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor y = f(tape);
    if (!y.is_scalar()) throw ContractError("gradient_check: f must produce a scalar");
    tape.backward(y);
    for (const Tensor& p : params) {
      Tensor t = p;
      t.ensure_grad();
      analytic.push_back(t.grad());
    }
  }

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.values()[i];
      p.values()[i] = saved + step;
      const double lp = eval();
      p.values()[i] = saved - step;
      const double lm = eval();
      p.values()[i] = saved;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace stgcrnn::ad
