#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "stgcrnn/errors.hpp"
#include "stgcrnn/mat.hpp"

namespace stgcrnn::ad {

class Tape;

struct TensorData {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  ///< row-major
  std::vector<double> grad;    ///< empty until backward materializes it
  bool requires_grad = false;
  int node_id = -1;  ///< producing node in the active record, -1 for leaves
};

/// Handle to shared dense storage participating in recorded computation.
/// Copying a Tensor aliases the underlying data; tensors are matrices
/// (scalars are 1x1).
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor from_mat(const Mat& m, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t size() const { return d_->values.size(); }
  bool is_scalar() const { return defined() && d_->rows == 1 && d_->cols == 1; }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  double at(std::size_t i, std::size_t j) const { return d_->values[i * d_->cols + j]; }
  double& at(std::size_t i, std::size_t j) { return d_->values[i * d_->cols + j]; }
  /// Value of a scalar tensor.
  double value() const;

  bool requires_grad() const { return d_->requires_grad; }
  bool has_grad() const { return defined() && !d_->grad.empty(); }
  std::vector<double>& grad() { return d_->grad; }
  const std::vector<double>& grad() const { return d_->grad; }
  double grad_at(std::size_t i, std::size_t j) const { return d_->grad[i * d_->cols + j]; }

  /// Allocate the gradient buffer (zero-filled) if absent.
  void ensure_grad();
  /// Reset the gradient buffer to zero (allocating it if needed).
  void zero_grad();

  int node_id() const { return d_->node_id; }
  Mat to_mat() const;

  /// True when both handles alias the same storage.
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<TensorData> d_;
  friend class Tape;
};

enum class OpKind {
  matmul,
  graph_matmul,
  linear_taps,
  add,
  sub,
  hadamard,
  gru_blend,
  sigmoid,
  tanh,
  scale,
  concat_columns,
  add_row_bias,
  sum_all,
  sqrt_scalar,
};

const char* op_name(OpKind kind);

/// Append-only record of executed primitives. Every node's inputs precede it;
/// replaying the record forward reproduces all outputs bit-identically.
///
/// A Tape and its tensors belong to one worker at a time. A non-recording
/// tape computes values without retaining nodes (no backward possible);
/// this is the inference path.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  // ---- recorded primitives ----------------------------------------------

  /// [m x k] * [k x n] -> [m x n]
  Tensor matmul(const Tensor& a, const Tensor& b);

  /// Applies a constant n x n graph matrix blockwise: x holds B stacked
  /// blocks of n rows and y_b = alpha * P * x_b. No gradient flows to P.
  Tensor graph_matmul(std::shared_ptr<const Mat> p, const Tensor& x, double alpha = 1.0);

  /// y = sum_k taps[k] * theta[k-th row block] + 1 * bias. Equivalent to
  /// concatenating the taps along columns and multiplying by theta, without
  /// materializing the concatenation. theta is [(num_taps * f_in) x f_out],
  /// bias [1 x f_out].
  Tensor linear_taps(std::span<const Tensor> taps, const Tensor& theta, const Tensor& bias);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor hadamard(const Tensor& a, const Tensor& b);

  /// y = u (*) h_prev + (1 - u) (*) cand, the GRU state blend.
  Tensor gru_blend(const Tensor& u, const Tensor& h_prev, const Tensor& cand);

  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor scale(const Tensor& x, double c);

  /// Stacks operands along the feature axis; all must share the row count.
  Tensor concat_columns(std::span<const Tensor> xs);
  Tensor concat_columns(const Tensor& a, const Tensor& b);

  /// y = x + ones * bias with bias [1 x cols].
  Tensor add_row_bias(const Tensor& x, const Tensor& bias);

  /// Sum of all entries -> scalar.
  Tensor sum_all(const Tensor& x);

  /// sqrt of a scalar; subgradient 0 at exactly zero input.
  Tensor sqrt_scalar(const Tensor& x);

  // ---- record control -----------------------------------------------------

  /// Reverse sweep from a scalar loss. Gradients accumulate additively into
  /// every tensor with requires_grad that participated. With release=true
  /// (default) the record is dismantled as the sweep progresses and the tape
  /// ends empty; release=false keeps it for replay.
  void backward(const Tensor& loss, bool release = true);

  /// Recompute every node forward and compare against the stored outputs.
  /// True iff all values are bit-identical.
  bool replay_matches() const;

  void clear() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    double alpha = 0.0;               // scale / graph_matmul coefficient
    std::shared_ptr<const Mat> pmat;  // graph_matmul operator
  };

  Tensor record(Node&& node);
  static void run_forward(const Node& node, std::vector<double>& out);
  static void run_backward(const Node& node);

  std::vector<Node> nodes_;
  bool recording_;
};

/// Max over all parameter entries of |analytic - numeric| / max(1, |analytic|,
/// |numeric|), numeric by central differences with the given step. Runs f
/// twice up front and raises DeterminismError if the two losses differ
/// bitwise.
double gradient_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params,
                      double step);

}  // namespace stgcrnn::ad
