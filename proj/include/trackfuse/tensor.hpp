#pragma once

// Minimal dense tensor engine: row-major 64-bit storage, tape-based reverse
// mode differentiation, and an Adam optimizer. Only the operations needed by
// the ViFiT encoders, decoder and losses are provided.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace trackfuse::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Graph;

// Shared handle to immutable storage. Copies alias the same buffer; identity
// (not value) is what the graph keys gradients on.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // 2-D helper: rows x cols from a row-major list.
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  // Writable view for optimizers and loaders. Must not be used on a tensor
  // that a live graph still references.
  std::span<double> mutable_data() { return impl_->data; }

  double item() const;
  double at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  const void* id() const { return impl_.get(); }
  Tensor clone() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

// Gradients produced by one backward pass, keyed by tensor identity.
class Gradients {
 public:
  // Gradient for `t`; all zeros when `t` did not take part in the loss.
  std::vector<double> of(const Tensor& t) const;
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }

 private:
  std::unordered_map<const void*, std::vector<double>> grads_;
  friend class Graph;
};

// Tape of recorded operations. Nodes are appended in execution order, which
// is a valid topological order. The tape is cleared by backward().
class Graph {
 public:
  // grad_out is dL/d(out); grad_in[i] is the accumulator for input i, or an
  // empty span when that input does not need a gradient.
  using BackwardFn =
      std::function<void(std::span<const double> grad_out, std::span<std::span<double>> grad_in)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // True when `t` is a trainable leaf or the output of a node on this tape.
  bool tracks(const Tensor& t) const;
  void record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn);
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Throws NotScalar otherwise.
  Gradients backward(const Tensor& loss);

 private:
  struct Node {
    Tensor out;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::size_t> produced_by_;
};

// Makes `graph` the recording target for operations on this thread for the
// lifetime of the scope. Without an active scope operations only compute.
class GraphScope {
 public:
  explicit GraphScope(Graph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

Graph* active_graph();

// ---- operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// x[m x in] * weight[in x out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor softmax_last(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// 2-D column slicing and concatenation.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Repeats a single row (shape [D] or [1 x D]) into an [n x D] matrix.
Tensor tile_rows(const Tensor& row, std::size_t n);

// Scaled dot-product self-attention over independent sequences stacked by
// rows: q, k, v are [n*seq_len x D] and every head sees D/heads columns.
// Rows only attend within their own sequence.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t seq_len, std::size_t heads);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// Builds the scalar loss and records backward once.
Gradients backward(Graph& graph, const Tensor& loss);

// ---- optimizer -----------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// In-place Adam update with bias correction. Moments are allocated on the
// first call; afterwards their sizes must match the parameters.
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

// ---- finite-difference checking -----------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per input; 0 probes every coordinate.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // Smallest denominator of the relative error. Gradients that are exactly
  // zero otherwise turn rounding noise in the difference quotient into failures.
  double floor = 1e-8;
};

// Builds a scalar from `inputs`; called repeatedly with perturbed inputs.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Max over probed coordinates of |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8) using central differences. Inputs are restored afterwards.
double grad_check(const ScalarFn& fn, std::vector<Tensor>& inputs,
                  const GradCheckOptions& options = {});

}  // namespace trackfuse::tensor
