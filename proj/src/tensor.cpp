#include "trackfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Core>

#include "trackfuse/errors.hpp"

namespace trackfuse::tensor {

namespace {

thread_local Graph* g_active = nullptr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C[m x n] += A[m x k] * B[k x n], all row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

// C[k x n] += A^T * B where A is [m x k] and B is [m x n].
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  MutMap(c, k, n).noalias() += ConstMap(a, m, k).transpose() * ConstMap(b, m, n);
}

std::vector<double> transposed(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

Graph* recording(std::initializer_list<const Tensor*> inputs) {
  Graph* g = g_active;
  if (g == nullptr) return nullptr;
  for (const Tensor* t : inputs)
    if (g->tracks(*t)) return g;
  return nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
}

void require_2d(const Tensor& a, const char* op) {
  if (a.dim() != 2) throw ShapeMismatch(std::string(op) + ": expected a matrix, got " +
                                        to_string(a.shape()));
}

// Elementwise unary op with derivative expressed in terms of input and output.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  Tensor y(a.shape(), std::move(out));
  if (Graph* g = recording({&a})) {
    g->record(y, {a}, [a, y, dfdx](std::span<const double> go, std::span<std::span<double>> gi) {
      auto x = a.data();
      auto yv = y.data();
      for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i] * dfdx(x[i], yv[i]);
    });
  }
  return y;
}

// Elementwise binary op on equal shapes; derivatives written as (x, y) -> d/dx, d/dy.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto z = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], z[i]);
  Tensor y(a.shape(), std::move(out));
  if (Graph* g = recording({&a, &b})) {
    g->record(y, {a, b}, [a, b, da, db](std::span<const double> go,
                                        std::span<std::span<double>> gi) {
      auto x = a.data();
      auto z = b.data();
      if (!gi[0].empty())
        for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i] * da(x[i], z[i]);
      if (!gi[1].empty())
        for (std::size_t i = 0; i < go.size(); ++i) gi[1][i] += go[i] * db(x[i], z[i]);
    });
  }
  return y;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor() : impl_(std::make_shared<Impl>()) { impl_->shape = {1}; impl_->data = {0.0}; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape.empty()) shape = {1};
  for (std::size_t extent : shape)
    if (extent == 0) throw ShapeMismatch("zero extent in shape " + to_string(shape));
  if (tensor::numel(shape) != data.size())
    throw ShapeMismatch("shape " + to_string(shape) + " holds " + std::to_string(tensor::numel(shape)) +
                        " values, got " + std::to_string(data.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = tensor::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const { return dim() == 1 ? 1 : impl_->shape[0]; }

std::size_t Tensor::cols() const { return impl_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) throw NotScalar("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data, requires_grad()); }

// ---- Graph ---------------------------------------------------------------

std::vector<double> Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return std::vector<double>(t.numel(), 0.0);
  return it->second;
}

bool Graph::tracks(const Tensor& t) const {
  return t.requires_grad() || produced_by_.count(t.id()) != 0;
}

void Graph::record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn) {
  produced_by_[out.id()] = nodes_.size();
  nodes_.push_back(Node{out, std::move(inputs), std::move(fn)});
}

Gradients Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw NotScalar("backward from non-scalar of shape " + to_string(loss.shape()));

  std::unordered_map<const void*, std::vector<double>> acc;
  auto slot = [&acc](const Tensor& t) -> std::vector<double>& {
    auto [it, inserted] = acc.try_emplace(t.id());
    if (inserted) it->second.assign(t.numel(), 0.0);
    return it->second;
  };
  slot(loss)[0] = 1.0;

  std::vector<std::span<double>> spans;
  for (auto node = nodes_.rbegin(); node != nodes_.rend(); ++node) {
    auto found = acc.find(node->out.id());
    if (found == acc.end()) continue;
    spans.assign(node->inputs.size(), std::span<double>{});
    for (std::size_t i = 0; i < node->inputs.size(); ++i)
      if (tracks(node->inputs[i])) spans[i] = slot(node->inputs[i]);
    // `found` stays valid: unordered_map never moves its values.
    node->fn(found->second, spans);
  }

  Gradients result;
  // Anything not produced by a node is a trainable leaf (or the loss itself).
  for (auto& [id, grad] : acc)
    if (produced_by_.count(id) == 0) result.grads_.emplace(id, std::move(grad));
  nodes_.clear();
  produced_by_.clear();
  return result;
}

Gradients backward(Graph& graph, const Tensor& loss) { return graph.backward(loss); }

GraphScope::GraphScope(Graph& graph) : previous_(g_active) { g_active = &graph; }

GraphScope::~GraphScope() { g_active = previous_; }

Graph* active_graph() { return g_active; }

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeMismatch("matmul: inner extents differ " + to_string(a.shape()) + " x " +
                        to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor y({m, n}, std::move(out));
  if (Graph* g = recording({&a, &b})) {
    g->record(y, {a, b}, [a, b, m, k, n](std::span<const double> go,
                                         std::span<std::span<double>> gi) {
      if (!gi[0].empty()) {
        auto bt = transposed(b.data(), k, n);
        gemm_acc(go.data(), bt.data(), gi[0].data(), m, n, k);
      }
      if (!gi[1].empty()) gemm_tn_acc(a.data().data(), go.data(), gi[1].data(), m, k, n);
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_2d(x, "linear");
  require_2d(weight, "linear");
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  if (weight.rows() != k)
    throw ShapeMismatch("linear: input " + to_string(x.shape()) + " vs weight " +
                        to_string(weight.shape()));
  if (bias.numel() != n)
    throw ShapeMismatch("linear: bias " + to_string(bias.shape()) + " for " +
                        std::to_string(n) + " outputs");
  std::vector<double> out(m * n);
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * n);
  gemm_acc(x.data().data(), weight.data().data(), out.data(), m, k, n);
  Tensor y({m, n}, std::move(out));
  if (Graph* g = recording({&x, &weight, &bias})) {
    g->record(y, {x, weight, bias}, [x, weight, m, k, n](std::span<const double> go,
                                                          std::span<std::span<double>> gi) {
      if (!gi[0].empty()) {
        auto wt = transposed(weight.data(), k, n);
        gemm_acc(go.data(), wt.data(), gi[0].data(), m, n, k);
      }
      if (!gi[1].empty()) gemm_tn_acc(x.data().data(), go.data(), gi[1].data(), m, k, n);
      if (!gi[2].empty())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gi[2][j] += go[i * n + j];
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor y({n, m}, transposed(a.data(), m, n));
  if (Graph* g = recording({&a})) {
    g->record(y, {a}, [m, n](std::span<const double> go, std::span<std::span<double>> gi) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gi[0][i * n + j] += go[j * m + i];
    });
  }
  return y;
}

// ---- elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

// Ties send the whole subgradient to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return std::max(x, y); },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// Subgradient 0 at the kink.
Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

// ---- normalization -------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeMismatch("layer_norm: gamma/beta length " + std::to_string(gamma.numel()) + "/" +
                        std::to_string(beta.numel()) + " for feature size " + std::to_string(d));
  const std::size_t rows = x.numel() / d;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (Graph* g = recording({&x, &gamma, &beta})) {
    g->record(y, {x, gamma, beta},
              [gamma, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](
                  std::span<const double> go, std::span<std::span<double>> gi) {
                auto gv = gamma.data();
                std::vector<double> dxhat(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* dy = go.data() + r * d;
                  const double* h = xhat.data() + r * d;
                  if (!gi[1].empty())
                    for (std::size_t j = 0; j < d; ++j) gi[1][j] += dy[j] * h[j];
                  if (!gi[2].empty())
                    for (std::size_t j = 0; j < d; ++j) gi[2][j] += dy[j];
                  if (gi[0].empty()) continue;
                  double mean_d = 0.0, mean_dh = 0.0;
                  for (std::size_t j = 0; j < d; ++j) {
                    dxhat[j] = dy[j] * gv[j];
                    mean_d += dxhat[j];
                    mean_dh += dxhat[j] * h[j];
                  }
                  mean_d /= static_cast<double>(d);
                  mean_dh /= static_cast<double>(d);
                  for (std::size_t j = 0; j < d; ++j)
                    gi[0][r * d + j] += rstd[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
                }
              });
  }
  return y;
}

Tensor softmax_last(const Tensor& x) {
  const std::size_t d = x.cols();
  const std::size_t rows = x.numel() / d;
  auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(row, row + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  Tensor y(x.shape(), std::move(out));
  if (Graph* g = recording({&x})) {
    g->record(y, {x}, [y, rows, d](std::span<const double> go, std::span<std::span<double>> gi) {
      auto yv = y.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += go[r * d + j] * yv[r * d + j];
        for (std::size_t j = 0; j < d; ++j)
          gi[0][r * d + j] += yv[r * d + j] * (go[r * d + j] - dot);
      }
    });
  }
  return y;
}

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto v = a.data();
  Tensor y = Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0));
  if (Graph* g = recording({&a})) {
    g->record(y, {a}, [](std::span<const double> go, std::span<std::span<double>> gi) {
      for (double& gv : gi[0]) gv += go[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---- reshaping -----------------------------------------------------------

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_2d(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || start + count > n)
    throw ShapeMismatch("slice_cols: [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") out of " + std::to_string(n));
  auto v = a.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(v.begin() + i * n + start, count, out.begin() + i * count);
  Tensor y({m, count}, std::move(out));
  if (Graph* g = recording({&a})) {
    g->record(y, {a}, [m, n, start, count](std::span<const double> go,
                                           std::span<std::span<double>> gi) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) gi[0][i * n + start + j] += go[i * count + j];
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) throw ShapeMismatch("concat_cols: row counts differ");
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto v = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.begin() + i * w, w, out.begin() + i * n + offset);
    offset += w;
  }
  Tensor y({m, n}, std::move(out));
  Graph* g = active_graph();
  bool any = false;
  if (g)
    for (const auto& p : parts) any = any || g->tracks(p);
  if (any) {
    g->record(y, parts, [m, n, widths](std::span<const double> go,
                                       std::span<std::span<double>> gi) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t w = widths[k];
        if (!gi[k].empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gi[k][i * w + j] += go[i * n + offset + j];
        offset += w;
      }
    });
  }
  return y;
}

Tensor tile_rows(const Tensor& row, std::size_t n) {
  if (row.rows() != 1 || n == 0)
    throw ShapeMismatch("tile_rows: expected a single row, got " + to_string(row.shape()));
  const std::size_t d = row.cols();
  auto v = row.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(v.begin(), v.end(), out.begin() + i * d);
  Tensor y({n, d}, std::move(out));
  if (Graph* g = recording({&row})) {
    g->record(y, {row}, [n, d](std::span<const double> go, std::span<std::span<double>> gi) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gi[0][j] += go[i * d + j];
    });
  }
  return y;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t seq_len, std::size_t heads) {
  require_2d(q, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t rows = q.rows(), d = q.cols();
  if (seq_len == 0 || rows % seq_len != 0 || heads == 0 || d % heads != 0)
    throw ShapeMismatch("attention: " + to_string(q.shape()) + " with seq_len " +
                        std::to_string(seq_len) + " and " + std::to_string(heads) + " heads");
  const std::size_t n = rows / seq_len, hd = d / heads, L = seq_len;
  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  auto qv = q.data(), kv = k.data(), vv = v.data();
  // probs laid out [seq][head][i][j]
  std::vector<double> probs(n * heads * L * L);
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (s * heads + h) * L * L;
      for (std::size_t i = 0; i < L; ++i) {
        const double* qi = qv.data() + (s * L + i) * d + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          const double* kj = kv.data() + (s * L + j) * d + h * hd;
          double dot = 0.0;
          for (std::size_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          p[i * L + j] = dot * inv;
          mx = std::max(mx, p[i * L + j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) z += (p[i * L + j] = std::exp(p[i * L + j] - mx));
        double* oi = out.data() + (s * L + i) * d + h * hd;
        for (std::size_t j = 0; j < L; ++j) {
          p[i * L + j] /= z;
          const double* vj = vv.data() + (s * L + j) * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p[i * L + j] * vj[c];
        }
      }
    }
  }
  Tensor y({rows, d}, std::move(out));
  if (Graph* g = recording({&q, &k, &v})) {
    g->record(y, {q, k, v}, [q, k, v, probs = std::move(probs), n, heads, L, d, hd, inv](
                                std::span<const double> go, std::span<std::span<double>> gi) {
      auto qv = q.data(), kv = k.data(), vv = v.data();
      std::vector<double> dp(L);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* p = probs.data() + (s * heads + h) * L * L;
          for (std::size_t i = 0; i < L; ++i) {
            const std::size_t ri = (s * L + i) * d + h * hd;
            const double* doi = go.data() + ri;
            double acc = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
              const std::size_t rj = (s * L + j) * d + h * hd;
              double dot = 0.0;
              for (std::size_t c = 0; c < hd; ++c) dot += doi[c] * vv[rj + c];
              dp[j] = dot;
              acc += dot * p[i * L + j];
              if (!gi[2].empty())
                for (std::size_t c = 0; c < hd; ++c) gi[2][rj + c] += p[i * L + j] * doi[c];
            }
            // softmax backward, then through the scaled dot product
            for (std::size_t j = 0; j < L; ++j) {
              const double ds = p[i * L + j] * (dp[j] - acc) * inv;
              const std::size_t rj = (s * L + j) * d + h * hd;
              if (!gi[0].empty())
                for (std::size_t c = 0; c < hd; ++c) gi[0][ri + c] += ds * kv[rj + c];
              if (!gi[1].empty())
                for (std::size_t c = 0; c < hd; ++c) gi[1][rj + c] += ds * qv[ri + c];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---- Adam ----------------------------------------------------------------

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (grads.size() != params.size())
    throw ShapeMismatch("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeMismatch("adam_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel())
      throw ShapeMismatch("adam_step: size mismatch at parameter " + std::to_string(i));
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---- gradient check ------------------------------------------------------

double grad_check(const ScalarFn& fn, std::vector<Tensor>& inputs,
                  const GradCheckOptions& options) {
  std::vector<bool> saved;
  for (auto& t : inputs) {
    saved.push_back(t.requires_grad());
    t.set_requires_grad(true);
  }

  Graph graph;
  Tensor loss;
  {
    GraphScope scope(graph);
    loss = fn(inputs);
  }
  const Gradients grads = graph.backward(loss);

  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic = grads.of(t);
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
    }
    auto values = t.mutable_data();
    for (std::size_t c : coords) {
      const double original = values[c];
      values[c] = original + options.step;
      const double up = fn(inputs).item();
      values[c] = original - options.step;
      const double down = fn(inputs).item();
      values[c] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({std::abs(analytic[c]), std::abs(numeric), options.floor});
      worst = std::max(worst, std::abs(analytic[c] - numeric) / denom);
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].set_requires_grad(saved[i]);
  return worst;
}

}  // namespace trackfuse::tensor
