#include "m2a/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "m2a/errors.hpp"

namespace m2a::ad {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local Trace* active_trace = nullptr;

detail::NodePtr make_node(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

ShapeError shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  return ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

bool is_trailing(const Shape& small, const Shape& big) {
  return big.size() == small.size() + 1 && std::equal(small.begin(), small.end(), big.begin() + 1);
}

enum class Broadcast { none, rhs, lhs };

Broadcast broadcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::none;
  if (is_trailing(b, a)) return Broadcast::rhs;
  if (is_trailing(a, b)) return Broadcast::lhs;
  throw shape_mismatch(op, a, b);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : node_(make_node({}, {0.0})) {}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                     std::to_string(ad::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = make_node(std::move(shape), std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw ContractError("set_requires_grad: only leaf tensors can be parameters");
  node_->requires_grad = on;
  return *this;
}

Tensor Tensor::clone() const { return Tensor(make_node(node_->shape, node_->value)); }

// ---------------------------------------------------------------------------

Trace::Trace() : previous_(active_trace) { active_trace = this; }

Trace::~Trace() { active_trace = previous_; }

Trace* Trace::active() { return active_trace; }

void Trace::record(std::string op, std::vector<detail::NodePtr> inputs, detail::NodePtr output,
                   BackwardFn fn) {
  records_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(fn)});
}

void Trace::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must hold one value, got shape " + to_string(loss.shape()));
  }
  std::unordered_map<const detail::Node*, std::vector<double>> interior;

  for (const auto& rec : records_) {
    for (const auto& in : rec.inputs) {
      if (in->leaf && in->requires_grad && in->grad.size() != in->value.size()) {
        in->grad.assign(in->value.size(), 0.0);
      }
    }
  }

  auto buffer_for = [&](const detail::NodePtr& node) -> std::vector<double>* {
    if (!node->requires_grad) return nullptr;
    if (node->leaf) return &node->grad;
    auto& buf = interior[node.get()];
    if (buf.empty()) buf.assign(node->value.size(), 0.0);
    return &buf;
  };

  const auto& root = loss.node_;
  if (!root->requires_grad) return;
  if (root->leaf) {
    root->grad.resize(1, 0.0);
    root->grad[0] += 1.0;
    return;
  }
  interior[root.get()] = {1.0};

  std::vector<std::vector<double>*> grad_in;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto found = interior.find(it->output.get());
    if (found == interior.end()) continue;
    const std::vector<double> grad_out = std::move(found->second);
    interior.erase(found);
    grad_in.clear();
    for (const auto& in : it->inputs) grad_in.push_back(buffer_for(in));
    it->backward(grad_out, grad_in);
  }
}

// ---------------------------------------------------------------------------

struct OpBuilder {
  static const detail::NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(detail::NodePtr n) { return Tensor(std::move(n)); }

  /// Wraps the forward result; records the op when a trace is active and an
  /// input requires a gradient.
  static Tensor finish(std::string op, std::vector<detail::NodePtr> inputs, Shape shape,
                       std::vector<double> values, Trace::BackwardFn fn) {
    auto out = make_node(std::move(shape), std::move(values));
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const detail::NodePtr& n) { return n->requires_grad; });
    Trace* trace = Trace::active();
    if (needs && trace != nullptr) {
      out->requires_grad = true;
      out->leaf = false;
      trace->record(std::move(op), std::move(inputs), out, std::move(fn));
    }
    return Tensor(out);
  }
};

namespace {

template <class Forward, class Backward>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Forward fwd,
                          Backward bwd) {
  const Broadcast mode = broadcast_mode(op, a.shape(), b.shape());
  const Shape out_shape = mode == Broadcast::lhs ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);

  auto an = OpBuilder::node(a);
  auto bn = OpBuilder::node(b);
  return OpBuilder::finish(
      op, {an, bn}, out_shape, std::move(out),
      [an, bn, n, na, nb, bwd](std::span<const double> g, std::span<std::vector<double>*> gin) {
        for (std::size_t i = 0; i < n; ++i) {
          const auto [da, db] = bwd(an->value[i % na], bn->value[i % nb]);
          if (gin[0]) (*gin[0])[i % na] += g[i] * da;
          if (gin[1]) (*gin[1])[i % nb] += g[i] * db;
        }
      });
}

template <class Forward, class Derivative>
Tensor unary_elementwise(const char* op, const Tensor& a, Forward fwd, Derivative deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  std::transform(av.begin(), av.end(), out.begin(), fwd);
  auto an = OpBuilder::node(a);
  auto outv = std::make_shared<std::vector<double>>(out);
  return OpBuilder::finish(
      op, {an}, a.shape(), std::move(out),
      [an, outv, deriv](std::span<const double> g, std::span<std::vector<double>*> gin) {
        if (!gin[0]) return;
        auto& ga = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(an->value[i], (*outv)[i]);
      });
}

void require_rank(const char* op, const Tensor& t, std::size_t lo, std::size_t hi) {
  if (t.rank() < lo || t.rank() > hi) {
    throw ShapeError(std::string(op) + ": unsupported rank for shape " + to_string(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary_elementwise(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary_elementwise(
      "clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  auto an = OpBuilder::node(a);
  auto bn = OpBuilder::node(b);
  return OpBuilder::finish(
      "matmul", {an, bn}, {m, n}, std::move(out),
      [an, bn, m, k, n](std::span<const double> g, std::span<std::vector<double>*> gin) {
        if (gin[0]) {  // dA = dC * B^T
          auto& ga = *gin[0];
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = bn->value.data() + p * n;
              const double* grow = g.data() + i * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (gin[1]) {  // dB = A^T * dC
          auto& gb = *gin[1];
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = an->value[i * k + p];
              if (aip == 0.0) continue;
              double* gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  const auto av = a.data();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  auto an = OpBuilder::node(a);
  return OpBuilder::finish("sum", {an}, {}, {total},
                           [](std::span<const double> g, std::span<std::vector<double>*> gin) {
                             if (!gin[0]) return;
                             for (double& v : *gin[0]) v += g[0];
                           });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
  require_rank("sum_last", a, 1, 8);
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.numel() / std::max<std::size_t>(inner, 1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(outer, 0.0);
  const auto av = a.data();
  for (std::size_t r = 0; r < outer; ++r) {
    out[r] = std::accumulate(av.begin() + r * inner, av.begin() + (r + 1) * inner, 0.0);
  }
  auto an = OpBuilder::node(a);
  return OpBuilder::finish(
      "sum_last", {an}, std::move(out_shape), std::move(out),
      [inner, outer](std::span<const double> g, std::span<std::vector<double>*> gin) {
        if (!gin[0]) return;
        auto& ga = *gin[0];
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t c = 0; c < inner; ++c) ga[r * inner + c] += g[r];
      });
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 1, 2);
  const auto zv = logits.data();
  for (double z : zv) {
    if (!std::isfinite(z)) throw DomainError("softmax: non-finite logit");
  }
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  std::vector<double> out(zv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = zv.data() + r * k;
    double* p = out.data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) norm += (p[c] = std::exp(z[c] - zmax));
    for (std::size_t c = 0; c < k; ++c) p[c] /= norm;
  }
  auto pv = std::make_shared<std::vector<double>>(out);
  return OpBuilder::finish(
      "softmax", {OpBuilder::node(logits)}, logits.shape(), std::move(out),
      [pv, k, rows](std::span<const double> g, std::span<std::vector<double>*> gin) {
        if (!gin[0]) return;
        auto& gz = *gin[0];
        const auto& p = *pv;
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < k; ++c) dot += g[r * k + c] * p[r * k + c];
          for (std::size_t c = 0; c < k; ++c) gz[r * k + c] += p[r * k + c] * (g[r * k + c] - dot);
        }
      });
}

Tensor stop_gradient(const Tensor& a) {
  auto out = make_node(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  // Recorded with a no-op backward so a parameter reached only through sg()
  // still receives an explicit all-zero gradient buffer.
  if (Trace* trace = Trace::active(); trace != nullptr && a.requires_grad()) {
    trace->record("stop_gradient", {OpBuilder::node(a)}, out,
                  [](std::span<const double>, std::span<std::vector<double>*>) {});
  }
  return OpBuilder::wrap(std::move(out));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) throw shape_mismatch("reshape", a.shape(), shape);
  return OpBuilder::finish("reshape", {OpBuilder::node(a)}, std::move(shape),
                           std::vector<double>(a.data().begin(), a.data().end()),
                           [](std::span<const double> g, std::span<std::vector<double>*> gin) {
                             if (!gin[0]) return;
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                           });
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.rank() != 2) throw ShapeError("layer_norm: expected [B,H], got " + to_string(a.shape()));
  const std::size_t rows = a.dim(0), h = a.dim(1);
  const auto av = a.data();
  std::vector<double> out(av.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * h;
    double mu = 0.0;
    for (std::size_t c = 0; c < h; ++c) mu += x[c];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t c = 0; c < h; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < h; ++c) out[r * h + c] = (x[c] - mu) * is;
  }
  auto yv = std::make_shared<std::vector<double>>(out);
  return OpBuilder::finish(
      "layer_norm", {OpBuilder::node(a)}, a.shape(), std::move(out),
      [yv, inv_std, rows, h](std::span<const double> g, std::span<std::vector<double>*> gin) {
        if (!gin[0]) return;
        auto& gx = *gin[0];
        const auto& y = *yv;
        const double inv_h = 1.0 / static_cast<double>(h);
        for (std::size_t r = 0; r < rows; ++r) {
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t c = 0; c < h; ++c) {
            g_mean += g[r * h + c];
            gy_mean += g[r * h + c] * y[r * h + c];
          }
          g_mean *= inv_h;
          gy_mean *= inv_h;
          for (std::size_t c = 0; c < h; ++c) {
            gx[r * h + c] += (*inv_std)[r] * (g[r * h + c] - g_mean - y[r * h + c] * gy_mean);
          }
        }
      });
}

}  // namespace m2a::ad
