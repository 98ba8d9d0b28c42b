#pragma once

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding shape, values and an optional
// gradient buffer. Operations executed while a Trace is active on the calling
// thread are recorded when at least one operand requires a gradient;
// Trace::backward replays the record in exact reverse order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace m2a::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t id = 0;
};
using NodePtr = std::shared_ptr<Node>;
}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  /// Writable view of the values; callers must not mutate a tensor that an
  /// active trace still needs for its backward pass.
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Marks a leaf as a differentiable parameter.
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Deep copy as a fresh leaf that does not require gradients.
  Tensor clone() const;

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;

  friend class Trace;
  friend struct OpBuilder;
};

/// Ordered record of primitive operations. Constructing a Trace activates it
/// on the current thread (the previous one is restored on destruction).
class Trace {
 public:
  /// Receives d(loss)/d(output) and accumulates into per-input buffers; an
  /// input buffer pointer is null when that input needs no gradient.
  using BackwardFn =
      std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> grad_in)>;

  Trace();
  ~Trace();
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;

  static Trace* active();

  std::size_t size() const { return records_.size(); }

  /// Seeds d(loss)/d(loss) = 1 for a single-element tensor and propagates to
  /// every recorded leaf that requires a gradient. Leaf gradients accumulate
  /// across calls; every such leaf ends up with a buffer, zero-filled when no
  /// path reached it.
  void backward(const Tensor& loss);

  void record(std::string op, std::vector<detail::NodePtr> inputs, detail::NodePtr output,
              BackwardFn fn);

 private:
  struct Record {
    std::string op;
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  Trace* previous_;
};

// Elementwise ops accept equal shapes, or one operand whose shape equals the
// other's shape without its leading (batch) dimension.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums over the last axis; rank r -> rank r-1.
Tensor sum_last(const Tensor& a);

Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
/// max(a, floor); gradient passes only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

/// Softmax over the last axis (rank 1 or 2), max-subtracted.
Tensor softmax(const Tensor& logits);

/// Identity forward, blocks all gradient flow backward.
Tensor stop_gradient(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

/// Per-row normalization of a [B,H] tensor to zero mean and unit variance
/// (population variance, plus eps). No affine part.
Tensor layer_norm(const Tensor& a, double eps);

}  // namespace m2a::ad
