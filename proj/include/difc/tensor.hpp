#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace difc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad{false};
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;
  // scratch used by backward()/graph_size() traversals
  std::uint64_t visit_mark{0};

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Dense real tensor, a shared handle into the backing autodiff graph.
/// Building an expression records the graph; backward() walks it once in
/// reverse topological order and accumulates exact adjoints into every
/// node with requires_grad set.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim() const { return node_->shape.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const;
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;                 // value of a single-element tensor
  double at(std::size_t flat) const { return node_->value[flat]; }

  void zero_grad();
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// --- primitives -----------------------------------------------------------

/// Generalized contraction: sum of products over the given (axis_a, axis_b)
/// pairs. Output axes are a's unpaired axes followed by b's unpaired axes.
/// An empty pair list is the outer product.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// elementwise with numpy-style right-aligned broadcasting
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// (1-p)*a + p*b for a scalar weight p in [0,1] (range checked in debug).
Tensor mix(const Tensor& p, const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& logits, std::size_t axis);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);               // scalar
Tensor scale(const Tensor& x, double k);   // k * x

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t offset,
              std::size_t len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
Tensor pad_to(const Tensor& v, std::size_t n);  // 1-D, zero-pad at the end
Tensor element(const Tensor& x, std::size_t flat);  // scalar at flat index

/// -sum(target * log(pred)) with zero-target entries contributing nothing.
/// pred is clamped away from zero inside the log only.
Tensor cross_entropy(const Tensor& pred, const Tensor& target);

void backward(const Tensor& root);
std::size_t graph_size(const Tensor& root);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for a scalar function of the given leaf inputs.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                  double epsilon = 1e-5);

}  // namespace difc
