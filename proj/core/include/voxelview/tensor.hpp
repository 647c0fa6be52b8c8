#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "voxelview/rng.hpp"

namespace voxelview {

// One node of the computation graph. Owned via shared_ptr by Tensor handles
// and by child nodes (through `parents`), so a graph stays alive exactly as
// long as some handle can still reach it.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first use, same length as data
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates (+=) into the parents' grads.
  std::function<void(TensorNode&)> backward_fn;

  long numel() const {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Dense n-dimensional array of doubles with reverse-mode autodiff.
// Value-semantics handle: copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
  static Tensor from_data(const std::vector<int>& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(const std::vector<int>& shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  // Factory for operation implementations: allocates the output node, wires
  // parents and marks requires_grad if any parent needs it.
  static Tensor make_op(std::vector<int> shape, const std::vector<Tensor>& parents,
                        std::function<void(TensorNode&)> backward_fn);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  long numel() const { return node_->numel(); }

  double* data() { return node_->data.data(); }
  const double* data() const { return node_->data.data(); }
  std::vector<double>& values() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
  }

  // Value copy with no graph history.
  Tensor detach() const;

  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

std::string shape_str(const std::vector<int>& shape);

// Elementwise binary ops. Shapes must match, or one side is a single-element
// scalar, or (add/sub only) a rank-1 per-channel bias against axis 0.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// Elementwise unary ops.
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softplus(const Tensor& x);

// Softmax over one axis, max-subtracted for overflow safety.
Tensor softmax_axis(const Tensor& x, int axis);

Tensor concat_axis(const std::vector<Tensor>& parts, int axis);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor reduce_sum_axis(const Tensor& x, int axis);
Tensor reduce_mean_axis(const Tensor& x, int axis);

// Same data, new shape (element count must match).
Tensor reshape(const Tensor& x, const std::vector<int>& shape);

// Reverse-mode sweep from a scalar loss. Accumulates into the grads of every
// requires_grad leaf reachable from `loss`; calling twice doubles them.
void backward(const Tensor& loss);

}  // namespace voxelview
