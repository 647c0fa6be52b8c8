#include "voxelview/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace voxelview {

namespace {

long shape_numel(const std::vector<int>& shape) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0)
      throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::shared_ptr<TensorNode> new_leaf(const std::vector<int>& shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = shape;
  node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  node->requires_grad = requires_grad;
  node->leaf = true;
  return node;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  Tensor t;
  t.node_ = new_leaf(shape, requires_grad);
  return t;
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(const std::vector<int>& shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<long>(data.size()) != shape_numel(shape))
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  Tensor t;
  t.node_ = new_leaf(shape, requires_grad);
  t.node_->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({1}, value, requires_grad); }

Tensor Tensor::uniform(const std::vector<int>& shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  for (double& v : t.node_->data) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::make_op(std::vector<int> shape, const std::vector<Tensor>& parents,
                       std::function<void(TensorNode&)> backward_fn) {
  Tensor t;
  t.node_ = new_leaf(shape, false);
  t.node_->leaf = false;
  bool rg = false;
  for (const Tensor& p : parents) {
    t.node_->parents.push_back(p.node_ptr());
    rg = rg || p.requires_grad();
  }
  t.node_->requires_grad = rg;
  if (rg) t.node_->backward_fn = std::move(backward_fn);
  return t;
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a single-element tensor, got " +
                                shape_str(shape()));
  return node_->data[0];
}

void Tensor::set_requires_grad(bool rg) {
  if (!node_->leaf && rg)
    throw std::invalid_argument("requires_grad can only be enabled on leaf tensors");
  node_->requires_grad = rg;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.node_ = new_leaf(node_->shape, false);
  t.node_->data = node_->data;
  return t;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops.
//
// Broadcast forms: equal shapes, single-element scalar against anything, and
// (add/sub only) a rank-1 length-C bias against a [C,...] tensor on axis 0.

namespace {

enum class Bc { Same, ScalarA, ScalarB, BiasA, BiasB };

Bc classify(const Tensor& a, const Tensor& b, bool allow_bias, const char* opname) {
  if (a.shape() == b.shape()) return Bc::Same;
  if (a.numel() == 1) return Bc::ScalarA;
  if (b.numel() == 1) return Bc::ScalarB;
  if (allow_bias && b.rank() == 1 && a.rank() >= 2 && a.dim(0) == b.dim(0)) return Bc::BiasB;
  if (allow_bias && a.rank() == 1 && b.rank() >= 2 && b.dim(0) == a.dim(0)) return Bc::BiasA;
  throw std::invalid_argument(std::string(opname) + ": incompatible shapes " +
                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// Accumulates g into the grad of a broadcast operand: identity for the full
// side, a total or per-channel reduction for the scalar/bias side.
void reduce_into(TensorNode& p, const double* g, long n, bool is_full, double sign) {
  p.ensure_grad();
  double* gp = p.grad.data();
  if (is_full) {
    for (long i = 0; i < n; ++i) gp[i] += sign * g[i];
  } else if (p.numel() == 1) {
    double acc = 0;
    for (long i = 0; i < n; ++i) acc += g[i];
    gp[0] += sign * acc;
  } else {
    const long block = n / p.numel();
    for (long c = 0; c < p.numel(); ++c) {
      double acc = 0;
      const double* gc = g + c * block;
      for (long i = 0; i < block; ++i) acc += gc[i];
      gp[c] += sign * acc;
    }
  }
}

Tensor add_like(const Tensor& a, const Tensor& b, double sign_b, const char* opname) {
  Bc kind = classify(a, b, /*allow_bias=*/true, opname);
  const std::vector<int>& out_shape =
      (kind == Bc::ScalarA || kind == Bc::BiasA) ? b.shape() : a.shape();
  Tensor out = Tensor::make_op(out_shape, {a, b}, [kind, sign_b](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    const long n = self.numel();
    const double* g = self.grad.data();
    if (pa.requires_grad)
      reduce_into(pa, g, n, kind == Bc::Same || kind == Bc::ScalarB || kind == Bc::BiasB, 1.0);
    if (pb.requires_grad)
      reduce_into(pb, g, n, kind == Bc::Same || kind == Bc::ScalarA || kind == Bc::BiasA, sign_b);
  });

  const long n = out.numel();
  double* o = out.data();
  const double* ad = a.data();
  const double* bd = b.data();
  switch (kind) {
    case Bc::Same:
      for (long i = 0; i < n; ++i) o[i] = ad[i] + sign_b * bd[i];
      break;
    case Bc::ScalarA:
      for (long i = 0; i < n; ++i) o[i] = ad[0] + sign_b * bd[i];
      break;
    case Bc::ScalarB:
      for (long i = 0; i < n; ++i) o[i] = ad[i] + sign_b * bd[0];
      break;
    case Bc::BiasB: {
      const long block = n / a.dim(0);
      for (long i = 0; i < n; ++i) o[i] = ad[i] + sign_b * bd[i / block];
      break;
    }
    case Bc::BiasA: {
      const long block = n / b.dim(0);
      for (long i = 0; i < n; ++i) o[i] = ad[i / block] + sign_b * bd[i];
      break;
    }
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_like(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_like(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Bc kind = classify(a, b, /*allow_bias=*/false, "mul");
  const std::vector<int>& out_shape = (kind == Bc::ScalarA) ? b.shape() : a.shape();
  Tensor out = Tensor::make_op(out_shape, {a, b}, [kind](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    const long n = self.numel();
    const double* g = self.grad.data();
    const double* ad = pa.data.data();
    const double* bd = pb.data.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      double* gp = pa.grad.data();
      if (kind == Bc::ScalarA) {
        double acc = 0;
        for (long i = 0; i < n; ++i) acc += g[i] * bd[i];
        gp[0] += acc;
      } else if (kind == Bc::ScalarB) {
        for (long i = 0; i < n; ++i) gp[i] += g[i] * bd[0];
      } else {
        for (long i = 0; i < n; ++i) gp[i] += g[i] * bd[i];
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      double* gp = pb.grad.data();
      if (kind == Bc::ScalarB) {
        double acc = 0;
        for (long i = 0; i < n; ++i) acc += g[i] * ad[i];
        gp[0] += acc;
      } else if (kind == Bc::ScalarA) {
        for (long i = 0; i < n; ++i) gp[i] += g[i] * ad[0];
      } else {
        for (long i = 0; i < n; ++i) gp[i] += g[i] * ad[i];
      }
    }
  });

  const long n = out.numel();
  double* o = out.data();
  const double* ad = a.data();
  const double* bd = b.data();
  if (kind == Bc::ScalarA) {
    for (long i = 0; i < n; ++i) o[i] = ad[0] * bd[i];
  } else if (kind == Bc::ScalarB) {
    for (long i = 0; i < n; ++i) o[i] = ad[i] * bd[0];
  } else {
    for (long i = 0; i < n; ++i) o[i] = ad[i] * bd[i];
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor mul_scalar(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }

// ---------------------------------------------------------------------------
// Elementwise unary ops.

namespace {

// dfn(x, y) is the derivative given input x and output y.
template <typename F, typename D>
Tensor unary_op(const Tensor& x, F fn, D dfn) {
  Tensor out = Tensor::make_op(x.shape(), {x}, [dfn](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const long n = self.numel();
    const double* g = self.grad.data();
    const double* xd = p.data.data();
    const double* yd = self.data.data();
    double* gp = p.grad.data();
    for (long i = 0; i < n; ++i) gp[i] += g[i] * dfn(xd[i], yd[i]);
  });
  const long n = out.numel();
  double* o = out.data();
  const double* xd = x.data();
  for (long i = 0; i < n; ++i) o[i] = fn(xd[i]);
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0) {
    double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
      [](double v, double) { return stable_sigmoid(v); });
}

// ---------------------------------------------------------------------------
// Softmax, concat, reductions.

namespace {

void axis_strides(const std::vector<int>& shape, int axis, long& outer, long& extent, long& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  extent = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i)
    inner *= shape[i];
}

void check_axis(const Tensor& x, int axis, const char* opname) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument(std::string(opname) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(x.shape()));
}

}  // namespace

Tensor softmax_axis(const Tensor& x, int axis) {
  check_axis(x, axis, "softmax_axis");
  long outer, extent, inner;
  axis_strides(x.shape(), axis, outer, extent, inner);

  Tensor out = Tensor::make_op(x.shape(), {x}, [axis](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    long outer, extent, inner;
    axis_strides(self.shape, axis, outer, extent, inner);
    const double* g = self.grad.data();
    const double* s = self.data.data();
    double* gp = p.grad.data();
    for (long o = 0; o < outer; ++o) {
      for (long i = 0; i < inner; ++i) {
        const long base = o * extent * inner + i;
        double dot = 0;
        for (long k = 0; k < extent; ++k) dot += g[base + k * inner] * s[base + k * inner];
        for (long k = 0; k < extent; ++k) {
          const long idx = base + k * inner;
          gp[idx] += s[idx] * (g[idx] - dot);
        }
      }
    }
  });

  const double* xd = x.data();
  double* o = out.data();
  for (long ou = 0; ou < outer; ++ou) {
    for (long i = 0; i < inner; ++i) {
      const long base = ou * extent * inner + i;
      double mx = xd[base];
      for (long k = 1; k < extent; ++k) mx = std::max(mx, xd[base + k * inner]);
      double sum = 0;
      for (long k = 0; k < extent; ++k) {
        double e = std::exp(xd[base + k * inner] - mx);
        o[base + k * inner] = e;
        sum += e;
      }
      const double norm = 1.0 / sum;
      for (long k = 0; k < extent; ++k) o[base + k * inner] *= norm;
    }
  }
  return out;
}

Tensor concat_axis(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat_axis: no inputs");
  check_axis(parts[0], axis, "concat_axis");
  std::vector<int> out_shape = parts[0].shape();
  for (size_t p = 1; p < parts.size(); ++p) {
    if (parts[p].rank() != parts[0].rank())
      throw std::invalid_argument("concat_axis: rank mismatch " + shape_str(parts[p].shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    for (int i = 0; i < parts[0].rank(); ++i) {
      if (i == axis) continue;
      if (parts[p].dim(i) != parts[0].dim(i))
        throw std::invalid_argument("concat_axis: extent mismatch on axis " + std::to_string(i) +
                                    ": " + shape_str(parts[p].shape()) + " vs " +
                                    shape_str(parts[0].shape()));
    }
    out_shape[static_cast<size_t>(axis)] += parts[p].dim(axis);
  }

  Tensor out = Tensor::make_op(out_shape, parts, [axis](TensorNode& self) {
    long outer, extent, inner;
    axis_strides(self.shape, axis, outer, extent, inner);
    const double* g = self.grad.data();
    long offset = 0;
    for (auto& pp : self.parents) {
      TensorNode& p = *pp;
      const long p_extent = p.shape[static_cast<size_t>(axis)];
      if (p.requires_grad) {
        p.ensure_grad();
        double* gp = p.grad.data();
        for (long o = 0; o < outer; ++o)
          for (long k = 0; k < p_extent; ++k)
            for (long i = 0; i < inner; ++i)
              gp[(o * p_extent + k) * inner + i] += g[(o * extent + offset + k) * inner + i];
      }
      offset += p_extent;
    }
  });

  long outer, extent, inner;
  axis_strides(out_shape, axis, outer, extent, inner);
  double* o = out.data();
  long offset = 0;
  for (const Tensor& part : parts) {
    const long p_extent = part.dim(axis);
    const double* pd = part.data();
    for (long ou = 0; ou < outer; ++ou)
      for (long k = 0; k < p_extent; ++k)
        for (long i = 0; i < inner; ++i)
          o[(ou * extent + offset + k) * inner + i] = pd[(ou * p_extent + k) * inner + i];
    offset += p_extent;
  }
  return out;
}

namespace {

Tensor reduce_full(const Tensor& x, bool mean) {
  const long n = x.numel();
  const double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor out = Tensor::make_op({1}, {x}, [scale](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0] * scale;
    double* gp = p.grad.data();
    for (size_t i = 0; i < p.data.size(); ++i) gp[i] += g;
  });
  double acc = 0;
  const double* xd = x.data();
  for (long i = 0; i < n; ++i) acc += xd[i];
  out.data()[0] = acc * scale;
  return out;
}

Tensor reduce_axis(const Tensor& x, int axis, bool mean) {
  check_axis(x, axis, "reduce_axis");
  long outer, extent, inner;
  axis_strides(x.shape(), axis, outer, extent, inner);
  std::vector<int> out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);
  const double scale = mean ? 1.0 / static_cast<double>(extent) : 1.0;

  Tensor out = Tensor::make_op(out_shape, {x}, [axis, scale](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    long outer, extent, inner;
    axis_strides(p.shape, axis, outer, extent, inner);
    const double* g = self.grad.data();
    double* gp = p.grad.data();
    for (long o = 0; o < outer; ++o)
      for (long k = 0; k < extent; ++k)
        for (long i = 0; i < inner; ++i)
          gp[(o * extent + k) * inner + i] += g[o * inner + i] * scale;
  });

  const double* xd = x.data();
  double* o = out.data();
  for (long ou = 0; ou < outer; ++ou)
    for (long i = 0; i < inner; ++i) {
      double acc = 0;
      for (long k = 0; k < extent; ++k) acc += xd[(ou * extent + k) * inner + i];
      o[ou * inner + i] = acc * scale;
    }
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& x) { return reduce_full(x, false); }
Tensor reduce_mean(const Tensor& x) { return reduce_full(x, true); }
Tensor reduce_sum_axis(const Tensor& x, int axis) { return reduce_axis(x, axis, false); }
Tensor reduce_mean_axis(const Tensor& x, int axis) { return reduce_axis(x, axis, true); }

Tensor reshape(const Tensor& x, const std::vector<int>& shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  Tensor out = Tensor::make_op(shape, {x}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
  std::copy(x.data(), x.data() + x.numel(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Reverse sweep.

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a single element, got " +
                                shape_str(loss.shape()));
  TensorNode* root = loss.node();
  if (!root->requires_grad) return;

  // Post-order DFS over the requires_grad subgraph; reversed it is a valid
  // topological order (every node before its inputs).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Non-leaf grads are scratch for this sweep; leaf grads persist across
  // sweeps so repeated backward calls accumulate.
  for (TensorNode* node : order) {
    if (!node->leaf) node->grad.assign(node->data.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (!node->leaf && node->backward_fn) node->backward_fn(*node);
  }
}

}  // namespace voxelview
