#include "difc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace difc {

namespace {

std::atomic<std::uint64_t> g_visit_epoch{1};

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

std::shared_ptr<TensorNode> make_node(
    Shape shape, std::vector<double> value,
    std::vector<std::shared_ptr<TensorNode>> parents) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  // Outside training nothing upstream is differentiable; dropping the links
  // lets long no-grad executions (thresholded interpreter runs) free each
  // step's intermediates instead of accumulating the whole history.
  if (!node->requires_grad) node->parents.clear();
  return node;
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

// Accumulates out[o] += x[i] * y[j] over a merged index space described by
// `dims`, with one stride table per array (stride 0 where the array does not
// vary along a dim). Subtrees where x or y is pinned to an exact 0 are
// skipped, which is what makes dirac-heavy workloads cheap.
struct ContractKernel {
  const std::vector<std::size_t>& dims;
  const std::vector<std::size_t>& so;
  const std::vector<std::size_t>& sx;
  const std::vector<std::size_t>& sy;
  double* out;
  const double* x;
  const double* y;
  std::vector<bool> x_rest_zero;
  std::vector<bool> y_rest_zero;

  ContractKernel(const std::vector<std::size_t>& dims_,
                 const std::vector<std::size_t>& so_,
                 const std::vector<std::size_t>& sx_,
                 const std::vector<std::size_t>& sy_, double* out_,
                 const double* x_, const double* y_)
      : dims(dims_), so(so_), sx(sx_), sy(sy_), out(out_), x(x_), y(y_) {
    const std::size_t nd = dims.size();
    x_rest_zero.assign(nd + 1, true);
    y_rest_zero.assign(nd + 1, true);
    for (std::size_t d = nd; d-- > 0;) {
      x_rest_zero[d] = x_rest_zero[d + 1] && sx[d] == 0;
      y_rest_zero[d] = y_rest_zero[d + 1] && sy[d] == 0;
    }
  }

  void run() {
    if (dims.empty()) {
      out[0] += x[0] * y[0];
      return;
    }
    recurse(0, 0, 0, 0);
  }

  void recurse(std::size_t d, std::size_t io, std::size_t ix, std::size_t iy) {
    if (x_rest_zero[d] && x[ix] == 0.0) return;
    if (y_rest_zero[d] && y[iy] == 0.0) return;
    if (d + 1 == dims.size()) {
      const std::size_t m = dims[d];
      const std::size_t co = so[d], cx = sx[d], cy = sy[d];
      double* po = out + io;
      const double* px = x + ix;
      const double* py = y + iy;
      if (co == 0) {  // reduction into one cell
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) acc += px[k * cx] * py[k * cy];
        *po += acc;
      } else {
        for (std::size_t k = 0; k < m; ++k) {
          po[k * co] += px[k * cx] * py[k * cy];
        }
      }
      return;
    }
    for (std::size_t k = 0; k < dims[d]; ++k) {
      recurse(d + 1, io + k * so[d], ix + k * sx[d], iy + k * sy[d]);
    }
  }
};

struct ContractPlan {
  std::vector<std::size_t> dims;  // [paired..., a-unpaired..., b-unpaired...]
  std::vector<std::size_t> so, sa, sb;
  Shape out_shape;
};

ContractPlan plan_contract(
    const Shape& ashape, const Shape& bshape,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  ContractPlan plan;
  std::vector<bool> a_paired(ashape.size(), false), b_paired(bshape.size(), false);
  for (const auto& [pa, pb] : pairs) {
    if (pa >= ashape.size() || pb >= bshape.size())
      shape_error("contract", "axis pair out of range");
    if (a_paired[pa] || b_paired[pb])
      shape_error("contract", "axis paired twice");
    if (ashape[pa] != bshape[pb]) {
      std::ostringstream os;
      os << "paired axes differ: a axis " << pa << " has size " << ashape[pa]
         << ", b axis " << pb << " has size " << bshape[pb];
      shape_error("contract", os.str());
    }
    a_paired[pa] = true;
    b_paired[pb] = true;
  }
  const auto astr = row_major_strides(ashape);
  const auto bstr = row_major_strides(bshape);

  for (std::size_t i = 0; i < ashape.size(); ++i)
    if (!a_paired[i]) plan.out_shape.push_back(ashape[i]);
  const std::size_t a_out = plan.out_shape.size();
  for (std::size_t i = 0; i < bshape.size(); ++i)
    if (!b_paired[i]) plan.out_shape.push_back(bshape[i]);
  const auto ostr = row_major_strides(plan.out_shape);

  for (const auto& [pa, pb] : pairs) {
    plan.dims.push_back(ashape[pa]);
    plan.so.push_back(0);
    plan.sa.push_back(astr[pa]);
    plan.sb.push_back(bstr[pb]);
  }
  std::size_t oi = 0;
  for (std::size_t i = 0; i < ashape.size(); ++i) {
    if (a_paired[i]) continue;
    plan.dims.push_back(ashape[i]);
    plan.so.push_back(ostr[oi++]);
    plan.sa.push_back(astr[i]);
    plan.sb.push_back(0);
  }
  oi = a_out;
  for (std::size_t i = 0; i < bshape.size(); ++i) {
    if (b_paired[i]) continue;
    plan.dims.push_back(bshape[i]);
    plan.so.push_back(ostr[oi++]);
    plan.sa.push_back(0);
    plan.sb.push_back(bstr[i]);
  }
  return plan;
}

// Broadcast plan for elementwise binary ops (numpy-style, right aligned).
struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> sa, sb;  // 0 on broadcast dims
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  const std::size_t nd = std::max(a.size(), b.size());
  Shape ap(nd, 1), bp(nd, 1);
  std::copy(a.begin(), a.end(), ap.begin() + (nd - a.size()));
  std::copy(b.begin(), b.end(), bp.begin() + (nd - b.size()));
  plan.out_shape.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1) {
      shape_error(op, "cannot broadcast " + shape_to_string(a) + " with " +
                          shape_to_string(b));
    }
    plan.out_shape[i] = std::max(ap[i], bp[i]);
  }
  const auto astr = row_major_strides(ap);
  const auto bstr = row_major_strides(bp);
  plan.dims = plan.out_shape;
  plan.sa.resize(nd);
  plan.sb.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    plan.sa[i] = ap[i] == 1 ? 0 : astr[i];
    plan.sb[i] = bp[i] == 1 ? 0 : bstr[i];
  }
  return plan;
}

template <typename Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
  const std::size_t nd = plan.dims.size();
  if (nd == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(nd, 0);
  std::size_t io = 0, ia = 0, ib = 0;
  const std::size_t total = shape_size(plan.out_shape);
  for (std::size_t count = 0;;) {
    fn(io, ia, ib);
    if (++count == total) break;
    // odometer increment from the last dim
    std::size_t d = nd;
    while (d-- > 0) {
      ++idx[d];
      io += 1;  // recomputed below for non-last dims
      ia += plan.sa[d];
      ib += plan.sb[d];
      if (idx[d] < plan.dims[d]) break;
      // roll over
      io -= 1;
      ia -= plan.sa[d] * plan.dims[d];
      ib -= plan.sb[d] * plan.dims[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    shape_error("Tensor", "data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_to_string(shape));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> data(shape_size(shape), v);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  static const std::vector<double> kEmpty;
  return node_->grad.empty() ? kEmpty : node_->grad;
}

double Tensor::item() const {
  if (size() != 1) shape_error("item", "tensor has " + std::to_string(size()) + " elements");
  return node_->value[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  auto plan = plan_contract(a.shape(), b.shape(), pairs);
  std::vector<double> out(shape_size(plan.out_shape), 0.0);
  ContractKernel(plan.dims, plan.so, plan.sa, plan.sb, out.data(),
                 a.value().data(), b.value().data())
      .run();
  auto node = make_node(plan.out_shape, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward = [plan = std::move(plan)](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        ContractKernel(plan.dims, plan.sa, plan.so, plan.sb, pa->grad.data(),
                       self.grad.data(), pb->value.data())
            .run();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        ContractKernel(plan.dims, plan.sb, plan.so, plan.sa, pb->grad.data(),
                       self.grad.data(), pa->value.data())
            .run();
      }
    };
  }
  return Tensor(node);
}

namespace {

enum class BinOp { add, sub, mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<double> out(shape_size(plan.out_shape), 0.0);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.data();
  switch (op) {
    case BinOp::add:
      for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
        ov[io] = av[ia] + bv[ib];
      });
      break;
    case BinOp::sub:
      for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
        ov[io] = av[ia] - bv[ib];
      });
      break;
    case BinOp::mul:
      for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
        ov[io] = av[ia] * bv[ib];
      });
      break;
  }
  auto node = make_node(plan.out_shape, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward = [plan = std::move(plan), op](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double* g = self.grad.data();
      const bool need_a = pa->requires_grad;
      const bool need_b = pb->requires_grad;
      if (need_a) pa->ensure_grad();
      if (need_b) pb->ensure_grad();
      double* ga = need_a ? pa->grad.data() : nullptr;
      double* gb = need_b ? pb->grad.data() : nullptr;
      const double* av = pa->value.data();
      const double* bv = pb->value.data();
      for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
        switch (op) {
          case BinOp::add:
            if (need_a) ga[ia] += g[io];
            if (need_b) gb[ib] += g[io];
            break;
          case BinOp::sub:
            if (need_a) ga[ia] += g[io];
            if (need_b) gb[ib] -= g[io];
            break;
          case BinOp::mul:
            if (need_a) ga[ia] += g[io] * bv[ib];
            if (need_b) gb[ib] += g[io] * av[ia];
            break;
        }
      });
    };
  }
  return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::mul, "mul"); }

Tensor mix(const Tensor& p, const Tensor& a, const Tensor& b) {
  if (p.size() != 1) shape_error("mix", "weight must be a scalar");
  if (a.shape() != b.shape())
    shape_error("mix", "endpoint shapes differ: " + shape_to_string(a.shape()) +
                           " vs " + shape_to_string(b.shape()));
  const double pv = p.at(0);
  assert(pv >= -1e-12 && pv <= 1.0 + 1e-12 && "mix weight outside [0,1]");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = (1.0 - pv) * av[i] + pv * bv[i];
  auto node = make_node(a.shape(), std::move(out), {p.node(), a.node(), b.node()});
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& pp = self.parents[0];
      auto& pa = self.parents[1];
      auto& pb = self.parents[2];
      const double pv = pp->value[0];
      const double* g = self.grad.data();
      const std::size_t n = self.value.size();
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) pa->grad[i] += (1.0 - pv) * g[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) pb->grad[i] += pv * g[i];
      }
      if (pp->requires_grad) {
        pp->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          acc += g[i] * (pb->value[i] - pa->value[i]);
        pp->grad[0] += acc;
      }
    };
  }
  return Tensor(node);
}

Tensor softmax(const Tensor& logits, std::size_t axis) {
  if (axis >= std::max<std::size_t>(logits.dim(), 1))
    shape_error("softmax", "axis out of range");
  const Shape& shape = logits.shape();
  const std::size_t m = shape.empty() ? 1 : shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  std::vector<double> out(logits.size());
  const double* x = logits.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * m * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < m; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < m; ++k) out[base + k * inner] /= z;
    }
  }
  auto node = make_node(shape, std::move(out), {logits.node()});
  if (node->requires_grad) {
    node->backward = [outer, m, inner](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const double* y = self.value.data();
      const double* g = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * m * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < m; ++k)
            dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = base + k * inner;
            p->grad[i] += y[i] * (g[i] - dot);
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x.at(i));
  auto node = make_node(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const double y = self.value[i];
        p->grad[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  }
  return Tensor(node);
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(x.at(i));
  auto node = make_node(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        p->grad[i] += self.grad[i] / p->value[i];
    };
  }
  return Tensor(node);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  auto node = make_node(Shape{}, {acc}, {x.node()});
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const double g = self.grad[0];
      for (auto& gv : p->grad) gv += g;
    };
  }
  return Tensor(node);
}

Tensor scale(const Tensor& x, double k) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = k * x.at(i);
  auto node = make_node(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward = [k](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        p->grad[i] += k * self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t offset,
              std::size_t len) {
  if (axis >= x.dim()) shape_error("narrow", "axis out of range");
  const Shape& shape = x.shape();
  if (offset + len > shape[axis])
    shape_error("narrow", "window [" + std::to_string(offset) + "," +
                              std::to_string(offset + len) + ") exceeds axis size " +
                              std::to_string(shape[axis]));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t m = shape[axis];

  Shape out_shape = shape;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const double* xv = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(xv + (o * m + offset) * inner, xv + (o * m + offset + len) * inner,
              out.data() + o * len * inner);
  }
  auto node = make_node(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward = [outer, inner, m, offset, len](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const double* g = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = p->grad.data() + (o * m + offset) * inner;
        const double* src = g + o * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    shape_error("reshape", "cannot reshape " + shape_to_string(x.shape()) +
                               " into " + shape_to_string(shape));
  auto node = make_node(std::move(shape), x.value(), {x.node()});
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        p->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no parts");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error("concat", "axis out of range");
  Shape out_shape = first;
  std::size_t total = first[axis];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (s.size() != first.size()) shape_error("concat", "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_error("concat", "shape mismatch");
    }
    total += s[axis];
  }
  out_shape[axis] = total;

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> lens(parts.size());
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    lens[i] = parts[i].shape()[axis];
    parents.push_back(parts[i].node());
  }
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double* src = parts[i].value().data() + o * lens[i] * inner;
      std::copy(src, src + lens[i] * inner,
                out.data() + (o * total + off) * inner);
      off += lens[i];
    }
  }
  auto node = make_node(std::move(out_shape), std::move(out), std::move(parents));
  if (node->requires_grad) {
    node->backward = [outer, inner, total, lens](TensorNode& self) {
      for (std::size_t o = 0; o < outer; ++o) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
          auto& p = self.parents[i];
          if (p->requires_grad) {
            p->ensure_grad();
            const double* src = self.grad.data() + (o * total + off) * inner;
            double* dst = p->grad.data() + o * lens[i] * inner;
            for (std::size_t k = 0; k < lens[i] * inner; ++k) dst[k] += src[k];
          }
          off += lens[i];
        }
      }
    };
  }
  return Tensor(node);
}

Tensor pad_to(const Tensor& v, std::size_t n) {
  if (v.dim() != 1) shape_error("pad_to", "expects a 1-D tensor");
  const std::size_t m = v.size();
  if (m > n) shape_error("pad_to", "tensor longer than target");
  std::vector<double> out(n, 0.0);
  std::copy(v.value().begin(), v.value().end(), out.begin());
  auto node = make_node(Shape{n}, std::move(out), {v.node()});
  if (node->requires_grad) {
    node->backward = [m](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) p->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor element(const Tensor& x, std::size_t flat) {
  if (flat >= x.size()) shape_error("element", "index out of range");
  auto node = make_node(Shape{}, {x.at(flat)}, {x.node()});
  if (node->requires_grad) {
    node->backward = [flat](TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      p->grad[flat] += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor cross_entropy(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    shape_error("cross_entropy", "shape mismatch: " + shape_to_string(pred.shape()) +
                                     " vs " + shape_to_string(target.shape()));
  constexpr double kFloor = 1e-300;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = target.at(i);
    if (t > 0.0) acc -= t * std::log(std::max(pred.at(i), kFloor));
  }
  auto node = make_node(Shape{}, {acc}, {pred.node(), target.node()});
  if (node->requires_grad) {
    node->backward = [kFloor](TensorNode& self) {
      auto& pp = self.parents[0];
      auto& pt = self.parents[1];
      const double g = self.grad[0];
      if (pp->requires_grad) {
        pp->ensure_grad();
        for (std::size_t i = 0; i < pp->value.size(); ++i) {
          const double t = pt->value[i];
          if (t > 0.0)
            pp->grad[i] -= g * t / std::max(pp->value[i], kFloor);
        }
      }
      if (pt->requires_grad) {
        pt->ensure_grad();
        for (std::size_t i = 0; i < pt->value.size(); ++i)
          pt->grad[i] -= g * std::log(std::max(pp->value[i], kFloor));
      }
    };
  }
  return Tensor(node);
}

namespace {

// post-order over the requires_grad subgraph
void topo_collect(const std::shared_ptr<TensorNode>& root, std::uint64_t mark,
                  std::vector<TensorNode*>& order) {
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  if (!root->requires_grad || root->visit_mark == mark) return;
  root->visit_mark = mark;
  std::vector<Frame> stack{{root.get(), 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && p->visit_mark != mark) {
        p->visit_mark = mark;
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Tensor& root) {
  if (root.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad()) return;
  const std::uint64_t mark = g_visit_epoch.fetch_add(1) + 1;
  std::vector<TensorNode*> order;
  topo_collect(root.node(), mark, order);
  root.node()->ensure_grad();
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

std::size_t graph_size(const Tensor& root) {
  const std::uint64_t mark = g_visit_epoch.fetch_add(1) + 1;
  std::vector<TensorNode*> stack{root.node().get()};
  root.node()->visit_mark = mark;
  std::size_t count = 0;
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    ++count;
    for (const auto& p : n->parents) {
      if (p->visit_mark != mark) {
        p->visit_mark = mark;
        stack.push_back(p.get());
      }
    }
  }
  return count;
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                  double epsilon) {
  for (auto& x : inputs) x.zero_grad();
  Tensor y = f();
  if (y.size() != 1)
    throw std::invalid_argument("grad_check: function must return a scalar");
  if (!std::isfinite(y.item()))
    throw std::runtime_error("grad_check: function value is not finite");
  backward(y);

  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    analytic.push_back(x.grad().empty() ? std::vector<double>(x.size(), 0.0)
                                        : x.grad());
  }

  double worst = 0.0;
  for (std::size_t xi = 0; xi < inputs.size(); ++xi) {
    auto& vals = inputs[xi].mutable_value();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + epsilon;
      const double up = f().item();
      vals[i] = keep - epsilon;
      const double down = f().item();
      vals[i] = keep;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("grad_check: perturbed value is not finite");
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[xi][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace difc
