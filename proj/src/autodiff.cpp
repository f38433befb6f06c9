#include "carigen/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace carigen::ad {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Tensor& Node::ensure_grad() {
  if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

namespace {

Var make_op(Tensor value, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(n));
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

struct BroadcastPlan {
  std::vector<int> out_shape;
  std::vector<std::int64_t> stride_a;  // per out dim, 0 where broadcast
  std::vector<std::int64_t> stride_b;
  std::int64_t out_numel = 0;
  bool same_shape = false;
};

std::vector<std::int64_t> row_major_strides(const std::vector<int>& shape) {
  std::vector<std::int64_t> s(shape.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    s[static_cast<size_t>(i)] = acc;
    acc *= shape[static_cast<size_t>(i)];
  }
  return s;
}

BroadcastPlan plan_broadcast(const std::vector<int>& a, const std::vector<int>& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out_shape = a;
    p.out_numel = Tensor::shape_numel(a);
    p.same_shape = true;
    return p;
  }
  const int rank = std::max(a.size(), b.size());
  p.out_shape.resize(static_cast<size_t>(rank));
  std::vector<int> pa(static_cast<size_t>(rank), 1), pb(static_cast<size_t>(rank), 1);
  std::copy(a.begin(), a.end(), pa.end() - static_cast<std::ptrdiff_t>(a.size()));
  std::copy(b.begin(), b.end(), pb.end() - static_cast<std::ptrdiff_t>(b.size()));
  for (int i = 0; i < rank; ++i) {
    const int da = pa[static_cast<size_t>(i)], db = pb[static_cast<size_t>(i)];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + Tensor::shape_str(a) + " with " + Tensor::shape_str(b));
    p.out_shape[static_cast<size_t>(i)] = std::max(da, db);
  }
  auto sa = row_major_strides(pa), sb = row_major_strides(pb);
  p.stride_a.resize(static_cast<size_t>(rank));
  p.stride_b.resize(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    p.stride_a[static_cast<size_t>(i)] = pa[static_cast<size_t>(i)] == 1 ? 0 : sa[static_cast<size_t>(i)];
    p.stride_b[static_cast<size_t>(i)] = pb[static_cast<size_t>(i)] == 1 ? 0 : sb[static_cast<size_t>(i)];
  }
  p.out_numel = Tensor::shape_numel(p.out_shape);
  return p;
}

/// Calls fn(out_index, offset_a, offset_b) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  if (p.same_shape) {
    for (std::int64_t i = 0; i < p.out_numel; ++i) fn(i, i, i);
    return;
  }
  const int rank = static_cast<int>(p.out_shape.size());
  std::vector<int> idx(static_cast<size_t>(rank), 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t i = 0; i < p.out_numel; ++i) {
    fn(i, oa, ob);
    for (int d = rank - 1; d >= 0; --d) {
      auto du = static_cast<size_t>(d);
      if (++idx[du] < p.out_shape[du]) {
        oa += p.stride_a[du];
        ob += p.stride_b[du];
        break;
      }
      idx[du] = 0;
      oa -= p.stride_a[du] * (p.out_shape[du] - 1);
      ob -= p.stride_b[du] * (p.out_shape[du] - 1);
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

Var binary_op(const Var& a, const Var& b, BinOp op) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  auto plan = plan_broadcast(ta.shape(), tb.shape());
  Tensor out(plan.out_shape);
  const double* pa = ta.data();
  const double* pb = tb.data();
  double* po = out.data();
  switch (op) {
    case BinOp::Add:
      for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinOp::Sub:
      for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinOp::Mul:
      for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] * pb[ib]; });
      break;
    case BinOp::Div:
      for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] / pb[ib]; });
      break;
  }
  auto na = a.node();
  auto nb = b.node();
  return make_op(std::move(out), {na, nb}, [na, nb, plan, op](Node& self) {
    const double* g = self.grad.data();
    double* ga = na->requires_grad ? na->ensure_grad().data() : nullptr;
    double* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
    const double* va = na->value.data();
    const double* vb = nb->value.data();
    switch (op) {
      case BinOp::Add:
        for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
        });
        break;
      case BinOp::Sub:
        for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] -= g[i];
        });
        break;
      case BinOp::Mul:
        for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i] * vb[ib];
          if (gb) gb[ib] += g[i] * va[ia];
        });
        break;
      case BinOp::Div:
        for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          const double inv = 1.0 / vb[ib];
          if (ga) ga[ia] += g[i] * inv;
          if (gb) gb[ib] -= g[i] * va[ia] * inv * inv;
        });
        break;
    }
  });
}

/// Unary elementwise op: fwd(x) and dfdx(x, y) where y = fwd(x).
template <typename F, typename DF>
Var unary_op(const Var& a, F&& fwd, DF&& dfdx) {
  const Tensor& ta = a.value();
  Tensor out(ta.shape());
  const double* pa = ta.data();
  double* po = out.data();
  const std::int64_t n = ta.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  auto na = a.node();
  auto df = std::forward<DF>(dfdx);
  return make_op(std::move(out), {na}, [na, df, n](Node& self) {
    if (!na->requires_grad) return;
    double* ga = na->ensure_grad().data();
    const double* g = self.grad.data();
    const double* x = na->value.data();
    const double* y = self.value.data();
    for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

void backward(const Var& root) {
  if (root.value().numel() != 1) throw ShapeError("backward() root must have one element");
  if (!root.requires_grad()) return;
  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node* next = node->parents[child++].get();
      if (next->requires_grad && visited.insert(next).second) stack.emplace_back(next, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Add); }
Var sub(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Sub); }
Var mul(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Mul); }
Var div(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Div); }

Var neg(const Var& a) {
  return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
Var scale(const Var& a, double c) {
  return unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}
Var add_scalar(const Var& a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
Var exp_(const Var& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
Var log_(const Var& a) {
  return unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}
Var tanh_(const Var& a) {
  return unary_op(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}
Var sqrt_(const Var& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}
Var abs_(const Var& a) {
  return unary_op(a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
Var square(const Var& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}
Var leaky_relu(const Var& a, double alpha) {
  return unary_op(a, [alpha](double x) { return x > 0 ? x : alpha * x; },
                  [alpha](double x, double) { return x > 0 ? 1.0 : alpha; });
}
Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var tps_rbf(const Var& sq_dist) {
  return unary_op(
      sq_dist, [](double s) { return s > 0.0 ? 0.5 * s * std::log(s) : 0.0; },
      [](double s, double) { return s > 0.0 ? 0.5 * (std::log(s) + 1.0) : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
  const Tensor& ta = a.value();
  double acc = 0.0;
  const double* p = ta.data();
  for (std::int64_t i = 0; i < ta.numel(); ++i) acc += p[i];
  auto na = a.node();
  return make_op(Tensor::scalar(acc), {na}, [na](Node& self) {
    if (!na->requires_grad) return;
    const double g = self.grad[0];
    double* ga = na->ensure_grad().data();
    for (std::int64_t i = 0; i < na->value.numel(); ++i) ga[i] += g;
  });
}

Var mean_all(const Var& a) {
  const std::int64_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean_all of empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

namespace {

struct AxesPlan {
  std::vector<int> out_shape;       // with keepdims
  std::vector<int> final_shape;     // requested output shape
  std::vector<std::int64_t> out_stride_per_in_dim;
  std::int64_t reduced_count = 1;
};

AxesPlan plan_axes(const std::vector<int>& shape, const std::vector<int>& axes, bool keepdims) {
  AxesPlan p;
  std::vector<bool> is_reduced(shape.size(), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(shape.size())) throw ShapeError("reduce axis out of range");
    is_reduced[static_cast<size_t>(ax)] = true;
  }
  p.out_shape = shape;
  for (size_t d = 0; d < shape.size(); ++d) {
    if (is_reduced[d]) {
      p.reduced_count *= shape[d];
      p.out_shape[d] = 1;
    }
  }
  auto out_strides = row_major_strides(p.out_shape);
  p.out_stride_per_in_dim.resize(shape.size());
  for (size_t d = 0; d < shape.size(); ++d)
    p.out_stride_per_in_dim[d] = is_reduced[d] ? 0 : out_strides[d];
  if (keepdims) {
    p.final_shape = p.out_shape;
  } else {
    for (size_t d = 0; d < shape.size(); ++d)
      if (!is_reduced[d]) p.final_shape.push_back(shape[d]);
  }
  return p;
}

template <typename Fn>
void for_each_reduce(const std::vector<int>& in_shape, const AxesPlan& p, Fn&& fn) {
  const int rank = static_cast<int>(in_shape.size());
  std::vector<int> idx(static_cast<size_t>(rank), 0);
  std::int64_t oo = 0;
  const std::int64_t n = Tensor::shape_numel(in_shape);
  for (std::int64_t i = 0; i < n; ++i) {
    fn(i, oo);
    for (int d = rank - 1; d >= 0; --d) {
      auto du = static_cast<size_t>(d);
      if (++idx[du] < in_shape[du]) {
        oo += p.out_stride_per_in_dim[du];
        break;
      }
      idx[du] = 0;
      oo -= p.out_stride_per_in_dim[du] * (in_shape[du] - 1);
    }
  }
}

}  // namespace

Var sum_axes(const Var& a, const std::vector<int>& axes, bool keepdims) {
  const Tensor& ta = a.value();
  auto plan = plan_axes(ta.shape(), axes, keepdims);
  Tensor out(plan.out_shape);
  const double* pa = ta.data();
  double* po = out.data();
  for_each_reduce(ta.shape(), plan, [&](std::int64_t i, std::int64_t o) { po[o] += pa[i]; });
  out = out.reshaped(plan.final_shape);
  auto na = a.node();
  auto in_shape = ta.shape();
  return make_op(std::move(out), {na}, [na, plan, in_shape](Node& self) {
    if (!na->requires_grad) return;
    double* ga = na->ensure_grad().data();
    const double* g = self.grad.data();
    for_each_reduce(in_shape, plan, [&](std::int64_t i, std::int64_t o) { ga[i] += g[o]; });
  });
}

Var mean_axes(const Var& a, const std::vector<int>& axes, bool keepdims) {
  auto plan = plan_axes(a.value().shape(), axes, keepdims);
  return scale(sum_axes(a, axes, keepdims), 1.0 / static_cast<double>(plan.reduced_count));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  auto na = a.node();
  return make_op(std::move(out), {na}, [na](Node& self) {
    if (!na->requires_grad) return;
    double* ga = na->ensure_grad().data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.value.numel(); ++i) ga[i] += g[i];
  });
}

Var transpose2d(const Var& a) {
  const Tensor& ta = a.value();
  if (ta.ndim() != 2) throw ShapeError("transpose2d expects rank 2, got " + ta.shape_str());
  const int r = ta.dim(0), c = ta.dim(1);
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::int64_t>(j) * r + i] = ta[static_cast<std::int64_t>(i) * c + j];
  auto na = a.node();
  return make_op(std::move(out), {na}, [na, r, c](Node& self) {
    if (!na->requires_grad) return;
    double* ga = na->ensure_grad().data();
    const double* g = self.grad.data();
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) ga[static_cast<std::int64_t>(i) * c + j] += g[static_cast<std::int64_t>(j) * r + i];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero parts");
  const auto& first = parts[0].value().shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  std::vector<int> out_shape = first;
  out_shape[static_cast<size_t>(axis)] = 0;
  for (const auto& p : parts) {
    const auto& s = p.value().shape();
    if (static_cast<int>(s.size()) != rank) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && s[static_cast<size_t>(d)] != first[static_cast<size_t>(d)])
        throw ShapeError("concat shape mismatch " + Tensor::shape_str(s));
    out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
  }
  // outer: product of dims before axis; inner: product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[static_cast<size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= first[static_cast<size_t>(d)];
  const std::int64_t out_axis = out_shape[static_cast<size_t>(axis)];

  Tensor out(out_shape);
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const Tensor& tp = p.value();
    const std::int64_t ax = tp.shape()[static_cast<size_t>(axis)];
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(tp.data() + o * ax * inner, tp.data() + (o + 1) * ax * inner,
                out.data() + (o * out_axis + off) * inner);
    off += ax;
  }
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<std::int64_t> ax_sizes;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    ax_sizes.push_back(p.value().shape()[static_cast<size_t>(axis)]);
  }
  return make_op(std::move(out), nodes, [nodes, ax_sizes, outer, inner, out_axis](Node& self) {
    const double* g = self.grad.data();
    std::int64_t off = 0;
    for (size_t k = 0; k < nodes.size(); ++k) {
      const std::int64_t ax = ax_sizes[k];
      if (nodes[k]->requires_grad) {
        double* gk = nodes[k]->ensure_grad().data();
        for (std::int64_t o = 0; o < outer; ++o) {
          const double* src = g + (o * out_axis + off) * inner;
          double* dst = gk + o * ax * inner;
          for (std::int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
      off += ax;
    }
  });
}

Var slice(const Var& a, int axis, int start, int len) {
  const Tensor& ta = a.value();
  const int rank = ta.ndim();
  if (axis < 0 || axis >= rank) throw ShapeError("slice axis out of range");
  const int ax = ta.dim(axis);
  if (start < 0 || len < 0 || start + len > ax) throw ShapeError("slice range out of bounds");
  std::vector<int> out_shape = ta.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= ta.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= ta.dim(d);
  Tensor out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(ta.data() + (o * ax + start) * inner, ta.data() + (o * ax + start + len) * inner,
              out.data() + o * len * inner);
  auto na = a.node();
  return make_op(std::move(out), {na}, [na, outer, inner, ax, start, len](Node& self) {
    if (!na->requires_grad) return;
    double* ga = na->ensure_grad().data();
    const double* g = self.grad.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      double* dst = ga + (o * ax + start) * inner;
      const double* src = g + o * len * inner;
      for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

Var pick(const Var& a, int index) {
  const Tensor& ta = a.value();
  if (ta.ndim() != 1) throw ShapeError("pick expects rank 1");
  if (index < 0 || index >= ta.dim(0)) throw ShapeError("pick index out of range");
  auto na = a.node();
  return make_op(Tensor::scalar(ta[index]), {na}, [na, index](Node& self) {
    if (!na->requires_grad) return;
    na->ensure_grad()[index] += self.grad[0];
  });
}

Var stopgrad(const Var& a) { return Var::constant(a.value()); }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
    throw ShapeError("matmul shape mismatch " + ta.shape_str() + " x " + tb.shape_str());
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  CMapRM A(ta.data(), m, k), B(tb.data(), k, n);
  MapRM(out.data(), m, n).noalias() = A * B;
  auto na = a.node();
  auto nb = b.node();
  return make_op(std::move(out), {na, nb}, [na, nb, m, k, n](Node& self) {
    CMapRM G(self.grad.data(), m, n);
    if (na->requires_grad) {
      CMapRM B(nb->value.data(), k, n);
      MapRM(na->ensure_grad().data(), m, k).noalias() += G * B.transpose();
    }
    if (nb->requires_grad) {
      CMapRM A(na->value.data(), m, k);
      MapRM(nb->ensure_grad().data(), k, n).noalias() += A.transpose() * G;
    }
  });
}

Var linear_solve(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.ndim() != 2 || ta.dim(0) != ta.dim(1) || tb.ndim() != 2 || tb.dim(0) != ta.dim(0))
    throw ShapeError("linear_solve shape mismatch " + ta.shape_str() + ", " + tb.shape_str());
  const int n = ta.dim(0), m = tb.dim(1);
  CMapRM A(ta.data(), n, n), B(tb.data(), n, m);
  Eigen::PartialPivLU<MatRM> lu(A);
  // Partial-pivot LU leaves near-singular systems undetected; check the
  // reconstruction residual instead of the determinant.
  Tensor out({n, m});
  MapRM X(out.data(), n, m);
  X = lu.solve(B);
  const double resid = (A * X - B).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  if (!out.all_finite() || resid > 1e-6 * scale)
    throw std::runtime_error("linear_solve: singular or ill-conditioned system");
  auto na = a.node();
  auto nb = b.node();
  Tensor x_copy = out;
  return make_op(std::move(out), {na, nb}, [na, nb, n, m, x_copy](Node& self) {
    // X = A^{-1} B;  gB = A^{-T} gX;  gA = -gB X^T.
    CMapRM A(na->value.data(), n, n);
    CMapRM G(self.grad.data(), n, m);
    MatRM At = A.transpose();
    Eigen::PartialPivLU<MatRM> lut(At);
    MatRM S = lut.solve(MatRM(G));
    if (nb->requires_grad) MapRM(nb->ensure_grad().data(), n, m).noalias() += S;
    if (na->requires_grad) {
      CMapRM X(x_copy.data(), n, m);
      MapRM(na->ensure_grad().data(), n, n).noalias() -= S * X.transpose();
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and friends
// ---------------------------------------------------------------------------

int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

int pool_out_size(int in, int k, int stride) {
  if (in <= k) return 1;
  return (in - k + stride - 1) / stride + 1;
}

namespace {

void im2col(const double* x, int ci, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, double* col) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row = col + (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) *
                                (static_cast<std::int64_t>(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int ci, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo, double* gx) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = col + (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) *
                                      (static_cast<std::int64_t>(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = gx + (static_cast<std::int64_t>(c) * h + iy) * w;
          const double* src = row + static_cast<std::int64_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
  const Tensor& tx = x.value();
  const Tensor& tw = w.value();
  if (tx.ndim() != 3 || tw.ndim() != 4 || tx.dim(0) != tw.dim(1))
    throw ShapeError("conv2d shape mismatch x=" + tx.shape_str() + " w=" + tw.shape_str());
  const int ci = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
  const int co = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
  const int ho = conv_out_size(h, kh, stride, pad), wo = conv_out_size(wd, kw, stride, pad);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d output would be empty");
  const std::int64_t ckk = static_cast<std::int64_t>(ci) * kh * kw;
  const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;

  auto col = std::make_shared<Tensor>(std::vector<int>{static_cast<int>(ckk), static_cast<int>(hw)});
  im2col(tx.data(), ci, h, wd, kh, kw, stride, pad, ho, wo, col->data());
  Tensor out({co, ho, wo});
  CMapRM W(tw.data(), co, ckk), C(col->data(), ckk, hw);
  MapRM(out.data(), co, hw).noalias() = W * C;

  auto nx = x.node();
  auto nw = w.node();
  return make_op(std::move(out), {nx, nw},
                 [nx, nw, col, ci, h, wd, co, kh, kw, stride, pad, ho, wo, ckk, hw](Node& self) {
                   CMapRM G(self.grad.data(), co, hw);
                   if (nw->requires_grad) {
                     CMapRM C(col->data(), ckk, hw);
                     MapRM(nw->ensure_grad().data(), co, ckk).noalias() += G * C.transpose();
                   }
                   if (nx->requires_grad) {
                     CMapRM W(nw->value.data(), co, ckk);
                     MatRM gcol = W.transpose() * G;
                     col2im_add(gcol.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                                nx->ensure_grad().data());
                   }
                 });
}

Var max_pool2d(const Var& x, int k, int stride) {
  const Tensor& tx = x.value();
  if (tx.ndim() != 3) throw ShapeError("max_pool2d expects rank 3");
  const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  const int ho = pool_out_size(h, k, stride), wo = pool_out_size(w, k, stride);
  Tensor out({c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<size_t>(c) * ho * wo);
  std::int64_t o = 0;
  for (int cc = 0; cc < c; ++cc) {
    const double* plane = tx.data() + static_cast<std::int64_t>(cc) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      const int y0 = std::min(oy * stride, h - 1), y1 = std::min(y0 + k, h);
      for (int ox = 0; ox < wo; ++ox, ++o) {
        const int x0 = std::min(ox * stride, w - 1), x1 = std::min(x0 + k, w);
        double best = plane[static_cast<std::int64_t>(y0) * w + x0];
        std::int64_t best_i = static_cast<std::int64_t>(y0) * w + x0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) {
            const std::int64_t i = static_cast<std::int64_t>(y) * w + xx;
            if (plane[i] > best) {
              best = plane[i];
              best_i = i;
            }
          }
        out[o] = best;
        (*argmax)[static_cast<size_t>(o)] = static_cast<std::int64_t>(cc) * h * w + best_i;
      }
    }
  }
  auto nx = x.node();
  return make_op(std::move(out), {nx}, [nx, argmax](Node& self) {
    if (!nx->requires_grad) return;
    double* gx = nx->ensure_grad().data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.value.numel(); ++i) gx[(*argmax)[static_cast<size_t>(i)]] += g[i];
  });
}

Var upsample_nearest2(const Var& x) {
  const Tensor& tx = x.value();
  if (tx.ndim() != 3) throw ShapeError("upsample_nearest2 expects rank 3");
  const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int cc = 0; cc < c; ++cc)
    for (int y = 0; y < 2 * h; ++y) {
      const double* src = tx.data() + (static_cast<std::int64_t>(cc) * h + y / 2) * w;
      double* dst = out.data() + (static_cast<std::int64_t>(cc) * 2 * h + y) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
    }
  auto nx = x.node();
  return make_op(std::move(out), {nx}, [nx, c, h, w](Node& self) {
    if (!nx->requires_grad) return;
    double* gx = nx->ensure_grad().data();
    const double* g = self.grad.data();
    for (int cc = 0; cc < c; ++cc)
      for (int y = 0; y < 2 * h; ++y) {
        double* dst = gx + (static_cast<std::int64_t>(cc) * h + y / 2) * w;
        const double* src = g + (static_cast<std::int64_t>(cc) * 2 * h + y) * 2 * w;
        for (int xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
      }
  });
}

Var grid_sample(const Var& image, const Var& coords) {
  const Tensor& ti = image.value();
  const Tensor& tc = coords.value();
  if (ti.ndim() != 3) throw ShapeError("grid_sample image must be [C,H,W]");
  if (tc.ndim() != 2 || tc.dim(1) != 2) throw ShapeError("grid_sample coords must be [N,2]");
  const int c = ti.dim(0), h = ti.dim(1), w = ti.dim(2), n = tc.dim(0);
  Tensor out({c, n});
  const auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int i = 0; i < n; ++i) {
    const double u = tc[2 * i] * w - 0.5;
    const double v = tc[2 * i + 1] * h - 0.5;
    const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    const double wx = u - x0, wy = v - y0;
    const int xa = clampi(x0, 0, w - 1), xb = clampi(x0 + 1, 0, w - 1);
    const int ya = clampi(y0, 0, h - 1), yb = clampi(y0 + 1, 0, h - 1);
    for (int cc = 0; cc < c; ++cc) {
      const double* plane = ti.data() + static_cast<std::int64_t>(cc) * h * w;
      const double v00 = plane[static_cast<std::int64_t>(ya) * w + xa];
      const double v01 = plane[static_cast<std::int64_t>(ya) * w + xb];
      const double v10 = plane[static_cast<std::int64_t>(yb) * w + xa];
      const double v11 = plane[static_cast<std::int64_t>(yb) * w + xb];
      out[static_cast<std::int64_t>(cc) * n + i] =
          (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
    }
  }
  auto ni = image.node();
  auto nc = coords.node();
  return make_op(std::move(out), {ni, nc}, [ni, nc, c, h, w, n](Node& self) {
    const Tensor& ti = ni->value;
    const Tensor& tc = nc->value;
    const double* g = self.grad.data();
    double* gi = ni->requires_grad ? ni->ensure_grad().data() : nullptr;
    double* gc = nc->requires_grad ? nc->ensure_grad().data() : nullptr;
    const auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int i = 0; i < n; ++i) {
      const double u = tc[2 * i] * w - 0.5;
      const double v = tc[2 * i + 1] * h - 0.5;
      const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
      const double wx = u - x0, wy = v - y0;
      const int xa = clampi(x0, 0, w - 1), xb = clampi(x0 + 1, 0, w - 1);
      const int ya = clampi(y0, 0, h - 1), yb = clampi(y0 + 1, 0, h - 1);
      double du = 0.0, dv = 0.0;
      for (int cc = 0; cc < c; ++cc) {
        const double* plane = ti.data() + static_cast<std::int64_t>(cc) * h * w;
        const std::int64_t i00 = static_cast<std::int64_t>(ya) * w + xa;
        const std::int64_t i01 = static_cast<std::int64_t>(ya) * w + xb;
        const std::int64_t i10 = static_cast<std::int64_t>(yb) * w + xa;
        const std::int64_t i11 = static_cast<std::int64_t>(yb) * w + xb;
        const double go = g[static_cast<std::int64_t>(cc) * n + i];
        if (gi) {
          double* gplane = gi + static_cast<std::int64_t>(cc) * h * w;
          gplane[i00] += go * (1 - wy) * (1 - wx);
          gplane[i01] += go * (1 - wy) * wx;
          gplane[i10] += go * wy * (1 - wx);
          gplane[i11] += go * wy * wx;
        }
        if (gc) {
          du += go * ((1 - wy) * (plane[i01] - plane[i00]) + wy * (plane[i11] - plane[i10]));
          dv += go * ((1 - wx) * (plane[i10] - plane[i00]) + wx * (plane[i11] - plane[i01]));
        }
      }
      if (gc) {
        gc[2 * i] += du * w;
        gc[2 * i + 1] += dv * h;
      }
    }
  });
}

Var log_softmax(const Var& logits) {
  const Tensor& t = logits.value();
  if (t.ndim() != 1) throw ShapeError("log_softmax expects rank 1");
  double vmax = t[0];
  for (std::int64_t i = 1; i < t.numel(); ++i) vmax = std::max(vmax, t[i]);
  Var shifted = add_scalar(logits, -vmax);
  Var lse = log_(sum_all(exp_(shifted)));
  return sub(shifted, lse);
}

}  // namespace carigen::ad
