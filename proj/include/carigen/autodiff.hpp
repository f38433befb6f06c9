#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "carigen/tensor.hpp"

namespace carigen::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

/// Handle to a node in the computation graph. Copying a Var aliases the
/// underlying node; graphs are DAGs built forward and traversed once by
/// backward().
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }
  static Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }
  Tensor& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  void zero_grad() { n_->ensure_grad().fill(0.0); }
  const std::shared_ptr<Node>& node() const { return n_; }

  const std::vector<int>& shape() const { return n_->value.shape(); }
  double item() const { return n_->value.item(); }

 private:
  std::shared_ptr<Node> n_;
};

/// Reverse-mode sweep from a one-element root. Gradients accumulate into
/// Node::grad; leaves keep theirs until explicitly zeroed.
void backward(const Var& root);

// Elementwise binary ops with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// Elementwise unary ops.
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var exp_(const Var& a);
Var log_(const Var& a);
Var tanh_(const Var& a);
Var sqrt_(const Var& a);
Var abs_(const Var& a);
Var square(const Var& a);
Var leaky_relu(const Var& a, double alpha);
Var relu(const Var& a);
/// Thin-plate radial basis on squared distances: f(s) = 0.5 * s * ln(s),
/// continued by 0 at s = 0 (where the derivative is taken as 0; the product
/// rule against ds/dx restores the correct zero limit of the chain).
Var tps_rbf(const Var& sq_dist);

// Reductions.
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_axes(const Var& a, const std::vector<int>& axes, bool keepdims);
Var mean_axes(const Var& a, const std::vector<int>& axes, bool keepdims);

// Shape ops.
Var reshape(const Var& a, std::vector<int> shape);
Var transpose2d(const Var& a);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, int start, int len);
Var pick(const Var& a, int index);  // 1-D gather of a single element
Var stopgrad(const Var& a);

// Linear algebra.
Var matmul(const Var& a, const Var& b);            // [m,k] x [k,n]
Var linear_solve(const Var& a, const Var& b);      // a: [n,n], b: [n,m]

// Neural-net building blocks.
Var conv2d(const Var& x, const Var& w, int stride, int pad);  // x [Ci,H,W], w [Co,Ci,kh,kw]
Var max_pool2d(const Var& x, int k, int stride);
Var upsample_nearest2(const Var& x);
/// Bilinear sampling of image [C,H,W] at normalized coordinates [N,2]
/// ((x,y) in [0,1]^2, pixel centers at (i+0.5)/size). Out-of-range samples
/// replicate the edge. Returns [C,N]. Differentiable in both arguments.
Var grid_sample(const Var& image, const Var& coords);

Var log_softmax(const Var& logits);  // 1-D

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

/// Output spatial size of a pooling window: ceil semantics, never below 1,
/// windows clipped at the border. Keeps the reduction defined for inputs
/// smaller than the kernel.
int pool_out_size(int in, int k, int stride);
int conv_out_size(int in, int k, int stride, int pad);

}  // namespace carigen::ad
