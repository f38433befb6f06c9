#include "carigen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace carigen::nn {

using namespace carigen::ad;

Var ParamStore::create(const std::string& name, std::vector<int> shape) {
  if (params_.count(name)) throw std::runtime_error("duplicate parameter name: " + name);
  Var v = Var::leaf(Tensor(std::move(shape)), /*requires_grad=*/true);
  params_.emplace(name, v);
  return v;
}

Var ParamStore::create_normal(const std::string& name, std::vector<int> shape, Rng& rng,
                              double stddev) {
  Var v = create(name, std::move(shape));
  Tensor& t = v.mutable_value();
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return v;
}

const Var& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : params_) v.zero_grad();
}

std::int64_t ParamStore::total_parameters() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : params_) n += v.value().numel();
  return n;
}

Linear::Linear(ParamStore& ps, Rng& rng, const std::string& prefix, int in, int out,
               bool zero_init) {
  if (zero_init) {
    w = ps.create(prefix + ".w", {out, in});
  } else {
    w = ps.create_normal(prefix + ".w", {out, in}, rng, std::sqrt(2.0 / in));
  }
  b = ps.create(prefix + ".b", {out});
}

Var Linear::operator()(const Var& x) const {
  const int in = w.shape()[1], out = w.shape()[0];
  Var y = matmul(w, reshape(x, {in, 1}));
  return add(reshape(y, {out}), b);
}

Conv2d::Conv2d(ParamStore& ps, Rng& rng, const std::string& prefix, int ci, int co, int k,
               int stride_, int pad_)
    : stride(stride_), pad(pad_) {
  w = ps.create_normal(prefix + ".w", {co, ci, k, k}, rng, std::sqrt(2.0 / (ci * k * k)));
  b = ps.create(prefix + ".b", {co});
}

Var Conv2d::operator()(const Var& x) const {
  const int co = w.shape()[0];
  Var y = conv2d(x, w, stride, pad);
  return add(y, reshape(b, {co, 1, 1}));
}

Var instance_norm(const Var& x, double eps) {
  Var mu = mean_axes(x, {1, 2}, /*keepdims=*/true);
  Var xc = sub(x, mu);
  Var var = mean_axes(square(xc), {1, 2}, /*keepdims=*/true);
  return div(xc, sqrt_(add_scalar(var, eps)));
}

Var adain(const Var& x, const Var& scale, const Var& shift, double eps) {
  const int c = x.shape()[0];
  Var xn = instance_norm(x, eps);
  Var g = reshape(add_scalar(scale, 1.0), {c, 1, 1});
  Var b = reshape(shift, {c, 1, 1});
  return add(mul(xn, g), b);
}

InstanceNorm2d::InstanceNorm2d(ParamStore& ps, const std::string& prefix, int channels) {
  gamma = ps.create(prefix + ".gamma", {channels});
  gamma.mutable_value().fill(1.0);
  beta = ps.create(prefix + ".beta", {channels});
}

Var InstanceNorm2d::operator()(const Var& x) const {
  const int c = x.shape()[0];
  Var xn = instance_norm(x);
  return add(mul(xn, reshape(gamma, {c, 1, 1})), reshape(beta, {c, 1, 1}));
}

ResBlockIN::ResBlockIN(ParamStore& ps, Rng& rng, const std::string& prefix, int channels)
    : c1(ps, rng, prefix + ".conv1", channels, channels, 3, 1, 1),
      c2(ps, rng, prefix + ".conv2", channels, channels, 3, 1, 1),
      n1(ps, prefix + ".norm1", channels),
      n2(ps, prefix + ".norm2", channels) {}

Var ResBlockIN::operator()(const Var& x) const {
  Var h = relu(n1(c1(x)));
  return add(x, n2(c2(h)));
}

AdaResBlock::AdaResBlock(ParamStore& ps, Rng& rng, const std::string& prefix, int channels)
    : c1(ps, rng, prefix + ".conv1", channels, channels, 3, 1, 1),
      c2(ps, rng, prefix + ".conv2", channels, channels, 3, 1, 1) {}

Var AdaResBlock::operator()(const Var& x, const Var& s1, const Var& b1, const Var& s2,
                            const Var& b2) const {
  Var h = relu(adain(c1(x), s1, b1));
  return add(x, adain(c2(h), s2, b2));
}

Mlp::Mlp(ParamStore& ps, Rng& rng, const std::string& prefix, const std::vector<int>& widths,
         double lrelu_alpha)
    : alpha(lrelu_alpha) {
  if (widths.size() < 2) throw std::runtime_error("Mlp needs at least in/out widths");
  for (size_t i = 0; i + 1 < widths.size(); ++i)
    layers.emplace_back(ps, rng, prefix + ".fc" + std::to_string(i), widths[i], widths[i + 1]);
}

Var Mlp::operator()(Var x) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = leaky_relu(x, alpha);
  }
  return x;
}

}  // namespace carigen::nn
