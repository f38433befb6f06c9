#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "carigen/autodiff.hpp"
#include "carigen/rng.hpp"

namespace carigen::nn {

using ad::Var;

/// Trainable parameters, hierarchically named ("style.enc_content.p.conv1.w").
/// Lexicographic map order fixes checkpoint layout and optimizer iteration.
class ParamStore {
 public:
  Var create(const std::string& name, std::vector<int> shape);
  Var create_normal(const std::string& name, std::vector<int> shape, Rng& rng, double stddev);

  const std::map<std::string, Var>& params() const { return params_; }
  std::map<std::string, Var>& params() { return params_; }
  const Var& at(const std::string& name) const;
  void zero_grads();
  std::int64_t total_parameters() const;

 private:
  std::map<std::string, Var> params_;
};

struct Linear {
  Var w, b;  // w: [out, in]
  Linear() = default;
  Linear(ParamStore& ps, Rng& rng, const std::string& prefix, int in, int out,
         bool zero_init = false);
  Var operator()(const Var& x) const;  // [in] -> [out]
};

struct Conv2d {
  Var w, b;  // w: [co, ci, k, k]
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamStore& ps, Rng& rng, const std::string& prefix, int ci, int co, int k, int stride,
         int pad);
  Var operator()(const Var& x) const;
};

/// Per-channel normalization over spatial dims, no affine part.
Var instance_norm(const Var& x, double eps = 1e-5);

/// Adaptive instance normalization: normalize, then apply style-derived
/// per-channel (1 + scale) and shift.
Var adain(const Var& x, const Var& scale, const Var& shift, double eps = 1e-5);

struct InstanceNorm2d {
  Var gamma, beta;  // [C]
  InstanceNorm2d() = default;
  InstanceNorm2d(ParamStore& ps, const std::string& prefix, int channels);
  Var operator()(const Var& x) const;
};

struct ResBlockIN {
  Conv2d c1, c2;
  InstanceNorm2d n1, n2;
  ResBlockIN() = default;
  ResBlockIN(ParamStore& ps, Rng& rng, const std::string& prefix, int channels);
  Var operator()(const Var& x) const;
};

/// Residual block whose two normalizations take externally supplied
/// per-channel scale/shift (from the style mapping network).
struct AdaResBlock {
  Conv2d c1, c2;
  AdaResBlock() = default;
  AdaResBlock(ParamStore& ps, Rng& rng, const std::string& prefix, int channels);
  Var operator()(const Var& x, const Var& s1, const Var& b1, const Var& s2, const Var& b2) const;
};

/// Fully connected stack; leaky ReLU after every layer except the last.
struct Mlp {
  std::vector<Linear> layers;
  double alpha = 0.2;
  Mlp() = default;
  Mlp(ParamStore& ps, Rng& rng, const std::string& prefix, const std::vector<int>& widths,
      double lrelu_alpha);
  Var operator()(Var x) const;
};

}  // namespace carigen::nn
