#include "carigen/tps.hpp"

#include <cmath>
#include <ostream>

namespace carigen {

using ad::Var;
namespace ops = carigen::ad;

namespace {

constexpr int kN = LandmarkSet::kCount;

Var pairwise_sq_dist(const Var& a, const Var& b) {
  const int n = a.shape()[0], m = b.shape()[0];
  Var a3 = ops::reshape(a, {n, 1, 2});
  Var b3 = ops::reshape(b, {1, m, 2});
  return ops::sum_axes(ops::square(ops::sub(a3, b3)), {2}, /*keepdims=*/false);
}

Tensor identity_matrix(int n, double s) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t[static_cast<std::int64_t>(i) * n + i] = s;
  return t;
}

Var grid_points(int h, int w) {
  Tensor q({h * w, 2});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      q[2 * (static_cast<std::int64_t>(y) * w + x)] = (x + 0.5) / w;
      q[2 * (static_cast<std::int64_t>(y) * w + x) + 1] = (y + 0.5) / h;
    }
  return Var::constant(std::move(q));
}

}  // namespace

std::pair<Var, Var> tps_solve_graph(const Var& control, const Var& target, double reg) {
  if (control.shape() != std::vector<int>{kN, 2} || target.shape() != std::vector<int>{kN, 2})
    throw TpsError("tps_solve_graph expects {17,2} landmark tensors");
  Var k = ops::tps_rbf(pairwise_sq_dist(control, control));
  if (reg != 0.0) k = ops::add(k, Var::constant(identity_matrix(kN, reg)));
  Var ones = Var::constant(Tensor::full({kN, 1}, 1.0));
  Var p = ops::concat({ones, control}, 1);                                   // {17,3}
  Var top = ops::concat({k, p}, 1);                                          // {17,20}
  Var bottom = ops::concat({ops::transpose2d(p), Var::constant(Tensor({3, 3}))}, 1);  // {3,20}
  Var lhs = ops::concat({top, bottom}, 0);                                   // {20,20}
  Var rhs = ops::concat({target, Var::constant(Tensor({3, 2}))}, 0);         // {20,2}
  Var solution;
  try {
    solution = ops::linear_solve(lhs, rhs);
  } catch (const std::runtime_error&) {
    if (reg <= 0.0)
      throw TpsError(
          "TPS system is singular (collinear or duplicated control points); "
          "use regularization > 0");
    // Rank-deficient side-condition block (all points collinear): fall back
    // to the ridge-regularized normal equations, which are always solvable.
    Var lt = ops::transpose2d(lhs);
    Var normal = ops::add(ops::matmul(lt, lhs), Var::constant(identity_matrix(kN + 3, reg)));
    solution = ops::linear_solve(normal, ops::matmul(lt, rhs));
  }
  return {ops::slice(solution, 0, 0, kN), ops::slice(solution, 0, kN, 3)};
}

Var tps_evaluate_graph(const Var& weights, const Var& affine, const Var& control,
                       const Var& points) {
  const int n = points.shape()[0];
  Var u = ops::tps_rbf(pairwise_sq_dist(points, control));  // {N,17}
  Var ones = Var::constant(Tensor::full({n, 1}, 1.0));
  Var ph = ops::concat({ones, points}, 1);  // {N,3}
  return ops::add(ops::matmul(u, weights), ops::matmul(ph, affine));
}

TpsParams solve_tps(const LandmarkSet& src, const LandmarkSet& dst, double reg) {
  if (reg < 0) throw TpsError("regularization must be >= 0");
  auto [w, a] =
      tps_solve_graph(Var::constant(src.to_tensor()), Var::constant(dst.to_tensor()), reg);
  TpsParams params;
  params.weights = w.value();
  params.affine = a.value();
  params.control_points = src;
  params.regularization = reg;
  return params;
}

Vec2 tps_evaluate(const TpsParams& params, Vec2 q) {
  double out_x = params.affine[0] + params.affine[2] * q.x + params.affine[4] * q.y;
  double out_y = params.affine[1] + params.affine[3] * q.x + params.affine[5] * q.y;
  for (int i = 0; i < kN; ++i) {
    const Vec2 c = params.control_points[i];
    const double s = (q.x - c.x) * (q.x - c.x) + (q.y - c.y) * (q.y - c.y);
    const double phi = s > 0.0 ? 0.5 * s * std::log(s) : 0.0;
    out_x += params.weights[2 * i] * phi;
    out_y += params.weights[2 * i + 1] * phi;
  }
  return {out_x, out_y};
}

Var warp_image(const Var& image, const Var& src, const Var& dst, double reg) {
  const auto& shape = image.shape();
  if (shape.size() != 3) throw TpsError("warp_image expects a {C,H,W} image");
  const int c = shape[0], h = shape[1], w = shape[2];
  // Backward map: interpolate dst -> src, then sample the input there.
  auto [weights, affine] = tps_solve_graph(dst, src, reg);
  Var samples = tps_evaluate_graph(weights, affine, dst, grid_points(h, w));
  return ops::reshape(ops::grid_sample(image, samples), {c, h, w});
}

Tensor warp_image(const Tensor& image, const LandmarkSet& src, const LandmarkSet& dst,
                  double reg) {
  return warp_image(Var::constant(image), Var::constant(src.to_tensor()),
                    Var::constant(dst.to_tensor()), reg)
      .value();
}

void write_flow_field(std::ostream& os, int h, int w, const LandmarkSet& src,
                      const LandmarkSet& dst, double reg) {
  Var samples = [&] {
    auto [weights, affine] = tps_solve_graph(Var::constant(dst.to_tensor()),
                                             Var::constant(src.to_tensor()), reg);
    return tps_evaluate_graph(weights, affine, Var::constant(dst.to_tensor()), grid_points(h, w));
  }();
  os << "MWFLOW1\n" << h << " " << w << "\n";
  const Tensor& s = samples.value();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      const float dx = static_cast<float>(s[2 * i] - (x + 0.5) / w);
      const float dy = static_cast<float>(s[2 * i + 1] - (y + 0.5) / h);
      os.write(reinterpret_cast<const char*>(&dx), sizeof(float));
      os.write(reinterpret_cast<const char*>(&dy), sizeof(float));
    }
}

}  // namespace carigen
