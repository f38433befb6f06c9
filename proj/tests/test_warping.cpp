#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "carigen/rng.hpp"
#include "carigen/tps.hpp"
#include "testutil.hpp"

using namespace carigen;
using carigen::ad::Var;
namespace ops = carigen::ad;
using carigen::testutil::finite_diff_grad;
using carigen::testutil::grad_rel_error;
using carigen::testutil::mean_abs_diff;

namespace {

LandmarkSet random_landmarks(Rng& rng, double lo = 0.15, double hi = 0.85) {
  LandmarkSet l;
  for (int i = 0; i < LandmarkSet::kCount; ++i) l[i] = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return l;
}

Tensor smooth_image(int size, double fx = 1.0, double fy = 2.0, double phase = 0.0) {
  Tensor img({3, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      img.at({0, y, x}) = std::sin(2 * M_PI * fx * u + phase) * 0.5;
      img.at({1, y, x}) = std::cos(2 * M_PI * fy * v + phase) * 0.5;
      img.at({2, y, x}) = std::sin(2 * M_PI * (u + v) + phase) * 0.3;
    }
  return img;
}

// Independent reference: assemble the full TPS system and solve it with
// hand-rolled Gauss-Jordan elimination, then evaluate directly.
struct RefTps {
  std::vector<double> coef_x, coef_y;  // 20 each: 17 weights + (bias, x, y)
  LandmarkSet control;

  static double kernel(Vec2 a, Vec2 b) {
    const double s = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
    return s > 0 ? 0.5 * s * std::log(s) : 0.0;
  }

  static RefTps solve(const LandmarkSet& src, const LandmarkSet& dst, double reg) {
    const int n = LandmarkSet::kCount, m = n + 3;
    std::vector<std::vector<double>> aug(m, std::vector<double>(m + 2, 0.0));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) aug[i][j] = kernel(src[i], src[j]) + (i == j ? reg : 0.0);
      aug[i][n] = 1.0;
      aug[i][n + 1] = src[i].x;
      aug[i][n + 2] = src[i].y;
      aug[n][i] = 1.0;
      aug[n + 1][i] = src[i].x;
      aug[n + 2][i] = src[i].y;
      aug[i][m] = dst[i].x;
      aug[i][m + 1] = dst[i].y;
    }
    // Gauss-Jordan with partial pivoting
    for (int col = 0; col < m; ++col) {
      int piv = col;
      for (int r = col + 1; r < m; ++r)
        if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
      std::swap(aug[col], aug[piv]);
      const double d = aug[col][col];
      for (int c = col; c < m + 2; ++c) aug[col][c] /= d;
      for (int r = 0; r < m; ++r) {
        if (r == col) continue;
        const double f = aug[r][col];
        for (int c = col; c < m + 2; ++c) aug[r][c] -= f * aug[col][c];
      }
    }
    RefTps ref;
    ref.control = src;
    for (int i = 0; i < m; ++i) {
      ref.coef_x.push_back(aug[i][m]);
      ref.coef_y.push_back(aug[i][m + 1]);
    }
    return ref;
  }

  Vec2 eval(Vec2 q) const {
    const int n = LandmarkSet::kCount;
    double x = coef_x[n] + coef_x[n + 1] * q.x + coef_x[n + 2] * q.y;
    double y = coef_y[n] + coef_y[n + 1] * q.x + coef_y[n + 2] * q.y;
    for (int i = 0; i < n; ++i) {
      const double k = kernel(q, control[i]);
      x += coef_x[i] * k;
      y += coef_y[i] * k;
    }
    return {x, y};
  }
};

}  // namespace

TEST_CASE("solve_tps: identity targets give identity interpolant") {
  Rng rng(31);
  const LandmarkSet l = random_landmarks(rng);
  const TpsParams p = solve_tps(l, l, 0.0);
  for (std::int64_t i = 0; i < p.weights.numel(); ++i) CHECK(std::abs(p.weights[i]) < 1e-9);
  CHECK(p.affine[0] == doctest::Approx(0.0).epsilon(1e-9));  // bias x
  CHECK(p.affine[2] == doctest::Approx(1.0));                // x coef of x
  CHECK(p.affine[4] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.affine[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.affine[3] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.affine[5] == doctest::Approx(1.0));
}

TEST_CASE("solve_tps: pure translation is absorbed by the affine part") {
  Rng rng(32);
  const LandmarkSet src = random_landmarks(rng);
  LandmarkSet dst = src;
  for (int i = 0; i < LandmarkSet::kCount; ++i) dst[i] = dst[i] + Vec2{0.07, -0.04};
  const TpsParams p = solve_tps(src, dst, 0.0);
  for (std::int64_t i = 0; i < p.weights.numel(); ++i) CHECK(std::abs(p.weights[i]) < 1e-9);
  CHECK(p.affine[0] == doctest::Approx(0.07));
  CHECK(p.affine[1] == doctest::Approx(-0.04));
  const Vec2 probe = tps_evaluate(p, {0.3, 0.6});
  CHECK(probe.x == doctest::Approx(0.37));
  CHECK(probe.y == doctest::Approx(0.56));
}

TEST_CASE("solve_tps: interpolation and agreement with independent dense solve") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const LandmarkSet src = random_landmarks(rng);
    const LandmarkSet dst = random_landmarks(rng);
    const TpsParams p = solve_tps(src, dst, 0.0);
    for (int i = 0; i < LandmarkSet::kCount; ++i) {
      const Vec2 f = tps_evaluate(p, src[i]);
      CHECK(std::abs(f.x - dst[i].x) < 1e-8);
      CHECK(std::abs(f.y - dst[i].y) < 1e-8);
    }
    const RefTps ref = RefTps::solve(src, dst, 0.0);
    for (int k = 0; k < 100; ++k) {
      const Vec2 q{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
      const Vec2 a = tps_evaluate(p, q);
      const Vec2 b = ref.eval(q);
      CHECK(std::abs(a.x - b.x) < 1e-8);
      CHECK(std::abs(a.y - b.y) < 1e-8);
    }
  }
}

TEST_CASE("solve_tps: orthogonality side conditions at reg = 0") {
  Rng rng(34);
  const LandmarkSet src = random_landmarks(rng);
  const LandmarkSet dst = random_landmarks(rng);
  const TpsParams p = solve_tps(src, dst, 0.0);
  double sw_x = 0, sw_y = 0, swx_x = 0, swx_y = 0, swy_x = 0, swy_y = 0;
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    sw_x += p.weights[2 * i];
    sw_y += p.weights[2 * i + 1];
    swx_x += p.weights[2 * i] * src[i].x;
    swx_y += p.weights[2 * i + 1] * src[i].x;
    swy_x += p.weights[2 * i] * src[i].y;
    swy_y += p.weights[2 * i + 1] * src[i].y;
  }
  for (double v : {sw_x, sw_y, swx_x, swx_y, swy_x, swy_y}) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("solve_tps: collinear control points raise a TpsError advising reg > 0") {
  LandmarkSet src;
  for (int i = 0; i < LandmarkSet::kCount; ++i) src[i] = {0.1 + 0.05 * i, 0.5};
  LandmarkSet dst;
  Rng rng(35);
  for (int i = 0; i < LandmarkSet::kCount; ++i) dst[i] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  CHECK_THROWS_AS(solve_tps(src, dst, 0.0), TpsError);
  CHECK_NOTHROW(solve_tps(src, dst, 1e-4));
}

TEST_CASE("apply_displacement: zero, zero-base, random against a naive loop") {
  Rng rng(36);
  const LandmarkSet l = random_landmarks(rng);
  DisplacementField zero;
  const LandmarkSet same = apply_displacement(l, zero);
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    CHECK(same[i].x == l[i].x);
    CHECK(same[i].y == l[i].y);
  }

  LandmarkSet zeros_l;
  DisplacementField d;
  for (int i = 0; i < LandmarkSet::kCount; ++i) d[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const LandmarkSet only_d = apply_displacement(zeros_l, d);
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    CHECK(only_d[i].x == d[i].x);
    CHECK(only_d[i].y == d[i].y);
  }

  const LandmarkSet both = apply_displacement(l, d);
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    CHECK(both[i].x == doctest::Approx(l[i].x + d[i].x));
    CHECK(both[i].y == doctest::Approx(l[i].y + d[i].y));
  }
}

TEST_CASE("warp_image: identity warp reproduces the input") {
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    const LandmarkSet l = random_landmarks(rng);
    Tensor img({3, 24, 24});
    for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform(-1, 1);
    const Tensor out = warp_image(img, l, l, 0.0);
    CHECK(carigen::testutil::max_abs_diff(out, img) < 1e-6);
  }
}

TEST_CASE("warp_image: one-pixel translation shifts a gradient image exactly (interior)") {
  const int size = 32;
  Tensor img({3, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at({c, y, x}) = (x + 0.5) / size * 2.0 - 1.0;
  Rng rng(38);
  const LandmarkSet src = random_landmarks(rng, 0.3, 0.7);
  LandmarkSet dst = src;
  const double step = 1.0 / size;
  for (int i = 0; i < LandmarkSet::kCount; ++i) dst[i].x += step;
  const Tensor out = warp_image(img, src, dst, 0.0);
  double max_err = 0;
  for (int y = 1; y + 1 < size; ++y)
    for (int x = 1; x + 1 < size; ++x)
      for (int c = 0; c < 3; ++c)
        max_err = std::max(max_err, std::abs(out.at({c, y, x}) - img.at({c, y, x - 1})));
  CHECK(max_err < 1e-5);
}

TEST_CASE("warp_image: constant images are fixed points of any warp") {
  Rng rng(39);
  Tensor img = Tensor::full({3, 20, 20}, 0.37);
  const LandmarkSet src = random_landmarks(rng);
  const LandmarkSet dst = random_landmarks(rng);
  const Tensor out = warp_image(img, src, dst, 1e-4);
  CHECK(carigen::testutil::max_abs_diff(out, img) < 1e-12);
}

TEST_CASE("warp_image: gradients wrt target landmarks match finite differences") {
  Rng rng(40);
  const int size = 16;
  const Tensor img = smooth_image(size);
  const LandmarkSet src = random_landmarks(rng, 0.2, 0.8);
  LandmarkSet dst = src;
  for (int i = 0; i < LandmarkSet::kCount; ++i)
    dst[i] = dst[i] + Vec2{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};

  const Tensor dst_t = dst.to_tensor();
  Var vdst = Var::leaf(dst_t, true);
  Var loss = ops::mean_all(ops::square(
      warp_image(Var::constant(img), Var::constant(src.to_tensor()), vdst, 1e-4)));
  ops::backward(loss);
  const Tensor analytic = vdst.grad();

  const Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        return ops::mean_all(
                   ops::square(warp_image(Var::constant(img), Var::constant(src.to_tensor()),
                                          Var::constant(probe), 1e-4)))
            .item();
      },
      dst_t, 1e-6);
  CHECK(grad_rel_error(analytic, fd) < 1e-3);
}

TEST_CASE("warp_image: gradients wrt the image are exact") {
  Rng rng(41);
  const int size = 12;
  Tensor img = smooth_image(size);
  const LandmarkSet src = random_landmarks(rng, 0.25, 0.75);
  LandmarkSet dst = src;
  for (int i = 0; i < LandmarkSet::kCount; ++i)
    dst[i] = dst[i] + Vec2{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04)};
  CHECK(carigen::testutil::check_gradient(
            [&](const Var& v) {
              return ops::mean_all(ops::square(warp_image(
                  v, Var::constant(src.to_tensor()), Var::constant(dst.to_tensor()), 1e-4)));
            },
            img) < 1e-5);
}

TEST_CASE("warp_image: round trip l -> l' -> l stays close on smooth images") {
  // inexact on purpose: the inverse of a TPS is not a TPS. Smooth image,
  // smooth moderate displacement field, documented 0.02 tolerance.
  Rng rng(42);
  const int size = 32;
  const Tensor img = smooth_image(size, 1.0, 1.0);
  const LandmarkSet l = random_landmarks(rng, 0.2, 0.8);
  LandmarkSet lp = l;
  for (int i = 0; i < LandmarkSet::kCount; ++i)
    lp[i] = lp[i] + Vec2{0.025 * std::sin(2 * M_PI * l[i].x), 0.025 * std::cos(2 * M_PI * l[i].y)};
  const Tensor fwd = warp_image(img, l, lp, 1e-4);
  const Tensor back = warp_image(fwd, lp, l, 1e-4);
  CHECK(mean_abs_diff(back, img) < 0.02);
}

TEST_CASE("flow dump: header and payload size") {
  Rng rng(43);
  const LandmarkSet src = random_landmarks(rng);
  LandmarkSet dst = src;
  for (int i = 0; i < LandmarkSet::kCount; ++i) dst[i] = dst[i] + Vec2{0.01, 0.0};
  std::ostringstream os(std::ios::binary);
  write_flow_field(os, 8, 10, src, dst, 1e-4);
  const std::string blob = os.str();
  const std::string header = "MWFLOW1\n8 10\n";
  REQUIRE(blob.size() == header.size() + 8 * 10 * 2 * sizeof(float));
  CHECK(blob.compare(0, header.size(), header) == 0);
}
