#include "carigen/toyface.hpp"

#include <algorithm>
#include <cmath>

namespace carigen {

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double seg_dist(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q = a + t * ab;
  return std::hypot(p.x - q.x, p.y - q.y);
}

/// Distance to a quadratic Bezier, by dense parameter sampling. Plenty for
/// 32..256 px rasters.
double bezier_dist(Vec2 p, Vec2 a, Vec2 c, Vec2 b) {
  double best = 1e9;
  Vec2 prev = a;
  for (int i = 1; i <= 16; ++i) {
    const double t = i / 16.0;
    const double u = 1.0 - t;
    const Vec2 q{u * u * a.x + 2 * u * t * c.x + t * t * b.x,
                 u * u * a.y + 2 * u * t * c.y + t * t * b.y};
    best = std::min(best, seg_dist(p, prev, q));
    prev = q;
  }
  return best;
}

struct Rgb {
  double r, g, b;
};

Rgb mix(Rgb base, Rgb top, double alpha) {
  return {base.r + (top.r - base.r) * alpha, base.g + (top.g - base.g) * alpha,
          base.b + (top.b - base.b) * alpha};
}

struct MeanGeometry : ToyFaceGeometry {};

const ToyFaceGeometry kMean{};

double stretch(double v, double mean, double gamma, double lo, double hi) {
  return std::clamp(mean + gamma * (v - mean), lo, hi);
}

}  // namespace

LandmarkSet ToyFaceGeometry::landmarks() const {
  using namespace landmark_index;
  LandmarkSet l;
  l[kTopOfHead] = {cx, cy - head_ry};
  l[kChin] = {cx, cy + head_ry};
  l[kLeftEar] = {cx - head_rx, cy};
  l[kRightEar] = {cx + head_rx, cy};
  l[kLeftEye] = {cx - eye_dx, eye_y};
  l[kRightEye] = {cx + eye_dx, eye_y};
  l[kLeftBrow] = {cx - eye_dx, eye_y - brow_dy};
  l[kRightBrow] = {cx + eye_dx, eye_y - brow_dy};
  l[kNoseBridge] = {cx, eye_y + 0.015};
  l[kNoseTip] = {cx, eye_y + nose_len};
  l[kMouthLeft] = {cx - mouth_w, mouth_y};
  l[kMouthRight] = {cx + mouth_w, mouth_y};
  l[kMouthTop] = {cx, mouth_y - mouth_h};
  l[kMouthBottom] = {cx, mouth_y + mouth_curve + mouth_h};
  l[kLeftCheek] = {cx - 0.78 * head_rx, cy + 0.38 * head_ry};
  l[kRightCheek] = {cx + 0.78 * head_rx, cy + 0.38 * head_ry};
  l[kForehead] = {cx, cy - 0.55 * head_ry};
  return l;
}

ToyFaceGeometry sample_identity_geometry(Rng& rng) {
  ToyFaceGeometry g;
  g.head_rx = rng.uniform(0.21, 0.30);
  g.head_ry = rng.uniform(0.27, 0.37);
  g.eye_dx = rng.uniform(0.075, 0.135);
  g.eye_y = g.cy - g.head_ry * rng.uniform(0.18, 0.30);
  g.eye_r = rng.uniform(0.020, 0.034);
  g.brow_dy = rng.uniform(0.032, 0.052);
  g.nose_len = rng.uniform(0.055, 0.105);
  g.mouth_w = rng.uniform(0.055, 0.120);
  g.mouth_y = g.cy + g.head_ry * rng.uniform(0.40, 0.52);
  g.mouth_curve = rng.uniform(-0.018, 0.028);
  return g;
}

ToyFaceGeometry exaggerate_geometry(const ToyFaceGeometry& g, double gamma) {
  ToyFaceGeometry e = g;
  e.head_rx = stretch(g.head_rx, kMean.head_rx, gamma, 0.14, 0.40);
  e.head_ry = stretch(g.head_ry, kMean.head_ry, gamma, 0.18, 0.43);
  e.eye_dx = stretch(g.eye_dx, kMean.eye_dx, gamma, 0.05, 0.9 * e.head_rx);
  e.eye_r = stretch(g.eye_r, kMean.eye_r, gamma, 0.012, 0.05);
  e.nose_len = stretch(g.nose_len, kMean.nose_len, gamma, 0.03, 0.16);
  e.mouth_w = stretch(g.mouth_w, kMean.mouth_w, gamma, 0.035, 0.85 * e.head_rx);
  e.mouth_curve = stretch(g.mouth_curve, kMean.mouth_curve, gamma, -0.05, 0.06);
  // keep the rows anchored to the resized head
  e.eye_y = e.cy - e.head_ry * (g.cy - g.eye_y) / g.head_ry;
  e.mouth_y = e.cy + e.head_ry * (g.mouth_y - g.cy) / g.head_ry;
  return e;
}

Tensor render_toy_face(const ToyFaceGeometry& g, Domain domain, const ToyStyleJitter& style,
                       int size) {
  if (size < 32) throw DataError("toy face size must be >= 32");
  const bool cari = domain == Domain::caricature;
  const LandmarkSet lm = g.landmarks();
  using namespace landmark_index;

  const Rgb skin = cari ? Rgb{0.78, 0.30, 0.18} : Rgb{0.62, 0.28, 0.02};
  const Rgb feature = cari ? Rgb{-0.97, -0.97, -0.95} : Rgb{-0.55, -0.62, -0.66};
  const Rgb outline{-0.92, -0.90, -0.88};

  const double soft = cari ? 0.9 / size : 2.2 / size;  // feature edge width
  const double head_soft = cari ? 0.08 : 0.22;         // in ellipse-implicit units
  const double stroke = cari ? 0.016 : 0.010;

  Tensor img({3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p{(x + 0.5) / size, (y + 0.5) / size};
      Rgb col;
      if (cari) {
        col = {0.72 + style.bg_r, 0.58 + style.bg_g, -0.25 + style.bg_b};
      } else {
        const double t = p.y;
        col = {-0.12 - 0.18 * t + style.brightness, -0.02 - 0.13 * t + style.brightness,
               0.16 - 0.10 * t + style.brightness};
      }

      const double ex = (p.x - g.cx) / g.head_rx, ey = (p.y - g.cy) / g.head_ry;
      const double e = ex * ex + ey * ey;
      const double head_alpha = smoothstep(1.0 + head_soft, 1.0 - head_soft, e);
      Rgb head_col = skin;
      if (!cari) {
        // soft top-left shading keeps the photo domain non-flat
        head_col.r -= 0.20 * (0.5 * ex + 0.5 * ey + 1.0) * 0.3;
        head_col.g -= 0.16 * (0.5 * ex + 0.5 * ey + 1.0) * 0.3;
        head_col.b -= 0.10 * (0.5 * ex + 0.5 * ey + 1.0) * 0.3;
      }
      col = mix(col, head_col, head_alpha);
      if (cari) {
        const double ring = smoothstep(0.14, 0.05, std::abs(e - 1.0));
        col = mix(col, outline, ring);
      }

      double fa = 0.0;  // feature coverage
      for (int side : {-1, 1}) {
        const Vec2 eye{g.cx + side * g.eye_dx, g.eye_y};
        const double d = std::hypot(p.x - eye.x, p.y - eye.y);
        fa = std::max(fa, smoothstep(g.eye_r + soft, g.eye_r - soft, d));
        const Vec2 b1{g.cx + side * (g.eye_dx - 0.03), g.eye_y - g.brow_dy};
        const Vec2 b2{g.cx + side * (g.eye_dx + 0.03), g.eye_y - g.brow_dy - 0.008};
        fa = std::max(fa, smoothstep(stroke * 0.7 + soft, stroke * 0.7 - soft, seg_dist(p, b1, b2)));
      }
      fa = std::max(fa, smoothstep(stroke * 0.6 + soft, stroke * 0.6 - soft,
                                   seg_dist(p, lm[kNoseBridge], lm[kNoseTip])));
      const Vec2 mouth_ctrl{g.cx, g.mouth_y + 2.0 * g.mouth_curve};
      fa = std::max(fa, smoothstep(g.mouth_h + soft, g.mouth_h - soft,
                                   bezier_dist(p, lm[kMouthLeft], mouth_ctrl, lm[kMouthRight])));
      col = mix(col, feature, fa * head_alpha);

      img.at({0, y, x}) = std::clamp(col.r, -1.0, 1.0);
      img.at({1, y, x}) = std::clamp(col.g, -1.0, 1.0);
      img.at({2, y, x}) = std::clamp(col.b, -1.0, 1.0);
    }
  }
  return img;
}

std::vector<SamplePair> synth_toy_dataset(int n_identities, int per_identity, int size,
                                          std::uint64_t seed) {
  if (size < 32) throw DataError("toy dataset size must be >= 32");
  Rng rng(seed);
  std::vector<SamplePair> out;
  out.reserve(static_cast<size_t>(n_identities) * per_identity);
  for (int id = 0; id < n_identities; ++id) {
    const ToyFaceGeometry base = sample_identity_geometry(rng);
    for (int j = 0; j < per_identity; ++j) {
      ToyFaceGeometry pg = base;
      pg.mouth_curve += rng.uniform(-0.006, 0.006);  // expression jitter
      ToyStyleJitter ps;
      ps.brightness = rng.uniform(-0.07, 0.07);

      const double gamma = rng.uniform(1.35, 2.1);
      ToyFaceGeometry cg = exaggerate_geometry(pg, gamma);
      ToyStyleJitter cs;
      cs.bg_r = rng.uniform(-0.18, 0.18);
      cs.bg_g = rng.uniform(-0.18, 0.18);
      cs.bg_b = rng.uniform(-0.18, 0.18);

      SamplePair pair;
      pair.photo = {render_toy_face(pg, Domain::photo, ps, size), pg.landmarks(), id,
                    Domain::photo};
      pair.caricature = {render_toy_face(cg, Domain::caricature, cs, size), cg.landmarks(), id,
                         Domain::caricature};
      out.push_back(std::move(pair));
    }
  }
  return out;
}

}  // namespace carigen
