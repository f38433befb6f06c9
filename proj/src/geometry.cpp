#include "carigen/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace carigen {

bool LandmarkSet::all_finite() const {
  for (const auto& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  return true;
}

Tensor LandmarkSet::to_tensor() const {
  Tensor t({kCount, 2});
  for (int i = 0; i < kCount; ++i) {
    t[2 * i] = pts[static_cast<size_t>(i)].x;
    t[2 * i + 1] = pts[static_cast<size_t>(i)].y;
  }
  return t;
}

LandmarkSet LandmarkSet::from_tensor(const Tensor& t) {
  if (t.shape() != std::vector<int>{kCount, 2})
    throw GeometryError("landmark tensor must be {17,2}, got " + t.shape_str());
  LandmarkSet l;
  for (int i = 0; i < kCount; ++i) l[i] = {t[2 * i], t[2 * i + 1]};
  return l;
}

bool DisplacementField::all_finite() const {
  for (const auto& p : deltas)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  return true;
}

Tensor DisplacementField::to_tensor() const {
  Tensor t({LandmarkSet::kCount, 2});
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    t[2 * i] = deltas[static_cast<size_t>(i)].x;
    t[2 * i + 1] = deltas[static_cast<size_t>(i)].y;
  }
  return t;
}

DisplacementField DisplacementField::from_tensor(const Tensor& t) {
  if (t.shape() != std::vector<int>{LandmarkSet::kCount, 2})
    throw GeometryError("displacement tensor must be {17,2}, got " + t.shape_str());
  DisplacementField d;
  for (int i = 0; i < LandmarkSet::kCount; ++i) d[i] = {t[2 * i], t[2 * i + 1]};
  return d;
}

LandmarkSet apply_displacement(const LandmarkSet& l, const DisplacementField& d) {
  LandmarkSet out;
  for (int i = 0; i < LandmarkSet::kCount; ++i) out[i] = l[i] + d[i];
  return out;
}

Vec2 RigidRotation::apply_norm(Vec2 p) const {
  const double px = p.x * image_w - cx, py = p.y * image_h - cy;
  const double rx = cos_t * px - sin_t * py + cx;
  const double ry = sin_t * px + cos_t * py + cy;
  return {rx / image_w, ry / image_h};
}

Vec2 RigidRotation::inverse_norm(Vec2 p) const {
  const double px = p.x * image_w - cx, py = p.y * image_h - cy;
  const double rx = cos_t * px + sin_t * py + cx;
  const double ry = -sin_t * px + cos_t * py + cy;
  return {rx / image_w, ry / image_h};
}

RigidRotation eye_leveling_rotation(const LandmarkSet& l, int image_w, int image_h) {
  using namespace landmark_index;
  const Vec2 le = l[kLeftEye], re = l[kRightEye];
  const double dx = (re.x - le.x) * image_w;
  const double dy = (re.y - le.y) * image_h;
  const double len = std::hypot(dx, dy);
  if (len < 1e-12)
    throw GeometryError("eye-center landmarks coincide; cannot level the eye line");
  RigidRotation r;
  r.image_w = image_w;
  r.image_h = image_h;
  r.cx = 0.5 * (le.x + re.x) * image_w;
  r.cy = 0.5 * (le.y + re.y) * image_h;
  // rotate by -theta where theta is the eye-line angle
  r.cos_t = dx / len;
  r.sin_t = -dy / len;
  return r;
}

LandmarkSet transform_landmarks(const LandmarkSet& l, const RigidRotation& r) {
  LandmarkSet out;
  for (int i = 0; i < LandmarkSet::kCount; ++i) out[i] = r.apply_norm(l[i]);
  return out;
}

Box compute_crop_box(const LandmarkSet& l, double enlarge) {
  using namespace landmark_index;
  const int anchors[] = {kTopOfHead, kChin, kLeftEar, kRightEar};
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (int a : anchors) {
    x0 = std::min(x0, l[a].x);
    y0 = std::min(y0, l[a].y);
    x1 = std::max(x1, l[a].x);
    y1 = std::max(y1, l[a].y);
  }
  if (x1 - x0 < 1e-12 || y1 - y0 < 1e-12)
    throw GeometryError("crop anchors are degenerate (zero-area initial box)");
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const double hw = 0.5 * enlarge * (x1 - x0), hh = 0.5 * enlarge * (y1 - y0);
  Box b{cx - hw, cy - hh, cx + hw, cy + hh};
  b.x0 = std::max(0.0, b.x0);
  b.y0 = std::max(0.0, b.y0);
  b.x1 = std::min(1.0, b.x1);
  b.y1 = std::min(1.0, b.y1);
  return b;
}

LandmarkSet remap_landmarks_into_box(const LandmarkSet& l, const Box& box) {
  if (box.area() <= 0) throw GeometryError("cannot remap into zero-area box");
  LandmarkSet out;
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    out[i].x = (l[i].x - box.x0) / box.width();
    out[i].y = (l[i].y - box.y0) / box.height();
  }
  return out;
}

}  // namespace carigen
