#include "carigen/image.hpp"

#include <algorithm>
#include <cmath>

namespace carigen {

int image_height(const Tensor& image) { return image.dim(1); }
int image_width(const Tensor& image) { return image.dim(2); }

void check_image(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw ShapeError("image must be {3,H,W}, got " + image.shape_str());
}

double bilinear_sample(const Tensor& image, int channel, double x, double y) {
  const int h = image.dim(1), w = image.dim(2);
  const double u = x * w - 0.5, v = y * h - 0.5;
  const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
  const double wx = u - x0, wy = v - y0;
  const auto cl = [](int a, int hi) { return a < 0 ? 0 : (a > hi ? hi : a); };
  const int xa = cl(x0, w - 1), xb = cl(x0 + 1, w - 1);
  const int ya = cl(y0, h - 1), yb = cl(y0 + 1, h - 1);
  const double* plane = image.data() + static_cast<std::int64_t>(channel) * h * w;
  const double v00 = plane[static_cast<std::int64_t>(ya) * w + xa];
  const double v01 = plane[static_cast<std::int64_t>(ya) * w + xb];
  const double v10 = plane[static_cast<std::int64_t>(yb) * w + xa];
  const double v11 = plane[static_cast<std::int64_t>(yb) * w + xb];
  return (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
}

Tensor rotate_image(const Tensor& image, const RigidRotation& r) {
  check_image(image);
  const int h = image.dim(1), w = image.dim(2);
  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 src = r.inverse_norm({(x + 0.5) / w, (y + 0.5) / h});
      for (int c = 0; c < 3; ++c)
        out.at({c, y, x}) = bilinear_sample(image, c, src.x, src.y);
    }
  }
  return out;
}

Tensor crop_and_resize(const Tensor& image, const Box& box, int size) {
  check_image(image);
  if (box.area() <= 0) throw GeometryError("crop_and_resize: box has no area");
  Tensor out({3, size, size});
  for (int y = 0; y < size; ++y) {
    const double sy = box.y0 + (y + 0.5) / size * box.height();
    for (int x = 0; x < size; ++x) {
      const double sx = box.x0 + (x + 0.5) / size * box.width();
      for (int c = 0; c < 3; ++c) out.at({c, y, x}) = bilinear_sample(image, c, sx, sy);
    }
  }
  return out;
}

Tensor resize_image(const Tensor& image, int out_h, int out_w) {
  check_image(image);
  Tensor out({3, out_h, out_w});
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at({c, y, x}) = bilinear_sample(image, c, (x + 0.5) / out_w, (y + 0.5) / out_h);
  return out;
}

}  // namespace carigen
