#pragma once

#include <string>

#include "carigen/geometry.hpp"
#include "carigen/tensor.hpp"

namespace carigen {

/// Images are Tensors of shape {3, H, W} with values in [-1, 1].
int image_height(const Tensor& image);
int image_width(const Tensor& image);
void check_image(const Tensor& image);

/// Bilinear sample at normalized (x, y); pixel centers at (i+0.5)/size,
/// out-of-range coordinates replicate the edge.
double bilinear_sample(const Tensor& image, int channel, double x, double y);

/// Resample the image under the inverse of the given rotation so content
/// moves the way transform_landmarks moves points.
Tensor rotate_image(const Tensor& image, const RigidRotation& r);

/// Crop the normalized box and resize to size x size (bilinear).
Tensor crop_and_resize(const Tensor& image, const Box& box, int size);

Tensor resize_image(const Tensor& image, int out_h, int out_w);

}  // namespace carigen
