#pragma once

#include "carigen/data.hpp"
#include "carigen/rng.hpp"

namespace carigen {

/// Analytic face template driving the toy renderer. All landmark positions
/// are exact functions of these parameters (chin/top/ears lie on the head
/// ellipse), so rendered images come with ground-truth geometry.
struct ToyFaceGeometry {
  double cx = 0.5, cy = 0.54;  // head center
  double head_rx = 0.26, head_ry = 0.33;
  double eye_dx = 0.105, eye_y = 0.46;
  double eye_r = 0.027;
  double brow_dy = 0.045;
  double nose_len = 0.08;
  double mouth_w = 0.09, mouth_y = 0.70, mouth_curve = 0.012;
  double mouth_h = 0.018;

  LandmarkSet landmarks() const;
};

ToyFaceGeometry sample_identity_geometry(Rng& rng);

/// Push shape parameters away from the population mean by factor gamma,
/// clamped to keep the face inside the frame.
ToyFaceGeometry exaggerate_geometry(const ToyFaceGeometry& g, double gamma);

struct ToyStyleJitter {
  double brightness = 0.0;               // photo domain
  double bg_r = 0.0, bg_g = 0.0, bg_b = 0.0;  // caricature palette shift
};

Tensor render_toy_face(const ToyFaceGeometry& g, Domain domain, const ToyStyleJitter& style,
                       int size);

}  // namespace carigen
