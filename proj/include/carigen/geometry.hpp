#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "carigen/tensor.hpp"

namespace carigen {

struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

/// Index assignment of the fixed 17-point landmark scheme used by the
/// dataset's annotation files. All code addresses landmarks through these
/// names; the numeric order must match the annotation files.
namespace landmark_index {
inline constexpr int kTopOfHead = 0;
inline constexpr int kChin = 1;
inline constexpr int kLeftEar = 2;
inline constexpr int kRightEar = 3;
inline constexpr int kLeftEye = 4;
inline constexpr int kRightEye = 5;
inline constexpr int kLeftBrow = 6;
inline constexpr int kRightBrow = 7;
inline constexpr int kNoseBridge = 8;
inline constexpr int kNoseTip = 9;
inline constexpr int kMouthLeft = 10;
inline constexpr int kMouthRight = 11;
inline constexpr int kMouthTop = 12;
inline constexpr int kMouthBottom = 13;
inline constexpr int kLeftCheek = 14;
inline constexpr int kRightCheek = 15;
inline constexpr int kForehead = 16;
}  // namespace landmark_index

/// 17 ordered 2-D points in normalized [0,1]^2 image coordinates
/// (origin top-left, x to the right, y down).
struct LandmarkSet {
  static constexpr int kCount = 17;
  std::array<Vec2, kCount> pts{};

  Vec2& operator[](int i) { return pts[static_cast<size_t>(i)]; }
  const Vec2& operator[](int i) const { return pts[static_cast<size_t>(i)]; }

  bool all_finite() const;
  Tensor to_tensor() const;                    // {17, 2}
  static LandmarkSet from_tensor(const Tensor& t);
};

/// Per-landmark 2-D offsets in normalized coordinates.
struct DisplacementField {
  std::array<Vec2, LandmarkSet::kCount> deltas{};

  Vec2& operator[](int i) { return deltas[static_cast<size_t>(i)]; }
  const Vec2& operator[](int i) const { return deltas[static_cast<size_t>(i)]; }

  bool all_finite() const;
  Tensor to_tensor() const;
  static DisplacementField from_tensor(const Tensor& t);
};

LandmarkSet apply_displacement(const LandmarkSet& l, const DisplacementField& d);

/// Axis-aligned box in normalized coordinates.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

/// Rigid rotation in the pixel plane about a fixed center. Angle and center
/// are stored in pixel coordinates of the image the transform was built for.
struct RigidRotation {
  double cx = 0, cy = 0;       // center, pixels
  double cos_t = 1, sin_t = 0; // forward rotation
  int image_w = 0, image_h = 0;

  Vec2 apply_norm(Vec2 p) const;    // normalized in -> normalized out
  Vec2 inverse_norm(Vec2 p) const;  // normalized out -> normalized in
};

/// Rotation about the eye midpoint that levels the two eye-center landmarks.
/// Throws GeometryError when the eye landmarks coincide.
RigidRotation eye_leveling_rotation(const LandmarkSet& l, int image_w, int image_h);

LandmarkSet transform_landmarks(const LandmarkSet& l, const RigidRotation& r);

/// Tight axis-aligned box through the ear centers, top of head and chin,
/// enlarged by `enlarge` about its center and clamped to [0,1]^2.
/// Throws GeometryError when the initial box has zero area.
Box compute_crop_box(const LandmarkSet& l, double enlarge = 1.5);

/// Landmark coordinates remapped from full-image space into box space.
LandmarkSet remap_landmarks_into_box(const LandmarkSet& l, const Box& box);

}  // namespace carigen
