#pragma once

#include <iosfwd>
#include <string>

#include "carigen/autodiff.hpp"
#include "carigen/geometry.hpp"

namespace carigen {

struct TpsError : std::runtime_error {
  explicit TpsError(const std::string& what) : std::runtime_error(what) {}
};

/// Thin-plate-spline interpolant f with f(control_i) = target_i (exactly at
/// regularization 0, penalized otherwise):
///   f(q) = [1, qx, qy] * affine + sum_i weights_i * phi(|q - control_i|),
/// phi(r) = r^2 log r. Weights satisfy the orthogonality side conditions
/// sum w = 0 and sum w x = sum w y = 0.
struct TpsParams {
  Tensor affine;              // {3,2}; rows are (bias, x, y) coefficients
  Tensor weights;             // {17,2}
  LandmarkSet control_points; // source points of the mapping
  double regularization = 0.0;
};

/// Solve for the interpolant with f(src_i) = dst_i. Throws TpsError on a
/// singular system (collinear or duplicated control points need reg > 0).
TpsParams solve_tps(const LandmarkSet& src, const LandmarkSet& dst, double reg);

Vec2 tps_evaluate(const TpsParams& params, Vec2 q);

/// Graph-building TPS solve: control/target are {17,2} Vars.
/// Returns (weights {17,2}, affine {3,2}).
std::pair<ad::Var, ad::Var> tps_solve_graph(const ad::Var& control, const ad::Var& target,
                                            double reg);

/// Evaluate the graph-form interpolant at points {N,2} -> {N,2}.
ad::Var tps_evaluate_graph(const ad::Var& weights, const ad::Var& affine, const ad::Var& control,
                           const ad::Var& points);

/// Backward-warp the image so that content at src landmarks moves to dst
/// landmarks: output(q) = image(f(q)) with f the TPS mapping dst -> src.
/// Bilinear sampling with edge replication; differentiable in the image and
/// in both landmark sets.
ad::Var warp_image(const ad::Var& image, const ad::Var& src, const ad::Var& dst, double reg);

/// Convenience overload on plain values.
Tensor warp_image(const Tensor& image, const LandmarkSet& src, const LandmarkSet& dst, double reg);

/// Dense backward flow of the warp as displacement (source - output position)
/// in normalized coordinates. Binary format: header "MWFLOW1\n<H> <W>\n",
/// then H*W*2 row-major 32-bit little-endian floats (dx, dy per pixel).
void write_flow_field(std::ostream& os, int h, int w, const LandmarkSet& src,
                      const LandmarkSet& dst, double reg);

}  // namespace carigen
