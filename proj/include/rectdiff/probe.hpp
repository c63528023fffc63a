#pragma once

#include <string>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

// Analytic, deterministic, everywhere-differentiable image embedding:
// 10 statistics computed from pixel values. Geometry features use the
// nonnegative weight w = (x+1)/2 with an eps-regularized mass
// normalization (guard 1e-8 added to the squared/linear denominators).
//
// layout: [mean intensity, centroid x, centroid y,
//          mu_xx, mu_yy, mu_xy, radial bin 0..3]
constexpr int kProbeDim = 10;
constexpr int kProbeIntensity = 0;
constexpr int kProbeCentroidX = 1;
constexpr int kProbeCentroidY = 2;
constexpr int kProbeMuXX = 3;
constexpr int kProbeMuYY = 4;
constexpr int kProbeMuXY = 5;
constexpr int kProbeRadial0 = 6;

// image: [H,W], [1,H,W] or [1,1,H,W] -> feature vector [10]
Tensor probe_embed(const Tensor& image);

// Named unit vector in probe space standing in for an encoded text
// direction.
struct AttributeDirection {
    std::string name;
    Tensor target;  // [10], unit norm
};

// known names: "brighter" (intensity axis), "larger" (second-moment trace)
AttributeDirection attribute_direction(const std::string& name);

// 1 - cos(embed(x_tar) - embed(x_src), dir.target); in [0,2], equals 1 at
// the degenerate zero-change point.
Tensor directional_loss(const Tensor& x_src, const Tensor& x_tar,
                        const AttributeDirection& dir);

// mean absolute pixel difference
Tensor l1_reg(const Tensor& x_tar, const Tensor& x_src);

// Plain-value evaluation helpers (no tape).
double probe_shift(const Tensor& original, const Tensor& edited,
                   const AttributeDirection& dir);
// norm of the probe change component orthogonal to the direction
double off_attribute_drift(const Tensor& original, const Tensor& edited,
                           const AttributeDirection& dir);

}  // namespace rectdiff
