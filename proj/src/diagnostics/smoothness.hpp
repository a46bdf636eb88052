#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "render/rasterizer.hpp"

namespace s3d {

// Certificates that a central-difference stencil does not straddle a point
// where the function's gradient jumps. They inspect forward values and
// geometry only, never gradients.

// The inside distance to a triangle boundary is the minimum over three
// edges, so the soft silhouette has gradient jumps on the triangles' angle
// bisectors. A central difference whose stencil straddles one disagrees with
// the exact gradient by up to half the jump.
//
// kink_bound(base, moved) sums, over every (pixel, face) pair whose closest
// edge differs between the two projected ndc configurations, the jump of
// d(S)/d(step) across the bisector, where the step is the straight path
// from base to moved normalised by `step_length`. The finite-difference
// error caused by kinks is at most half this value.
double kink_bound(const TensorD& base, const TensorD& moved, double step_length, const std::vector<Face>& faces,
                  const RenderConfig& cfg);

// Largest kink_bound over the stencils x +- eps e_k of world-space vertex
// coordinates.
double worst_stencil_kink(const TensorD& vertices, const std::vector<Face>& faces, const CameraPose& pose,
                          const RenderConfig& cfg, double eps);

// relu and leaky_relu are piecewise linear. A coordinate is certified when
// the sign pattern of every rectifier input agrees at x - eps, x and x + eps.
std::vector<bool> activation_pattern(const std::function<void()>& forward);

std::vector<std::size_t> rectifier_smooth_coordinates(std::span<double> values, const std::function<void()>& forward,
                                                      double eps, const std::vector<std::size_t>& candidates);

}  // namespace s3d
