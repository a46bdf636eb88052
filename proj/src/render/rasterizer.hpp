#pragma once

#include <cstdint>
#include <vector>

#include "mesh/mesh.hpp"
#include "render/camera.hpp"
#include "tensor/tensor.hpp"

namespace s3d {

/// Soft occupancy image, values [H,W] in [0,1], row 0 at the top.
template <typename T>
struct Silhouette {
  Tensor<T> values;
  CameraPose pose;
  int resolution = 0;
};

/// Per-vertex (x_ndc, y_ndc, depth) for vertices [V,3]. x_ndc grows to the
/// right and y_ndc upward, both in [-1,1] across the frame. Differentiable.
template <typename T>
Tensor<T> project_ndc(const Tensor<T>& vertices, const CameraPose& pose, const RenderConfig& config);

/// Per-vertex (x_px, y_px, depth) with pixel (0,0) the top-left corner of
/// the image. Differentiable.
template <typename T>
Tensor<T> project_vertices(const Tensor<T>& vertices, const CameraPose& pose, const RenderConfig& config);

/// Vertices found in front of the near plane since process start; they are
/// clamped to it.
std::uint64_t near_plane_clamp_count();

/// S(p) = 1 - prod_j (1 - sigmoid(delta_j d_j^2 / sigma)) over projected faces,
/// from ndc coordinates [V,3] (third column ignored).
template <typename T>
Tensor<T> soft_rasterize_ndc(const Tensor<T>& ndc, const std::vector<Face>& faces, const RenderConfig& config);

template <typename T>
Silhouette<T> soft_rasterize(const Tensor<T>& vertices, const std::vector<Face>& faces, const CameraPose& pose,
                             const RenderConfig& config);

Silhouette<double> soft_rasterize(const Mesh& mesh, const CameraPose& pose, const RenderConfig& config);

/// 1 where the pixel centre lies inside any projected triangle, else 0.
Silhouette<double> rasterize_hard(const Mesh& mesh, const CameraPose& pose, int resolution,
                                  const RenderConfig& config = {});

/// One soft silhouette per resolution (ascending), same pose and sigma.
template <typename T>
std::vector<Silhouette<T>> render_multiscale(const Tensor<T>& vertices, const std::vector<Face>& faces,
                                             const CameraPose& pose, const RenderConfig& config,
                                             const std::vector<int>& resolutions);

/// Half-width of the band outside a triangle within which faces are
/// evaluated; beyond it a face contributes less than 1e-8.
double influence_radius(double sigma);

}  // namespace s3d
