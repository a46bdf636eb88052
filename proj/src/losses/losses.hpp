#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mesh/regularizers.hpp"
#include "render/rasterizer.hpp"
#include "tensor/ops.hpp"

namespace s3d {

struct LossWeights {
  std::vector<int> scales{64, 128, 256};        // multiscale resolutions, ascending
  std::vector<double> lambda_scales{1.0 / 3, 1.0 / 3, 1.0 / 3};
  double lambda_sd = 0.1;
  double lambda_flatten = 5e-4;
  double lambda_laplacian = 5e-3;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// 1 - |S1 * S2|_1 / |S1 + S2 - S1 * S2|_1 over all elements; 0 when both
/// inputs are entirely zero. Inputs must share a shape and lie in [0,1].
template <typename T>
Tensor<T> iou_loss(const Tensor<T>& s1, const Tensor<T>& s2);

template <typename T>
Tensor<T> iou_loss(const Silhouette<T>& s1, const Silhouette<T>& s2);

/// sum_i weights[i] * iou_loss(rendered[i], targets[i]).
template <typename T>
Tensor<T> multiscale_silhouette_loss(const std::vector<Silhouette<T>>& rendered,
                                     const std::vector<Tensor<T>>& targets, const std::vector<double>& weights);

template <typename T>
struct RegularizerTerms {
  Tensor<T> flatten, laplacian, total;
};

template <typename T>
RegularizerTerms<T> regularizer_loss(const Tensor<T>& vertices, const MeshTopology& topology,
                                     const LossWeights& weights);

/// f(u) = -log(1 + exp(-u)), evaluated without overflow.
template <typename T>
Tensor<T> f_nonsat(const Tensor<T>& u);

template <typename T>
struct GanLosses {
  Tensor<T> generator;      // -mean f(d_fake)
  Tensor<T> discriminator;  // -mean f(d_real) - mean f(-d_fake)
};

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_fake, const Tensor<T>& d_real);

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_sp, const Tensor<T>& l_r, const Tensor<T>& l_sd_generator,
                     const LossWeights& weights);

/// One training step's loss components.
struct LossReport {
  std::size_t step = 0;
  double wall_seconds = 0.0;
  double total = 0.0;
  double l_sp = 0.0;
  std::vector<double> l_sp_scales;
  double l_r = 0.0;
  double l_flatten = 0.0;
  double l_laplacian = 0.0;
  double l_sd_generator = 0.0;
  double l_sd_discriminator = 0.0;
  double learning_rate = 0.0;

  /// Single-line JSON, no trailing newline.
  std::string to_ndjson() const;
};

void to_json(nlohmann::json& j, const LossReport& r);
void from_json(const nlohmann::json& j, LossReport& r);

}  // namespace s3d
