#pragma once

#include <memory>
#include <optional>

#include "mesh/mesh.hpp"
#include "nn/config.hpp"
#include "nn/sem.hpp"

namespace s3d {

/// Sketch encoder, shape-code decoder with optional SEM, and the template
/// it deforms. Sketch tensors are [B,1,S,S] with 0 on strokes and 1 on
/// background.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);

  const GeneratorConfig& config() const { return config_; }
  const Mesh& template_mesh() const { return template_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }
  const Sem<T>* sem() const { return sem_ ? &*sem_ : nullptr; }

  /// [B,1,S,S] -> [B,latent_dim].
  Tensor<T> encode(const Tensor<T>& sketch) const;
  /// [B,latent_dim] -> offsets [B,V,3], each bounded by max_offset.
  Tensor<T> decode(const Tensor<T>& z) const;
  /// template + decode(encode(sketch)): vertices [B,V,3].
  Tensor<T> forward(const Tensor<T>& sketch) const;

 private:
  struct Stage {
    Conv2dLayer<T> conv1, conv2, skip;
  };

  GeneratorConfig config_;
  Mesh template_;
  Tensor<T> template_vertices_;
  ParamList<T> params_;
  Conv2dLayer<T> stem_;
  std::vector<Stage> stages_;
  LinearLayer<T> to_latent_;
  LinearLayer<T> seed_;
  std::vector<Conv2dLayer<T>> blocks_;
  std::optional<Sem<T>> sem_;
  LinearLayer<T> head_;
};

/// Scores a stack of silhouettes [B,views,R,R]; returns unbounded logits [B].
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return config_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }

  Tensor<T> operator()(const Tensor<T>& silhouettes) const;

  /// Forward passes across all discriminators in the process.
  static std::uint64_t call_count();

 private:
  DiscriminatorConfig config_;
  ParamList<T> params_;
  std::vector<Conv2dLayer<T>> convs_;
  LinearLayer<T> head_;
};

/// Copies parameter values by name; shapes must match. Missing names throw.
template <typename T, typename U>
void copy_params(const ParamList<U>& from, ParamList<T>& to);

}  // namespace s3d
