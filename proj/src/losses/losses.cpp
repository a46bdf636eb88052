#include "losses/losses.hpp"

#include <cmath>

namespace s3d {

void LossWeights::validate() const {
  if (scales.empty()) throw InvalidArgument("loss weights: need at least one scale");
  if (scales.size() != lambda_scales.size()) {
    throw InvalidArgument("loss weights: " + std::to_string(scales.size()) + " scales but " +
                          std::to_string(lambda_scales.size()) + " scale weights");
  }
  for (std::size_t i = 1; i < scales.size(); ++i) {
    if (scales[i] <= scales[i - 1]) throw InvalidArgument("loss weights: scales must be strictly ascending");
  }
  for (double w : lambda_scales) {
    if (!(w >= 0.0)) throw InvalidArgument("loss weights: scale weights must be non-negative");
  }
  if (!(lambda_sd >= 0.0) || !(lambda_flatten >= 0.0) || !(lambda_laplacian >= 0.0)) {
    throw InvalidArgument("loss weights: lambda_sd, lambda_flatten and lambda_laplacian must be non-negative");
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"scales", w.scales},
       {"lambda_scales", w.lambda_scales},
       {"lambda_sd", w.lambda_sd},
       {"lambda_flatten", w.lambda_flatten},
       {"lambda_laplacian", w.lambda_laplacian}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w = LossWeights{};
  if (j.contains("scales")) j.at("scales").get_to(w.scales);
  if (j.contains("lambda_scales")) {
    j.at("lambda_scales").get_to(w.lambda_scales);
  } else if (j.contains("scales")) {
    w.lambda_scales.assign(w.scales.size(), 1.0 / static_cast<double>(w.scales.size()));
  }
  if (j.contains("lambda_sd")) j.at("lambda_sd").get_to(w.lambda_sd);
  if (j.contains("lambda_flatten")) j.at("lambda_flatten").get_to(w.lambda_flatten);
  if (j.contains("lambda_laplacian")) j.at("lambda_laplacian").get_to(w.lambda_laplacian);
}

template <typename T>
Tensor<T> iou_loss(const Tensor<T>& s1, const Tensor<T>& s2) {
  if (s1.shape() != s2.shape()) {
    throw InvalidArgument("iou_loss: shape mismatch " + shape_str(s1.shape()) + " vs " + shape_str(s2.shape()));
  }
  if (s1.numel() == 0) throw InvalidArgument("iou_loss: empty silhouettes");
  constexpr double kSlack = 1e-6;
  for (const auto* s : {&s1, &s2}) {
    for (T v : s->values()) {
      if (!(v >= -kSlack && v <= 1 + kSlack)) throw InvalidArgument("iou_loss: values must lie in [0,1]");
    }
  }
  const Tensor<T> inter = sum(mul(s1, s2));
  const Tensor<T> uni = sub(sum(add(s1, s2)), inter);
  if (uni.item() <= T(0)) return Tensor<T>::scalar(T(0));
  return add_scalar(neg(div(inter, uni)), T(1));
}

template <typename T>
Tensor<T> iou_loss(const Silhouette<T>& s1, const Silhouette<T>& s2) {
  if (s1.resolution != s2.resolution) {
    throw InvalidArgument("iou_loss: resolution mismatch " + std::to_string(s1.resolution) + " vs " +
                          std::to_string(s2.resolution));
  }
  return iou_loss(s1.values, s2.values);
}

template <typename T>
Tensor<T> multiscale_silhouette_loss(const std::vector<Silhouette<T>>& rendered,
                                     const std::vector<Tensor<T>>& targets, const std::vector<double>& weights) {
  if (rendered.size() != targets.size() || rendered.size() != weights.size()) {
    throw InvalidArgument("multiscale_silhouette_loss: " + std::to_string(rendered.size()) + " renders, " +
                          std::to_string(targets.size()) + " targets, " + std::to_string(weights.size()) +
                          " weights");
  }
  if (rendered.empty()) throw InvalidArgument("multiscale_silhouette_loss: no scales");
  Tensor<T> total;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Tensor<T> term = scale(iou_loss(rendered[i].values, targets[i]), static_cast<T>(weights[i]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
RegularizerTerms<T> regularizer_loss(const Tensor<T>& vertices, const MeshTopology& topology,
                                     const LossWeights& weights) {
  RegularizerTerms<T> r;
  r.flatten = flatten_loss(vertices, topology);
  r.laplacian = laplacian_loss(vertices, topology);
  r.total = add(scale(r.flatten, static_cast<T>(weights.lambda_flatten)),
                scale(r.laplacian, static_cast<T>(weights.lambda_laplacian)));
  return r;
}

template <typename T>
Tensor<T> f_nonsat(const Tensor<T>& u) {
  return neg(softplus(neg(u)));
}

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_fake, const Tensor<T>& d_real) {
  if (d_fake.numel() == 0 || d_real.numel() == 0) throw InvalidArgument("gan_losses: empty score batch");
  GanLosses<T> g;
  g.generator = neg(mean(f_nonsat(d_fake)));
  g.discriminator = sub(neg(mean(f_nonsat(d_real))), mean(f_nonsat(neg(d_fake))));
  return g;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_sp, const Tensor<T>& l_r, const Tensor<T>& l_sd_generator,
                     const LossWeights& weights) {
  return add(add(l_sp, l_r), scale(l_sd_generator, static_cast<T>(weights.lambda_sd)));
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = {{"step", r.step},
       {"wall_seconds", r.wall_seconds},
       {"total", r.total},
       {"l_sp", r.l_sp},
       {"l_sp_scales", r.l_sp_scales},
       {"l_r", r.l_r},
       {"l_flatten", r.l_flatten},
       {"l_laplacian", r.l_laplacian},
       {"l_sd_generator", r.l_sd_generator},
       {"l_sd_discriminator", r.l_sd_discriminator},
       {"learning_rate", r.learning_rate}};
}

void from_json(const nlohmann::json& j, LossReport& r) {
  j.at("step").get_to(r.step);
  j.at("wall_seconds").get_to(r.wall_seconds);
  j.at("total").get_to(r.total);
  j.at("l_sp").get_to(r.l_sp);
  j.at("l_sp_scales").get_to(r.l_sp_scales);
  j.at("l_r").get_to(r.l_r);
  j.at("l_flatten").get_to(r.l_flatten);
  j.at("l_laplacian").get_to(r.l_laplacian);
  j.at("l_sd_generator").get_to(r.l_sd_generator);
  j.at("l_sd_discriminator").get_to(r.l_sd_discriminator);
  j.at("learning_rate").get_to(r.learning_rate);
}

std::string LossReport::to_ndjson() const { return nlohmann::json(*this).dump(); }

#define S3D_INSTANTIATE_LOSSES(T)                                                                              \
  template Tensor<T> iou_loss(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> iou_loss(const Silhouette<T>&, const Silhouette<T>&);                                     \
  template Tensor<T> multiscale_silhouette_loss(const std::vector<Silhouette<T>>&, const std::vector<Tensor<T>>&, \
                                                const std::vector<double>&);                                   \
  template RegularizerTerms<T> regularizer_loss(const Tensor<T>&, const MeshTopology&, const LossWeights&);    \
  template Tensor<T> f_nonsat(const Tensor<T>&);                                                               \
  template GanLosses<T> gan_losses(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&);

S3D_INSTANTIATE_LOSSES(float)
S3D_INSTANTIATE_LOSSES(double)

}  // namespace s3d
