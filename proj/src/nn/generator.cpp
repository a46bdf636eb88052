#include "nn/generator.hpp"

#include <atomic>

namespace s3d {

namespace {
std::atomic<std::uint64_t> g_discriminator_calls{0};

std::size_t as_size(int v) { return static_cast<std::size_t>(v); }
}  // namespace

template <typename T>
Generator<T>::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  template_ = scaled(make_icosphere(config_.template_subdivisions), config_.template_radius);
  template_vertices_ = vertices_tensor<T>(template_);
  Rng rng(seed);

  const auto& ec = config_.encoder_channels;
  stem_ = make_conv(params_, "encoder.stem", 1, as_size(ec[0]), 3, 1, 1, rng);
  std::size_t in = as_size(ec[0]);
  for (std::size_t s = 0; s < ec.size(); ++s) {
    const std::string p = "encoder.stage" + std::to_string(s);
    const std::size_t out = as_size(ec[s]);
    Stage st;
    st.conv1 = make_conv(params_, p + ".conv1", in, out, 3, 2, 1, rng);
    st.conv2 = make_conv(params_, p + ".conv2", out, out, 3, 1, 1, rng);
    st.skip = make_conv(params_, p + ".skip", in, out, 1, 2, 0, rng);
    stages_.push_back(st);
    in = out;
  }
  to_latent_ = make_linear(params_, "encoder.latent", in, as_size(config_.latent_dim), rng);

  const std::size_t g = as_size(config_.seed_grid());
  seed_ = make_linear(params_, "decoder.seed", as_size(config_.latent_dim),
                      as_size(config_.decoder_base_channels) * g * g, rng);
  in = as_size(config_.decoder_base_channels);
  for (std::size_t b = 0; b < config_.decoder_channels.size(); ++b) {
    const std::size_t out = as_size(config_.decoder_channels[b]);
    blocks_.push_back(make_conv(params_, "decoder.block" + std::to_string(b), in, out, 3, 1, 1, rng));
    in = out;
    if (config_.use_sem && static_cast<int>(b) == config_.sem_stage) sem_.emplace(params_, "decoder.sem", out, rng);
  }
  const std::size_t side = as_size(config_.decoder_output_size());
  head_ = make_linear(params_, "decoder.head", in * side * side, template_.vertex_count() * 3, rng,
                      config_.head_init_gain);
}

template <typename T>
Tensor<T> Generator<T>::encode(const Tensor<T>& sketch) const {
  const std::size_t s = as_size(config_.input_size);
  if (sketch.dim() != 4 || sketch.size(1) != 1 || sketch.size(2) != s || sketch.size(3) != s) {
    throw InvalidArgument("encode: expected sketch [B,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                          shape_str(sketch.shape()));
  }
  // Strokes become 1 so that empty space carries no activation.
  Tensor<T> x = relu(stem_(add_scalar(neg(sketch), T{1})));
  for (const Stage& st : stages_) {
    const Tensor<T> h = st.conv2(relu(st.conv1(x)));
    x = relu(add(h, st.skip(x)));
  }
  const std::size_t b = x.size(0), c = x.size(1);
  const Tensor<T> pooled = mean_axis(reshape(x, {b, c, x.size(2) * x.size(3)}), 2);
  return to_latent_(pooled);
}

template <typename T>
Tensor<T> Generator<T>::decode(const Tensor<T>& z) const {
  if (z.dim() != 2 || z.size(1) != as_size(config_.latent_dim)) {
    throw InvalidArgument("decode: expected shape code [B," + std::to_string(config_.latent_dim) + "], got " +
                          shape_str(z.shape()));
  }
  const std::size_t b = z.size(0), g = as_size(config_.seed_grid());
  Tensor<T> x = reshape(relu(seed_(z)), {b, as_size(config_.decoder_base_channels), g, g});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = relu(blocks_[i](upsample_nearest2x(x)));
    if (sem_ && static_cast<int>(i) == config_.sem_stage) x = (*sem_)(x);
  }
  const Tensor<T> flat = reshape(x, {b, x.numel() / b});
  const Tensor<T> offsets = scale(tanh(head_(flat)), static_cast<T>(config_.max_offset));
  return reshape(offsets, {b, template_.vertex_count(), 3});
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& sketch) const {
  return add(decode(encode(sketch)), template_vertices_);
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = as_size(config_.views);
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::size_t out = as_size(config_.channels[i]);
    convs_.push_back(make_conv(params_, "disc.conv" + std::to_string(i), in, out, 3, 2, 1, rng));
    in = out;
  }
  const std::size_t side = as_size(config_.input_resolution) >> config_.channels.size();
  head_ = make_linear(params_, "disc.head", in * side * side, 1, rng);
}

template <typename T>
Tensor<T> Discriminator<T>::operator()(const Tensor<T>& silhouettes) const {
  const std::size_t r = as_size(config_.input_resolution);
  if (silhouettes.dim() != 4 || silhouettes.size(1) != as_size(config_.views) || silhouettes.size(2) != r ||
      silhouettes.size(3) != r) {
    throw InvalidArgument("discriminate: expected [B," + std::to_string(config_.views) + "," + std::to_string(r) + "," +
                          std::to_string(r) + "], got " + shape_str(silhouettes.shape()));
  }
  g_discriminator_calls.fetch_add(1);
  Tensor<T> x = silhouettes;
  for (const auto& conv : convs_) x = leaky_relu(conv(x), static_cast<T>(config_.leaky_slope));
  const std::size_t b = x.size(0);
  return reshape(head_(reshape(x, {b, x.numel() / b})), {b});
}

template <typename T>
std::uint64_t Discriminator<T>::call_count() {
  return g_discriminator_calls.load();
}

template <typename T, typename U>
void copy_params(const ParamList<U>& from, ParamList<T>& to) {
  for (auto& p : to.items()) {
    const Tensor<U>* src = from.find(p.name);
    if (!src) throw InvalidArgument("copy_params: missing parameter '" + p.name + "'");
    if (src->shape() != p.tensor.shape()) {
      throw InvalidArgument("copy_params: shape mismatch for '" + p.name + "': " + shape_str(src->shape()) + " vs " +
                            shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    auto sv = src->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(sv[i]);
  }
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template void copy_params(const ParamList<float>&, ParamList<float>&);
template void copy_params(const ParamList<float>&, ParamList<double>&);
template void copy_params(const ParamList<double>&, ParamList<float>&);
template void copy_params(const ParamList<double>&, ParamList<double>&);

}  // namespace s3d
