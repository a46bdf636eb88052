#include "pipeline/infer.hpp"

#include <chrono>

#include "tensor/ops.hpp"

namespace s3d {

PreparedSketch prepare_sketch(const GrayImage& image, int size) {
  if (size <= 0) throw InvalidArgument("sketch: target size must be positive");
  if (image.width <= 0 || image.height <= 0) throw InvalidArgument("sketch: empty image");
  const std::size_t n = image.pixels.size();
  std::size_t dark = 0;
  for (std::uint8_t p : image.pixels) dark += p < 128;

  PreparedSketch out;
  out.size = size;
  out.dark_fraction = static_cast<double>(dark) / static_cast<double>(n);
  out.inverted = 2 * dark > n;
  out.stroke_pixels = out.inverted ? n - dark : dark;
  if (out.stroke_pixels == 0) throw InvalidArgument("sketch: blank image (no stroke pixels)");

  const int side = std::max(image.width, image.height);
  const int ox = (side - image.width) / 2, oy = (side - image.height) / 2;
  out.values.assign(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 1.0f);
  std::size_t kept = 0;
  for (int y = 0; y < size; ++y) {
    const int sy = static_cast<int>((static_cast<long long>(2 * y + 1) * side) / (2LL * size)) - oy;
    for (int x = 0; x < size; ++x) {
      const int sx = static_cast<int>((static_cast<long long>(2 * x + 1) * side) / (2LL * size)) - ox;
      if (sx < 0 || sy < 0 || sx >= image.width || sy >= image.height) continue;
      const bool is_dark = image.at(sx, sy) < 128;
      if (is_dark != out.inverted) {
        out.values[static_cast<std::size_t>(y * size + x)] = 0.0f;
        ++kept;
      }
    }
  }
  if (kept == 0) throw InvalidArgument("sketch: strokes vanish when resampled to " + std::to_string(size) + "x" + std::to_string(size));
  return out;
}

template <typename T>
Tensor<T> sketch_batch(const std::vector<const PreparedSketch*>& sketches) {
  if (sketches.empty()) throw InvalidArgument("sketch_batch: empty batch");
  const auto s = static_cast<std::size_t>(sketches.front()->size);
  std::vector<T> v;
  v.reserve(sketches.size() * s * s);
  for (const auto* p : sketches) {
    if (static_cast<std::size_t>(p->size) != s) throw InvalidArgument("sketch_batch: mixed sketch sizes");
    for (float x : p->values) v.push_back(static_cast<T>(x));
  }
  return Tensor<T>::from({sketches.size(), 1, s, s}, std::move(v));
}

template Tensor<float> sketch_batch(const std::vector<const PreparedSketch*>&);
template Tensor<double> sketch_batch(const std::vector<const PreparedSketch*>&);

InferenceEngine::InferenceEngine(Checkpoint checkpoint) : checkpoint_(std::move(checkpoint)) {
  if (!checkpoint_.generator) throw InvalidArgument("inference: checkpoint has no generator");
}

Mesh InferenceEngine::generate(const PreparedSketch& sketch) const {
  NoGradGuard no_grad;
  const auto& g = *checkpoint_.generator;
  const TensorF v = g.forward(sketch_batch<float>({&sketch}));
  return mesh_from_tensor(reshape(v, {v.size(1), 3}), g.template_mesh().faces);
}

InferenceResult InferenceEngine::infer(const GrayImage& image, const std::optional<CameraPose>& pose) const {
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedSketch sketch = prepare_sketch(image, input_size());
  InferenceResult r;
  r.mesh = generate(sketch);
  r.inverted = sketch.inverted;
  r.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (pose) {
    const auto sil = rasterize_hard(r.mesh, *pose, 128);
    r.preview = to_gray_image(sil.values.values(), 128, 128);
  }
  return r;
}

InferenceResult InferenceEngine::infer_png(std::span<const std::uint8_t> png, const std::optional<CameraPose>& pose) const {
  const auto t0 = std::chrono::steady_clock::now();
  const GrayImage image = decode_png(png);
  const double decode_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  InferenceResult r = infer(image, pose);
  r.timing_ms += decode_ms;
  return r;
}

}  // namespace s3d
