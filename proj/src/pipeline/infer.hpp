#pragma once

#include <optional>
#include <span>
#include <string>

#include "common/image_io.hpp"
#include "nn/checkpoint.hpp"
#include "render/rasterizer.hpp"

namespace s3d {

/// Binary network input in the 0 = stroke, 1 = background convention.
struct PreparedSketch {
  int size = 0;
  std::vector<float> values;  // size x size, row-major
  bool inverted = false;      // polarity was flipped (mostly dark input)
  double dark_fraction = 0.0;
  std::size_t stroke_pixels = 0;
};

/// Thresholds at 0.5 (dark = stroke), flips polarity when more than half of
/// the pixels are dark, centre-pads to a square with background and
/// resamples to `size` with nearest neighbour. Rejects blank images.
PreparedSketch prepare_sketch(const GrayImage& image, int size);

template <typename T>
Tensor<T> sketch_batch(const std::vector<const PreparedSketch*>& sketches);

struct InferenceResult {
  Mesh mesh;
  double timing_ms = 0.0;
  bool inverted = false;
  std::optional<GrayImage> preview;  // silhouette at the requested pose
};

/// Read-only inference over a loaded checkpoint; safe to share across threads.
class InferenceEngine {
 public:
  explicit InferenceEngine(Checkpoint checkpoint);

  const std::string& checkpoint_id() const { return checkpoint_.id; }
  const Checkpoint& checkpoint() const { return checkpoint_; }
  int input_size() const { return checkpoint_.generator->config().input_size; }

  /// Mesh in canonical orientation. With a pose, also renders a hard
  /// silhouette preview of the result at that pose (128x128).
  InferenceResult infer(const GrayImage& image, const std::optional<CameraPose>& pose = std::nullopt) const;
  /// Timing covers PNG decode through mesh assembly.
  InferenceResult infer_png(std::span<const std::uint8_t> png,
                            const std::optional<CameraPose>& pose = std::nullopt) const;
  Mesh generate(const PreparedSketch& sketch) const;

 private:
  Checkpoint checkpoint_;
};

}  // namespace s3d
