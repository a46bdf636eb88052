#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nn/generator.hpp"

namespace s3d {

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout: 8-byte magic "S3DCKPT\0", u64 little-endian header
/// length, JSON header, then float32 little-endian tensor payloads at the
/// offsets listed in the header manifest.
struct Checkpoint {
  std::shared_ptr<const Generator<float>> generator;
  std::shared_ptr<const Discriminator<float>> discriminator;  // may be null
  nlohmann::json metadata = nlohmann::json::object();
  /// First 16 hex digits of the SHA-256 of the serialized bytes.
  std::string id;
};

template <typename T>
std::string serialize_checkpoint(const Generator<T>& generator, const Discriminator<T>* discriminator,
                                 const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Writes atomically (temp file + rename) and returns the checkpoint id.
template <typename T>
std::string save_checkpoint(const std::string& path, const Generator<T>& generator,
                            const Discriminator<T>* discriminator,
                            const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_id(std::string_view bytes);

}  // namespace s3d
