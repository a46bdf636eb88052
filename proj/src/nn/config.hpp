#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace s3d {

struct GeneratorConfig {
  int input_size = 128;                       // square sketch side
  std::vector<int> encoder_channels{16, 32, 64, 128};
  int latent_dim = 512;
  int decoder_base_channels = 128;            // channels of the 2x2 seed grid
  std::vector<int> decoder_channels{64, 32, 8};
  bool use_sem = true;
  int sem_stage = 1;                          // index into decoder blocks
  int template_subdivisions = 3;
  double template_radius = 0.4;
  double max_offset = 0.5;
  double head_init_gain = 0.01;

  void validate() const;
  int seed_grid() const { return 2; }
  int decoder_output_size() const;            // spatial side after the last block
  std::size_t template_vertex_count() const;

  static GeneratorConfig preset(const std::string& name);
};

struct DiscriminatorConfig {
  int input_resolution = 64;
  int views = 2;
  std::vector<int> channels{16, 32, 64, 128};
  double leaky_slope = 0.2;

  void validate() const;
  static DiscriminatorConfig preset(const std::string& name);
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

}  // namespace s3d
