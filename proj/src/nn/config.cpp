#include "nn/config.hpp"

#include <string>

#include "common/errors.hpp"

namespace s3d {

namespace {
void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}
}  // namespace

void GeneratorConfig::validate() const {
  require(encoder_channels.size() == 4, "generator: encoder needs exactly 4 stage widths");
  for (int c : encoder_channels) require(c > 0, "generator: encoder widths must be positive");
  require(input_size >= 16 && input_size % 16 == 0 && input_size <= 512,
          "generator: input_size must be a multiple of 16 in [16,512], got " + std::to_string(input_size));
  require(latent_dim > 0, "generator: latent_dim must be positive");
  require(decoder_base_channels > 0, "generator: decoder_base_channels must be positive");
  require(!decoder_channels.empty() && decoder_channels.size() <= 5, "generator: need 1..5 decoder blocks");
  for (int c : decoder_channels) require(c > 0, "generator: decoder widths must be positive");
  if (use_sem) {
    require(sem_stage >= 0 && sem_stage < static_cast<int>(decoder_channels.size()),
            "generator: sem_stage out of range");
  }
  require(template_subdivisions >= 0 && template_subdivisions <= 5, "generator: template_subdivisions must lie in [0,5]");
  require(template_radius > 0.0, "generator: template_radius must be positive");
  require(max_offset > 0.0, "generator: max_offset must be positive");
  require(head_init_gain >= 0.0, "generator: head_init_gain must be non-negative");
}

int GeneratorConfig::decoder_output_size() const { return seed_grid() << decoder_channels.size(); }

std::size_t GeneratorConfig::template_vertex_count() const {
  return 10 * (std::size_t{1} << (2 * template_subdivisions)) + 2;
}

GeneratorConfig GeneratorConfig::preset(const std::string& name) {
  GeneratorConfig c;
  if (name == "default") return c;
  if (name == "toy") {
    c.input_size = 64;
    c.encoder_channels = {8, 16, 32, 64};
    c.latent_dim = 128;
    c.decoder_base_channels = 64;
    c.decoder_channels = {32, 16, 4};
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected default or toy)");
}

void DiscriminatorConfig::validate() const {
  require(input_resolution >= 16 && input_resolution % 16 == 0, "discriminator: input_resolution must be a multiple of 16");
  require(views >= 1, "discriminator: views must be at least 1");
  require(channels.size() == 4, "discriminator: needs exactly 4 stage widths");
  for (int c : channels) require(c > 0, "discriminator: widths must be positive");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, "discriminator: leaky_slope must lie in [0,1)");
}

DiscriminatorConfig DiscriminatorConfig::preset(const std::string& name) {
  DiscriminatorConfig c;
  if (name == "default") return c;
  if (name == "toy") {
    c.channels = {8, 16, 32, 64};
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected default or toy)");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"input_size", c.input_size},
       {"encoder_channels", c.encoder_channels},
       {"latent_dim", c.latent_dim},
       {"decoder_base_channels", c.decoder_base_channels},
       {"decoder_channels", c.decoder_channels},
       {"use_sem", c.use_sem},
       {"sem_stage", c.sem_stage},
       {"template_subdivisions", c.template_subdivisions},
       {"template_radius", c.template_radius},
       {"max_offset", c.max_offset},
       {"head_init_gain", c.head_init_gain}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.decoder_base_channels = j.value("decoder_base_channels", d.decoder_base_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.use_sem = j.value("use_sem", d.use_sem);
  c.sem_stage = j.value("sem_stage", d.sem_stage);
  c.template_subdivisions = j.value("template_subdivisions", d.template_subdivisions);
  c.template_radius = j.value("template_radius", d.template_radius);
  c.max_offset = j.value("max_offset", d.max_offset);
  c.head_init_gain = j.value("head_init_gain", d.head_init_gain);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"input_resolution", c.input_resolution},
       {"views", c.views},
       {"channels", c.channels},
       {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  DiscriminatorConfig d;
  c.input_resolution = j.value("input_resolution", d.input_resolution);
  c.views = j.value("views", d.views);
  c.channels = j.value("channels", d.channels);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}

}  // namespace s3d
