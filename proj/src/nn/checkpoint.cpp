#include "nn/checkpoint.hpp"

#include <bit>
#include <map>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/sha256.hpp"

namespace s3d {

namespace {

constexpr char kMagic[8] = {'S', '3', 'D', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

template <typename T>
void append_group(const ParamList<T>& params, const std::string& group, nlohmann::json& manifest,
                  std::string& payload) {
  for (const auto& p : params.items()) {
    const auto vals = p.tensor.values();
    manifest.push_back({{"name", group + "/" + p.name},
                        {"shape", p.tensor.shape()},
                        {"dtype", "float32"},
                        {"offset", payload.size()}});
    for (T v : vals) {
      const float f = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      payload.append(buf, 4);
    }
  }
}

template <typename T>
void fill_group(ParamList<T>& params, const std::string& group, const nlohmann::json& manifest,
                std::string_view payload) {
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& e : manifest) by_name[e.at("name").get<std::string>()] = &e;
  for (auto& p : params.items()) {
    const std::string full = group + "/" + p.name;
    auto it = by_name.find(full);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor '" + full + "'");
    const auto& e = *it->second;
    if (e.at("dtype").get<std::string>() != "float32") throw FormatError("checkpoint: unsupported dtype for " + full);
    if (e.at("shape").get<Shape>() != p.tensor.shape()) {
      throw FormatError("checkpoint: shape mismatch for '" + full + "'");
    }
    const std::size_t off = e.at("offset").get<std::size_t>();
    auto dst = p.tensor.mutable_values();
    if (off > payload.size() || payload.size() - off < dst.size() * 4) {
      throw FormatError("checkpoint: payload truncated at '" + full + "'");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float f;
      std::memcpy(&f, payload.data() + off + 4 * i, 4);
      dst[i] = f;
    }
  }
}

}  // namespace

std::string checkpoint_id(std::string_view bytes) { return sha256_hex(bytes).substr(0, 16); }

template <typename T>
std::string serialize_checkpoint(const Generator<T>& generator, const Discriminator<T>* discriminator,
                                 const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "s3d-checkpoint";
  header["version"] = kCheckpointVersion;
  header["generator_config"] = generator.config();
  if (discriminator) header["discriminator_config"] = discriminator->config();
  header["metadata"] = metadata;
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  append_group(generator.params(), "generator", manifest, payload);
  if (discriminator) append_group(discriminator->params(), "discriminator", manifest, payload);
  header["tensors"] = manifest;
  header["payload_bytes"] = payload.size();

  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (hlen > bytes.size() - 16) throw FormatError("checkpoint: header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(16 + hlen);

  Checkpoint ck;
  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported version " + header.at("version").dump());
    }
    if (header.at("payload_bytes").get<std::size_t>() != payload.size()) {
      throw FormatError("checkpoint: payload size mismatch");
    }
    const auto gcfg = header.at("generator_config").get<GeneratorConfig>();
    auto gen = std::make_shared<Generator<float>>(gcfg, 0);
    fill_group(gen->params(), "generator", header.at("tensors"), payload);
    ck.generator = gen;
    if (header.contains("discriminator_config")) {
      const auto dcfg = header.at("discriminator_config").get<DiscriminatorConfig>();
      auto disc = std::make_shared<Discriminator<float>>(dcfg, 0);
      fill_group(disc->params(), "discriminator", header.at("tensors"), payload);
      ck.discriminator = disc;
    }
    if (header.contains("metadata")) ck.metadata = header.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }
  ck.id = checkpoint_id(bytes);
  return ck;
}

template <typename T>
std::string save_checkpoint(const std::string& path, const Generator<T>& generator,
                            const Discriminator<T>* discriminator, const nlohmann::json& metadata) {
  const std::string bytes = serialize_checkpoint(generator, discriminator, metadata);
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
  return checkpoint_id(bytes);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

template std::string serialize_checkpoint(const Generator<float>&, const Discriminator<float>*, const nlohmann::json&);
template std::string serialize_checkpoint(const Generator<double>&, const Discriminator<double>*,
                                          const nlohmann::json&);
template std::string save_checkpoint(const std::string&, const Generator<float>&, const Discriminator<float>*,
                                     const nlohmann::json&);
template std::string save_checkpoint(const std::string&, const Generator<double>&, const Discriminator<double>*,
                                     const nlohmann::json&);

}  // namespace s3d
