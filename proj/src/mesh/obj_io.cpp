#include "mesh/obj_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace s3d {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& why) {
  throw FormatError("obj: line " + std::to_string(line) + ": " + why);
}

double parse_double(const std::string& token, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) fail(line, "malformed number '" + token + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(line, "malformed number '" + token + "'");
  }
}

std::int32_t parse_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  long long idx = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0) {
    fail(line, "malformed face index '" + token + "'");
  }
  // Negative indices count back from the most recent vertex.
  const long long resolved = idx > 0 ? idx - 1 : static_cast<long long>(vertex_count) + idx;
  if (resolved < 0 || resolved >= static_cast<long long>(vertex_count)) {
    fail(line, "face index " + std::to_string(idx) + " refers to a missing vertex");
  }
  return static_cast<std::int32_t>(resolved);
}

}  // namespace

Mesh parse_obj(const std::string& text) {
  Mesh mesh;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream line(raw);
    std::string tag;
    if (!(line >> tag)) continue;
    std::vector<std::string> tokens;
    for (std::string t; line >> t;) tokens.push_back(t);
    if (tag == "v") {
      if (tokens.size() < 3 || tokens.size() > 4) fail(line_no, "vertex record needs 3 coordinates");
      mesh.vertices.push_back(
          {parse_double(tokens[0], line_no), parse_double(tokens[1], line_no), parse_double(tokens[2], line_no)});
    } else if (tag == "f") {
      if (tokens.size() != 3) {
        fail(line_no, "only triangular faces are supported (found " + std::to_string(tokens.size()) + " vertices)");
      }
      Face f{};
      for (int k = 0; k < 3; ++k) f[k] = parse_index(tokens[k], mesh.vertices.size(), line_no);
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) fail(line_no, "face repeats a vertex");
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("obj: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << file.rdbuf();
  try {
    return parse_obj(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_obj(const Mesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 24);
  char line[160];
  for (const auto& v : mesh.vertices) {
    const int n = std::snprintf(line, sizeof line, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
    out.append(line, static_cast<std::size_t>(n));
  }
  for (const auto& f : mesh.faces) {
    const int n = std::snprintf(line, sizeof line, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out.append(line, static_cast<std::size_t>(n));
  }
  return out;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("obj: cannot write '" + path.string() + "'");
  file << format_obj(mesh);
  if (!file) throw IoError("obj: write failed for '" + path.string() + "'");
}

}  // namespace s3d
