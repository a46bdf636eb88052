#pragma once

#include <filesystem>
#include <string>

#include "mesh/mesh.hpp"

namespace s3d {

/// Reads `v` and triangular `f` records; `f` tokens may carry texture and
/// normal indices (`1/2/3`, `1//3`), which are dropped. Other records are
/// ignored. Quads, n-gons and malformed records raise FormatError with the
/// line number.
Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text);

/// Writes vertices with round-trip precision.
void save_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string format_obj(const Mesh& mesh);

}  // namespace s3d
