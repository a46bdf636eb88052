#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace s3d {

/// Standard alphabet with padding; whitespace is ignored and an optional
/// `data:<mime>;base64,` prefix is stripped. Throws FormatError.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace s3d
