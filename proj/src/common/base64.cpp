#include "common/base64.hpp"

#include <cctype>
#include <string>

#include <openssl/evp.h>

#include "common/errors.hpp"

namespace s3d {

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.rfind("data:", 0) == 0) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos || text.substr(0, comma).find(";base64") == std::string_view::npos) {
      throw FormatError("base64: malformed data URL");
    }
    text.remove_prefix(comma + 1);
  }
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.empty()) throw FormatError("base64: empty payload");
  if (clean.size() % 4 != 0) throw FormatError("base64: length is not a multiple of 4");
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const char c = clean[i];
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' ||
                    (c == '=' && i + 2 >= clean.size());
    if (!ok) throw FormatError("base64: invalid character at offset " + std::to_string(i));
  }
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw FormatError("base64: decoding failed");
  // EVP_DecodeBlock keeps the bytes produced by padding.
  std::size_t size = static_cast<std::size_t>(n);
  if (clean.back() == '=') --size;
  if (clean[clean.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

}  // namespace s3d
