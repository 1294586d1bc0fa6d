#include "vst/data/codec.hpp"

#include <cctype>

#include "vst/errors.hpp"

namespace vst::data {

LabelCodec::LabelCodec(int max_len) : max_len_(max_len) {
  if (max_len < 1) throw ConfigError("label codec: max length must be >= 1");
}

int LabelCodec::index_of(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (u >= '0' && u <= '9') return u - '0';
  const int lower = std::tolower(u);
  if (lower >= 'a' && lower <= 'z') return 10 + (lower - 'a');
  return kUnk;
}

char LabelCodec::symbol(int index) {
  if (index >= 0 && index <= 9) return static_cast<char>('0' + index);
  if (index >= 10 && index <= 35) return static_cast<char>('a' + index - 10);
  return '?';
}

std::vector<int> LabelCodec::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(max_len_));
  for (char c : text) {
    if (static_cast<int>(out.size()) >= max_len_ - 1) break;
    // UTF-8 continuation bytes belong to the previous code point.
    if ((static_cast<unsigned char>(c) & 0xC0) == 0x80) continue;
    out.push_back(index_of(c));
  }
  out.resize(static_cast<std::size_t>(max_len_), kEos);
  return out;
}

std::string LabelCodec::decode(std::span<const int> indices) const {
  std::string out;
  for (int i : indices) {
    if (i == kEos) break;
    out.push_back(symbol(i));
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    const int lower = std::tolower(static_cast<unsigned char>(c));
    if ((lower >= '0' && lower <= '9') || (lower >= 'a' && lower <= 'z')) out.push_back(static_cast<char>(lower));
  }
  return out;
}

}  // namespace vst::data
