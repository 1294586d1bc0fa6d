#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vst::data {

// 38-symbol charset: 0-9 -> '0'..'9', 10-35 -> 'a'..'z', 36 [unk], 37 [eos].
class LabelCodec {
 public:
  static constexpr int kNumClasses = 38;
  static constexpr int kUnk = 36;
  static constexpr int kEos = 37;

  explicit LabelCodec(int max_len = 25);

  int max_len() const { return max_len_; }

  // Total: lowercases, maps non-alphanumerics to [unk], keeps at most
  // max_len-1 symbols, then fills with [eos] up to max_len.
  std::vector<int> encode(std::string_view text) const;

  // Stops at the first [eos]; [unk] renders as '?'.
  std::string decode(std::span<const int> indices) const;

  static int index_of(char c);
  static char symbol(int index);

 private:
  int max_len_;
};

// Lowercase and drop everything outside [0-9a-z]; used for accuracy matching.
std::string normalize_text(std::string_view text);

}  // namespace vst::data
