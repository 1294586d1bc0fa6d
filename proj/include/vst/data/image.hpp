#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vst::data {

// 8-bit image, row-major, channels interleaved (HWC). channels is 1 or 3.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary PGM (P5) and PPM (P6), maxval <= 255. Throws IoError.
Image decode_pnm(std::string_view bytes);
std::string encode_pnm(const Image& image);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

// 3 x height x width planes in [-1, 1].
struct PreprocessedImage {
  int height = 0;
  int width = 0;
  std::vector<float> chw;
};

// Resize to target_h keeping aspect ratio (corner-aligned bilinear), then
// pad on the right by repeating the last column or trim the right to
// target_w. Grayscale input is replicated to 3 channels. `width_scale`
// stretches the resized width before padding (augmentation hook; 1 = off).
PreprocessedImage preprocess_image(const Image& image, int target_h = 48, int target_w = 160,
                                   double width_scale = 1.0);

// Reads a text file into memory; IoError naming the path on failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace vst::data
