#include "vst/data/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vst/errors.hpp"
#include "vst/resample.hpp"

namespace vst::data {

Image::Image(int h, int w, int c, std::uint8_t fill)
    : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

namespace {

// Parses one whitespace-delimited header integer, skipping '#' comments.
int header_int(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    throw IoError("pnm: malformed header");
  }
  long value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos++] - '0');
    if (value > 1'000'000) throw IoError("pnm: header value too large");
  }
  return static_cast<int>(value);
}

}  // namespace

Image decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError("pnm: only binary P5/P6 images are supported");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const int width = header_int(bytes, pos);
  const int height = header_int(bytes, pos);
  const int maxval = header_int(bytes, pos);
  if (width <= 0 || height <= 0) throw IoError("pnm: zero-sized image");
  if (maxval <= 0 || maxval > 255) throw IoError("pnm: only 8-bit images are supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw IoError("pnm: malformed header");
  ++pos;
  Image img(height, width, channels);
  if (bytes.size() - pos < img.pixels.size()) throw IoError("pnm: truncated pixel data");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  if (maxval != 255) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
  }
  return img;
}

std::string encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("pnm: images must have 1 or 3 channels");
  std::ostringstream os;
  os << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::string out = os.str();
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

Image read_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const Image& image) { write_file(path, encode_pnm(image)); }

PreprocessedImage preprocess_image(const Image& image, int target_h, int target_w, double width_scale) {
  if (image.height <= 0 || image.width <= 0 || image.pixels.empty()) {
    throw DimensionError("preprocess_image: empty input image");
  }
  if (target_h <= 0 || target_w <= 0) throw DimensionError("preprocess_image: invalid target size");
  const double aspect_w = static_cast<double>(image.width) * target_h / image.height * width_scale;
  const int resized_w = std::max(1, static_cast<int>(std::lround(aspect_w)));

  PreprocessedImage out{target_h, target_w, std::vector<float>(static_cast<std::size_t>(3) * target_h * target_w)};
  std::vector<double> plane(static_cast<std::size_t>(image.height) * image.width);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 3 ? c : 0;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) plane[static_cast<std::size_t>(y) * image.width + x] = image.at(y, x, src_c);
    const auto resized = resize_bilinear(plane, image.height, image.width, target_h, resized_w);
    float* dst = out.chw.data() + static_cast<std::size_t>(c) * target_h * target_w;
    for (int y = 0; y < target_h; ++y) {
      for (int x = 0; x < target_w; ++x) {
        // Replication padding: columns past the content repeat its last column.
        const int sx = std::min(x, resized_w - 1);
        const double v = resized[static_cast<std::size_t>(y) * resized_w + sx];
        dst[static_cast<std::size_t>(y) * target_w + x] = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }
  return out;
}

}  // namespace vst::data
