#include "vst/resample.hpp"

#include <algorithm>
#include <cmath>

#include "vst/errors.hpp"

namespace vst {

namespace {

struct Tap {
  int lo, hi;
  double frac;
};

std::vector<Tap> taps(int in, int out) {
  std::vector<Tap> t(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double src = out > 1 ? static_cast<double>(i) * (in - 1) / (out - 1) : 0.0;
    const int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    t[static_cast<std::size_t>(i)] = {lo, std::min(lo + 1, in - 1), src - lo};
  }
  return t;
}

}  // namespace

std::vector<double> resize_bilinear(std::span<const double> plane, int h, int w, int out_h, int out_w) {
  if (h <= 0 || w <= 0 || out_h <= 0 || out_w <= 0) throw DimensionError("resize_bilinear: empty plane");
  if (plane.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw DimensionError("resize_bilinear: plane size does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);
  std::vector<double> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));
  for (int y = 0; y < out_h; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      auto px = [&](int r, int c) { return plane[static_cast<std::size_t>(r * w + c)]; };
      const double top = px(a.lo, b.lo) * (1.0 - b.frac) + px(a.lo, b.hi) * b.frac;
      const double bottom = px(a.hi, b.lo) * (1.0 - b.frac) + px(a.hi, b.hi) * b.frac;
      out[static_cast<std::size_t>(y * out_w + x)] = top * (1.0 - a.frac) + bottom * a.frac;
    }
  }
  return out;
}

}  // namespace vst
