#pragma once

#include <span>
#include <vector>

namespace vst {

// Corner-aligned bilinear resize of a single h x w plane to out_h x out_w:
// output pixel (y, x) samples source coordinate (y*(h-1)/(out_h-1), x*(w-1)/(out_w-1)).
std::vector<double> resize_bilinear(std::span<const double> plane, int h, int w, int out_h, int out_w);

}  // namespace vst
