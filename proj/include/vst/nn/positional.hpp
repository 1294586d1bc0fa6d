#pragma once

#include "vst/autodiff/tensor.hpp"

namespace vst::nn {

// Sinusoidal table, L x d: sin on even channels, cos on odd channels, with
// angle pos / 10000^(2i/d) for channel pair i. Requires even d.
template <typename T>
ad::Tensor<T> fixed_positional_encoding(int length, int dim);

}  // namespace vst::nn
