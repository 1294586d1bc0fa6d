#include "vst/nn/positional.hpp"

#include <cmath>
#include <vector>

namespace vst::nn {

template <typename T>
ad::Tensor<T> fixed_positional_encoding(int length, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("positional encoding needs an even dimension, got " + std::to_string(dim));
  if (length <= 0) throw ConfigError("positional encoding needs a positive length");
  std::vector<T> table(static_cast<std::size_t>(length) * static_cast<std::size_t>(dim));
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
      table[static_cast<std::size_t>(pos * dim + 2 * i)] = static_cast<T>(std::sin(angle));
      table[static_cast<std::size_t>(pos * dim + 2 * i + 1)] = static_cast<T>(std::cos(angle));
    }
  }
  return ad::Tensor<T>::from({length, dim}, std::move(table));
}

template ad::Tensor<float> fixed_positional_encoding<float>(int, int);
template ad::Tensor<double> fixed_positional_encoding<double>(int, int);

}  // namespace vst::nn
