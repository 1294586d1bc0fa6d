#pragma once

#include <random>
#include <vector>

#include "vst/autodiff/grad_check.hpp"
#include "vst/autodiff/ops.hpp"

namespace vst::testing {

inline ad::Tensor<double> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                        bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(ad::shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

// Fixed random projection so a non-scalar output becomes a scalar loss with
// non-trivial upstream gradient.
inline ad::Tensor<double> project(const ad::Tensor<double>& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng, -1.0, 1.0, false);
  return ad::sum(ad::mul(y, w));
}

}  // namespace vst::testing
