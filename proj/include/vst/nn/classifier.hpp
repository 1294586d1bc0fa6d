#pragma once

#include <cmath>
#include <string>

#include "vst/autodiff/ops.hpp"
#include "vst/nn/module.hpp"

namespace vst::nn {

// Per-position affine map to class logits; softmax is left to the loss or decoder.
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int in_dim, int num_classes, ParameterStore<T>& store, const std::string& prefix)
      : weight_(store.create(prefix + ".w", {in_dim, num_classes},
                             Init::normal(1.0 / std::sqrt(static_cast<double>(in_dim))))),
        bias_(store.create(prefix + ".b", {num_classes}, Init::zeros())) {}

  // features: B x t x in_dim -> B x t x C
  ad::Tensor<T> forward(const ad::Tensor<T>& features) const { return ad::linear(features, weight_, bias_); }

  bool defined() const { return weight_.defined(); }

 private:
  ad::Tensor<T> weight_;
  ad::Tensor<T> bias_;
};

}  // namespace vst::nn
