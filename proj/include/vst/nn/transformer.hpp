#pragma once

#include <string>
#include <vector>

#include "vst/autodiff/tensor.hpp"
#include "vst/nn/module.hpp"

namespace vst::nn {

struct TransformerBlockConfig {
  int model_dim = 512;
  int num_heads = 8;
  int ffn_dim = 2048;
  double dropout = 0.1;

  void validate() const;
};

template <typename T>
struct AttentionOutput {
  ad::Tensor<T> output;     // B x L x d
  ad::Tensor<T> attention;  // B x heads x L x L, rows sum to 1
};

// Scaled dot-product attention over all heads, 1/sqrt(d/heads) scaling.
template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(const TransformerBlockConfig& config, ParameterStore<T>& store, const std::string& prefix);

  AttentionOutput<T> forward(const ad::Tensor<T>& x) const;

 private:
  TransformerBlockConfig config_;
  ad::Tensor<T> wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

// Pre-LN block: x + MHSA(LN(x)), then + FFN(LN(.)) with a relu FFN.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock(const TransformerBlockConfig& config, ParameterStore<T>& store, const std::string& prefix);

  AttentionOutput<T> forward(const ad::Tensor<T>& x, const ForwardContext& ctx = {}) const;

  const TransformerBlockConfig& config() const { return config_; }

 private:
  TransformerBlockConfig config_;
  // Declaration order is registration order.
  ad::Tensor<T> ln1_gamma_, ln1_beta_;
  MultiHeadSelfAttention<T> attention_;
  ad::Tensor<T> ln2_gamma_, ln2_beta_;
  ad::Tensor<T> w1_, b1_, w2_, b2_;
};

template <typename T>
struct StackOutput {
  ad::Tensor<T> output;
  std::vector<ad::Tensor<T>> attention;  // one per layer
};

template <typename T>
class TransformerStack {
 public:
  TransformerStack(const TransformerBlockConfig& config, int layers, ParameterStore<T>& store,
                   const std::string& prefix);

  StackOutput<T> forward(const ad::Tensor<T>& x, const ForwardContext& ctx = {}) const;
  std::size_t depth() const { return blocks_.size(); }

 private:
  std::vector<TransformerBlock<T>> blocks_;
};

}  // namespace vst::nn
