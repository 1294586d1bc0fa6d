#include "vst/nn/transformer.hpp"

#include <cmath>

#include "vst/autodiff/ops.hpp"

namespace vst::nn {

void TransformerBlockConfig::validate() const {
  if (model_dim <= 0 || num_heads <= 0 || ffn_dim <= 0) throw ConfigError("transformer: dimensions must be positive");
  if (model_dim % num_heads != 0) {
    throw ConfigError("transformer: model dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout must be in [0, 1)");
}

namespace {

template <typename T>
void check_model_dim(const ad::Tensor<T>& x, int d, const char* what) {
  if (x.rank() != 3 || x.dim(2) != d) {
    throw DimensionError(std::string(what) + ": expected B x L x " + std::to_string(d) + ", got " +
                         ad::shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(const TransformerBlockConfig& config, ParameterStore<T>& store,
                                                  const std::string& prefix)
    : config_(config) {
  config_.validate();
  const int d = config_.model_dim;
  const auto init = Init::normal(1.0 / std::sqrt(static_cast<double>(d)));
  wq_ = store.create(prefix + ".wq", {d, d}, init);
  bq_ = store.create(prefix + ".bq", {d}, Init::zeros());
  wk_ = store.create(prefix + ".wk", {d, d}, init);
  bk_ = store.create(prefix + ".bk", {d}, Init::zeros());
  wv_ = store.create(prefix + ".wv", {d, d}, init);
  bv_ = store.create(prefix + ".bv", {d}, Init::zeros());
  wo_ = store.create(prefix + ".wo", {d, d}, init);
  bo_ = store.create(prefix + ".bo", {d}, Init::zeros());
}

template <typename T>
AttentionOutput<T> MultiHeadSelfAttention<T>::forward(const ad::Tensor<T>& x) const {
  check_model_dim(x, config_.model_dim, "mhsa");
  const auto batch = x.dim(0), len = x.dim(1);
  const std::int64_t heads = config_.num_heads, head_dim = config_.model_dim / config_.num_heads;
  auto split_heads = [&](const ad::Tensor<T>& t) {
    return ad::transpose(ad::reshape(t, {batch, len, heads, head_dim}), 1, 2);
  };
  auto q = split_heads(ad::linear(x, wq_, bq_));
  auto k = split_heads(ad::linear(x, wk_, bk_));
  auto v = split_heads(ad::linear(x, wv_, bv_));
  auto scores = ad::scale(ad::matmul(q, ad::transpose(k, 2, 3)), static_cast<T>(1.0 / std::sqrt(double(head_dim))));
  auto attn = ad::softmax(scores, -1);
  auto ctx = ad::reshape(ad::transpose(ad::matmul(attn, v), 1, 2), {batch, len, config_.model_dim});
  return {ad::linear(ctx, wo_, bo_), attn};
}

template <typename T>
TransformerBlock<T>::TransformerBlock(const TransformerBlockConfig& config, ParameterStore<T>& store,
                                      const std::string& prefix)
    : config_(config),
      ln1_gamma_(store.create(prefix + ".ln1.gamma", {config.model_dim}, Init::ones())),
      ln1_beta_(store.create(prefix + ".ln1.beta", {config.model_dim}, Init::zeros())),
      attention_(config, store, prefix + ".mhsa"),
      ln2_gamma_(store.create(prefix + ".ln2.gamma", {config.model_dim}, Init::ones())),
      ln2_beta_(store.create(prefix + ".ln2.beta", {config.model_dim}, Init::zeros())),
      w1_(store.create(prefix + ".ffn.w1", {config.model_dim, config.ffn_dim},
                       Init::normal(std::sqrt(2.0 / config.model_dim)))),
      b1_(store.create(prefix + ".ffn.b1", {config.ffn_dim}, Init::zeros())),
      w2_(store.create(prefix + ".ffn.w2", {config.ffn_dim, config.model_dim},
                       Init::normal(1.0 / std::sqrt(static_cast<double>(config.ffn_dim))))),
      b2_(store.create(prefix + ".ffn.b2", {config.model_dim}, Init::zeros())) {}

template <typename T>
AttentionOutput<T> TransformerBlock<T>::forward(const ad::Tensor<T>& x, const ForwardContext& ctx) const {
  check_model_dim(x, config_.model_dim, "transformer block");
  const bool drop = ctx.dropout_active() && config_.dropout > 0.0;
  auto maybe_dropout = [&](const ad::Tensor<T>& t) {
    return drop ? ad::dropout(t, config_.dropout, true, *ctx.rng) : t;
  };
  auto attn = attention_.forward(ad::layer_norm(x, ln1_gamma_, ln1_beta_));
  auto h = ad::add(x, maybe_dropout(attn.output));
  auto ffn = ad::linear(ad::relu(ad::linear(ad::layer_norm(h, ln2_gamma_, ln2_beta_), w1_, b1_)), w2_, b2_);
  return {ad::add(h, maybe_dropout(ffn)), attn.attention};
}

template <typename T>
TransformerStack<T>::TransformerStack(const TransformerBlockConfig& config, int layers, ParameterStore<T>& store,
                                      const std::string& prefix) {
  if (layers < 0) throw ConfigError("transformer: negative layer count");
  blocks_.reserve(static_cast<std::size_t>(layers));
  for (int i = 0; i < layers; ++i) blocks_.emplace_back(config, store, prefix + ".layer" + std::to_string(i));
}

template <typename T>
StackOutput<T> TransformerStack<T>::forward(const ad::Tensor<T>& x, const ForwardContext& ctx) const {
  StackOutput<T> out{x, {}};
  for (const auto& block : blocks_) {
    auto r = block.forward(out.output, ctx);
    out.output = std::move(r.output);
    out.attention.push_back(std::move(r.attention));
  }
  return out;
}

template class MultiHeadSelfAttention<float>;
template class MultiHeadSelfAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class TransformerStack<float>;
template class TransformerStack<double>;

}  // namespace vst::nn
