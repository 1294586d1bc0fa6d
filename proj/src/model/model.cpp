#include "vst/model.hpp"

#include <cmath>

#include "vst/autodiff/ops.hpp"
#include "vst/nn/positional.hpp"

namespace vst {

std::string to_string(Variant v) { return v == Variant::kBasic ? "basic" : "full"; }

Variant parse_variant(const std::string& s) {
  if (s == "basic" || s == "B" || s == "vst-b") return Variant::kBasic;
  if (s == "full" || s == "F" || s == "vst-f") return Variant::kFull;
  throw ConfigError("unknown variant '" + s + "' (expected basic or full)");
}

ModelConfig ModelConfig::full_preset() { return ModelConfig{}; }

ModelConfig ModelConfig::toy_preset() {
  ModelConfig c;
  c.d = 64;
  c.num_heads = 4;
  c.ffn_dim = 4 * 64;
  c.layers_v = c.layers_i = c.layers_s = 1;
  c.max_len = 8;
  c.backbone = nn::BackboneConfig::toy_preset();
  c.image_height = 24;
  c.image_width = 80;
  return c;
}

ModelConfig ModelConfig::tiny_preset() {
  ModelConfig c;
  c.d = 8;
  c.num_heads = 2;
  c.ffn_dim = 32;
  c.layers_v = c.layers_i = c.layers_s = 1;
  c.max_len = 4;
  c.dropout = 0.0;
  c.backbone.stem_channels = 4;
  c.backbone.block_counts = {1, 1, 1, 1};
  c.backbone.channels = {4, 4, 8, 8};
  c.backbone.output_dim = 8;
  c.image_height = 16;
  c.image_width = 24;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "toy") return toy_preset();
  if (name == "tiny") return tiny_preset();
  throw ConfigError("unknown model preset '" + name + "' (expected full, toy or tiny)");
}

int ModelConfig::feature_height() const { return backbone.output_size(image_height, image_width).first; }
int ModelConfig::feature_width() const { return backbone.output_size(image_height, image_width).second; }

nn::TransformerBlockConfig ModelConfig::block_config() const { return {d, num_heads, ffn_dim, dropout}; }

void ModelConfig::validate() const {
  backbone.validate();
  block_config().validate();
  if (d % 2 != 0) throw ConfigError("model dim must be even for the sinusoidal encoding");
  if (backbone.output_dim != d) {
    throw ConfigError("backbone output dim " + std::to_string(backbone.output_dim) + " must equal model dim " +
                      std::to_string(d));
  }
  if (layers_v < 0 || layers_i < 0 || layers_s < 0) throw ConfigError("layer counts must be non-negative");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (num_classes != data::LabelCodec::kNumClasses) {
    throw ConfigError("num_classes must be " + std::to_string(data::LabelCodec::kNumClasses));
  }
  try {
    backbone.output_size(image_height, image_width);
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

template <typename T>
VstModel<T>::VstModel(ModelConfig config)
    : config_(std::move(config)), store_(std::make_unique<nn::ParameterStore<T>>(config_.init_seed)) {
  config_.validate();
  auto& store = *store_;
  const int d = config_.d, t = config_.max_len, n = config_.sequence_length();
  const auto block = config_.block_config();

  backbone_ = std::make_unique<nn::Backbone<T>>(config_.backbone, store, "backbone");
  visual_ = std::make_unique<nn::TransformerStack<T>>(block, config_.layers_v, store, "visual");

  align_primary_.q = store.create("align.Q", {t, d}, nn::Init::normal(1.0 / std::sqrt(static_cast<double>(d))));
  store.alias("align.secondary.Q", "align.Q");
  align_secondary_.q = store.at("align.secondary.Q").tensor;

  semantic_position_ = store.create("interact.pos_s", {t, d}, nn::Init::normal(0.02));
  semantic_domain_ = store.create("interact.domain_s", {d}, nn::Init::normal(0.02));
  visual_domain_ = store.create("interact.domain_v", {d}, nn::Init::normal(0.02));
  visual_pe_ = nn::fixed_positional_encoding<T>(n, d);
  interaction_ = std::make_unique<nn::TransformerStack<T>>(block, config_.layers_i, store, "interact");

  if (config_.share_classifier_heads) {
    head_s2_ = nn::ClassifierHead<T>(d, config_.num_classes, store, "head");
  } else {
    head_s2_ = nn::ClassifierHead<T>(d, config_.num_classes, store, "head_s2");
    head_s3_ = nn::ClassifierHead<T>(d, config_.num_classes, store, "head_s3");
  }

  if (config_.variant == Variant::kFull) {
    semantic_ = std::make_unique<nn::TransformerStack<T>>(block, config_.layers_s, store, "semantic");
    semantic_pe_ = nn::fixed_positional_encoding<T>(2 * t, d);
    head_final_ = nn::ClassifierHead<T>(2 * d, config_.num_classes, store, "semantic.head");
  }
}

template <typename T>
ad::Tensor<T> VstModel<T>::visual_encode(const ad::Tensor<T>& feature_map, const nn::ForwardContext& ctx) const {
  if (feature_map.rank() != 4 || feature_map.dim(1) != config_.d) {
    throw DimensionError("visual_encode: expected B x " + std::to_string(config_.d) + " x h x w, got " +
                         ad::shape_str(feature_map.shape()));
  }
  const auto b = feature_map.dim(0), n = feature_map.dim(2) * feature_map.dim(3);
  // Row-major flattening: height outer, width inner.
  auto seq = ad::transpose(ad::reshape(feature_map, {b, config_.d, n}), 1, 2);
  return visual_->forward(seq, ctx).output;
}

template <typename T>
InteractResult<T> VstModel<T>::interact(const ad::Tensor<T>& s1, const ad::Tensor<T>& v1,
                                        const nn::ForwardContext& ctx) const {
  const int d = config_.d, t = config_.max_len;
  if (s1.rank() != 3 || v1.rank() != 3 || s1.dim(2) != d || v1.dim(2) != d || s1.dim(1) != t ||
      s1.dim(0) != v1.dim(0)) {
    throw DimensionError("interact: semantic " + ad::shape_str(s1.shape()) + " and visual " +
                         ad::shape_str(v1.shape()) + " incompatible with d=" + std::to_string(d) +
                         ", t=" + std::to_string(t));
  }
  const auto n = v1.dim(1);
  const auto pe = n == visual_pe_.dim(0) ? visual_pe_ : nn::fixed_positional_encoding<T>(static_cast<int>(n), d);
  auto s = ad::add(ad::add(s1, semantic_position_), semantic_domain_);
  auto v = ad::add(ad::add(v1, pe), visual_domain_);
  // Semantic tokens first.
  std::vector<ad::Tensor<T>> parts{s, v};
  auto joined = interaction_->forward(ad::concat<T>(parts, 1), ctx);
  return {ad::slice(joined.output, 1, 0, t), ad::slice(joined.output, 1, t, n), std::move(joined.attention)};
}

template <typename T>
ad::Tensor<T> VstModel<T>::semantic_fuse(const ad::Tensor<T>& s2, const ad::Tensor<T>& s3,
                                         const nn::ForwardContext& ctx,
                                         std::vector<ad::Tensor<T>>* attention) const {
  if (config_.variant != Variant::kFull) throw ContractError("semantic_fuse requires the full variant");
  const int t = config_.max_len;
  if (s2.shape() != s3.shape() || s2.rank() != 3 || s2.dim(1) != t || s2.dim(2) != config_.d) {
    throw DimensionError("semantic_fuse: streams " + ad::shape_str(s2.shape()) + " and " +
                         ad::shape_str(s3.shape()) + " must both be B x " + std::to_string(t) + " x " +
                         std::to_string(config_.d));
  }
  std::vector<ad::Tensor<T>> seq{s2, s3};
  auto fused = semantic_->forward(ad::add(ad::concat<T>(seq, 1), semantic_pe_), ctx);
  if (attention) *attention = fused.attention;
  std::vector<ad::Tensor<T>> channels{ad::slice(fused.output, 1, 0, t), ad::slice(fused.output, 1, t, t)};
  return head_final_.forward(ad::concat<T>(channels, 2));
}

template <typename T>
ad::Tensor<T> VstModel<T>::classify_s3(const ad::Tensor<T>& s3) const {
  return config_.share_classifier_heads ? head_s2_.forward(s3) : head_s3_.forward(s3);
}

template <typename T>
ForwardTrace<T> VstModel<T>::forward(const ad::Tensor<T>& images, const ForwardOptions& options) const {
  if (images.rank() != 4 || images.dim(2) != config_.image_height || images.dim(3) != config_.image_width) {
    throw DimensionError("forward: expected B x 3 x " + std::to_string(config_.image_height) + " x " +
                         std::to_string(config_.image_width) + " images, got " + ad::shape_str(images.shape()));
  }
  std::mt19937_64 rng(options.dropout_seed);
  nn::ForwardContext ctx{options.training && config_.dropout > 0.0, &rng};

  ForwardTrace<T> trace;
  trace.feature_map = backbone_->forward(images);
  trace.v1 = visual_encode(trace.feature_map, ctx);
  auto primary = align(trace.v1, align_primary_);
  trace.s1 = primary.semantic;
  trace.attn_primary = primary.attention;
  auto inter = interact(trace.s1, trace.v1, ctx);
  trace.s2 = inter.s2;
  trace.v2 = inter.v2;
  trace.interaction_attention = std::move(inter.attention);
  auto secondary = align(trace.v2, align_secondary_);
  trace.s3 = secondary.semantic;
  trace.attn_secondary = secondary.attention;
  trace.logits_s2 = classify_s2(trace.s2);
  trace.logits_s3 = classify_s3(trace.s3);
  if (config_.variant == Variant::kFull) {
    trace.logits_final = semantic_fuse(trace.s2, trace.s3, ctx, &trace.semantic_attention);
  }
  return trace;
}

template <typename T>
LossResult<T> compute_loss(const ForwardTrace<T>& trace, const std::vector<std::vector<int>>& targets,
                           const ModelConfig& config) {
  const auto batch = trace.logits_s2.dim(0);
  const int t = config.max_len, c = config.num_classes;
  if (static_cast<std::int64_t>(targets.size()) != batch) {
    throw ContractError("compute_loss: " + std::to_string(targets.size()) + " targets for batch of " +
                        std::to_string(batch));
  }
  std::vector<int> flat;
  flat.reserve(static_cast<std::size_t>(batch * t));
  for (const auto& row : targets) {
    if (static_cast<int>(row.size()) != t) {
      throw ContractError("compute_loss: target length " + std::to_string(row.size()) + " != t = " +
                          std::to_string(t));
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  auto ce = [&](const ad::Tensor<T>& logits) { return ad::cross_entropy(ad::reshape(logits, {batch * t, c}), flat); };

  LossResult<T> out;
  out.branches.emplace_back("s2", ce(trace.logits_s2));
  out.branches.emplace_back("s3", ce(trace.logits_s3));
  if (config.variant == Variant::kFull) {
    if (!trace.has_final()) throw ContractError("compute_loss: full variant trace lacks final logits");
    out.branches.emplace_back("final", ce(trace.logits_final));
  }
  out.total = out.branches[0].second;
  for (std::size_t i = 1; i < out.branches.size(); ++i) out.total = ad::add(out.total, out.branches[i].second);
  return out;
}

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::kS2: return "s2";
    case DecodeMode::kS3: return "s3";
    case DecodeMode::kVote: return "vote";
    case DecodeMode::kFull: return "full";
  }
  return "?";
}

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "s2") return DecodeMode::kS2;
  if (s == "s3") return DecodeMode::kS3;
  if (s == "vote") return DecodeMode::kVote;
  if (s == "full") return DecodeMode::kFull;
  throw ConfigError("unknown decode mode '" + s + "' (expected s2, s3, vote or full)");
}

namespace {

// Softmax over the last axis in double, one row per (batch, slot).
template <typename T>
std::vector<double> row_softmax(const ad::Tensor<T>& logits) {
  const auto c = logits.dim(-1);
  const auto rows = logits.numel() / c;
  std::vector<double> p(static_cast<std::size_t>(logits.numel()));
  auto src = logits.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = src.data() + r * c;
    double mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      p[static_cast<std::size_t>(r * c + j)] = std::exp(static_cast<double>(row[j]) - mx);
      z += p[static_cast<std::size_t>(r * c + j)];
    }
    for (std::int64_t j = 0; j < c; ++j) p[static_cast<std::size_t>(r * c + j)] /= z;
  }
  return p;
}

}  // namespace

template <typename T>
std::vector<TextPrediction> decode(const ForwardTrace<T>& trace, DecodeMode mode, const data::LabelCodec& codec) {
  if (mode == DecodeMode::kFull && !trace.has_final()) {
    throw ContractError("decode: mode 'full' requires a full-variant model");
  }
  std::vector<double> probs;
  if (mode == DecodeMode::kS2) {
    probs = row_softmax(trace.logits_s2);
  } else if (mode == DecodeMode::kS3) {
    probs = row_softmax(trace.logits_s3);
  } else if (mode == DecodeMode::kFull) {
    probs = row_softmax(trace.logits_final);
  } else {
    probs = row_softmax(trace.logits_s2);
    const auto p3 = row_softmax(trace.logits_s3);
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = (probs[i] + p3[i]) / 2.0;
  }

  const auto batch = trace.logits_s2.dim(0), t = trace.logits_s2.dim(1), c = trace.logits_s2.dim(2);
  const auto n = trace.attn_primary.dim(2);
  std::vector<TextPrediction> out(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    auto& pred = out[static_cast<std::size_t>(b)];
    for (std::int64_t i = 0; i < t; ++i) {
      const double* row = probs.data() + (b * t + i) * c;
      pred.probabilities.emplace_back(row, row + c);
      int best = 0;
      for (std::int64_t j = 1; j < c; ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
      pred.indices.push_back(best);
    }
    pred.text = codec.decode(pred.indices);
    auto a1 = trace.attn_primary.data().subspan(static_cast<std::size_t>(b * t * n), static_cast<std::size_t>(t * n));
    auto a2 = trace.attn_secondary.data().subspan(static_cast<std::size_t>(b * t * n), static_cast<std::size_t>(t * n));
    pred.attn_primary.assign(a1.begin(), a1.end());
    pred.attn_secondary.assign(a2.begin(), a2.end());
  }
  return out;
}

std::int64_t Census::total_with_prefix(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& r : rows)
    if (!r.alias && r.name.rfind(prefix, 0) == 0) n += r.count;
  return n;
}

template <typename T>
Census parameter_census(const VstModel<T>& model) {
  Census c;
  for (const auto& p : model.parameters().entries()) {
    c.rows.push_back({p.name, p.tensor.shape(), p.tensor.numel(), p.slot, p.alias});
    if (!p.alias) c.total += p.tensor.numel();
  }
  return c;
}

template class VstModel<float>;
template class VstModel<double>;
template LossResult<float> compute_loss(const ForwardTrace<float>&, const std::vector<std::vector<int>>&,
                                        const ModelConfig&);
template LossResult<double> compute_loss(const ForwardTrace<double>&, const std::vector<std::vector<int>>&,
                                         const ModelConfig&);
template std::vector<TextPrediction> decode(const ForwardTrace<float>&, DecodeMode, const data::LabelCodec&);
template std::vector<TextPrediction> decode(const ForwardTrace<double>&, DecodeMode, const data::LabelCodec&);
template Census parameter_census(const VstModel<float>&);
template Census parameter_census(const VstModel<double>&);

}  // namespace vst
