#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vst/align.hpp"
#include "vst/autodiff/tensor.hpp"
#include "vst/data/codec.hpp"
#include "vst/nn/backbone.hpp"
#include "vst/nn/classifier.hpp"
#include "vst/nn/module.hpp"
#include "vst/nn/transformer.hpp"

namespace vst {

// basic: no semantic-fusion module, two losses. full: with it, three losses.
enum class Variant { kBasic, kFull };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  int d = 512;
  int num_heads = 8;
  int ffn_dim = 2048;
  int layers_v = 3;
  int layers_i = 3;
  int layers_s = 3;
  int max_len = 25;  // t
  int num_classes = data::LabelCodec::kNumClasses;
  Variant variant = Variant::kFull;
  nn::BackboneConfig backbone = nn::BackboneConfig::full_preset();
  bool share_classifier_heads = true;
  double dropout = 0.1;
  int image_height = 48;
  int image_width = 160;
  std::uint64_t init_seed = 1;

  static ModelConfig full_preset();
  // d=64, one layer per module, 24x80 input, t=8.
  static ModelConfig toy_preset();
  // d=8, heads=2, t=4, 16x24 input (n=12); for finite-difference checks.
  static ModelConfig tiny_preset();
  static ModelConfig preset(const std::string& name);

  int feature_height() const;
  int feature_width() const;
  int sequence_length() const { return feature_height() * feature_width(); }  // n
  nn::TransformerBlockConfig block_config() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Every intermediate of one forward pass. Shapes use B (batch), n (visual
// tokens), t (character slots), C (classes).
template <typename T>
struct ForwardTrace {
  ad::Tensor<T> feature_map;     // B x d x h x w
  ad::Tensor<T> v1;              // B x n x d, primary visual
  ad::Tensor<T> s1;              // B x t x d, primary semantic
  ad::Tensor<T> v2;              // B x n x d, secondary visual
  ad::Tensor<T> s2;              // B x t x d, secondary semantic
  ad::Tensor<T> s3;              // B x t x d, tertiary semantic
  ad::Tensor<T> logits_s2;       // B x t x C
  ad::Tensor<T> logits_s3;       // B x t x C
  ad::Tensor<T> logits_final;    // B x t x C, full variant only
  ad::Tensor<T> attn_primary;    // B x t x n
  ad::Tensor<T> attn_secondary;  // B x t x n
  std::vector<ad::Tensor<T>> interaction_attention;  // per layer, B x heads x (t+n) x (t+n)
  std::vector<ad::Tensor<T>> semantic_attention;     // per layer, B x heads x 2t x 2t

  bool has_final() const { return logits_final.defined(); }
};

template <typename T>
struct InteractResult {
  ad::Tensor<T> s2;
  ad::Tensor<T> v2;
  std::vector<ad::Tensor<T>> attention;
};

template <typename T>
struct LossResult {
  ad::Tensor<T> total;
  std::vector<std::pair<std::string, ad::Tensor<T>>> branches;  // "s2", "s3"[, "final"]
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

template <typename T>
class VstModel {
 public:
  explicit VstModel(ModelConfig config);

  VstModel(const VstModel&) = delete;
  VstModel& operator=(const VstModel&) = delete;
  VstModel(VstModel&&) = default;
  VstModel& operator=(VstModel&&) = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& parameters() { return *store_; }
  const nn::ParameterStore<T>& parameters() const { return *store_; }

  // Both call sites of the alignment module. Same storage by construction.
  const AlignmentWeights<T>& primary_alignment() const { return align_primary_; }
  const AlignmentWeights<T>& secondary_alignment() const { return align_secondary_; }

  // images: B x 3 x H x W in [-1, 1].
  ForwardTrace<T> forward(const ad::Tensor<T>& images, const ForwardOptions& options = {}) const;

  ad::Tensor<T> visual_encode(const ad::Tensor<T>& feature_map, const nn::ForwardContext& ctx = {}) const;
  InteractResult<T> interact(const ad::Tensor<T>& s1, const ad::Tensor<T>& v1,
                             const nn::ForwardContext& ctx = {}) const;
  // Requires the full variant.
  ad::Tensor<T> semantic_fuse(const ad::Tensor<T>& s2, const ad::Tensor<T>& s3, const nn::ForwardContext& ctx = {},
                              std::vector<ad::Tensor<T>>* attention = nullptr) const;

  ad::Tensor<T> classify_s2(const ad::Tensor<T>& s2) const { return head_s2_.forward(s2); }
  ad::Tensor<T> classify_s3(const ad::Tensor<T>& s3) const;

 private:
  ModelConfig config_;
  std::unique_ptr<nn::ParameterStore<T>> store_;
  std::unique_ptr<nn::Backbone<T>> backbone_;
  std::unique_ptr<nn::TransformerStack<T>> visual_;
  AlignmentWeights<T> align_primary_;
  AlignmentWeights<T> align_secondary_;
  ad::Tensor<T> semantic_position_;  // t x d, learned
  ad::Tensor<T> semantic_domain_;    // d
  ad::Tensor<T> visual_domain_;      // d
  ad::Tensor<T> visual_pe_;          // n x d, fixed
  std::unique_ptr<nn::TransformerStack<T>> interaction_;
  nn::ClassifierHead<T> head_s2_;
  nn::ClassifierHead<T> head_s3_;  // only when heads are not shared
  std::unique_ptr<nn::TransformerStack<T>> semantic_;
  ad::Tensor<T> semantic_pe_;  // 2t x d, fixed
  nn::ClassifierHead<T> head_final_;
};

// targets: one index array of length t per batch element.
template <typename T>
LossResult<T> compute_loss(const ForwardTrace<T>& trace, const std::vector<std::vector<int>>& targets,
                           const ModelConfig& config);

enum class DecodeMode { kS2, kS3, kVote, kFull };

std::string to_string(DecodeMode m);
DecodeMode parse_decode_mode(const std::string& s);

struct TextPrediction {
  std::vector<std::vector<double>> probabilities;  // t x C
  std::vector<int> indices;                        // argmax per slot
  std::string text;
  std::vector<double> attn_primary;    // t x n
  std::vector<double> attn_secondary;  // t x n
};

// Pure function of the trace: no second forward pass, no feedback of
// decoded characters.
template <typename T>
std::vector<TextPrediction> decode(const ForwardTrace<T>& trace, DecodeMode mode, const data::LabelCodec& codec);

struct CensusRow {
  std::string name;
  ad::Shape shape;
  std::int64_t count = 0;
  std::size_t storage_slot = 0;
  bool alias = false;
};

struct Census {
  std::vector<CensusRow> rows;
  std::int64_t total = 0;  // every storage once

  std::int64_t total_with_prefix(const std::string& prefix) const;
};

template <typename T>
Census parameter_census(const VstModel<T>& model);

// Name prefix of the semantic-fusion module's parameters.
inline constexpr const char* kSemanticModulePrefix = "semantic.";

}  // namespace vst
