#include "vst/model_json.hpp"

#include "vst/errors.hpp"

namespace vst {

namespace {

using nlohmann::json;

json stride_json(const nn::Stride& s) { return json::array({s.h, s.w}); }

nn::Stride parse_stride(const json& j, const std::string& path) {
  auto v = json_value<std::vector<int>>(j, path);
  if (v.size() != 2) throw ConfigError("'" + path + "' must be [h, w]");
  return {v[0], v[1]};
}

template <typename A>
A parse_array4(const json& j, const std::string& path) {
  auto v = json_value<std::vector<int>>(j, path);
  if (v.size() != 4) throw ConfigError("'" + path + "' must have 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("'" + path + "' must be an object");
}

nn::BackboneConfig apply_backbone(nn::BackboneConfig b, const json& patch, const std::string& where) {
  require_object(patch, where);
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = it.key(), path = where + "." + key;
    if (key == "in_channels") b.in_channels = json_value<int>(*it, path);
    else if (key == "stem_channels") b.stem_channels = json_value<int>(*it, path);
    else if (key == "stem_stride") b.stem_stride = parse_stride(*it, path);
    else if (key == "block_counts") b.block_counts = parse_array4<std::array<int, 4>>(*it, path);
    else if (key == "channels") b.channels = parse_array4<std::array<int, 4>>(*it, path);
    else if (key == "strides") {
      if (!it->is_array() || it->size() != 4) throw ConfigError("'" + path + "' must have 4 [h, w] pairs");
      for (std::size_t i = 0; i < 4; ++i) b.strides[i] = parse_stride((*it)[i], path);
    } else if (key == "output_dim") b.output_dim = json_value<int>(*it, path);
    else throw ConfigError("unknown key '" + path + "'");
  }
  return b;
}

}  // namespace

json to_json(const ModelConfig& c) {
  json strides = json::array();
  for (const auto& s : c.backbone.strides) strides.push_back(stride_json(s));
  return json{{"variant", to_string(c.variant)},
              {"d", c.d},
              {"num_heads", c.num_heads},
              {"ffn_dim", c.ffn_dim},
              {"layers_v", c.layers_v},
              {"layers_i", c.layers_i},
              {"layers_s", c.layers_s},
              {"max_len", c.max_len},
              {"num_classes", c.num_classes},
              {"share_classifier_heads", c.share_classifier_heads},
              {"dropout", c.dropout},
              {"image_height", c.image_height},
              {"image_width", c.image_width},
              {"init_seed", c.init_seed},
              {"backbone",
               {{"in_channels", c.backbone.in_channels},
                {"stem_channels", c.backbone.stem_channels},
                {"stem_stride", stride_json(c.backbone.stem_stride)},
                {"block_counts", c.backbone.block_counts},
                {"channels", c.backbone.channels},
                {"strides", strides},
                {"output_dim", c.backbone.output_dim}}}};
}

ModelConfig apply_json(ModelConfig c, const json& patch, const std::string& where) {
  require_object(patch, where);
  // A preset key resets the base before the other keys apply.
  if (patch.contains("preset")) c = ModelConfig::preset(json_value<std::string>(patch["preset"], where + ".preset"));
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = it.key(), path = where + "." + key;
    if (key == "preset") continue;
    if (key == "variant") c.variant = parse_variant(json_value<std::string>(*it, path));
    else if (key == "d") c.d = json_value<int>(*it, path);
    else if (key == "num_heads") c.num_heads = json_value<int>(*it, path);
    else if (key == "ffn_dim") c.ffn_dim = json_value<int>(*it, path);
    else if (key == "layers_v") c.layers_v = json_value<int>(*it, path);
    else if (key == "layers_i") c.layers_i = json_value<int>(*it, path);
    else if (key == "layers_s") c.layers_s = json_value<int>(*it, path);
    else if (key == "max_len") c.max_len = json_value<int>(*it, path);
    else if (key == "num_classes") c.num_classes = json_value<int>(*it, path);
    else if (key == "share_classifier_heads") c.share_classifier_heads = json_value<bool>(*it, path);
    else if (key == "dropout") c.dropout = json_value<double>(*it, path);
    else if (key == "image_height") c.image_height = json_value<int>(*it, path);
    else if (key == "image_width") c.image_width = json_value<int>(*it, path);
    else if (key == "init_seed") c.init_seed = json_value<std::uint64_t>(*it, path);
    else if (key == "backbone") c.backbone = apply_backbone(c.backbone, *it, path);
    else throw ConfigError("unknown key '" + path + "'");
  }
  return c;
}

}  // namespace vst
