#include "vst/app/run_config.hpp"

#include "vst/data/image.hpp"
#include "vst/errors.hpp"
#include "vst/model_json.hpp"

namespace vst::app {

using nlohmann::json;

json to_json(const train::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"lr_initial", c.lr_initial},
          {"lr_final", c.lr_final},
          {"plateau_patience", c.plateau_patience},
          {"ema_decay", c.ema_decay},
          {"plateau_threshold", c.plateau_threshold},
          {"grad_clip", c.grad_clip},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"augment", c.augment},
          {"augment_scale_jitter", c.augmentation.scale_jitter},
          {"augment_noise_std", c.augmentation.noise_std},
          {"target_accuracy", c.target_accuracy},
          {"eval_mode", to_string(c.eval_mode)}};
}

json to_json(const RunConfig& c) {
  json sources = json::array();
  for (const auto& s : c.train_sources) sources.push_back({{"manifest", s.manifest}, {"weight", s.weight}});
  return {{"model", vst::to_json(c.model)},
          {"train", to_json(c.train)},
          {"data", {{"train", sources}, {"eval", c.eval_manifest}}},
          {"output_dir", c.output_dir}};
}

train::TrainConfig apply_json(train::TrainConfig c, const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = it.key(), path = where + "." + key;
    if (key == "batch_size") c.batch_size = json_value<int>(*it, path);
    else if (key == "max_steps") c.max_steps = json_value<int>(*it, path);
    else if (key == "lr_initial") c.lr_initial = json_value<double>(*it, path);
    else if (key == "lr_final") c.lr_final = json_value<double>(*it, path);
    else if (key == "plateau_patience") c.plateau_patience = json_value<int>(*it, path);
    else if (key == "ema_decay") c.ema_decay = json_value<double>(*it, path);
    else if (key == "plateau_threshold") c.plateau_threshold = json_value<double>(*it, path);
    else if (key == "grad_clip") c.grad_clip = json_value<double>(*it, path);
    else if (key == "eval_every") c.eval_every = json_value<int>(*it, path);
    else if (key == "checkpoint_every") c.checkpoint_every = json_value<int>(*it, path);
    else if (key == "seed") c.seed = json_value<std::uint64_t>(*it, path);
    else if (key == "deterministic") c.deterministic = json_value<bool>(*it, path);
    else if (key == "augment") c.augment = json_value<bool>(*it, path);
    else if (key == "augment_scale_jitter") c.augmentation.scale_jitter = json_value<double>(*it, path);
    else if (key == "augment_noise_std") c.augmentation.noise_std = json_value<double>(*it, path);
    else if (key == "target_accuracy") c.target_accuracy = json_value<double>(*it, path);
    else if (key == "eval_mode") c.eval_mode = parse_decode_mode(json_value<std::string>(*it, path));
    else throw ConfigError("unknown key '" + path + "'");
  }
  return c;
}

namespace {

std::vector<DataSource> parse_sources(const json& j) {
  // A bare string is one source of weight 1.
  if (j.is_string()) return {{j.get<std::string>(), 1.0}};
  if (!j.is_array()) throw ConfigError("'data.train' must be a manifest path or a list of sources");
  std::vector<DataSource> out;
  for (const auto& s : j) {
    if (s.is_string()) {
      out.push_back({s.get<std::string>(), 1.0});
      continue;
    }
    if (!s.is_object()) throw ConfigError("'data.train' entries must be objects");
    DataSource src;
    for (auto it = s.begin(); it != s.end(); ++it) {
      if (it.key() == "manifest") src.manifest = json_value<std::string>(*it, "data.train.manifest");
      else if (it.key() == "weight") src.weight = json_value<double>(*it, "data.train.weight");
      else throw ConfigError("unknown key 'data.train." + it.key() + "'");
    }
    if (src.manifest.empty()) throw ConfigError("'data.train' entry without a manifest");
    out.push_back(src);
  }
  return out;
}

}  // namespace

RunConfig apply_json(RunConfig c, const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "model") c.model = vst::apply_json(c.model, *it, "model");
    else if (key == "train") c.train = apply_json(c.train, *it, "train");
    else if (key == "output_dir") c.output_dir = json_value<std::string>(*it, key);
    else if (key == "data") {
      if (!it->is_object()) throw ConfigError("'data' must be an object");
      for (auto d = it->begin(); d != it->end(); ++d) {
        if (d.key() == "train") c.train_sources = parse_sources(*d);
        else if (d.key() == "eval") c.eval_manifest = json_value<std::string>(*d, "data.eval");
        else throw ConfigError("unknown key 'data." + d.key() + "'");
      }
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  return c;
}

void apply_assignment(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must be key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

json read_config_document(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw ConfigError("config file not found: '" + file.string() + "'");
  json doc = json::parse(data::read_file(file), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config file '" + file.string() + "' is not a JSON object");
  const auto dir = std::filesystem::absolute(file).parent_path();
  auto absolutize = [&](json& j) {
    if (j.is_string() && !j.get<std::string>().empty()) j = (dir / j.get<std::string>()).lexically_normal().string();
  };
  if (doc.contains("output_dir")) absolutize(doc["output_dir"]);
  if (doc.contains("data") && doc["data"].is_object()) {
    auto& d = doc["data"];
    if (d.contains("eval")) absolutize(d["eval"]);
    if (d.contains("train")) {
      auto& t = d["train"];
      if (t.is_string()) absolutize(t);
      if (t.is_array())
        for (auto& s : t) {
          if (s.is_string()) absolutize(s);
          else if (s.is_object() && s.contains("manifest")) absolutize(s["manifest"]);
        }
    }
  }
  return doc;
}

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& assignments) {
  json doc = file ? read_config_document(*file) : json::object();
  for (const auto& a : assignments) apply_assignment(doc, a);
  RunConfig c = apply_json(RunConfig{}, doc);
  c.model.validate();
  c.train.validate();
  for (const auto& s : c.train_sources)
    if (!(s.weight > 0.0)) throw ConfigError("data source weights must be positive");
  return c;
}

}  // namespace vst::app
