#include "vst/train/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "vst/errors.hpp"
#include "vst/train/batch.hpp"

namespace vst::train {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double char_accuracy(std::string_view prediction, std::string_view label) {
  const auto p = data::normalize_text(prediction), l = data::normalize_text(label);
  const std::size_t len = std::max(p.size(), l.size());
  if (len == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(p, l)) / static_cast<double>(len);
}

bool sequence_match(std::string_view prediction, std::string_view label) {
  return data::normalize_text(prediction) == data::normalize_text(label);
}

const ModeAccuracy& EvalReport::branch(DecodeMode m) const {
  for (const auto& b : branches)
    if (b.mode == m) return b;
  throw ContractError("no accuracy recorded for mode " + to_string(m));
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json branches = nlohmann::json::object();
  for (const auto& b : r.branches)
    branches[to_string(b.mode)] = {{"sequence_accuracy", b.sequence_accuracy}, {"char_accuracy", b.char_accuracy}};
  return {{"mode", to_string(r.mode)},
          {"total", r.total},
          {"evaluated", r.evaluated},
          {"missing", r.missing},
          {"sequence_accuracy", r.sequence_accuracy},
          {"char_accuracy", r.char_accuracy},
          {"branches", branches}};
}

std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %10s %10s\n", "mode", "seq_acc", "char_acc");
  os << line;
  for (const auto& b : r.branches) {
    std::snprintf(line, sizeof(line), "%-6s %10.4f %10.4f%s\n", to_string(b.mode).c_str(), b.sequence_accuracy,
                  b.char_accuracy, b.mode == r.mode ? "  *" : "");
    os << line;
  }
  os << "samples: " << r.evaluated << " evaluated, " << r.missing.size() << " missing, " << r.total << " total\n";
  return os.str();
}

template <typename T>
EvalReport evaluate(const VstModel<T>& model, const data::LoadedDataset& dataset, DecodeMode mode,
                    int batch_size) {
  const auto& cfg = model.config();
  const bool full = cfg.variant == Variant::kFull;
  if (mode == DecodeMode::kFull && !full) throw ContractError("decode mode 'full' requires a full-variant model");
  if (dataset.samples.empty() && dataset.missing.empty()) throw ConfigError("evaluate: empty dataset");
  if (batch_size < 1) throw ConfigError("evaluate: batch size must be >= 1");

  std::vector<DecodeMode> modes{DecodeMode::kS2, DecodeMode::kS3, DecodeMode::kVote};
  if (full) modes.push_back(DecodeMode::kFull);
  std::vector<double> seq(modes.size(), 0.0), chr(modes.size(), 0.0);

  data::LabelCodec codec(cfg.max_len);
  ad::NoGradGuard no_grad;
  std::vector<data::PreprocessedImage> pre;
  for (std::size_t start = 0; start < dataset.samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(dataset.samples.size(), start + static_cast<std::size_t>(batch_size));
    pre.clear();
    for (std::size_t i = start; i < end; ++i)
      pre.push_back(data::preprocess_image(dataset.samples[i].image, cfg.image_height, cfg.image_width));
    std::vector<const data::PreprocessedImage*> ptrs;
    for (const auto& p : pre) ptrs.push_back(&p);
    const auto trace = model.forward(stack_images<T>(ptrs));
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const auto preds = decode(trace, modes[m], codec);
      for (std::size_t i = start; i < end; ++i) {
        const auto& label = dataset.samples[i].label;
        seq[m] += sequence_match(preds[i - start].text, label) ? 1.0 : 0.0;
        chr[m] += char_accuracy(preds[i - start].text, label);
      }
    }
  }

  EvalReport r;
  r.mode = mode;
  r.total = dataset.samples.size() + dataset.missing.size();
  r.evaluated = dataset.samples.size();
  r.missing = dataset.missing;
  const double n = r.evaluated ? static_cast<double>(r.evaluated) : 1.0;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    r.branches.push_back({modes[m], seq[m] / n, chr[m] / n});
    if (modes[m] == mode) {
      r.sequence_accuracy = seq[m] / n;
      r.char_accuracy = chr[m] / n;
    }
  }
  return r;
}

template <typename T>
EvalReport evaluate(const VstModel<T>& model, const data::SampleManifest& manifest, DecodeMode mode,
                    int batch_size) {
  if (manifest.empty()) throw ConfigError("evaluate: manifest has no records");
  return evaluate(model, data::load_dataset(manifest, data::LabelCodec(model.config().max_len)), mode, batch_size);
}

template EvalReport evaluate<float>(const VstModel<float>&, const data::LoadedDataset&, DecodeMode, int);
template EvalReport evaluate<double>(const VstModel<double>&, const data::LoadedDataset&, DecodeMode, int);
template EvalReport evaluate<float>(const VstModel<float>&, const data::SampleManifest&, DecodeMode, int);
template EvalReport evaluate<double>(const VstModel<double>&, const data::SampleManifest&, DecodeMode, int);

}  // namespace vst::train
