#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vst/data/dataset.hpp"
#include "vst/model.hpp"
#include "vst/train/batch.hpp"
#include "vst/train/evaluate.hpp"
#include "vst/train/optimizer.hpp"

namespace vst::train {

struct TrainConfig {
  int batch_size = 32;
  int max_steps = 2000;
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  int plateau_patience = 200;
  double ema_decay = 0.99;
  double plateau_threshold = 1e-3;  // relative EMA improvement that resets patience
  double grad_clip = 5.0;
  int eval_every = 100;             // 0 disables periodic evaluation
  int checkpoint_every = 0;         // 0: final checkpoint only
  std::uint64_t seed = 1;
  std::string checkpoint_dir;       // empty: no files written
  bool deterministic = true;        // forces augmentation off
  bool augment = false;
  Augmentation augmentation;
  // Stop once the periodic evaluation reaches this sequence accuracy; 0 = off.
  double target_accuracy = 0.0;
  DecodeMode eval_mode = DecodeMode::kVote;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainSource {
  std::string name;
  data::LoadedDataset dataset;
  double weight = 1.0;
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> branches;
  double grad_norm = 0.0;
  double ema = 0.0;
};

struct TrainResult {
  int steps_run = 0;
  std::vector<StepRecord> history;
  std::vector<std::pair<int, EvalReport>> evaluations;
  int target_reached_step = -1;  // first evaluated step meeting target_accuracy
  double final_lr = 0.0;
  std::filesystem::path final_checkpoint;
  double seconds = 0.0;
};

struct TrainHooks {
  std::ostream* log = nullptr;  // JSON lines
  std::function<void(const StepRecord&)> on_step;
  std::function<void(int, const EvalReport&)> on_eval;
};

nlohmann::json to_json(const StepRecord& record);

// Sample -> forward -> loss -> backward -> clip -> Adam -> zero grads, with
// the plateau schedule fed by each step's loss. `eval` defaults to the first
// source. A non-finite loss or gradient writes the batch under
// checkpoint_dir/nan_batch_<step> and throws NumericError.
TrainResult train(VstModel<float>& model, Adam<float>& optimizer, const std::vector<TrainSource>& sources,
                  const TrainConfig& config, const TrainHooks& hooks = {},
                  const data::LoadedDataset* eval = nullptr);

}  // namespace vst::train
