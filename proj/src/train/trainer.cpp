#include "vst/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vst/autodiff/ops.hpp"
#include "vst/data/manifest.hpp"
#include "vst/data/sampler.hpp"
#include "vst/errors.hpp"
#include "vst/train/checkpoint.hpp"

namespace vst::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(lr_initial > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_final > lr_initial) throw ConfigError("train.lr_final must not exceed train.lr_initial");
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("eval/checkpoint intervals must be >= 0");
  if (target_accuracy < 0.0 || target_accuracy > 1.0) throw ConfigError("train.target_accuracy must be in [0, 1]");
}

nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json branches = nlohmann::json::object();
  for (const auto& [name, v] : r.branches) branches[name] = v;
  return {{"step", r.step}, {"lr", r.lr},           {"loss", r.loss},
          {"branches", branches}, {"grad_norm", r.grad_norm}, {"ema", r.ema}};
}

namespace {

void dump_batch(const std::filesystem::path& dir, const std::vector<const data::Sample*>& samples,
                const std::vector<const data::PreprocessedImage*>& images) {
  std::filesystem::create_directories(dir / "images");
  data::SampleManifest m{dir, {}};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%03zu.pnm", i);
    const auto& p = *images[i];
    data::Image img(p.height, p.width, 3);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
          const float v = p.chw[(static_cast<std::size_t>(c) * p.height + y) * p.width + x];
          img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
        }
    data::write_pnm(dir / name, img);
    m.entries.push_back({name, samples[i]->label});
  }
  data::write_manifest(dir / "batch.tsv", m);
}

}  // namespace

TrainResult train(VstModel<float>& model, Adam<float>& optimizer, const std::vector<TrainSource>& sources,
                  const TrainConfig& config, const TrainHooks& hooks, const data::LoadedDataset* eval) {
  config.validate();
  if (sources.empty()) throw ConfigError("train: no data sources");
  const auto& mcfg = model.config();
  if (config.eval_mode == DecodeMode::kFull && mcfg.variant != Variant::kFull)
    throw ConfigError("eval mode 'full' requires the full variant");

  std::vector<std::size_t> sizes;
  std::vector<double> weights;
  for (const auto& s : sources) {
    if (!s.dataset.missing.empty())
      throw IoError("train source '" + s.name + "': missing image '" + s.dataset.missing.front() + "'");
    sizes.push_back(s.dataset.samples.size());
    weights.push_back(s.weight);
  }
  const data::WeightedSampler sampler(sizes, weights, config.seed);
  const bool augment = config.augment && !config.deterministic;

  // Without augmentation every image is preprocessed exactly once.
  std::vector<std::vector<data::PreprocessedImage>> cache(sources.size());
  if (!augment) {
    for (std::size_t s = 0; s < sources.size(); ++s)
      for (const auto& sample : sources[s].dataset.samples)
        cache[s].push_back(data::preprocess_image(sample.image, mcfg.image_height, mcfg.image_width));
  }

  const std::filesystem::path out_dir = config.checkpoint_dir;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  }
  const data::LoadedDataset& eval_set = eval ? *eval : sources.front().dataset;
  auto save = [&](int step, const std::string& file) {
    const auto path = out_dir / file;
    save_checkpoint(path, model, &optimizer, {{"step", step}, {"train_seed", config.seed}});
    return path;
  };

  PlateauSchedule schedule(config.lr_initial, config.lr_final, config.plateau_patience, config.ema_decay,
                           config.plateau_threshold);
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  auto& store = model.parameters();
  store.zero_grad();

  std::vector<data::PreprocessedImage> augmented;
  std::vector<const data::PreprocessedImage*> images;
  std::vector<const data::Sample*> samples;
  std::vector<std::vector<int>> targets;
  for (int step = 1; step <= config.max_steps; ++step) {
    images.clear();
    samples.clear();
    targets.clear();
    augmented.clear();
    augmented.reserve(static_cast<std::size_t>(config.batch_size));
    for (int i = 0; i < config.batch_size; ++i) {
      const auto k = static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(config.batch_size) +
                     static_cast<std::uint64_t>(i);
      const auto ref = sampler.draw(k);
      const auto& sample = sources[ref.source].dataset.samples[ref.index];
      if (augment) {
        std::mt19937_64 rng(data::splitmix64(config.seed ^ data::splitmix64(k + 0x5151)));
        augmented.push_back(augment_and_preprocess(sample.image, mcfg.image_height, mcfg.image_width,
                                                   config.augmentation, rng));
        images.push_back(&augmented.back());
      } else {
        images.push_back(&cache[ref.source][ref.index]);
      }
      samples.push_back(&sample);
      targets.push_back(sample.target);
    }

    const double lr = schedule.lr();
    StepRecord rec;
    rec.step = step;
    rec.lr = lr;
    bool finite = true;
    try {
      const auto trace = model.forward(stack_images<float>(images),
                                       {true, data::splitmix64(config.seed + static_cast<std::uint64_t>(step))});
      const auto loss = compute_loss(trace, targets, mcfg);
      rec.loss = loss.total.item();
      for (const auto& [name, t] : loss.branches) rec.branches.emplace_back(name, t.item());
      finite = std::isfinite(rec.loss);
      if (finite) {
        ad::backward(loss.total);
        rec.grad_norm = clip_grad_norm(store, config.grad_clip);
        finite = std::isfinite(rec.grad_norm);
      }
    } catch (const NumericError&) {
      finite = false;
    }
    if (!finite) {
      std::string where = "(no checkpoint_dir, batch not saved)";
      if (!out_dir.empty()) {
        const auto dir = out_dir / ("nan_batch_" + std::to_string(step));
        dump_batch(dir, samples, images);
        where = dir.string();
      }
      throw NumericError("non-finite loss or gradient at step " + std::to_string(step) + "; batch dumped to " + where);
    }
    optimizer.step(lr);
    store.zero_grad();
    schedule.observe(rec.loss);
    rec.ema = schedule.ema();

    if (hooks.log) *hooks.log << to_json(rec).dump() << '\n';
    if (hooks.on_step) hooks.on_step(rec);
    result.history.push_back(std::move(rec));
    result.steps_run = step;

    const bool last = step == config.max_steps;
    if ((config.eval_every > 0 && step % config.eval_every == 0) || (last && config.eval_every > 0)) {
      auto report = evaluate(model, eval_set, config.eval_mode);
      if (hooks.log) *hooks.log << nlohmann::json{{"step", step}, {"eval", to_json(report)}}.dump() << '\n';
      if (hooks.on_eval) hooks.on_eval(step, report);
      const bool reached = config.target_accuracy > 0.0 && report.sequence_accuracy >= config.target_accuracy;
      result.evaluations.emplace_back(step, std::move(report));
      if (reached) {
        result.target_reached_step = step;
        break;
      }
    }
    if (!out_dir.empty() && config.checkpoint_every > 0 && step % config.checkpoint_every == 0)
      save(step, "step_" + std::to_string(step) + ".ckpt");
  }
  if (hooks.log) hooks.log->flush();
  if (!out_dir.empty()) result.final_checkpoint = save(result.steps_run, "final.ckpt");
  result.final_lr = schedule.lr();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace vst::train
