#include "vst/app/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <optional>

#include "vst/app/attention_dump.hpp"
#include "vst/app/run_config.hpp"
#include "vst/data/dataset.hpp"
#include "vst/data/glyph.hpp"
#include "vst/data/manifest.hpp"
#include "vst/errors.hpp"
#include "vst/model_json.hpp"
#include "vst/train/checkpoint.hpp"
#include "vst/train/evaluate.hpp"
#include "vst/train/trainer.hpp"

namespace vst::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("checkpoint not found: '" + path.string() + "'");
}

// ---- gen-data ----

struct GenDataArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> num_samples;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (!fs::is_regular_file(a.spec)) throw ConfigError("spec file not found: '" + a.spec + "'");
  const json doc = json::parse(data::read_file(a.spec), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("spec file '" + a.spec + "' is not a JSON object");
  data::GlyphDatasetSpec spec;
  try {
    spec = doc.get<data::GlyphDatasetSpec>();
  } catch (const json::exception& e) {
    throw ConfigError("spec file '" + a.spec + "': " + e.what());
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.num_samples) spec.num_samples = *a.num_samples;
  const auto manifest = data::generate_glyph_dataset(spec, a.out);
  out << "manifest: " << (fs::path(a.out) / data::kManifestFileName).string() << "\n";
  out << "samples: " << manifest.size() << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::vector<std::string> assignments;
  std::string preset, variant, out, eval_manifest;
  std::vector<std::string> manifests;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_steps, batch_size;
  std::optional<double> lr, target_accuracy;
};

data::LoadedDataset load_source(const std::string& manifest_path, const ModelConfig& cfg) {
  const auto manifest = data::read_manifest(manifest_path);
  if (manifest.empty()) throw ConfigError("manifest '" + manifest_path + "' has no records");
  return data::load_dataset(manifest, data::LabelCodec(cfg.max_len));
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  // Dedicated flags are applied after --set, so they win over both.
  auto assignments = a.assignments;
  auto quoted = [](const std::string& s) { return json(s).dump(); };
  if (!a.preset.empty()) assignments.push_back("model.preset=" + quoted(a.preset));
  if (!a.variant.empty()) assignments.push_back("model.variant=" + quoted(a.variant));
  if (a.seed) assignments.push_back("train.seed=" + std::to_string(*a.seed));
  if (a.max_steps) assignments.push_back("train.max_steps=" + std::to_string(*a.max_steps));
  if (a.batch_size) assignments.push_back("train.batch_size=" + std::to_string(*a.batch_size));
  if (a.lr) assignments.push_back("train.lr_initial=" + json(*a.lr).dump());
  if (a.target_accuracy) assignments.push_back("train.target_accuracy=" + json(*a.target_accuracy).dump());
  if (!a.out.empty()) assignments.push_back("output_dir=" + quoted(fs::absolute(a.out).string()));
  if (!a.eval_manifest.empty()) assignments.push_back("data.eval=" + quoted(fs::absolute(a.eval_manifest).string()));
  if (!a.manifests.empty()) {
    json list = json::array();
    for (const auto& m : a.manifests) list.push_back(fs::absolute(m).string());
    assignments.push_back("data.train=" + list.dump());
  }
  const std::optional<fs::path> file = a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config);
  RunConfig rc = resolve_run_config(file, assignments);
  if (rc.train_sources.empty()) throw ConfigError("no training data: set data.train or pass --manifest");
  if (rc.train.eval_mode == DecodeMode::kFull && rc.model.variant == Variant::kBasic) {
    rc.train.eval_mode = DecodeMode::kVote;
  }

  const fs::path dir = rc.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  data::write_file(dir / "config.resolved.json", to_json(rc).dump(2) + "\n");

  std::vector<train::TrainSource> sources;
  for (const auto& s : rc.train_sources) sources.push_back({s.manifest, load_source(s.manifest, rc.model), s.weight});
  std::optional<data::LoadedDataset> eval_set;
  if (!rc.eval_manifest.empty()) eval_set = load_source(rc.eval_manifest, rc.model);

  VstModel<float> model(rc.model);
  train::Adam<float> adam(model.parameters());
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write '" + (dir / "train_log.jsonl").string() + "'");
  auto tc = rc.train;
  tc.checkpoint_dir = dir.string();
  train::TrainHooks hooks;
  hooks.log = &log;
  hooks.on_eval = [&out](int step, const train::EvalReport& r) {
    char line[160];
    std::snprintf(line, sizeof(line), "step %6d  %s seq_acc %.4f  char_acc %.4f\n", step, to_string(r.mode).c_str(),
                  r.sequence_accuracy, r.char_accuracy);
    out << line << std::flush;
  };
  const auto result = train::train(model, adam, sources, tc, hooks, eval_set ? &*eval_set : nullptr);

  const auto final_report = result.evaluations.empty()
                                ? train::evaluate(model, eval_set ? *eval_set : sources.front().dataset, tc.eval_mode)
                                : result.evaluations.back().second;
  data::write_file(dir / "eval_report.json", train::to_json(final_report).dump(2) + "\n");
  out << "steps: " << result.steps_run << "  final lr: " << result.final_lr << "  seconds: " << result.seconds << "\n";
  if (!result.history.empty()) out << "final loss: " << result.history.back().loss << "\n";
  out << train::format_table(final_report);
  out << "checkpoint: " << result.final_checkpoint.string() << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint, manifest, mode = "vote", json_out;
  int batch_size = 32;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto mode = parse_decode_mode(a.mode);
  require_checkpoint(a.checkpoint);
  const auto cfg = train::read_checkpoint_config(a.checkpoint);
  if (mode == DecodeMode::kFull && cfg.variant != Variant::kFull)
    throw ConfigError("mode 'full' needs a full-variant checkpoint; this one is " + to_string(cfg.variant));
  auto loaded = train::load_checkpoint<float>(a.checkpoint);
  const auto manifest = data::read_manifest(a.manifest);
  const auto report = train::evaluate(*loaded.model, manifest, mode, a.batch_size);
  out << train::format_table(report);
  if (!a.json_out.empty()) data::write_file(a.json_out, train::to_json(report).dump(2) + "\n");
  return kExitOk;
}

// ---- infer ----

struct InferArgs {
  std::string checkpoint, image, mode, dump_dir;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  require_checkpoint(a.checkpoint);
  const auto cfg = train::read_checkpoint_config(a.checkpoint);
  const auto mode =
      a.mode.empty() ? (cfg.variant == Variant::kFull ? DecodeMode::kFull : DecodeMode::kVote) : parse_decode_mode(a.mode);
  if (mode == DecodeMode::kFull && cfg.variant != Variant::kFull)
    throw ConfigError("mode 'full' needs a full-variant checkpoint");
  const auto image = data::read_pnm(a.image);
  auto loaded = train::load_checkpoint<float>(a.checkpoint);
  const auto pre = data::preprocess_image(image, cfg.image_height, cfg.image_width);

  ad::NoGradGuard no_grad;
  const data::PreprocessedImage* ptr = &pre;
  const auto trace = loaded.model->forward(train::stack_images<float>(std::span(&ptr, 1)));
  const auto prediction = decode(trace, mode, data::LabelCodec(cfg.max_len)).front();
  out << prediction.text << "\n";
  if (!a.dump_dir.empty()) {
    const auto maps = attention_maps(trace, cfg, prediction.text);
    write_attention_maps(a.dump_dir, maps, pre);
    out << "attention maps: " << maps.size() << " files in " << a.dump_dir << "\n";
  }
  return kExitOk;
}

// ---- census ----

struct CensusArgs {
  std::string config, checkpoint, preset;
  std::vector<std::string> assignments;
};

std::string format_census(const Census& census) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof(line), "%-44s %-18s %12s %6s\n", "name", "shape", "count", "slot");
  s += line;
  for (const auto& r : census.rows) {
    std::snprintf(line, sizeof(line), "%-44s %-18s %12lld %6zu%s\n", r.name.c_str(), ad::shape_str(r.shape).c_str(),
                  static_cast<long long>(r.count), r.storage_slot, r.alias ? "  (shared, counted once)" : "");
    s += line;
  }
  s += "total parameters: " + std::to_string(census.total) + "\n";
  return s;
}

int cmd_census(const CensusArgs& a, std::ostream& out) {
  const int sources = !a.config.empty() + !a.checkpoint.empty() + !a.preset.empty();
  if (sources != 1) throw ConfigError("census needs exactly one of --config, --checkpoint or --preset");
  ModelConfig cfg;
  if (!a.checkpoint.empty()) {
    require_checkpoint(a.checkpoint);
    cfg = train::read_checkpoint_config(a.checkpoint);
  } else {
    json doc = a.config.empty() ? json{{"model", {{"preset", a.preset}}}} : read_config_document(a.config);
    for (const auto& s : a.assignments) apply_assignment(doc, s);
    cfg = apply_json(RunConfig{}, doc).model;
  }
  cfg.validate();

  const VstModel<float> model(cfg);
  const auto census = parameter_census(model);
  out << "variant: " << to_string(cfg.variant) << "\n" << format_census(census);
  if (a.checkpoint.empty()) {
    ModelConfig full = cfg, basic = cfg;
    full.variant = Variant::kFull;
    basic.variant = Variant::kBasic;
    const auto full_census = full.variant == cfg.variant ? census : parameter_census(VstModel<float>(full));
    const auto basic_census = basic.variant == cfg.variant ? census : parameter_census(VstModel<float>(basic));
    const auto delta = full_census.total - basic_census.total;
    const auto module_s = full_census.total_with_prefix(kSemanticModulePrefix);
    out << "total full: " << full_census.total << "\n";
    out << "total basic: " << basic_census.total << "\n";
    out << "delta full-basic: " << delta << "\n";
    out << "semantic module parameters: " << module_s << (delta == module_s ? " (matches delta)" : " (MISMATCH)")
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual-semantic transformer text recognizer", "vst"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic glyph-text dataset");
  gen_cmd->add_option("--spec", gen.spec, "Dataset spec (JSON)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");
  gen_cmd->add_option("--num-samples", gen.num_samples, "Override the sample count");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "Run config (JSON)");
  train_cmd->add_option("--set", tr.assignments, "Override a config key, e.g. train.seed=3 (repeatable)");
  train_cmd->add_option("--preset", tr.preset, "Model preset: full, toy or tiny");
  train_cmd->add_option("--variant", tr.variant, "basic or full");
  train_cmd->add_option("--seed", tr.seed, "Training seed");
  train_cmd->add_option("--max-steps", tr.max_steps, "Step budget");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--lr", tr.lr, "Initial learning rate");
  train_cmd->add_option("--target-accuracy", tr.target_accuracy, "Stop once evaluation reaches this accuracy");
  train_cmd->add_option("--manifest", tr.manifests, "Training manifest (repeatable; replaces data.train)");
  train_cmd->add_option("--eval-manifest", tr.eval_manifest, "Evaluation manifest");
  train_cmd->add_option("--out", tr.out, "Output directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "Manifest file")->required();
  eval_cmd->add_option("--mode", ev.mode, "Decode mode: s2, s3, vote or full");
  eval_cmd->add_option("--batch-size", ev.batch_size, "Evaluation batch size");
  eval_cmd->add_option("--json", ev.json_out, "Also write the report as JSON");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Recognize the text in one image");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--image", inf.image, "PNM/PGM image")->required();
  infer_cmd->add_option("--mode", inf.mode, "Decode mode (default: full, or vote for basic models)");
  infer_cmd->add_option("--dump-attention", inf.dump_dir, "Write attention overlays to this directory");

  CensusArgs cen;
  auto* census_cmd = app.add_subcommand("census", "List parameters and totals");
  census_cmd->add_option("--config", cen.config, "Run config (JSON)");
  census_cmd->add_option("--checkpoint", cen.checkpoint, "Checkpoint file");
  census_cmd->add_option("--preset", cen.preset, "Model preset: full, toy or tiny");
  census_cmd->add_option("--set", cen.assignments, "Override a config key (repeatable)");

  std::vector<std::string> argv_storage{"vst"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (infer_cmd->parsed()) return cmd_infer(inf, out);
    if (census_cmd->parsed()) return cmd_census(cen, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace vst::app
