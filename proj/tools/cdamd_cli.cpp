#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cdamd/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

using namespace cdamd;

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  if (config_path.empty()) return config_with_overrides(nlohmann::json::object(), overrides);
  return load_config(config_path, overrides);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& stage, bool force) {
  ExperimentConfig cfg = resolve_config(config_path, overrides);
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "config.json").string(), to_json(cfg).dump(2) + "\n");
  const CorpusSplit split = split_corpus(cfg);
  write_corpus_dirs(cfg, split);
  const std::vector<std::string> stages =
      stage == "all" ? std::vector<std::string>{"ae", "rvq", "evaluator", "transformer"}
                     : std::vector<std::string>{stage};
  for (const auto& s : stages) {
    const TrainLog log = train_stage(s, cfg, force);
    nlohmann::json line = {{"stage", s},
                           {"epochs", log.epoch_loss.size()},
                           {"final_loss", log.epoch_loss.empty() ? 0.0 : log.last()}};
    std::cout << line.dump() << "\n";
  }
  return 0;
}

int cmd_generate(const std::string& run_dir, const std::string& prompt, int frames,
                 const std::string& sampler, int steps, std::uint64_t seed,
                 const std::string& out_path, bool force) {
  if (!force && fs::exists(out_path))
    throw IoError("refusing to overwrite " + out_path + " (pass --force)");
  LoadedRun run = load_run(run_dir);
  GenerationModels models = run.models();
  GenerationRequest req;
  req.prompt = prompt;
  req.target_frames = frames;
  req.sampler = diffusion_mode_from_string(sampler);
  req.steps = steps;
  req.seed = seed;
  req.literal_ode_sign = run.cfg.literal_ode_sign;
  const MotionSequence motion = generate(req, models);
  save_motion(motion, out_path);
  nlohmann::json line = {{"out", out_path}, {"frames", motion.frames()}, {"seed", seed}};
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_edit(const std::string& run_dir, const std::string& task, const std::string& source_path,
             const std::string& prompt, const std::string& sampler, int steps, std::uint64_t seed,
             const std::string& out_path, bool force) {
  if (!force && fs::exists(out_path))
    throw IoError("refusing to overwrite " + out_path + " (pass --force)");
  LoadedRun run = load_run(run_dir);
  GenerationModels models = run.models();
  const MotionSequence source = load_motion(source_path);
  const MotionSequence edited = edit(source, edit_task_from_string(task), prompt, models,
                                     diffusion_mode_from_string(sampler), steps, seed);
  save_motion(edited, out_path);
  nlohmann::json line = {{"out", out_path}, {"task", task}, {"frames", edited.frames()}};
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& gen_dir, const std::string& ref_dir,
                 const std::string& evaluator_ckpt, int repeats, std::uint64_t seed,
                 const std::string& out_path, const std::string& csv_path) {
  const MetricsReport report = evaluate_dirs(gen_dir, ref_dir, evaluator_ckpt, repeats, seed);
  const std::string json_text = report.to_json().dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, json_text);
  if (!csv_path.empty()) write_text(csv_path, report.to_csv());
  std::cout << json_text;
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               int gen_per_class, int steps, int repeats, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(config_path, overrides);
  AblationOptions opt;
  opt.gen_per_class = gen_per_class;
  opt.steps = steps;
  opt.repeats = repeats;
  const auto rows = run_ablation(cfg, opt);
  const std::string csv = ablation_csv(rows);
  if (!out_path.empty()) write_text(out_path, csv);
  std::cout << csv;
  return 0;
}

int cmd_export_masks(const std::string& kind, int length, const std::string& flags_csv,
                     const std::string& out_path) {
  SequenceLayout layout;
  layout.condition_flags.setZero(length);
  if (!flags_csv.empty()) {
    int i = 0;
    for (std::size_t at = 0; at < flags_csv.size() && i < length; ++i) {
      layout.condition_flags(i) = flags_csv[at] == '1' ? 1 : 0;
      at = flags_csv.find(',', at);
      if (at == std::string::npos) break;
      ++at;
    }
  }
  const MaskMatrix mask = build_latent_mask(mask_kind_from_string(kind), layout);
  if (out_path.ends_with(".csv"))
    write_mask_csv(mask, out_path);
  else
    write_mask_pgm(mask, out_path);
  std::cout << nlohmann::json{{"out", out_path}, {"rows", mask.rows()}, {"cols", mask.cols()}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinate-based dual-constrained autoregressive motion generation"};
  app.require_subcommand(1);

  std::string config_path, stage = "all", run_dir = ".", prompt, out_path, csv_path;
  std::string sampler = "ode", task = "inpaint", source_path, gen_dir, ref_dir, evaluator_ckpt;
  std::string mask_kind = "DCCM", flags_csv;
  std::vector<std::string> overrides;
  int frames = 64, steps = 50, repeats = 20, gen_per_class = 16, mask_length = 16;
  std::uint64_t seed = 0;
  bool force = false;

  auto* train = app.add_subcommand("train", "Train a pipeline stage (ae, rvq, transformer, evaluator, all)");
  train->add_option("--config", config_path, "Experiment config JSON");
  train->add_option("--stage", stage, "Stage to train")->default_val("all");
  train->add_option("--override", overrides, "Config override key=value (dot paths)");
  train->add_flag("--force", force, "Overwrite existing checkpoints");

  auto* gen = app.add_subcommand("generate", "Generate motion from a text prompt");
  gen->add_option("--run", run_dir, "Run directory with config.json and checkpoints")->required();
  gen->add_option("--prompt", prompt, "Text prompt")->required();
  gen->add_option("--frames", frames, "Target frame count")->default_val(64);
  gen->add_option("--sampler", sampler, "Sampler: ddpm or ode")->default_val("ode");
  gen->add_option("--steps", steps, "Sampling steps")->default_val(50);
  gen->add_option("--seed", seed, "Random seed")->default_val(0);
  gen->add_option("--out", out_path, "Output .cdm path")->required();
  gen->add_flag("--force", force, "Overwrite existing output");

  auto* ed = app.add_subcommand("edit", "Temporal editing of an existing motion");
  ed->add_option("--run", run_dir, "Run directory")->required();
  ed->add_option("--task", task, "inpaint, outpaint, prefix or suffix")->required();
  ed->add_option("--source", source_path, "Source .cdm motion")->required();
  ed->add_option("--prompt", prompt, "Text prompt")->required();
  ed->add_option("--sampler", sampler, "Sampler: ddpm or ode")->default_val("ode");
  ed->add_option("--steps", steps, "Sampling steps")->default_val(50);
  ed->add_option("--seed", seed, "Random seed")->default_val(0);
  ed->add_option("--out", out_path, "Output .cdm path")->required();
  ed->add_flag("--force", force, "Overwrite existing output");

  auto* ev = app.add_subcommand("evaluate", "Metric suite over generated vs reference sets");
  ev->add_option("--gen", gen_dir, "Generated corpus dir (manifest.json)")->required();
  ev->add_option("--ref", ref_dir, "Reference corpus dir")->required();
  ev->add_option("--evaluator", evaluator_ckpt, "Evaluator checkpoint")->required();
  ev->add_option("--repeats", repeats, "Evaluation repeats")->default_val(20);
  ev->add_option("--seed", seed, "Resampling seed")->default_val(0);
  ev->add_option("--out", out_path, "Report JSON path");
  ev->add_option("--csv", csv_path, "Report CSV path");

  auto* ab = app.add_subcommand("ablate", "Train and compare mask/prior variants");
  ab->add_option("--config", config_path, "Experiment config JSON");
  ab->add_option("--override", overrides, "Config override key=value");
  ab->add_option("--gen-per-class", gen_per_class, "Samples per class")->default_val(16);
  ab->add_option("--steps", steps, "Sampling steps")->default_val(25);
  ab->add_option("--repeats", repeats, "Evaluation repeats")->default_val(5);
  ab->add_option("--out", out_path, "CSV output path");

  auto* em = app.add_subcommand("export-masks", "Write a visibility mask as PGM or CSV");
  em->add_option("--kind", mask_kind, "DCCM, BCM or CM")->default_val("DCCM");
  em->add_option("--length", mask_length, "Latent positions")->default_val(16);
  em->add_option("--flags", flags_csv, "Comma-separated condition flags, e.g. 1,1,0,0");
  em->add_option("--out", out_path, "Output .pgm or .csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, overrides, stage, force);
    if (gen->parsed())
      return cmd_generate(run_dir, prompt, frames, sampler, steps, seed, out_path, force);
    if (ed->parsed())
      return cmd_edit(run_dir, task, source_path, prompt, sampler, steps, seed, out_path, force);
    if (ev->parsed())
      return cmd_evaluate(gen_dir, ref_dir, evaluator_ckpt, repeats, seed, out_path, csv_path);
    if (ab->parsed())
      return cmd_ablate(config_path, overrides, gen_per_class, steps, repeats, out_path);
    if (em->parsed()) return cmd_export_masks(mask_kind, mask_length, flags_csv, out_path);
  } catch (const cdamd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
