#include "cdamd/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace cdamd {

namespace fs = std::filesystem;

namespace {

std::string ckpt_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / (name + ".ckpt")).string();
}

void write_log(const ExperimentConfig& cfg, const std::string& stage, const TrainLog& log) {
  fs::create_directories(fs::path(cfg.out_dir) / "logs");
  std::ofstream out(fs::path(cfg.out_dir) / "logs" / (stage + ".jsonl"));
  for (std::size_t i = 0; i < log.epoch_loss.size(); ++i) {
    nlohmann::json line = {{"epoch", i + 1}, {"loss", log.epoch_loss[i]}, {"stage", stage}};
    out << line.dump() << "\n";
  }
}

void require_absent_or_force(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw IoError("refusing to overwrite " + path + " (pass --force)");
}

void store_stats(Checkpoint& ckpt, const MotionStats& stats) {
  ckpt.tensors["stats.mean"] = stats.mean;
  ckpt.tensors["stats.std"] = stats.std;
}

MotionStats stats_from_ckpt(const Checkpoint& ckpt) {
  MotionStats stats;
  stats.mean = ckpt.tensors.at("stats.mean");
  stats.std = ckpt.tensors.at("stats.std");
  return stats;
}

std::vector<MatF> normalized_coords(const std::vector<CorpusSample>& samples,
                                    const MotionStats& stats) {
  std::vector<MatF> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(MatF(normalize(s.motion, stats).coords));
  return out;
}

MotionStats train_split_stats(const CorpusSplit& split) {
  std::vector<MotionSequence> motions;
  motions.reserve(split.train.size());
  for (const auto& s : split.train) motions.push_back(s.motion);
  return compute_stats(motions);
}

nlohmann::json ckpt_metadata(const ExperimentConfig& cfg, const TrainLog& log) {
  return {{"config", to_json(cfg)},
          {"epoch", log.epoch_loss.size()},
          {"loss", log.epoch_loss.empty() ? 0.0 : log.last()}};
}

}  // namespace

CorpusSplit split_corpus(const ExperimentConfig& cfg) {
  const auto all = generate_corpus(cfg.corpus);
  CorpusSplit split;
  const int train_per_class = cfg.corpus.sequences_per_class - cfg.holdout_per_class;
  int index_in_class = 0;
  int current_class = -1;
  for (const auto& s : all) {
    if (s.class_id != current_class) {
      current_class = s.class_id;
      index_in_class = 0;
    }
    if (index_in_class < train_per_class)
      split.train.push_back(s);
    else
      split.holdout.push_back(s);
    ++index_in_class;
  }
  return split;
}

void write_corpus_dirs(const ExperimentConfig& cfg, const CorpusSplit& split) {
  save_corpus(split.train, (fs::path(cfg.out_dir) / "corpus" / "train").string());
  save_corpus(split.holdout, (fs::path(cfg.out_dir) / "corpus" / "heldout").string());
}

TrainLog train_ae_stage(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string path = ckpt_path(cfg, "ae");
  require_absent_or_force(path, force);
  const CorpusSplit split = split_corpus(cfg);
  const MotionStats stats = train_split_stats(split);
  AEConfig acfg = cfg.ae;
  acfg.in_channels = 3 * kSkeletonJoints;
  AutoEncoder<float> model(acfg, cfg.seed);
  TrainLog log = train_ae(model, normalized_coords(split.train, stats),
                          {cfg.ae_train.epochs, cfg.ae_train.batch_size, cfg.ae_train.lr, cfg.seed});
  Checkpoint ckpt;
  store_params(ckpt, model.params());
  store_stats(ckpt, stats);
  ckpt.metadata = ckpt_metadata(cfg, log);
  save_checkpoint(ckpt, path);
  write_log(cfg, "ae", log);
  return log;
}

TrainLog train_rvq_stage(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string path = ckpt_path(cfg, "rvq");
  require_absent_or_force(path, force);
  const CorpusSplit split = split_corpus(cfg);
  const MotionStats stats = train_split_stats(split);
  AEConfig acfg = cfg.ae;
  acfg.in_channels = 3 * kSkeletonJoints;
  RvqVae<float> model(acfg, cfg.rvq_levels, cfg.rvq_codebook_size, cfg.rvq_beta, cfg.seed);
  TrainLog log =
      train_rvq(model, normalized_coords(split.train, stats),
                {cfg.rvq_train.epochs, cfg.rvq_train.batch_size, cfg.rvq_train.lr, cfg.seed},
                cfg.rvq_ema_decay);
  Checkpoint ckpt;
  store_params(ckpt, model.params());
  store_stats(ckpt, stats);
  for (int r = 0; r < model.codebook().levels; ++r)
    ckpt.tensors["codebook.level" + std::to_string(r)] =
        model.codebook().entries[static_cast<std::size_t>(r)];
  ckpt.metadata = ckpt_metadata(cfg, log);
  save_checkpoint(ckpt, path);
  write_log(cfg, "rvq", log);
  return log;
}

TrainLog train_evaluator_stage(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string path = ckpt_path(cfg, "eval");
  require_absent_or_force(path, force);
  const CorpusSplit split = split_corpus(cfg);
  Evaluator<float> model(cfg.evaluator, cfg.seed);
  TrainLog log = train_evaluator(model, split.train,
                                 {cfg.evaluator_train.epochs, cfg.evaluator_train.batch_size,
                                  cfg.evaluator_train.lr, cfg.seed});
  Checkpoint ckpt;
  store_params(ckpt, model.params());
  store_stats(ckpt, model.stats());
  ckpt.metadata = ckpt_metadata(cfg, log);
  save_checkpoint(ckpt, path);
  write_log(cfg, "eval", log);
  return log;
}

PreparedItems prepare_train_items(const std::vector<CorpusSample>& samples,
                                  AutoEncoder<float>& ae, RvqVae<float>* rvq,
                                  const MotionStats& stats, const TransformerConfig& tcfg) {
  PreparedItems out;
  out.items.reserve(samples.size());
  for (const auto& s : samples) {
    TrainItem<float> item;
    const MatF x = MatF(normalize(s.motion, stats).coords);
    item.latents = ae.encode(x);
    if (rvq != nullptr) item.tokens = rvq->tokenize(x);
    item.text_buckets = text_to_buckets(s.text, tcfg.text_buckets);
    out.items.push_back(std::move(item));
  }
  return out;
}

TrainLog fit_generator(Generator<float>& model, const PreparedItems& data,
                       const ExperimentConfig& cfg, std::uint64_t seed) {
  if (data.items.empty()) throw TrainingError("fit_generator: no training items");
  TrainLog log;
  if (cfg.transformer_train.epochs <= 0) return log;
  const int batches_per_epoch = static_cast<int>(
      (data.items.size() + cfg.transformer_train.batch_size - 1) /
      static_cast<std::size_t>(cfg.transformer_train.batch_size));
  ad::LrSchedule schedule{cfg.transformer_train.lr, cfg.warmup_steps,
                          cfg.transformer_train.epochs * batches_per_epoch, cfg.min_lr};
  ad::Adam<float> adam(model.params(), schedule);
  Rng order_rng = Rng(seed).stream("tf_train_order");
  Rng step_rng = Rng(seed).stream("tf_train_steps");

  TrainStepOptions opt;
  opt.perturb = cfg.perturb;
  opt.mask_kind = cfg.mask_kind;
  opt.cmp_enabled = cfg.cmp_enabled;
  opt.vq_levels_used = cfg.vq_levels_used;
  opt.schedule = cfg.schedule();
  opt.train_dropout = true;

  for (int epoch = 0; epoch < cfg.transformer_train.epochs; ++epoch) {
    if (cfg.anneal_drop && cfg.transformer_train.epochs > 1) {
      const double u = static_cast<double>(epoch) / (cfg.transformer_train.epochs - 1);
      opt.perturb.drop_prob = cfg.perturb.drop_prob + (1.0 - cfg.perturb.drop_prob) * u;
    }
    auto perm = order_rng.permutation(static_cast<int>(data.items.size()));
    double epoch_sum = 0.0;
    int count = 0;
    for (std::size_t at = 0; at < perm.size();
         at += static_cast<std::size_t>(cfg.transformer_train.batch_size)) {
      const std::size_t end =
          std::min(perm.size(), at + static_cast<std::size_t>(cfg.transformer_train.batch_size));
      std::vector<TrainItem<float>> batch;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i)
        batch.push_back(data.items[static_cast<std::size_t>(perm[i])]);
      Rng batch_rng = step_rng.stream(static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                      static_cast<std::uint64_t>(at));
      const StepStats stats = train_step(model, batch, opt, batch_rng, &adam);
      epoch_sum += stats.loss;
      ++count;
    }
    log.epoch_loss.push_back(epoch_sum / std::max(count, 1));
  }
  return log;
}

TrainLog train_transformer_stage(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const std::string path = ckpt_path(cfg, "transformer");
  require_absent_or_force(path, force);
  if (!fs::exists(ckpt_path(cfg, "ae")))
    throw TrainingError("missing prerequisite checkpoint ae.ckpt: run `train --stage ae` first");
  if (cfg.cmp_enabled && !fs::exists(ckpt_path(cfg, "rvq")))
    throw TrainingError(
        "missing prerequisite checkpoint rvq.ckpt: run `train --stage rvq` first or disable "
        "cmp_enabled");
  MotionStats stats;
  auto ae = load_ae_ckpt(ckpt_path(cfg, "ae"), &stats);
  std::unique_ptr<RvqVae<float>> rvq;
  if (cfg.cmp_enabled) rvq = load_rvq_ckpt(ckpt_path(cfg, "rvq"));

  const CorpusSplit split = split_corpus(cfg);
  const PreparedItems data =
      prepare_train_items(split.train, *ae, rvq.get(), stats, cfg.transformer);

  Generator<float> model(cfg.transformer, cfg.diffmlp, cfg.ae.latent_dim, cfg.rvq_levels,
                         cfg.rvq_codebook_size, cfg.seed);
  TrainLog log = fit_generator(model, data, cfg, cfg.seed);
  Checkpoint ckpt;
  store_params(ckpt, model.params());
  ckpt.metadata = ckpt_metadata(cfg, log);
  save_checkpoint(ckpt, path);
  write_log(cfg, "transformer", log);
  return log;
}

TrainLog train_stage(const std::string& stage, const ExperimentConfig& cfg, bool force) {
  if (stage == "ae") return train_ae_stage(cfg, force);
  if (stage == "rvq") return train_rvq_stage(cfg, force);
  if (stage == "evaluator") return train_evaluator_stage(cfg, force);
  if (stage == "transformer") return train_transformer_stage(cfg, force);
  throw ValidationError("unknown stage '" + stage +
                        "' (valid: ae, rvq, transformer, evaluator)");
}

std::unique_ptr<AutoEncoder<float>> load_ae_ckpt(const std::string& path, MotionStats* stats) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ExperimentConfig cfg = config_from_json(ckpt.metadata.at("config"));
  AEConfig acfg = cfg.ae;
  acfg.in_channels = 3 * kSkeletonJoints;
  auto model = std::make_unique<AutoEncoder<float>>(acfg, cfg.seed);
  load_params(ckpt, model->params());
  if (stats != nullptr) *stats = stats_from_ckpt(ckpt);
  return model;
}

std::unique_ptr<RvqVae<float>> load_rvq_ckpt(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ExperimentConfig cfg = config_from_json(ckpt.metadata.at("config"));
  AEConfig acfg = cfg.ae;
  acfg.in_channels = 3 * kSkeletonJoints;
  auto model = std::make_unique<RvqVae<float>>(acfg, cfg.rvq_levels, cfg.rvq_codebook_size,
                                               cfg.rvq_beta, cfg.seed);
  load_params(ckpt, model->params());
  for (int r = 0; r < model->codebook().levels; ++r)
    model->codebook().entries[static_cast<std::size_t>(r)] =
        ckpt.tensors.at("codebook.level" + std::to_string(r));
  return model;
}

std::unique_ptr<Generator<float>> load_generator_ckpt(const std::string& path,
                                                      ExperimentConfig* cfg_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ExperimentConfig cfg = config_from_json(ckpt.metadata.at("config"));
  auto model = std::make_unique<Generator<float>>(cfg.transformer, cfg.diffmlp, cfg.ae.latent_dim,
                                                  cfg.rvq_levels, cfg.rvq_codebook_size, cfg.seed);
  load_params(ckpt, model->params());
  if (cfg_out != nullptr) *cfg_out = cfg;
  return model;
}

std::unique_ptr<Evaluator<float>> load_evaluator_ckpt(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ExperimentConfig cfg = config_from_json(ckpt.metadata.at("config"));
  auto model = std::make_unique<Evaluator<float>>(cfg.evaluator, cfg.seed);
  load_params(ckpt, model->params());
  model->stats() = stats_from_ckpt(ckpt);
  return model;
}

LoadedRun load_run(const std::string& run_dir) {
  const std::string cfg_path = (fs::path(run_dir) / "config.json").string();
  std::ifstream in(cfg_path);
  if (!in) throw IoError("missing config.json in run dir " + run_dir);
  nlohmann::json j;
  in >> j;
  LoadedRun run;
  run.cfg = config_from_json(j);
  run.ae = load_ae_ckpt((fs::path(run_dir) / "ae.ckpt").string(), &run.stats);
  run.generator = load_generator_ckpt((fs::path(run_dir) / "transformer.ckpt").string());
  return run;
}

EmbeddedSet embed_set(const Evaluator<float>& evaluator,
                      const std::vector<CorpusSample>& samples) {
  if (samples.empty()) throw ValidationError("embed_set: empty sample list");
  const int e = evaluator.config().embed_dim;
  EmbeddedSet set;
  set.motion.resize(static_cast<Eigen::Index>(samples.size()), e);
  set.text.resize(static_cast<Eigen::Index>(samples.size()), e);
  set.group.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    set.motion.row(static_cast<Eigen::Index>(i)) =
        evaluator.embed_motion(samples[i].motion).cast<double>().transpose();
    set.text.row(static_cast<Eigen::Index>(i)) =
        evaluator.embed_text(samples[i].text).cast<double>().transpose();
    set.group[i] = samples[i].class_id;
  }
  return set;
}

MetricsReport evaluate_dirs(const std::string& gen_dir, const std::string& ref_dir,
                            const std::string& evaluator_ckpt, int repeats, std::uint64_t seed) {
  auto evaluator = load_evaluator_ckpt(evaluator_ckpt);
  const auto gen = load_corpus(gen_dir);
  const auto ref = load_corpus(ref_dir);
  return evaluate_run(embed_set(*evaluator, gen), embed_set(*evaluator, ref), repeats, seed);
}

double class_accuracy(const Evaluator<float>& evaluator,
                      const std::vector<CorpusSample>& samples, int class_count) {
  if (samples.empty()) throw ValidationError("class_accuracy: empty sample list");
  std::vector<VecF> class_embs;
  for (int c = 0; c < class_count; ++c)
    class_embs.push_back(evaluator.embed_text(class_prompt(c)));
  int hits = 0;
  for (const auto& s : samples) {
    const VecF m = evaluator.embed_motion(s.motion);
    int best = 0;
    float best_cos = -2.0f;
    for (int c = 0; c < class_count; ++c) {
      const float cos = m.dot(class_embs[static_cast<std::size_t>(c)]);
      if (cos > best_cos) {
        best_cos = cos;
        best = c;
      }
    }
    if (best == s.class_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<CorpusSample> spliced_pairs_baseline(const std::vector<CorpusSample>& samples,
                                                 std::uint64_t seed) {
  if (samples.size() < 2) throw ValidationError("spliced_pairs_baseline: need at least 2 samples");
  Rng rng = Rng(seed).stream("splice");
  auto perm = rng.permutation(static_cast<int>(samples.size()));
  std::vector<CorpusSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& a = samples[i];
    const auto& b = samples[static_cast<std::size_t>(perm[i])];
    CorpusSample s = a;
    const int T = a.motion.frames();
    const int half = T / 2;
    for (int f = half; f < T; ++f) {
      // index into b proportionally so any length pair splices
      const int fb = static_cast<int>(static_cast<long long>(f) * (b.motion.frames() - 1) /
                                      std::max(T - 1, 1));
      s.motion.coords.row(f) = b.motion.coords.row(fb);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<CorpusSample> generate_set(GenerationModels& models, const ExperimentConfig& cfg,
                                       int per_class, int steps, DiffusionMode sampler,
                                       std::uint64_t seed) {
  std::vector<CorpusSample> out;
  const int frames = (cfg.corpus.length_min + cfg.corpus.length_max) / 2;
  for (int c = 0; c < cfg.corpus.class_count; ++c) {
    for (int i = 0; i < per_class; ++i) {
      GenerationRequest req;
      req.prompt = class_prompt(c);
      req.target_frames = frames;
      req.sampler = sampler;
      req.steps = steps;
      req.seed = Rng(seed).stream("genset").stream(
          static_cast<std::uint64_t>(c) * 100003ULL + static_cast<std::uint64_t>(i)).next_u64();
      CorpusSample s;
      s.motion = generate(req, models);
      s.text = req.prompt;
      s.class_id = c;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const AblationOptions& opt) {
  cfg.validate();
  for (const char* name : {"ae", "rvq", "eval"})
    if (!fs::exists(ckpt_path(cfg, name)))
      throw TrainingError(std::string("ablation needs base checkpoints; missing ") + name +
                          ".ckpt");
  MotionStats stats;
  auto ae = load_ae_ckpt(ckpt_path(cfg, "ae"), &stats);
  auto rvq = load_rvq_ckpt(ckpt_path(cfg, "rvq"));
  auto evaluator = load_evaluator_ckpt(ckpt_path(cfg, "eval"));
  const CorpusSplit split = split_corpus(cfg);
  const PreparedItems data = prepare_train_items(split.train, *ae, rvq.get(), stats, cfg.transformer);

  struct Variant {
    const char* name;
    MaskKind mask;
    bool cmp;
  };
  const Variant variants[] = {{"full", MaskKind::DCCM, true},
                              {"wo_cmp", MaskKind::DCCM, false},
                              {"wo_dcca", MaskKind::CM, true},
                              {"bcm", MaskKind::BCM, true}};

  const EmbeddedSet ref = embed_set(*evaluator, split.holdout);
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ExperimentConfig vcfg = cfg;
    vcfg.mask_kind = v.mask;
    vcfg.cmp_enabled = v.cmp;
    Generator<float> model(vcfg.transformer, vcfg.diffmlp, vcfg.ae.latent_dim, vcfg.rvq_levels,
                           vcfg.rvq_codebook_size, vcfg.seed);
    fit_generator(model, data, vcfg, vcfg.seed);
    GenerationModels models;
    models.ae = ae.get();
    models.generator = &model;
    models.stats = stats;
    models.mask_kind = v.mask;
    const auto gen = generate_set(models, vcfg, opt.gen_per_class, opt.steps,
                                  vcfg.schedule().mode, vcfg.seed);
    AblationRow row;
    row.variant = v.name;
    row.report = evaluate_run(embed_set(*evaluator, gen), ref, opt.repeats, vcfg.seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,fid,rp1,rp2,rp3,matching,diversity,multimodality,clip_score\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.report.fid.mean << ',' << r.report.rp1.mean << ','
        << r.report.rp2.mean << ',' << r.report.rp3.mean << ',' << r.report.matching.mean << ','
        << r.report.diversity.mean << ',' << r.report.multimodality.mean << ','
        << r.report.clip_score.mean << '\n';
  }
  return out.str();
}

}  // namespace cdamd
