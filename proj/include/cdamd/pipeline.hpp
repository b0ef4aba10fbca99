#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cdamd/codec_train.hpp"
#include "cdamd/config.hpp"
#include "cdamd/evaluator.hpp"
#include "cdamd/generation.hpp"
#include "cdamd/generator.hpp"
#include "cdamd/metrics.hpp"
#include "cdamd/tensor_io.hpp"

namespace cdamd {

struct CorpusSplit {
  std::vector<CorpusSample> train;
  std::vector<CorpusSample> holdout;
};

// Deterministic split: the last holdout_per_class samples of every class are
// held out.
CorpusSplit split_corpus(const ExperimentConfig& cfg);

// Writes corpus/train and corpus/heldout under cfg.out_dir.
void write_corpus_dirs(const ExperimentConfig& cfg, const CorpusSplit& split);

// --- staged training -------------------------------------------------------

TrainLog train_ae_stage(const ExperimentConfig& cfg, bool force);
TrainLog train_rvq_stage(const ExperimentConfig& cfg, bool force);
TrainLog train_evaluator_stage(const ExperimentConfig& cfg, bool force);
TrainLog train_transformer_stage(const ExperimentConfig& cfg, bool force);
TrainLog train_stage(const std::string& stage, const ExperimentConfig& cfg, bool force);

// --- checkpoint loading ----------------------------------------------------

std::unique_ptr<AutoEncoder<float>> load_ae_ckpt(const std::string& path, MotionStats* stats);
std::unique_ptr<RvqVae<float>> load_rvq_ckpt(const std::string& path);
std::unique_ptr<Generator<float>> load_generator_ckpt(const std::string& path,
                                                      ExperimentConfig* cfg_out = nullptr);
std::unique_ptr<Evaluator<float>> load_evaluator_ckpt(const std::string& path);

// Frozen inference bundle from a run directory produced by `train`.
struct LoadedRun {
  ExperimentConfig cfg;
  std::unique_ptr<AutoEncoder<float>> ae;
  std::unique_ptr<Generator<float>> generator;
  MotionStats stats;

  GenerationModels models() {
    GenerationModels m;
    m.ae = ae.get();
    m.generator = generator.get();
    m.stats = stats;
    m.mask_kind = cfg.mask_kind;
    return m;
  }
};

LoadedRun load_run(const std::string& run_dir);

// --- in-memory training helpers (shared by the CLI and the ablation) -------

struct PreparedItems {
  std::vector<TrainItem<float>> items;
};

PreparedItems prepare_train_items(const std::vector<CorpusSample>& samples,
                                  AutoEncoder<float>& ae, RvqVae<float>* rvq,
                                  const MotionStats& stats, const TransformerConfig& tcfg);

TrainLog fit_generator(Generator<float>& model, const PreparedItems& data,
                       const ExperimentConfig& cfg, std::uint64_t seed);

// --- evaluation helpers ----------------------------------------------------

EmbeddedSet embed_set(const Evaluator<float>& evaluator,
                      const std::vector<CorpusSample>& samples);

MetricsReport evaluate_dirs(const std::string& gen_dir, const std::string& ref_dir,
                            const std::string& evaluator_ckpt, int repeats, std::uint64_t seed);

// Predicted class = nearest class prompt embedding by cosine.
double class_accuracy(const Evaluator<float>& evaluator,
                      const std::vector<CorpusSample>& samples, int class_count);

// Splice baseline: pair up sequences and glue the first half of one to the
// second half of the other (resampled to the first one's length).
std::vector<CorpusSample> spliced_pairs_baseline(const std::vector<CorpusSample>& samples,
                                                 std::uint64_t seed);

// --- ablation ----------------------------------------------------------------

struct AblationRow {
  std::string variant;
  MetricsReport report;
};

struct AblationOptions {
  int gen_per_class = 16;
  int steps = 25;
  int repeats = 5;
  bool force = false;
};

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const AblationOptions& opt);
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Generate a labelled sample set with one of the loaded variants.
std::vector<CorpusSample> generate_set(GenerationModels& models, const ExperimentConfig& cfg,
                                       int per_class, int steps, DiffusionMode sampler,
                                       std::uint64_t seed);

}  // namespace cdamd
