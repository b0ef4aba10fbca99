#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cdamd/attention.hpp"
#include "cdamd/codec.hpp"
#include "cdamd/corpus.hpp"
#include "cdamd/diffusion.hpp"
#include "cdamd/evaluator.hpp"
#include "cdamd/transformer.hpp"

namespace cdamd {

struct StageOptions {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/exp";

  CorpusSpec corpus;
  int holdout_per_class = 0;

  AEConfig ae;
  StageOptions ae_train{15, 16, 1e-3};

  int rvq_levels = 4;
  int rvq_codebook_size = 64;
  float rvq_beta = 0.25f;
  float rvq_ema_decay = 0.99f;
  StageOptions rvq_train{15, 16, 1e-3};

  TransformerConfig transformer;
  StageOptions transformer_train{30, 16, 2e-4};
  int warmup_steps = 200;
  double min_lr = 1e-6;

  PerturbationConfig perturb;
  bool anneal_drop = true;  // ramp drop_prob to 1 across training

  std::string diffusion_mode = "velocity";
  int diffusion_steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  DiffMLPConfig diffmlp;
  bool literal_ode_sign = false;

  EvaluatorConfig evaluator;
  StageOptions evaluator_train{25, 32, 1e-3};

  MaskKind mask_kind = MaskKind::DCCM;
  bool cmp_enabled = true;
  int vq_levels_used = 0;  // 0 = all

  void validate() const;
  DiffusionSchedule schedule() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Load a config file and apply `key=value` overrides with dot paths, e.g.
// "transformer.layers=4" or "seed=7".
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);
ExperimentConfig config_with_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

}  // namespace cdamd
