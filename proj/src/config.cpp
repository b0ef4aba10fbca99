#include "cdamd/config.hpp"

#include <fstream>

namespace cdamd {

void ExperimentConfig::validate() const {
  corpus.validate();
  ae.validate();
  transformer.validate();
  perturb.validate();
  diffmlp.validate();
  evaluator.validate();
  if (holdout_per_class < 0 || holdout_per_class >= corpus.sequences_per_class)
    throw ConfigError("holdout_per_class must be in [0, sequences_per_class)");
  if (rvq_levels < 1 || rvq_codebook_size < 2) throw ConfigError("rvq: bad codebook shape");
  if (rvq_beta <= 0.0f) throw ConfigError("rvq: beta must be positive");
  if (vq_levels_used < 0 || vq_levels_used > rvq_levels)
    throw ConfigError("vq_levels_used must be in [0, rvq_levels]");
  if (diffusion_steps < 1) throw ConfigError("diffusion_steps must be >= 1");
  diffusion_mode_from_string(diffusion_mode);
}

DiffusionSchedule ExperimentConfig::schedule() const {
  return diffusion_mode_from_string(diffusion_mode) == DiffusionMode::Noise
             ? DiffusionSchedule::noise(diffusion_steps, beta_min, beta_max)
             : DiffusionSchedule::velocity(diffusion_steps);
}

namespace {

nlohmann::json stage_json(const StageOptions& s) {
  return {{"epochs", s.epochs}, {"batch", s.batch_size}, {"lr", s.lr}};
}

StageOptions stage_from(const nlohmann::json& j, StageOptions defaults) {
  StageOptions s = defaults;
  if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
  if (j.contains("batch")) s.batch_size = j.at("batch").get<int>();
  if (j.contains("lr")) s.lr = j.at("lr").get<double>();
  return s;
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["corpus"] = {{"class_count", cfg.corpus.class_count},
                 {"sequences_per_class", cfg.corpus.sequences_per_class},
                 {"length_min", cfg.corpus.length_min},
                 {"length_max", cfg.corpus.length_max},
                 {"seed", cfg.corpus.seed},
                 {"noise_scale", cfg.corpus.noise_scale},
                 {"fps", cfg.corpus.fps},
                 {"holdout_per_class", cfg.holdout_per_class}};
  j["ae"] = stage_json(cfg.ae_train);
  j["ae"].update({{"hidden_width", cfg.ae.hidden_width},
                  {"depth", cfg.ae.depth},
                  {"dilation_growth", cfg.ae.dilation_growth},
                  {"downsample_factor", cfg.ae.downsample_factor},
                  {"latent_dim", cfg.ae.latent_dim}});
  j["rvq"] = stage_json(cfg.rvq_train);
  j["rvq"].update({{"levels", cfg.rvq_levels},
                   {"codebook_size", cfg.rvq_codebook_size},
                   {"beta", cfg.rvq_beta},
                   {"ema_decay", cfg.rvq_ema_decay}});
  j["transformer"] = stage_json(cfg.transformer_train);
  j["transformer"].update({{"layers", cfg.transformer.layers},
                           {"hidden", cfg.transformer.hidden},
                           {"heads", cfg.transformer.heads},
                           {"ffn", cfg.transformer.ffn},
                           {"dropout", cfg.transformer.dropout},
                           {"max_positions", cfg.transformer.max_positions},
                           {"text_buckets", cfg.transformer.text_buckets},
                           {"warmup_steps", cfg.warmup_steps},
                           {"min_lr", cfg.min_lr}});
  j["perturb"] = {{"drop_prob", cfg.perturb.drop_prob},
                  {"noise_frac", cfg.perturb.noise_frac},
                  {"mask_frac", cfg.perturb.mask_frac},
                  {"keep_frac", cfg.perturb.keep_frac},
                  {"anneal_drop", cfg.anneal_drop}};
  j["diffusion"] = {{"mode", cfg.diffusion_mode},
                    {"steps", cfg.diffusion_steps},
                    {"beta_min", cfg.beta_min},
                    {"beta_max", cfg.beta_max},
                    {"blocks", cfg.diffmlp.blocks},
                    {"width", cfg.diffmlp.width},
                    {"time_features", cfg.diffmlp.time_features},
                    {"literal_ode_sign", cfg.literal_ode_sign}};
  j["evaluator"] = stage_json(cfg.evaluator_train);
  j["evaluator"].update({{"embed_dim", cfg.evaluator.embed_dim},
                         {"hidden", cfg.evaluator.hidden},
                         {"text_buckets", cfg.evaluator.text_buckets},
                         {"temperature", cfg.evaluator.temperature}});
  j["mask_kind"] = to_string(cfg.mask_kind);
  j["cmp_enabled"] = cfg.cmp_enabled;
  j["vq_levels_used"] = cfg.vq_levels_used == 0 ? nlohmann::json("all")
                                                : nlohmann::json(cfg.vq_levels_used);
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "out_dir", cfg.out_dir);
  cfg.corpus.seed = cfg.seed;
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    maybe(c, "class_count", cfg.corpus.class_count);
    maybe(c, "sequences_per_class", cfg.corpus.sequences_per_class);
    maybe(c, "length_min", cfg.corpus.length_min);
    maybe(c, "length_max", cfg.corpus.length_max);
    maybe(c, "seed", cfg.corpus.seed);
    maybe(c, "noise_scale", cfg.corpus.noise_scale);
    maybe(c, "fps", cfg.corpus.fps);
    maybe(c, "holdout_per_class", cfg.holdout_per_class);
  }
  if (j.contains("ae")) {
    const auto& a = j.at("ae");
    cfg.ae_train = stage_from(a, cfg.ae_train);
    maybe(a, "hidden_width", cfg.ae.hidden_width);
    maybe(a, "depth", cfg.ae.depth);
    maybe(a, "dilation_growth", cfg.ae.dilation_growth);
    maybe(a, "downsample_factor", cfg.ae.downsample_factor);
    maybe(a, "latent_dim", cfg.ae.latent_dim);
  }
  if (j.contains("rvq")) {
    const auto& r = j.at("rvq");
    cfg.rvq_train = stage_from(r, cfg.rvq_train);
    maybe(r, "levels", cfg.rvq_levels);
    maybe(r, "codebook_size", cfg.rvq_codebook_size);
    maybe(r, "beta", cfg.rvq_beta);
    maybe(r, "ema_decay", cfg.rvq_ema_decay);
  }
  if (j.contains("transformer")) {
    const auto& t = j.at("transformer");
    cfg.transformer_train = stage_from(t, cfg.transformer_train);
    maybe(t, "layers", cfg.transformer.layers);
    maybe(t, "hidden", cfg.transformer.hidden);
    maybe(t, "heads", cfg.transformer.heads);
    maybe(t, "ffn", cfg.transformer.ffn);
    maybe(t, "dropout", cfg.transformer.dropout);
    maybe(t, "max_positions", cfg.transformer.max_positions);
    maybe(t, "text_buckets", cfg.transformer.text_buckets);
    maybe(t, "warmup_steps", cfg.warmup_steps);
    maybe(t, "min_lr", cfg.min_lr);
  }
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    maybe(p, "drop_prob", cfg.perturb.drop_prob);
    maybe(p, "noise_frac", cfg.perturb.noise_frac);
    maybe(p, "mask_frac", cfg.perturb.mask_frac);
    maybe(p, "keep_frac", cfg.perturb.keep_frac);
    maybe(p, "anneal_drop", cfg.anneal_drop);
  }
  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    maybe(d, "mode", cfg.diffusion_mode);
    maybe(d, "steps", cfg.diffusion_steps);
    maybe(d, "beta_min", cfg.beta_min);
    maybe(d, "beta_max", cfg.beta_max);
    maybe(d, "blocks", cfg.diffmlp.blocks);
    maybe(d, "width", cfg.diffmlp.width);
    maybe(d, "time_features", cfg.diffmlp.time_features);
    maybe(d, "literal_ode_sign", cfg.literal_ode_sign);
  }
  if (j.contains("evaluator")) {
    const auto& e = j.at("evaluator");
    cfg.evaluator_train = stage_from(e, cfg.evaluator_train);
    maybe(e, "embed_dim", cfg.evaluator.embed_dim);
    maybe(e, "hidden", cfg.evaluator.hidden);
    maybe(e, "text_buckets", cfg.evaluator.text_buckets);
    maybe(e, "temperature", cfg.evaluator.temperature);
  }
  if (j.contains("mask_kind")) cfg.mask_kind = mask_kind_from_string(j.at("mask_kind").get<std::string>());
  maybe(j, "cmp_enabled", cfg.cmp_enabled);
  if (j.contains("vq_levels_used")) {
    const auto& v = j.at("vq_levels_used");
    cfg.vq_levels_used = v.is_string() ? 0 : v.get<int>();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig config_with_overrides(nlohmann::json j, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key=value, got '" + kv + "'");
    std::string pointer = "/" + kv.substr(0, eq);
    for (auto& c : pointer)
      if (c == '.') c = '/';
    const std::string raw = kv.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;  // bare strings
    }
    j[nlohmann::json::json_pointer(pointer)] = value;
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config json: ") + e.what());
  }
  return config_with_overrides(std::move(j), overrides);
}

}  // namespace cdamd
