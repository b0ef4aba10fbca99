#include "cdamd/generation.hpp"

#include <algorithm>

namespace cdamd {

EditTask edit_task_from_string(const std::string& s) {
  if (s == "none") return EditTask::None;
  if (s == "inpaint") return EditTask::Inpaint;
  if (s == "outpaint") return EditTask::Outpaint;
  if (s == "prefix") return EditTask::Prefix;
  if (s == "suffix") return EditTask::Suffix;
  throw ValidationError("unknown edit task '" + s +
                        "' (valid: none, inpaint, outpaint, prefix, suffix)");
}

std::string to_string(EditTask t) {
  switch (t) {
    case EditTask::None: return "none";
    case EditTask::Inpaint: return "inpaint";
    case EditTask::Outpaint: return "outpaint";
    case EditTask::Prefix: return "prefix";
    case EditTask::Suffix: return "suffix";
  }
  return "?";
}

EditMask build_edit_mask(EditTask task, int l) {
  if (l < 4) throw ValidationError("build_edit_mask: needs at least 4 latent positions");
  EditMask mask;
  mask.task = task;
  mask.generate.setZero(l);
  switch (task) {
    case EditTask::None:
      mask.generate.setOnes();
      break;
    case EditTask::Inpaint:
      for (int i = l / 4; i < (3 * l) / 4; ++i) mask.generate(i) = 1;
      break;
    case EditTask::Outpaint: {
      for (int i = 0; i < l; ++i) mask.generate(i) = 1;
      for (int i = l / 4; i < (3 * l) / 4; ++i) mask.generate(i) = 0;
      break;
    }
    case EditTask::Prefix:
      for (int i = l / 2; i < l; ++i) mask.generate(i) = 1;
      break;
    case EditTask::Suffix: {
      const EditMask prefix = build_edit_mask(EditTask::Prefix, l);
      for (int i = 0; i < l; ++i) mask.generate(i) = prefix.generate(l - 1 - i);
      break;
    }
  }
  mask.validate();
  return mask;
}

namespace {

MatF encode_source(const MotionSequence& source, GenerationModels& models, int expected_l) {
  const MotionSequence normalized = normalize(source, models.stats);
  MatF latents = models.ae->encode(MatF(normalized.coords));
  if (static_cast<int>(latents.rows()) != expected_l)
    throw ValidationError("edit: source length incompatible with target frames");
  return latents;
}

}  // namespace

GenerationLatents generate_latents(const GenerationRequest& req, GenerationModels& models) {
  if (models.ae == nullptr || models.generator == nullptr)
    throw GenerationError("generate: models not loaded");
  if (req.target_frames < models.ae->config().downsample_factor)
    throw ValidationError("generate: target_frames shorter than one latent step");
  if (req.steps < 1) throw ValidationError("generate: steps must be >= 1");
  const int factor = models.ae->config().downsample_factor;
  const int l = latent_length(req.target_frames, factor);
  const int d = models.ae->config().latent_dim;

  GenerationLatents out;
  out.generate.setOnes(l);
  out.latents = MatF::Zero(l, d);
  if (req.edit.has_value()) {
    const EditMask& mask = req.edit->second;
    mask.validate();
    if (mask.length() != l)
      throw ValidationError("generate: edit mask length must equal latent length");
    out.generate = mask.generate;
    out.source_latents = encode_source(req.edit->first, models, l);
    for (int i = 0; i < l; ++i)
      if (!out.generate(i)) out.latents.row(i) = out.source_latents.row(i);
  }

  TransformerInput<float> in;
  in.latents = out.latents;
  in.use_mask_token.assign(static_cast<std::size_t>(l), 0);
  in.text_tokens = text_to_buckets(req.prompt, models.generator->transformer().config().text_buckets);
  in.mask_kind = models.mask_kind;
  in.condition_flags.resize(l);
  std::vector<int> pending;
  for (int i = 0; i < l; ++i) {
    in.condition_flags(i) = out.generate(i) ? 0 : 1;
    if (out.generate(i)) {
      in.use_mask_token[static_cast<std::size_t>(i)] = 1;
      pending.push_back(i);
    }
  }

  const DiffusionSchedule schedule = req.sampler == DiffusionMode::Noise
                                         ? DiffusionSchedule::noise(req.steps)
                                         : DiffusionSchedule::velocity(req.steps);
  Rng sample_rng = Rng(req.seed).stream("sample");
  const int chunk = std::max(req.chunk_size, 1);
  auto& generator = *models.generator;

  std::size_t next = 0;
  while (next < pending.size()) {
    const std::size_t stop = std::min(pending.size(), next + static_cast<std::size_t>(chunk));
    ad::Graph<float> g;
    auto fwd = generator.transformer().build_forward(g, generator.params(), in, false, nullptr);
    const MatF z = g.value(fwd.z);
    const Eigen::RowVectorXf pooled = g.value(fwd.pooled_text).row(0);
    for (std::size_t p = next; p < stop; ++p) {
      const int pos = pending[p];
      MatF cond = z.row(pos) + pooled;
      Rng pos_rng = sample_rng.stream(static_cast<std::uint64_t>(pos));
      Eigen::RowVectorXf sample;
      if (req.sampler == DiffusionMode::Noise) {
        sample = ddpm_sample_chain<float>(
            [&](const RowVec<float>& x, int /*s*/, double t) -> RowVec<float> {
              VecD tv(1);
              tv(0) = t;
              return generator.head().forward(generator.params(), MatF(x), cond, tv).row(0);
            },
            schedule, d, pos_rng);
      } else {
        RowVec<float> x0_noise(d);
        for (int c = 0; c < d; ++c) x0_noise(c) = static_cast<float>(pos_rng.normal());
        sample = ode_sample_chain<float>(
            [&](const RowVec<float>& x, double t) -> RowVec<float> {
              VecD tv(1);
              tv(0) = t;
              return generator.head().forward(generator.params(), MatF(x), cond, tv).row(0);
            },
            schedule, x0_noise, req.literal_ode_sign);
      }
      if (!sample.allFinite())
        throw GenerationError("generate: non-finite latent at position " + std::to_string(pos));
      out.latents.row(pos) = sample;
      in.latents.row(pos) = sample;
      in.use_mask_token[static_cast<std::size_t>(pos)] = 0;
    }
    next = stop;
  }
  return out;
}

MotionSequence generate(const GenerationRequest& req, GenerationModels& models) {
  const GenerationLatents lat = generate_latents(req, models);
  MatF decoded = models.ae->decode(lat.latents);
  MotionSequence m;
  m.joints = models.stats.joints();
  m.fps = req.edit.has_value() ? req.edit->first.fps : 20.0f;
  m.coords = decoded.topRows(req.target_frames);
  return denormalize(m, models.stats);
}

MotionSequence edit(const MotionSequence& source, EditTask task, const std::string& prompt,
                    GenerationModels& models, DiffusionMode sampler, int steps,
                    std::uint64_t seed) {
  source.validate();
  const int factor = models.ae->config().downsample_factor;
  const int l = latent_length(source.frames(), factor);
  GenerationRequest req;
  req.prompt = prompt;
  req.target_frames = source.frames();
  req.edit = std::make_pair(source, build_edit_mask(task, l));
  req.sampler = sampler;
  req.steps = steps;
  req.seed = seed;
  return generate(req, models);
}

}  // namespace cdamd
