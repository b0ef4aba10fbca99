#pragma once

#include <optional>
#include <type_traits>
#include <vector>

#include "cdamd/ad/optimizer.hpp"
#include "cdamd/diffusion.hpp"
#include "cdamd/transformer.hpp"

namespace cdamd {

// Transformer backbone plus per-position diffusion head, one parameter store,
// trained jointly on the masked-latent objective.
template <class Scalar>
class Generator {
 public:
  Generator(const TransformerConfig& tcfg, DiffMLPConfig dcfg, int latent_dim, int token_levels,
            int codebook_size, std::uint64_t seed = 0)
      : dcfg_([&] {
          dcfg.latent_dim = latent_dim;
          dcfg.cond_dim = tcfg.hidden;
          return dcfg;
        }()),
        transformer_(tcfg, latent_dim, token_levels, codebook_size, params_, "tf",
                     Rng(seed).stream("tf_init")),
        head_(dcfg_, params_, "head", Rng(seed).stream("head_init")) {}

  ArTransformer<Scalar>& transformer() { return transformer_; }
  const ArTransformer<Scalar>& transformer() const { return transformer_; }
  DiffMLP<Scalar>& head() { return head_; }
  ad::ParamStore<Scalar>& params() { return params_; }
  const DiffMLPConfig& head_config() const { return dcfg_; }

 private:
  ad::ParamStore<Scalar> params_;
  DiffMLPConfig dcfg_;
  ArTransformer<Scalar> transformer_;
  DiffMLP<Scalar> head_;
};

template <class Scalar>
struct TrainItem {
  Mat<Scalar> latents;            // l x d from the frozen AE
  TokenSequence tokens;           // R x l from the frozen RVQ (may be empty)
  std::vector<int> text_buckets;  // hashed prompt words
};

struct TrainStepOptions {
  PerturbationConfig perturb;
  MaskKind mask_kind = MaskKind::DCCM;
  bool cmp_enabled = true;
  int vq_levels_used = 0;  // 0 = all
  DiffusionSchedule schedule = DiffusionSchedule::velocity(50);
  bool train_dropout = true;
};

struct StepStats {
  double loss = 0.0;
  int positions = 0;  // latent positions that contributed to the objective
};

// One optimization step of the masked-latent diffusion objective. The loss is
// evaluated only at positions marked for generation; conditioning positions
// enter as known latents. When fixed_generate_masks is null, per-item masks
// are drawn with the cosine schedule. A batch with nothing to generate
// returns loss 0 and performs no update.
template <class Scalar>
StepStats train_step(Generator<Scalar>& model, const std::vector<TrainItem<Scalar>>& batch,
                     const TrainStepOptions& opt, Rng& rng,
                     std::type_identity_t<ad::Adam<Scalar>*> adam,
                     const std::vector<FlagVector>* fixed_generate_masks = nullptr) {
  opt.perturb.validate();
  if (batch.empty()) return {};
  ad::Graph<Scalar> g;
  typename ad::Graph<Scalar>::Id all_cond = -1;
  Mat<Scalar> all_x0;
  VecD all_t;
  MatD all_eps;
  std::vector<int> all_s;
  int total_positions = 0;
  const int d = static_cast<int>(batch.front().latents.cols());

  for (std::size_t item = 0; item < batch.size(); ++item) {
    const auto& it = batch[item];
    const int l = static_cast<int>(it.latents.rows());
    FlagVector generate(l);
    if (fixed_generate_masks != nullptr) {
      generate = (*fixed_generate_masks)[item];
      if (static_cast<int>(generate.size()) != l)
        throw DimensionError("train_step: fixed mask length mismatch");
    } else {
      generate.setZero();
      const int count = cosine_mask_schedule(rng.uniform(), l);
      auto order = rng.permutation(l);
      for (int i = 0; i < count; ++i) generate(order[static_cast<std::size_t>(i)]) = 1;
    }

    TransformerInput<Scalar> in;
    in.latents = it.latents;
    in.use_mask_token.assign(static_cast<std::size_t>(l), 0);
    in.text_tokens = it.text_buckets;
    in.mask_kind = opt.mask_kind;
    in.condition_flags.resize(l);
    // generate positions are masked in BOTH streams with one shared
    // noise/[MASK]/keep draw per position; tokens at condition positions
    // stay visible
    std::vector<int> positions;
    std::vector<PerturbChoice> choice(static_cast<std::size_t>(l), PerturbChoice::Untouched);
    for (int i = 0; i < l; ++i) {
      in.condition_flags(i) = generate(i) ? 0 : 1;
      if (!generate(i)) continue;
      positions.push_back(i);
      const double r = rng.uniform();
      if (r < opt.perturb.noise_frac) {
        choice[static_cast<std::size_t>(i)] = PerturbChoice::Noise;
        in.latents.row(i) = rng.normal_matrix<Scalar>(1, d, Scalar(1)).row(0);
      } else if (r < opt.perturb.noise_frac + opt.perturb.mask_frac) {
        choice[static_cast<std::size_t>(i)] = PerturbChoice::Mask;
        in.use_mask_token[static_cast<std::size_t>(i)] = 1;
      } else {
        choice[static_cast<std::size_t>(i)] = PerturbChoice::Keep;
      }
    }

    if (opt.cmp_enabled && it.tokens.length() == l && it.tokens.levels() > 0 &&
        rng.uniform() >= opt.perturb.drop_prob) {
      in.has_tokens = true;
      in.tokens = it.tokens;
      in.token_choice = choice;
      in.vq_levels_used = opt.vq_levels_used;
      const int H = model.transformer().config().hidden;
      in.token_noise = Mat<Scalar>::Zero(l, H);
      for (int i = 0; i < l; ++i)
        if (choice[static_cast<std::size_t>(i)] == PerturbChoice::Noise)
          in.token_noise.row(i) = rng.normal_matrix<Scalar>(1, H, Scalar(1)).row(0);
    }

    if (positions.empty()) continue;

    Rng dropout_rng = rng.stream("dropout").stream(static_cast<std::uint64_t>(item));
    auto fwd = model.transformer().build_forward(g, model.params(), in, opt.train_dropout,
                                                 opt.train_dropout ? &dropout_rng : nullptr);
    const int B = static_cast<int>(positions.size());
    auto cond = g.add(g.rows(fwd.z, positions), g.repeat_rows(fwd.pooled_text, B));

    // targets are the clean latents, not the perturbed canvas
    Mat<Scalar> x0(B, d);
    for (int b = 0; b < B; ++b) x0.row(b) = it.latents.row(positions[static_cast<std::size_t>(b)]);
    auto item_draw = draw_diffusion(B, d, opt.schedule, rng);

    if (all_cond < 0) {
      all_cond = cond;
      all_x0 = x0;
      all_t = item_draw.t;
      all_eps = item_draw.eps;
      all_s = item_draw.s;
    } else {
      all_cond = g.concat_rows(all_cond, cond);
      Mat<Scalar> merged(all_x0.rows() + B, d);
      merged << all_x0, x0;
      all_x0 = merged;
      VecD t2(all_t.size() + B);
      t2 << all_t, item_draw.t;
      all_t = t2;
      MatD e2(all_eps.rows() + B, d);
      e2 << all_eps, item_draw.eps;
      all_eps = e2;
      all_s.insert(all_s.end(), item_draw.s.begin(), item_draw.s.end());
    }
    total_positions += B;
  }

  if (total_positions == 0) return {0.0, 0};

  DiffusionDraw draw;
  draw.t = all_t;
  draw.eps = all_eps;
  draw.s = all_s;

  auto loss = (opt.schedule.mode == DiffusionMode::Noise)
                  ? build_loss_noise(g, model.head(), model.params(), all_x0, all_cond, draw,
                                     opt.schedule)
                  : build_loss_velocity(g, model.head(), model.params(), all_x0, all_cond, draw,
                                        opt.schedule);
  const double loss_value = static_cast<double>(g.value(loss)(0, 0));
  if (!std::isfinite(loss_value))
    throw TrainingError("train_step: non-finite loss; aborting");
  model.params().zero_grads();
  g.backward(loss);
  if (adam != nullptr) adam->step();
  return {loss_value, total_positions};
}

}  // namespace cdamd
