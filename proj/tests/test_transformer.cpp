#include <doctest.h>

#include "cdamd/generator.hpp"
#include "cdamd/transformer.hpp"

using namespace cdamd;

namespace {

TransformerConfig tiny_tf() {
  TransformerConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.ffn = 24;
  cfg.dropout = 0.0f;
  cfg.max_positions = 32;
  return cfg;
}

template <class Scalar>
TransformerInput<Scalar> basic_input(int l, int d, std::uint64_t seed, MaskKind kind = MaskKind::DCCM) {
  Rng rng(seed);
  TransformerInput<Scalar> in;
  in.latents = rng.normal_matrix<Scalar>(l, d);
  in.use_mask_token.assign(static_cast<std::size_t>(l), 0);
  in.text_tokens = {4, 17, 99};
  in.condition_flags = FlagVector::Zero(l);
  in.mask_kind = kind;
  return in;
}

}  // namespace

TEST_CASE("cosine mask schedule spot values") {
  CHECK(cosine_mask_schedule(0.0, 7) == 7);
  CHECK(cosine_mask_schedule(1.0, 7) == 1);
  CHECK(cosine_mask_schedule(2.0 / 3.0, 10) == 5);
  CHECK(cosine_mask_schedule(0.5, 4) == 3);  // ceil(cos(pi/4)*4) = ceil(2.828)
  CHECK_THROWS_AS(cosine_mask_schedule(-0.1, 5), ValidationError);
  CHECK_THROWS_AS(cosine_mask_schedule(1.1, 5), ValidationError);
  CHECK_THROWS_AS(cosine_mask_schedule(0.5, 0), ValidationError);
}

TEST_CASE("perturbation config validation") {
  PerturbationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.noise_frac = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PerturbationConfig{};
  cfg.drop_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("perturb_conditions honors degenerate settings") {
  Rng rng(5);
  MatF emb = rng.normal_matrix<float>(8, 6);
  RowVec<float> mask_vec = RowVec<float>::Constant(6, 9.0f);

  SUBCASE("drop_prob 1 always drops") {
    PerturbationConfig cfg;
    cfg.drop_prob = 1.0;
    for (int i = 0; i < 20; ++i) {
      auto out = perturb_conditions(emb, mask_vec, cfg, rng);
      CHECK(out.dropped);
      CHECK(out.embeddings.size() == 0);
    }
  }
  SUBCASE("pure mask replacement hits the learnable vector") {
    PerturbationConfig cfg;
    cfg.drop_prob = 0.0;
    cfg.noise_frac = 0.0;
    cfg.mask_frac = 1.0;
    cfg.keep_frac = 0.0;
    auto out = perturb_conditions(emb, mask_vec, cfg, rng);
    REQUIRE(!out.dropped);
    int masked = 0;
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
      if (out.choice[static_cast<std::size_t>(i)] == PerturbChoice::Mask) {
        ++masked;
        CHECK((out.embeddings.row(i).array() == 9.0f).all());
      } else {
        CHECK((out.embeddings.row(i) - emb.row(i)).cwiseAbs().maxCoeff() == 0.0f);
      }
    }
    CHECK(masked >= 1);
  }
}

TEST_CASE("perturbation frequencies converge to the configured mix") {
  PerturbationConfig cfg;  // 0.70 / (0.10, 0.88, 0.02)
  Rng rng(2024);
  const int draws = 100000;
  const int l = 16;
  long dropped = 0, noise = 0, masked = 0, kept = 0;
  for (int i = 0; i < draws; ++i) {
    auto plan = draw_perturbation(l, cfg, rng);
    if (plan.dropped) {
      ++dropped;
      continue;
    }
    for (auto c : plan.choice) {
      if (c == PerturbChoice::Noise) ++noise;
      if (c == PerturbChoice::Mask) ++masked;
      if (c == PerturbChoice::Keep) ++kept;
    }
  }
  const double drop_freq = static_cast<double>(dropped) / draws;
  const double total = static_cast<double>(noise + masked + kept);
  INFO("drop ", drop_freq, " mix ", noise / total, " ", masked / total, " ", kept / total);
  CHECK(drop_freq == doctest::Approx(0.70).epsilon(0.015));
  CHECK(noise / total == doctest::Approx(0.10).epsilon(0.1));
  CHECK(std::abs(noise / total - 0.10) < 0.01);
  CHECK(std::abs(masked / total - 0.88) < 0.01);
  CHECK(std::abs(kept / total - 0.02) < 0.01);
}

TEST_CASE("text encoding is deterministic and counts words") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(1).stream("init"));
  const auto a = tf.encode_text(params, "walk forward now");
  const auto b = tf.encode_text(params, "walk forward now");
  CHECK(a.token_embeddings.rows() == 3);
  CHECK((a.embedding - b.embedding).cwiseAbs().maxCoeff() == 0.0f);
  const auto single = tf.encode_text(params, "hop");
  CHECK(single.token_embeddings.rows() == 1);
  CHECK(single.embedding.cols() == 16);
  CHECK_THROWS_AS(tf.encode_text(params, "   "), ValidationError);
}

TEST_CASE("forward output has the contracted shape and is finite") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(3).stream("init"));
  for (int l : {1, 5, 12}) {
    auto in = basic_input<float>(l, 4, 7);
    const MatF z = tf.forward_values(params, in);
    CHECK(z.rows() == l);
    CHECK(z.cols() == 16);
    CHECK(z.allFinite());
  }
}

TEST_CASE("text-only path works when tokens are dropped") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(4).stream("init"));
  auto in = basic_input<float>(6, 4, 8);
  in.has_tokens = false;
  const MatF z = tf.forward_values(params, in);
  CHECK(z.allFinite());
}

TEST_CASE("causality: future generative perturbations leave earlier outputs unchanged") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(5).stream("init"));
  Rng rng(17);
  const int l = 10;
  for (int probe = 0; probe < 20; ++probe) {
    auto in = basic_input<float>(l, 4, 100 + probe);
    const MatF base = tf.forward_values(params, in);
    const int j = 1 + rng.uniform_int(l - 1);  // perturbed position
    auto moved = in;
    moved.latents.row(j) += rng.normal_matrix<float>(1, 4, 5.0f).row(0);
    const MatF out = tf.forward_values(params, moved);
    for (int i = 0; i < j; ++i) {
      const float delta = (out.row(i) - base.row(i)).cwiseAbs().maxCoeff();
      INFO("probe ", probe, " i ", i, " j ", j, " delta ", delta);
      CHECK(delta < 1e-6f);
    }
    // and the perturbed position itself must change
    CHECK((out.row(j) - base.row(j)).cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("text columns influence every position") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(6).stream("init"));
  auto in = basic_input<float>(6, 4, 9);
  const MatF base = tf.forward_values(params, in);
  auto other = in;
  other.text_tokens = {200, 201};
  const MatF out = tf.forward_values(params, other);
  for (int i = 0; i < 6; ++i)
    CHECK((out.row(i) - base.row(i)).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("CM with no condition flags matches DCCM bit for bit") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(7).stream("init"));
  auto in = basic_input<float>(8, 4, 11, MaskKind::DCCM);
  const MatF dccm = tf.forward_values(params, in);
  in.mask_kind = MaskKind::CM;
  const MatF cm = tf.forward_values(params, in);
  CHECK((dccm - cm).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("train_step with an all-zero mask is a no-op") {
  Generator<float> model(tiny_tf(), DiffMLPConfig{2, 16, 4, 16, 8}, 4, 2, 8, 1);
  std::vector<TrainItem<float>> batch(1);
  Rng rng(2);
  batch[0].latents = rng.normal_matrix<float>(5, 4);
  batch[0].text_buckets = {3};
  std::vector<FlagVector> masks{FlagVector::Zero(5)};
  TrainStepOptions opt;
  opt.schedule = DiffusionSchedule::velocity(8);
  opt.cmp_enabled = false;
  auto before = model.params()[0].value;
  ad::Adam<float> adam(model.params(), {.base_lr = 1e-2});
  Rng step_rng(3);
  const StepStats stats = train_step(model, batch, opt, step_rng, &adam, &masks);
  CHECK(stats.loss == 0.0);
  CHECK(stats.positions == 0);
  CHECK((model.params()[0].value - before).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("train_step produces finite loss and nonzero transformer gradients") {
  Generator<float> model(tiny_tf(), DiffMLPConfig{2, 16, 4, 16, 8}, 4, 2, 8, 1);
  std::vector<TrainItem<float>> batch(2);
  Rng rng(4);
  for (auto& item : batch) {
    item.latents = rng.normal_matrix<float>(6, 4);
    item.tokens.indices = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(2, 6);
    item.text_buckets = {5, 6};
  }
  TrainStepOptions opt;
  opt.schedule = DiffusionSchedule::velocity(8);
  opt.train_dropout = false;
  Rng step_rng(9);
  const StepStats stats = train_step(model, batch, opt, step_rng, nullptr);
  CHECK(std::isfinite(stats.loss));
  CHECK(stats.positions > 0);
  double tf_grad_norm = 0.0;
  for (std::size_t i = 0; i < model.params().size(); ++i)
    if (model.params()[i].name.rfind("tf.", 0) == 0)
      tf_grad_norm += model.params()[i].grad.template cast<double>().squaredNorm();
  CHECK(tf_grad_norm > 0.0);
}

TEST_CASE("train_step gradients match finite differences on a two-position toy") {
  TransformerConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.ffn = 8;
  cfg.dropout = 0.0f;
  cfg.max_positions = 4;
  Generator<double> model(cfg, DiffMLPConfig{1, 8, 2, 8, 4}, 2, 1, 4, 5);
  std::vector<TrainItem<double>> batch(1);
  Rng rng(6);
  batch[0].latents = rng.normal_matrix<double>(2, 2);
  batch[0].text_buckets = {1};
  std::vector<FlagVector> masks{FlagVector::Ones(2)};
  TrainStepOptions opt;
  opt.schedule = DiffusionSchedule::velocity(4);
  opt.train_dropout = false;
  opt.cmp_enabled = false;

  auto loss_fn = [&]() {
    Rng step_rng(77);
    return train_step(model, batch, opt, step_rng, nullptr, &masks).loss;
  };
  loss_fn();  // fills grads
  std::vector<Mat<double>> grads;
  for (std::size_t i = 0; i < model.params().size(); ++i)
    grads.push_back(model.params()[i].grad);

  const double h = 1e-6;
  int checked = 0;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i];
    if (p.value.size() == 0) continue;
    const Eigen::Index r = 0, c = p.value.cols() - 1;
    const double keep = p.value(r, c);
    p.value(r, c) = keep + h;
    const double lp = loss_fn();
    p.value(r, c) = keep - h;
    const double lm = loss_fn();
    p.value(r, c) = keep;
    const double fd = (lp - lm) / (2 * h);
    const double analytic = grads[i](r, c);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    if (std::abs(fd) < 1e-12 && std::abs(analytic) < 1e-12) continue;
    INFO(p.name, " fd ", fd, " analytic ", analytic);
    CHECK(std::abs(analytic - fd) / denom < 1e-3);
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("layout mismatches are rejected") {
  ad::ParamStore<float> params;
  ArTransformer<float> tf(tiny_tf(), 4, 2, 8, params, "tf", Rng(8).stream("init"));
  auto in = basic_input<float>(5, 4, 12);
  in.condition_flags = FlagVector::Zero(4);
  CHECK_THROWS_AS(tf.forward_values(params, in), DimensionError);
  auto in2 = basic_input<float>(5, 4, 13);
  in2.text_tokens.clear();
  CHECK_THROWS_AS(tf.forward_values(params, in2), ValidationError);
}
