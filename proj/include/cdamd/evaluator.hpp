#pragma once

#include <string>
#include <vector>

#include "cdamd/ad/optimizer.hpp"
#include "cdamd/codec_train.hpp"
#include "cdamd/corpus.hpp"
#include "cdamd/motion.hpp"
#include "cdamd/text.hpp"

namespace cdamd {

struct EvaluatorConfig {
  int embed_dim = 32;
  int hidden = 64;
  int text_buckets = 256;
  float temperature = 0.07f;
  int motion_channels = 3 * kSkeletonJoints;

  void validate() const {
    if (embed_dim < 1 || hidden < 1 || text_buckets < 1)
      throw ConfigError("evaluator: sizes must be positive");
    if (temperature <= 0.0f) throw ConfigError("evaluator: temperature must be positive");
  }
};

// Contrastive motion/text evaluator. The motion tower is a strided temporal
// conv stack with mean pooling; the text tower a bag of hashed word
// embeddings. Both emit unit-norm vectors.
template <class Scalar>
class Evaluator {
 public:
  using Graph = ad::Graph<Scalar>;
  using Id = typename Graph::Id;

  explicit Evaluator(const EvaluatorConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    Rng rng = Rng(seed).stream("eval_init");
    const int H = cfg.hidden;
    make_linear(rng, "m.conv0", 3 * cfg.motion_channels, H);
    make_linear(rng, "m.conv1", 4 * H, H);
    make_linear(rng, "m.conv2", 4 * H, H);
    make_linear(rng, "m.fc1", H, H);
    make_linear(rng, "m.fc2", H, cfg.embed_dim);
    auto& table = params_.create("t.table", cfg.text_buckets, H);
    Rng tr = rng.stream("t.table");
    tr.fill_normal(table.value, Scalar(0.05));
    make_linear(rng, "t.fc1", H, H);
    make_linear(rng, "t.fc2", H, cfg.embed_dim);
  }

  Id build_motion_embed(Graph& g, Id x_normalized) const {
    auto& p = const_cast<ad::ParamStore<Scalar>&>(params_);
    Id h = g.silu(conv(g, "m.conv0", x_normalized, 3, 1));
    h = g.silu(conv(g, "m.conv1", h, 4, 2));
    h = g.silu(conv(g, "m.conv2", h, 4, 2));
    h = g.mean_rows(h);
    h = g.silu(g.add_rowvec(g.matmul(h, g.param(p.at("m.fc1.w"))), g.param(p.at("m.fc1.b"))));
    h = g.add_rowvec(g.matmul(h, g.param(p.at("m.fc2.w"))), g.param(p.at("m.fc2.b")));
    return g.l2_normalize_rows(h);
  }

  Id build_text_embed(Graph& g, const std::vector<int>& buckets) const {
    auto& p = const_cast<ad::ParamStore<Scalar>&>(params_);
    Id words = g.rows(g.param(p.at("t.table")), buckets);
    Id h = g.mean_rows(words);
    h = g.silu(g.add_rowvec(g.matmul(h, g.param(p.at("t.fc1.w"))), g.param(p.at("t.fc1.b"))));
    h = g.add_rowvec(g.matmul(h, g.param(p.at("t.fc2.w"))), g.param(p.at("t.fc2.b")));
    return g.l2_normalize_rows(h);
  }

  Vec<Scalar> embed_motion(const MotionSequence& m) const {
    const MotionSequence n = normalize(m, stats_);
    Graph g;
    return g.value(build_motion_embed(g, g.constant(n.coords.template cast<Scalar>())))
        .row(0)
        .transpose();
  }

  Vec<Scalar> embed_text(const std::string& prompt) const {
    Graph g;
    return g
        .value(build_text_embed(g, text_to_buckets(prompt, cfg_.text_buckets)))
        .row(0)
        .transpose();
  }

  const EvaluatorConfig& config() const { return cfg_; }
  ad::ParamStore<Scalar>& params() { return params_; }
  const ad::ParamStore<Scalar>& params() const { return params_; }
  MotionStats& stats() { return stats_; }
  const MotionStats& stats() const { return stats_; }

 private:
  void make_linear(Rng& rng, const std::string& name, int in, int out) {
    auto& w = params_.create(name + ".w", in, out);
    Rng r = rng.stream(name);
    r.fill_normal(w.value, Scalar(1) / std::sqrt(static_cast<Scalar>(in)));
    params_.create(name + ".b", 1, out);
  }

  Id conv(Graph& g, const std::string& name, Id x, int kernel, int stride) const {
    auto& p = const_cast<ad::ParamStore<Scalar>&>(params_);
    const int T = static_cast<int>(g.value(x).rows());
    int pad_l = 1, pad_r = 1;
    if (stride > 1) {
      const int out = (T + stride - 1) / stride;
      pad_r = (out - 1) * stride + kernel - T - pad_l;
    }
    Id patches = g.im2col(x, kernel, stride, 1, pad_l, pad_r);
    return g.add_rowvec(g.matmul(patches, g.param(p.at(name + ".w"))),
                        g.param(p.at(name + ".b")));
  }

  EvaluatorConfig cfg_;
  ad::ParamStore<Scalar> params_;
  MotionStats stats_;
};

struct EvaluatorTrainOptions {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

// Symmetric in-batch contrastive training (InfoNCE both directions).
// Returns the per-epoch loss curve; throws TrainingError on divergence.
template <class Scalar>
TrainLog train_evaluator(Evaluator<Scalar>& model, const std::vector<CorpusSample>& corpus,
                         const EvaluatorTrainOptions& opt) {
  if (corpus.empty()) throw TrainingError("train_evaluator: empty corpus");
  model.stats() = compute_stats([&] {
    std::vector<MotionSequence> ms;
    for (const auto& s : corpus) ms.push_back(s.motion);
    return ms;
  }());
  std::vector<Mat<Scalar>> motions;
  std::vector<std::vector<int>> texts;
  for (const auto& s : corpus) {
    motions.push_back(normalize(s.motion, model.stats()).coords.template cast<Scalar>());
    texts.push_back(text_to_buckets(s.text, model.config().text_buckets));
  }
  TrainLog log;
  if (opt.epochs <= 0) return log;
  ad::Adam<Scalar> adam(model.params(), {.base_lr = opt.lr});
  Rng order_rng = Rng(opt.seed).stream("eval_train_order");
  const auto inv_temp = Scalar(1) / Scalar(model.config().temperature);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto perm = order_rng.permutation(static_cast<int>(corpus.size()));
    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at + 2 <= perm.size();
         at += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(perm.size(), at + static_cast<std::size_t>(opt.batch_size));
      if (end - at < 2) break;
      ad::Graph<Scalar> g;
      typename ad::Graph<Scalar>::Id m_emb = -1;
      typename ad::Graph<Scalar>::Id t_emb = -1;
      for (std::size_t i = at; i < end; ++i) {
        const int k = perm[i];
        auto me = model.build_motion_embed(g, g.constant(motions[static_cast<std::size_t>(k)]));
        auto te = model.build_text_embed(g, texts[static_cast<std::size_t>(k)]);
        m_emb = (m_emb < 0) ? me : g.concat_rows(m_emb, me);
        t_emb = (t_emb < 0) ? te : g.concat_rows(t_emb, te);
      }
      auto logits_mt = g.scale(g.matmul_nt(m_emb, t_emb), inv_temp);
      auto logits_tm = g.scale(g.matmul_nt(t_emb, m_emb), inv_temp);
      auto loss = g.scale(
          g.add(g.diag_mean(g.log_softmax_rows(logits_mt)),
                g.diag_mean(g.log_softmax_rows(logits_tm))),
          Scalar(-0.5));
      const double batch_loss = static_cast<double>(g.value(loss)(0, 0));
      if (!std::isfinite(batch_loss))
        throw TrainingError("train_evaluator: loss diverged");
      model.params().zero_grads();
      g.backward(loss);
      adam.step();
      epoch_sum += batch_loss;
      ++batches;
    }
    log.epoch_loss.push_back(epoch_sum / std::max(batches, 1));
  }
  return log;
}

}  // namespace cdamd
