#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cdamd/ad/graph.hpp"
#include "cdamd/attention.hpp"
#include "cdamd/codec.hpp"
#include "cdamd/rng.hpp"
#include "cdamd/text.hpp"

namespace cdamd {

struct TransformerConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 128;
  float dropout = 0.1f;
  int max_positions = 64;
  int text_buckets = 256;

  void validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || ffn < 1)
      throw ConfigError("transformer: sizes must be positive");
    if (hidden % heads != 0) throw ConfigError("transformer: hidden must divide by heads");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("transformer: dropout in [0,1)");
  }
};

// Number of masked positions under the cosine schedule at progress u.
inline int cosine_mask_schedule(double u, int l) {
  if (l < 1) throw ValidationError("cosine_mask_schedule: l must be >= 1");
  if (u < 0.0 || u > 1.0) throw ValidationError("cosine_mask_schedule: u outside [0,1]");
  const double v = std::cos(std::numbers::pi * u / 2.0) * l;
  const int count = static_cast<int>(std::ceil(v - 1e-9));
  return std::min(std::max(count, 1), l);
}

struct PerturbationConfig {
  double drop_prob = 0.70;
  double noise_frac = 0.10;
  double mask_frac = 0.88;
  double keep_frac = 0.02;

  void validate() const {
    if (drop_prob < 0.0 || drop_prob > 1.0) throw ConfigError("perturb: drop_prob in [0,1]");
    if (noise_frac < 0.0 || mask_frac < 0.0 || keep_frac < 0.0)
      throw ConfigError("perturb: negative fraction");
    if (std::abs(noise_frac + mask_frac + keep_frac - 1.0) > 1e-6)
      throw ConfigError("perturb: replacement fractions must sum to 1");
  }
};

enum class PerturbChoice : std::uint8_t { Untouched = 0, Noise, Mask, Keep };

// Which positions get perturbed and how; the draw is separated from the
// application so the training graph and the plain-matrix path share it.
struct PerturbPlan {
  bool dropped = false;
  std::vector<PerturbChoice> choice;  // length l
};

inline PerturbPlan draw_perturbation(int l, const PerturbationConfig& cfg, Rng& rng) {
  cfg.validate();
  PerturbPlan plan;
  plan.choice.assign(static_cast<std::size_t>(l), PerturbChoice::Untouched);
  if (rng.uniform() < cfg.drop_prob) {
    plan.dropped = true;
    return plan;
  }
  const int count = cosine_mask_schedule(rng.uniform(), l);
  auto order = rng.permutation(l);
  for (int i = 0; i < count; ++i) {
    const double r = rng.uniform();
    PerturbChoice c = PerturbChoice::Keep;
    if (r < cfg.noise_frac)
      c = PerturbChoice::Noise;
    else if (r < cfg.noise_frac + cfg.mask_frac)
      c = PerturbChoice::Mask;
    plan.choice[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = c;
  }
  return plan;
}

template <class Scalar>
struct PerturbResult {
  bool dropped = false;
  Mat<Scalar> embeddings;             // empty when dropped
  std::vector<PerturbChoice> choice;  // per position
};

// Stochastic perturbation of a condition embedding stream: drop everything
// with drop_prob, otherwise replace a cosine-scheduled subset with Gaussian
// noise / the [MASK] embedding / the original value.
template <class Scalar>
PerturbResult<Scalar> perturb_conditions(const Mat<Scalar>& embeddings,
                                         const RowVec<Scalar>& mask_embedding,
                                         const PerturbationConfig& cfg, Rng& rng) {
  if (mask_embedding.cols() != embeddings.cols())
    throw DimensionError("perturb_conditions: [MASK] width mismatch");
  PerturbResult<Scalar> out;
  auto plan = draw_perturbation(static_cast<int>(embeddings.rows()), cfg, rng);
  out.dropped = plan.dropped;
  out.choice = plan.choice;
  if (plan.dropped) return out;
  out.embeddings = embeddings;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    switch (plan.choice[static_cast<std::size_t>(i)]) {
      case PerturbChoice::Noise:
        out.embeddings.row(i) =
            rng.normal_matrix<Scalar>(1, embeddings.cols(), Scalar(1)).row(0);
        break;
      case PerturbChoice::Mask:
        out.embeddings.row(i) = mask_embedding;
        break;
      default:
        break;
    }
  }
  return out;
}

// Inputs to one transformer forward pass. Latent values are data constants;
// positions with use_mask_token set are fed the learnable [MASK] vector
// instead. The token stream is optional (dropped or inference).
template <class Scalar>
struct TransformerInput {
  Mat<Scalar> latents;                           // l x d
  std::vector<std::uint8_t> use_mask_token;      // length l
  std::vector<int> text_tokens;                  // hashed word buckets, >= 1
  FlagVector condition_flags;                    // length l
  MaskKind mask_kind = MaskKind::DCCM;

  bool has_tokens = false;
  TokenSequence tokens;                          // R x l when present
  std::vector<PerturbChoice> token_choice;       // per position, may be empty
  Mat<Scalar> token_noise;                       // l x hidden rows for Noise choices
  int vq_levels_used = 0;                        // 0 = all levels
};

template <class Scalar>
struct TextCondition {
  std::string prompt;
  RowVec<Scalar> embedding;   // pooled sentence vector
  Mat<Scalar> token_embeddings;  // N x hidden
};

// Transformer backbone of masked self-attention and cross-attention blocks
// producing per-position conditioning vectors for the diffusion head.
template <class Scalar>
class ArTransformer {
 public:
  using Graph = ad::Graph<Scalar>;
  using Id = typename Graph::Id;

  ArTransformer(const TransformerConfig& cfg, int latent_dim, int token_levels, int codebook_size,
                ad::ParamStore<Scalar>& params, const std::string& prefix, Rng init_rng)
      : cfg_(cfg), latent_dim_(latent_dim), token_levels_(token_levels), prefix_(prefix) {
    cfg.validate();
    const int H = cfg.hidden;
    make_linear(params, init_rng, prefix + ".latent_in", latent_dim, H);
    embedding(params, init_rng, prefix + ".text_table", cfg.text_buckets, H);
    embedding(params, init_rng, prefix + ".pos_table", cfg.max_positions, H);
    embedding(params, init_rng, prefix + ".mask_latent", 1, H);
    embedding(params, init_rng, prefix + ".mask_token", 1, H);
    for (int r = 0; r < token_levels; ++r)
      embedding(params, init_rng, prefix + ".token_table" + std::to_string(r), codebook_size, H);
    for (int layer = 0; layer < cfg.layers; ++layer) {
      const std::string base = prefix + ".layer" + std::to_string(layer);
      for (const char* blk : {".self", ".cross"}) {
        make_linear(params, init_rng, base + blk + ".q", H, H);
        make_linear(params, init_rng, base + blk + ".k", H, H);
        make_linear(params, init_rng, base + blk + ".v", H, H);
        make_linear(params, init_rng, base + blk + ".o", H, H);
        params.create(base + blk + ".ln.g", 1, H).value.setOnes();
        params.create(base + blk + ".ln.b", 1, H);
      }
      // motion-token columns start nearly invisible in cross attention
      params.create(base + ".cross.token_bias", 1, 1).value.setConstant(Scalar(-4));
      make_linear(params, init_rng, base + ".ffn.fc1", H, cfg.ffn);
      make_linear(params, init_rng, base + ".ffn.fc2", cfg.ffn, H);
      params.create(base + ".ffn.ln.g", 1, H).value.setOnes();
      params.create(base + ".ffn.ln.b", 1, H);
    }
    params.create(prefix + ".final.ln.g", 1, H).value.setOnes();
    params.create(prefix + ".final.ln.b", 1, H);
  }

  struct ForwardIds {
    Id z;            // l x hidden conditioning vectors
    Id pooled_text;  // 1 x hidden
  };

  ForwardIds build_forward(Graph& g, ad::ParamStore<Scalar>& params,
                           const TransformerInput<Scalar>& in, bool train_mode = false,
                           Rng* dropout_rng = nullptr) const {
    const int l = static_cast<int>(in.latents.rows());
    if (l < 1) throw ValidationError("transformer: empty latent sequence");
    if (l > cfg_.max_positions) throw ValidationError("transformer: sequence exceeds max positions");
    if (static_cast<int>(in.latents.cols()) != latent_dim_)
      throw DimensionError("transformer: latent dim mismatch");
    if (static_cast<int>(in.use_mask_token.size()) != l)
      throw DimensionError("transformer: use_mask_token length mismatch");
    if (static_cast<int>(in.condition_flags.size()) != l)
      throw DimensionError("transformer: condition flag length mismatch");
    if (in.text_tokens.empty()) throw ValidationError("transformer: empty text condition");
    if (in.has_tokens && in.tokens.length() != l)
      throw ValidationError("transformer: motion tokens must align with latent positions");

    const int H = cfg_.hidden;

    // Text block: pooled sentence token first, then word embeddings.
    Id words = g.rows(g.param(params.at(prefix_ + ".text_table")), in.text_tokens);
    Id pooled = g.mean_rows(words);
    Id text_block = g.concat_rows(pooled, words);
    const int n_text = static_cast<int>(in.text_tokens.size()) + 1;

    // Latent stream: projected values where known, learnable [MASK] elsewhere.
    Mat<Scalar> value_sel = Mat<Scalar>::Zero(l, H);
    Mat<Scalar> mask_sel = Mat<Scalar>::Zero(l, 1);
    for (int i = 0; i < l; ++i) {
      if (in.use_mask_token[static_cast<std::size_t>(i)])
        mask_sel(i, 0) = Scalar(1);
      else
        value_sel.row(i).setConstant(Scalar(1));
    }
    Id x_val = linear(g, params, prefix_ + ".latent_in", g.constant(in.latents));
    Id x = g.add(g.hadamard(x_val, g.constant(value_sel)),
                 g.matmul(g.constant(mask_sel), g.param(params.at(prefix_ + ".mask_latent"))));
    x = g.add(x, g.rows(g.param(params.at(prefix_ + ".pos_table")), iota(l)));

    // Optional motion-token stream, perturbed per the plan.
    Id token_block = -1;
    int n_tokens = 0;
    if (in.has_tokens) {
      n_tokens = l;
      const int levels = in.vq_levels_used > 0
                             ? std::min(in.vq_levels_used, in.tokens.levels())
                             : in.tokens.levels();
      Id emb = -1;
      for (int r = 0; r < levels; ++r) {
        std::vector<int> idx(static_cast<std::size_t>(l));
        for (int t = 0; t < l; ++t) idx[static_cast<std::size_t>(t)] = in.tokens.indices(r, t);
        Id rows = g.rows(g.param(params.at(prefix_ + ".token_table" + std::to_string(r))), idx);
        emb = (emb < 0) ? rows : g.add(emb, rows);
      }
      if (!in.token_choice.empty()) {
        Mat<Scalar> keep_sel = Mat<Scalar>::Ones(l, H);
        Mat<Scalar> tok_mask_sel = Mat<Scalar>::Zero(l, 1);
        Mat<Scalar> noise_rows = Mat<Scalar>::Zero(l, H);
        for (int i = 0; i < l; ++i) {
          switch (in.token_choice[static_cast<std::size_t>(i)]) {
            case PerturbChoice::Mask:
              keep_sel.row(i).setZero();
              tok_mask_sel(i, 0) = Scalar(1);
              break;
            case PerturbChoice::Noise:
              keep_sel.row(i).setZero();
              noise_rows.row(i) = in.token_noise.row(i);
              break;
            default:
              break;
          }
        }
        emb = g.add(g.hadamard(emb, g.constant(keep_sel)),
                    g.add(g.matmul(g.constant(tok_mask_sel),
                                   g.param(params.at(prefix_ + ".mask_token"))),
                          g.constant(noise_rows)));
      }
      token_block = g.add(emb, g.rows(g.param(params.at(prefix_ + ".pos_table")), iota(l)));
    }

    SequenceLayout layout;
    layout.n_text = n_text;
    layout.n_motion_tokens = n_tokens;
    layout.condition_flags = in.condition_flags;
    const Mat<Scalar> self_add = mask_to_additive<Scalar>(build_latent_mask(in.mask_kind, layout));
    const Mat<Scalar> cross_add = mask_to_additive<Scalar>(build_cross_mask(layout, in.mask_kind));

    Id memory = in.has_tokens ? g.concat_rows(text_block, token_block) : text_block;

    Id h = x;
    for (int layer = 0; layer < cfg_.layers; ++layer) {
      const std::string base = prefix_ + ".layer" + std::to_string(layer);
      h = g.add(h, attention_block(g, params, base + ".self", h, h, self_add, train_mode,
                                   dropout_rng));
      h = g.add(h, attention_block(g, params, base + ".cross", h, memory, cross_add, train_mode,
                                   dropout_rng, n_tokens > 0 ? base + ".cross.token_bias" : ""));
      Id f = g.layer_norm(h, g.param(params.at(base + ".ffn.ln.g")),
                          g.param(params.at(base + ".ffn.ln.b")));
      f = linear(g, params, base + ".ffn.fc2", g.silu(linear(g, params, base + ".ffn.fc1", f)));
      f = dropout(g, f, train_mode, dropout_rng);
      h = g.add(h, f);
    }
    Id z = g.layer_norm(h, g.param(params.at(prefix_ + ".final.ln.g")),
                        g.param(params.at(prefix_ + ".final.ln.b")));
    return {z, pooled};
  }

  Mat<Scalar> forward_values(ad::ParamStore<Scalar>& params, const TransformerInput<Scalar>& in) const {
    Graph g;
    return g.value(build_forward(g, params, in).z);
  }

  // Deterministic toy text encoding with the current embedding table.
  TextCondition<Scalar> encode_text(ad::ParamStore<Scalar>& params, const std::string& prompt) const {
    TextCondition<Scalar> out;
    out.prompt = prompt;
    const auto ids = text_to_buckets(prompt, cfg_.text_buckets);
    const Mat<Scalar>& table = params.at(prefix_ + ".text_table").value;
    out.token_embeddings.resize(static_cast<Eigen::Index>(ids.size()), cfg_.hidden);
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.token_embeddings.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    out.embedding = out.token_embeddings.colwise().mean();
    return out;
  }

  const TransformerConfig& config() const { return cfg_; }
  int latent_dim() const { return latent_dim_; }
  int token_levels() const { return token_levels_; }

 private:
  static std::vector<int> iota(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
  }

  static void make_linear(ad::ParamStore<Scalar>& params, Rng& rng, const std::string& name,
                          int in, int out) {
    auto& w = params.create(name + ".w", in, out);
    Rng r = rng.stream(name);
    r.fill_normal(w.value, Scalar(1) / std::sqrt(static_cast<Scalar>(in)));
    params.create(name + ".b", 1, out);
  }

  static void embedding(ad::ParamStore<Scalar>& params, Rng& rng, const std::string& name,
                        int rows, int cols) {
    auto& t = params.create(name, rows, cols);
    Rng r = rng.stream(name);
    r.fill_normal(t.value, Scalar(0.02));
  }

  Id linear(Graph& g, ad::ParamStore<Scalar>& params, const std::string& name, Id x) const {
    return g.add_rowvec(g.matmul(x, g.param(params.at(name + ".w"))),
                        g.param(params.at(name + ".b")));
  }

  Id dropout(Graph& g, Id x, bool train_mode, Rng* rng) const {
    if (!train_mode || cfg_.dropout <= 0.0f || rng == nullptr) return x;
    const auto keep = Scalar(1) - Scalar(cfg_.dropout);
    Mat<Scalar> mask(g.value(x).rows(), g.value(x).cols());
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      for (Eigen::Index r = 0; r < mask.rows(); ++r)
        mask(r, c) = rng->uniform() < cfg_.dropout ? Scalar(0) : Scalar(1) / keep;
    return g.hadamard(x, g.constant(mask));
  }

  Id attention_block(Graph& g, ad::ParamStore<Scalar>& params, const std::string& base, Id x,
                     Id memory, const Mat<Scalar>& additive, bool train_mode, Rng* rng,
                     const std::string& token_bias_name = "") const {
    Id xn = g.layer_norm(x, g.param(params.at(base + ".ln.g")), g.param(params.at(base + ".ln.b")));
    Id q = linear(g, params, base + ".q", xn);
    Id k = linear(g, params, base + ".k", memory);
    Id v = linear(g, params, base + ".v", memory);
    const int dh = cfg_.hidden / cfg_.heads;
    const auto inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    Id token_bias = -1;
    if (!token_bias_name.empty()) {
      const Eigen::Index L = g.value(x).rows();
      const Eigen::Index ctx = g.value(memory).rows();
      const Eigen::Index n_tok = L;  // tokens align 1:1 with latent positions
      Mat<Scalar> indicator = Mat<Scalar>::Zero(L, ctx);
      indicator.rightCols(n_tok).setOnes();
      token_bias = g.scale_by(g.constant(indicator), g.param(params.at(token_bias_name)));
    }
    std::vector<Id> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int hh = 0; hh < cfg_.heads; ++hh) {
      Id qh = g.cols(q, hh * dh, dh);
      Id kh = g.cols(k, hh * dh, dh);
      Id vh = g.cols(v, hh * dh, dh);
      Id logits = g.scale(g.matmul_nt(qh, kh), inv_sqrt);
      if (token_bias >= 0) logits = g.add(logits, token_bias);
      Id weights = g.softmax_rows(logits, additive);
      heads.push_back(g.matmul(weights, vh));
    }
    Id out = linear(g, params, base + ".o", g.concat_cols(heads));
    return dropout(g, out, train_mode, rng);
  }

  TransformerConfig cfg_;
  int latent_dim_;
  int token_levels_;
  std::string prefix_;
};

}  // namespace cdamd
