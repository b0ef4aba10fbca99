#pragma once

#include <string>
#include <vector>

#include "cdamd/ad/graph.hpp"
#include "cdamd/ad/optimizer.hpp"
#include "cdamd/errors.hpp"
#include "cdamd/motion.hpp"
#include "cdamd/rng.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

struct AEConfig {
  int hidden_width = 64;
  int depth = 3;
  int dilation_growth = 3;
  int downsample_factor = 4;
  int latent_dim = 8;
  int in_channels = 3 * 8;

  void validate() const {
    if (hidden_width < 1 || depth < 1 || latent_dim < 1 || in_channels < 1)
      throw ConfigError("ae: sizes must be positive");
    if (downsample_factor < 1 || (downsample_factor & (downsample_factor - 1)) != 0)
      throw ConfigError("ae: downsample_factor must be a power of two");
    if (dilation_growth < 1) throw ConfigError("ae: dilation_growth must be >= 1");
  }

  int stages() const {
    int s = 0;
    for (int f = downsample_factor; f > 1; f /= 2) ++s;
    return s;
  }
};

inline int latent_length(int frames, int downsample_factor) {
  return (frames + downsample_factor - 1) / downsample_factor;
}

// Temporal convolution stack shared by the AE and the RVQ-VAE coders.
// Encoder halves the sequence `stages()` times via strided convs with
// dilated convs in between; the decoder mirrors it with nearest-neighbour
// upsampling between conv stages.
template <class Scalar>
class ConvCoder {
 public:
  using Graph = ad::Graph<Scalar>;
  using Id = typename Graph::Id;

  ConvCoder(const AEConfig& cfg, ad::ParamStore<Scalar>& params, const std::string& prefix,
            Rng init_rng)
      : cfg_(cfg) {
    cfg.validate();
    const int W = cfg.hidden_width;
    make_conv(params, init_rng, prefix + ".enc.in", 3, cfg.in_channels, W);
    for (int i = 0; i < cfg.depth; ++i) {
      make_conv(params, init_rng, prefix + ".enc.dil" + std::to_string(i), 3, W, W);
      make_conv(params, init_rng, prefix + ".enc.mix" + std::to_string(i), 1, W, W);
      if (i < cfg.stages()) make_conv(params, init_rng, prefix + ".enc.down" + std::to_string(i), 4, W, W);
    }
    make_conv(params, init_rng, prefix + ".enc.out", 3, W, cfg.latent_dim);
    make_conv(params, init_rng, prefix + ".dec.in", 3, cfg.latent_dim, W);
    for (int i = 0; i < cfg.depth; ++i) {
      make_conv(params, init_rng, prefix + ".dec.dil" + std::to_string(i), 3, W, W);
      make_conv(params, init_rng, prefix + ".dec.mix" + std::to_string(i), 1, W, W);
    }
    for (int i = 0; i < 2; ++i) {
      make_conv(params, init_rng, prefix + ".dec.refine" + std::to_string(i), 3, W, W);
      make_conv(params, init_rng, prefix + ".dec.refine_mix" + std::to_string(i), 1, W, W);
    }
    make_conv(params, init_rng, prefix + ".dec.out", 3, W, cfg.in_channels);
    prefix_ = prefix;
  }

  // x: T x in_channels (normalized units) -> ceil(T/factor) x latent_dim
  Id build_encode(Graph& g, ad::ParamStore<Scalar>& params, Id x) const {
    const int T = static_cast<int>(g.value(x).rows());
    if (T < cfg_.downsample_factor)
      throw ValidationError("encode: sequence shorter than downsample factor");
    if (static_cast<int>(g.value(x).cols()) != cfg_.in_channels)
      throw DimensionError("encode: channel count mismatch");
    Id h = conv(g, params, prefix_ + ".enc.in", x, 3, 1, 1);
    h = g.silu(h);
    int dil = 1;
    for (int i = 0; i < cfg_.depth; ++i) {
      Id u = g.silu(conv(g, params, prefix_ + ".enc.dil" + std::to_string(i), h, 3, 1, dil));
      h = g.add(h, conv(g, params, prefix_ + ".enc.mix" + std::to_string(i), u, 1, 1, 1));
      dil *= cfg_.dilation_growth;
      if (i < cfg_.stages())
        h = g.silu(conv(g, params, prefix_ + ".enc.down" + std::to_string(i), h, 4, 2, 1));
    }
    return conv(g, params, prefix_ + ".enc.out", h, 3, 1, 1);
  }

  // z: l x latent_dim -> (l * factor) x in_channels
  Id build_decode(Graph& g, ad::ParamStore<Scalar>& params, Id z) const {
    if (static_cast<int>(g.value(z).cols()) != cfg_.latent_dim)
      throw DimensionError("decode: latent dim mismatch");
    if (g.value(z).rows() < 1) throw ValidationError("decode: empty latent sequence");
    Id h = g.silu(conv(g, params, prefix_ + ".dec.in", z, 3, 1, 1));
    int dil = 1;
    for (int i = 1; i < cfg_.depth; ++i) dil *= cfg_.dilation_growth;
    for (int i = 0; i < cfg_.depth; ++i) {
      if (i >= cfg_.depth - cfg_.stages()) h = g.repeat_rows(h, 2);
      Id u = g.silu(conv(g, params, prefix_ + ".dec.dil" + std::to_string(i), h, 3, 1, dil));
      h = g.add(h, conv(g, params, prefix_ + ".dec.mix" + std::to_string(i), u, 1, 1, 1));
      dil /= cfg_.dilation_growth;
      if (dil < 1) dil = 1;
    }
    for (int i = 0; i < 2; ++i) {
      Id u = g.silu(conv(g, params, prefix_ + ".dec.refine" + std::to_string(i), h, 3, 1, 1 + 2 * i));
      h = g.add(h, conv(g, params, prefix_ + ".dec.refine_mix" + std::to_string(i), u, 1, 1, 1));
    }
    return conv(g, params, prefix_ + ".dec.out", h, 3, 1, 1);
  }

  const AEConfig& config() const { return cfg_; }

 private:
  static void make_conv(ad::ParamStore<Scalar>& params, Rng& rng, const std::string& name,
                        int kernel, int cin, int cout) {
    auto& w = params.create(name + ".w", static_cast<Eigen::Index>(kernel) * cin, cout);
    Rng r = rng.stream(name);
    r.fill_normal(w.value, Scalar(1) / std::sqrt(static_cast<Scalar>(kernel * cin)));
    params.create(name + ".b", 1, cout);
  }

  Id conv(Graph& g, ad::ParamStore<Scalar>& params, const std::string& name, Id x, int kernel,
          int stride, int dilation) const {
    const int T = static_cast<int>(g.value(x).rows());
    const int eff = (kernel - 1) * dilation + 1;
    int pad_l = 0, pad_r = 0;
    if (stride == 1) {
      pad_l = (eff - 1) / 2;
      pad_r = eff - 1 - pad_l;
    } else {
      const int out = (T + stride - 1) / stride;
      const int total = (out - 1) * stride + eff - T;
      pad_l = (eff - stride) / 2;
      pad_r = total - pad_l;
    }
    Id patches = g.im2col(x, kernel, stride, dilation, pad_l, pad_r);
    Id y = g.matmul(patches, g.param(params.at(name + ".w")));
    return g.add_rowvec(y, g.param(params.at(name + ".b")));
  }

  AEConfig cfg_;
  std::string prefix_;
};

// Deterministic autoencoder producing the continuous latent sequence.
template <class Scalar>
class AutoEncoder {
 public:
  AutoEncoder(const AEConfig& cfg, std::uint64_t seed = 0)
      : coder_(cfg, params_, "ae", Rng(seed).stream("ae_init")) {}

  Mat<Scalar> encode(const Mat<Scalar>& x) {
    ad::Graph<Scalar> g;
    return g.value(coder_.build_encode(g, params_, g.constant(x)));
  }

  Mat<Scalar> decode(const Mat<Scalar>& z) {
    ad::Graph<Scalar> g;
    return g.value(coder_.build_decode(g, params_, g.constant(z)));
  }

  const AEConfig& config() const { return coder_.config(); }
  ad::ParamStore<Scalar>& params() { return params_; }
  const ConvCoder<Scalar>& coder() const { return coder_; }

 private:
  ad::ParamStore<Scalar> params_;
  ConvCoder<Scalar> coder_;
};

// Mean absolute element difference.
template <class Scalar>
Scalar l1_loss(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("l1_loss: shape mismatch");
  return (a - b).cwiseAbs().mean();
}

inline float ae_loss(const MotionSequence& x, const MotionSequence& x_hat) {
  if (x.joints != x_hat.joints || x.frames() != x_hat.frames())
    throw DimensionError("ae_loss: motion shapes differ");
  return (x.coords - x_hat.coords).cwiseAbs().mean();
}

// --- Residual vector quantization ---------------------------------------

struct TokenSequence {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> indices;  // R x l

  int levels() const { return static_cast<int>(indices.rows()); }
  int length() const { return static_cast<int>(indices.cols()); }
};

template <class Scalar>
struct Codebook {
  int levels = 4;
  int size = 64;
  int dim = 8;
  Scalar beta = Scalar(0.25);
  std::vector<Mat<Scalar>> entries;  // per level, K x d; row 0 pinned to zero

  void validate() const {
    if (size < 2) throw ConfigError("codebook: needs at least two entries per level");
    if (beta <= Scalar(0)) throw ConfigError("codebook: beta must be positive");
    if (static_cast<int>(entries.size()) != levels) throw DimensionError("codebook: level count");
    for (const auto& level : entries) {
      if (level.rows() != size || level.cols() != dim)
        throw DimensionError("codebook: entry shape");
      for (Eigen::Index a = 0; a < level.rows(); ++a)
        for (Eigen::Index b = a + 1; b < level.rows(); ++b)
          if ((level.row(a) - level.row(b)).norm() == Scalar(0))
            throw ValidationError("codebook: duplicate codewords within a level");
    }
  }

  static Codebook random_init(int levels, int size, int dim, Scalar beta, std::uint64_t seed) {
    Codebook cb;
    cb.levels = levels;
    cb.size = size;
    cb.dim = dim;
    cb.beta = beta;
    Rng rng = Rng(seed).stream("codebook_init");
    cb.entries.resize(static_cast<std::size_t>(levels));
    for (int r = 0; r < levels; ++r) {
      cb.entries[static_cast<std::size_t>(r)] =
          rng.stream(static_cast<std::uint64_t>(r)).normal_matrix<Scalar>(size, dim, Scalar(0.3));
      cb.entries[static_cast<std::size_t>(r)].row(0).setZero();  // pinned zero codeword
    }
    return cb;
  }
};

template <class Scalar>
struct RvqResult {
  TokenSequence tokens;
  std::vector<Mat<Scalar>> residuals;  // residuals[r] = z^{r+1} chain, l x d each
  Mat<Scalar> reconstruction;          // sum of selected codewords, l x d
};

// Nearest codeword per level on the residual chain; ties break to the lowest
// index.
template <class Scalar>
RvqResult<Scalar> rvq_quantize(const Mat<Scalar>& z, const Codebook<Scalar>& cb) {
  if (static_cast<int>(z.cols()) != cb.dim) throw DimensionError("rvq_quantize: dim mismatch");
  const Eigen::Index l = z.rows();
  RvqResult<Scalar> out;
  out.tokens.indices.resize(cb.levels, l);
  out.residuals.assign(static_cast<std::size_t>(cb.levels), Mat<Scalar>(l, cb.dim));
  out.reconstruction = Mat<Scalar>::Zero(l, cb.dim);
  for (Eigen::Index t = 0; t < l; ++t) {
    RowVec<Scalar> res = z.row(t);
    for (int r = 0; r < cb.levels; ++r) {
      const Mat<Scalar>& level = cb.entries[static_cast<std::size_t>(r)];
      int best = 0;
      Scalar best_d = (res - level.row(0)).squaredNorm();
      for (Eigen::Index k = 1; k < level.rows(); ++k) {
        const Scalar d = (res - level.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      out.tokens.indices(r, t) = best;
      out.reconstruction.row(t) += level.row(best);
      res -= level.row(best);
      out.residuals[static_cast<std::size_t>(r)].row(t) = res;
    }
  }
  return out;
}

template <class Scalar>
Mat<Scalar> rvq_dequantize(const TokenSequence& tokens, const Codebook<Scalar>& cb) {
  if (tokens.levels() != cb.levels) throw DimensionError("rvq_dequantize: level mismatch");
  Mat<Scalar> out = Mat<Scalar>::Zero(tokens.length(), cb.dim);
  for (int r = 0; r < cb.levels; ++r) {
    const Mat<Scalar>& level = cb.entries[static_cast<std::size_t>(r)];
    for (int t = 0; t < tokens.length(); ++t) {
      const int k = tokens.indices(r, t);
      if (k < 0 || k >= cb.size) throw ValidationError("rvq_dequantize: index out of range");
      out.row(t) += level.row(k);
    }
  }
  return out;
}

// |sg(z) - e|^2 + beta |z - sg(e)|^2 over all elements; the forward value
// collapses to (1 + beta) |z - e|^2.
template <class Scalar>
Scalar vq_loss(const Mat<Scalar>& z, const Mat<Scalar>& e_sum, Scalar beta) {
  if (beta <= Scalar(0)) throw ConfigError("vq_loss: beta must be positive");
  if (z.rows() != e_sum.rows() || z.cols() != e_sum.cols())
    throw DimensionError("vq_loss: shape mismatch");
  return (Scalar(1) + beta) * (z - e_sum).squaredNorm();
}

// In-graph commitment side of the VQ objective: the codebook half is a
// constant, so d(loss)/dz = 2*beta*(z - e).
template <class Scalar>
typename ad::Graph<Scalar>::Id build_vq_loss(ad::Graph<Scalar>& g,
                                             typename ad::Graph<Scalar>::Id z,
                                             const Mat<Scalar>& e_sum, Scalar beta) {
  if (beta <= Scalar(0)) throw ConfigError("vq_loss: beta must be positive");
  auto diff = g.sub(z, g.constant(e_sum));
  auto commit = g.scale(g.sum(g.square(diff)), beta);
  const Scalar frozen = (g.value(z) - e_sum).squaredNorm();
  return g.add(commit, g.constant(Mat<Scalar>::Constant(1, 1, frozen)));
}

}  // namespace cdamd
