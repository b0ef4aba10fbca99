#pragma once

#include <cmath>
#include <string>

#include "cdamd/errors.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

// Which latent-to-latent visibility rule drives the transformer.
enum class MaskKind { DCCM, BCM, CM };

MaskKind mask_kind_from_string(const std::string& s);
std::string to_string(MaskKind k);

// Token layout of one modeling problem: N text columns, M motion-token
// columns (0 or L), L latent positions. condition_flags[i] == 1 marks a
// known/conditioning latent position, 0 a generative one.
struct SequenceLayout {
  int n_text = 0;
  int n_motion_tokens = 0;
  FlagVector condition_flags;  // length L

  int length() const { return static_cast<int>(condition_flags.size()); }

  void validate() const {
    if (length() < 1) throw ValidationError("layout: needs at least one latent position");
    if (n_text < 0 || n_motion_tokens < 0) throw ValidationError("layout: negative counts");
    if (n_motion_tokens != 0 && n_motion_tokens != length())
      throw ValidationError("layout: motion tokens must be absent or align 1:1 with latents");
    for (int i = 0; i < length(); ++i)
      if (condition_flags(i) > 1) throw ValidationError("layout: flags must be binary");
  }
};

struct AttentionMaskSet {
  MaskMatrix temp;       // L x L
  MaskMatrix cond;       // L x L
  MaskMatrix self_mask;  // L x L
  MaskMatrix cross;      // L x (N + M)
};

// Lower-triangular ones (position i sees j <= i).
MaskMatrix build_temporal_mask(int length);

// Condition columns are globally visible, generative columns follow
// causality; condition rows are isolated from generative columns.
MaskMatrix build_conditional_mask(const FlagVector& flags);

// Elementwise intersection of the temporal and conditional masks.
MaskMatrix build_self_mask(const SequenceLayout& layout);

// Text columns always visible; motion-token columns inherit the latent rule
// for the requested kind over aligned positions.
MaskMatrix build_cross_mask(const SequenceLayout& layout, MaskKind kind = MaskKind::DCCM);

enum class BaselineMask { BCM, CM };

// CM: plain causal. BCM: causal plus visibility of condition-flagged future
// columns (simplified reimplementation of the bidirectional causal rule).
MaskMatrix build_baseline_mask(BaselineMask kind, const SequenceLayout& layout);

// Latent-to-latent mask for any kind.
MaskMatrix build_latent_mask(MaskKind kind, const SequenceLayout& layout);

AttentionMaskSet build_mask_set(const SequenceLayout& layout, MaskKind kind = MaskKind::DCCM);

// Blocked entries become kMaskedLogit additively before softmax; their
// post-softmax weight underflows below 1e-30 at float32.
constexpr double kMaskedLogit = -1e9;

template <class Scalar>
Mat<Scalar> mask_to_additive(const MaskMatrix& mask) {
  Mat<Scalar> out(mask.rows(), mask.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      out(i, j) = mask(i, j) != 0 ? Scalar(0) : Scalar(kMaskedLogit);
  return out;
}

// softmax(Q K^T / sqrt(d) + log M) V with the log realized additively.
template <class Scalar>
Mat<Scalar> masked_attention(const Mat<Scalar>& Q, const Mat<Scalar>& K, const Mat<Scalar>& V,
                             const MaskMatrix& mask) {
  if (Q.cols() != K.cols()) throw DimensionError("masked_attention: Q/K width mismatch");
  if (K.rows() != V.rows()) throw DimensionError("masked_attention: K/V length mismatch");
  if (mask.rows() != Q.rows() || mask.cols() != K.rows())
    throw DimensionError("masked_attention: mask shape mismatch");
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    if ((mask.row(i).array() != 0).count() == 0)
      throw ValidationError("masked_attention: row with no visible entries");
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(Q.cols()));
  Mat<Scalar> logits = (Q * K.transpose()) * inv_sqrt_d + mask_to_additive<Scalar>(mask);
  Mat<Scalar> weights(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar mx = logits.row(r).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (logits.row(r).array() - mx).exp();
    weights.row(r) = (e / e.sum()).matrix();
  }
  return weights * V;
}

// PGM (P2) or CSV renders of a mask for inspection.
void write_mask_pgm(const MaskMatrix& mask, const std::string& path);
void write_mask_csv(const MaskMatrix& mask, const std::string& path);

}  // namespace cdamd
