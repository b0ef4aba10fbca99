#include "cdamd/attention.hpp"

#include <fstream>

namespace cdamd {

MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "DCCM" || s == "dccm") return MaskKind::DCCM;
  if (s == "BCM" || s == "bcm") return MaskKind::BCM;
  if (s == "CM" || s == "cm") return MaskKind::CM;
  throw ValidationError("unknown mask kind '" + s + "' (valid: DCCM, BCM, CM)");
}

std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::DCCM: return "DCCM";
    case MaskKind::BCM: return "BCM";
    case MaskKind::CM: return "CM";
  }
  return "?";
}

MaskMatrix build_temporal_mask(int length) {
  if (length < 1) throw ValidationError("temporal mask: length must be >= 1");
  MaskMatrix m = MaskMatrix::Zero(length, length);
  for (int i = 0; i < length; ++i)
    for (int j = 0; j <= i; ++j) m(i, j) = 1;
  return m;
}

MaskMatrix build_conditional_mask(const FlagVector& flags) {
  const int L = static_cast<int>(flags.size());
  if (L < 1) throw ValidationError("conditional mask: empty flags");
  for (int i = 0; i < L; ++i)
    if (flags(i) > 1) throw ValidationError("conditional mask: flags must be binary");
  MaskMatrix m = MaskMatrix::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      if (flags(j) == 1 || j <= i) m(i, j) = 1;
      if (flags(i) == 1 && flags(j) == 0) m(i, j) = 0;  // condition rows stay isolated
    }
  }
  return m;
}

MaskMatrix build_self_mask(const SequenceLayout& layout) {
  layout.validate();
  const MaskMatrix temp = build_temporal_mask(layout.length());
  const MaskMatrix cond = build_conditional_mask(layout.condition_flags);
  return temp.cwiseProduct(cond);
}

MaskMatrix build_baseline_mask(BaselineMask kind, const SequenceLayout& layout) {
  layout.validate();
  const int L = layout.length();
  MaskMatrix m = build_temporal_mask(L);
  if (kind == BaselineMask::BCM) {
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j)
        if (layout.condition_flags(j) == 1) m(i, j) = 1;
  }
  return m;
}

MaskMatrix build_latent_mask(MaskKind kind, const SequenceLayout& layout) {
  switch (kind) {
    case MaskKind::DCCM: return build_self_mask(layout);
    case MaskKind::BCM: return build_baseline_mask(BaselineMask::BCM, layout);
    case MaskKind::CM: return build_baseline_mask(BaselineMask::CM, layout);
  }
  throw ValidationError("unknown mask kind");
}

MaskMatrix build_cross_mask(const SequenceLayout& layout, MaskKind kind) {
  layout.validate();
  const int L = layout.length();
  const int N = layout.n_text;
  const int M = layout.n_motion_tokens;
  MaskMatrix cross = MaskMatrix::Zero(L, N + M);
  cross.leftCols(N).setOnes();
  if (M > 0) cross.rightCols(M) = build_latent_mask(kind, layout);
  return cross;
}

AttentionMaskSet build_mask_set(const SequenceLayout& layout, MaskKind kind) {
  layout.validate();
  AttentionMaskSet set;
  set.temp = build_temporal_mask(layout.length());
  set.cond = build_conditional_mask(layout.condition_flags);
  set.self_mask = build_latent_mask(kind, layout);
  set.cross = build_cross_mask(layout, kind);
  return set;
}

void write_mask_pgm(const MaskMatrix& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "P2\n" << mask.cols() << " " << mask.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      out << (mask(i, j) != 0 ? 255 : 0) << (j + 1 < mask.cols() ? ' ' : '\n');
  }
}

void write_mask_csv(const MaskMatrix& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      out << int(mask(i, j)) << (j + 1 < mask.cols() ? ',' : '\n');
  }
}

}  // namespace cdamd
