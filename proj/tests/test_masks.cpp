#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cdamd/attention.hpp"
#include "cdamd/rng.hpp"

using namespace cdamd;

namespace {

FlagVector flags_of(std::initializer_list<int> values) {
  FlagVector f(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (int v : values) f(i++) = static_cast<std::uint8_t>(v);
  return f;
}

SequenceLayout layout_of(const FlagVector& flags, int n_text = 0, int n_tokens = 0) {
  SequenceLayout l;
  l.n_text = n_text;
  l.n_motion_tokens = n_tokens;
  l.condition_flags = flags;
  return l;
}

// Reference attention: per row, gather visible keys, softmax in double,
// weighted sum. Kept independent of the library path.
MatD brute_force_attention(const MatD& Q, const MatD& K, const MatD& V, const MaskMatrix& mask) {
  MatD out = MatD::Zero(Q.rows(), V.cols());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    std::vector<Eigen::Index> visible;
    for (Eigen::Index j = 0; j < K.rows(); ++j)
      if (mask(i, j) != 0) visible.push_back(j);
    std::vector<double> logits;
    double mx = -1e300;
    for (auto j : visible) {
      const double v = Q.row(i).dot(K.row(j)) * inv_sqrt_d;
      logits.push_back(v);
      mx = std::max(mx, v);
    }
    double denom = 0.0;
    for (auto& v : logits) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (std::size_t t = 0; t < visible.size(); ++t)
      out.row(i) += (logits[t] / denom) * V.row(visible[t]);
  }
  return out;
}

}  // namespace

TEST_CASE("temporal mask is lower triangular") {
  const MaskMatrix m = build_temporal_mask(3);
  const MaskMatrix expect = (MaskMatrix(3, 3) << 1, 0, 0, 1, 1, 0, 1, 1, 1).finished();
  CHECK(m == expect);
  CHECK(build_temporal_mask(1)(0, 0) == 1);
  const MaskMatrix big = build_temporal_mask(9);
  for (int i = 0; i < 9; ++i)
    CHECK(static_cast<int>(big.row(i).cast<int>().sum()) == i + 1);
}

TEST_CASE("conditional mask follows the stated rule") {
  SUBCASE("all generative reduces to causal") {
    CHECK(build_conditional_mask(flags_of({0, 0, 0})) == build_temporal_mask(3));
  }
  SUBCASE("all condition is all ones") {
    const MaskMatrix m = build_conditional_mask(flags_of({1, 1, 1}));
    CHECK(m.cast<int>().sum() == 9);
  }
  SUBCASE("mixed flags, derived rows") {
    const MaskMatrix m = build_conditional_mask(flags_of({1, 1, 0, 0}));
    const MaskMatrix row2 = m.row(2);
    CHECK(row2(0, 0) == 1);
    CHECK(row2(0, 1) == 1);
    CHECK(row2(0, 2) == 1);
    CHECK(row2(0, 3) == 0);
    const MaskMatrix row0 = m.row(0);
    CHECK(row0(0, 0) == 1);
    CHECK(row0(0, 1) == 1);
    CHECK(row0(0, 2) == 0);
    CHECK(row0(0, 3) == 0);
  }
  SUBCASE("non binary flags rejected") {
    FlagVector bad(2);
    bad << 0, 2;
    CHECK_THROWS_AS(build_conditional_mask(bad), ValidationError);
  }
}

TEST_CASE("self mask is the elementwise intersection") {
  SUBCASE("all condition collapses to temporal") {
    const auto layout = layout_of(flags_of({1, 1, 1}));
    CHECK(build_self_mask(layout) == build_temporal_mask(3));
  }
  SUBCASE("all generative collapses to temporal") {
    const auto layout = layout_of(flags_of({0, 0, 0, 0}));
    CHECK(build_self_mask(layout) == build_temporal_mask(4));
  }
  SUBCASE("worked example row") {
    const auto layout = layout_of(flags_of({1, 1, 0, 0}));
    const MaskMatrix self = build_self_mask(layout);
    const MaskMatrix expect_row2 = (MaskMatrix(1, 4) << 1, 1, 1, 0).finished();
    CHECK(MaskMatrix(self.row(2)) == expect_row2);
    // AND with the factors, elementwise
    const MaskMatrix temp = build_temporal_mask(4);
    const MaskMatrix cond = build_conditional_mask(layout.condition_flags);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(self(i, j) == (temp(i, j) & cond(i, j)));
  }
}

TEST_CASE("mask algebra properties over random layouts") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 1 + rng.uniform_int(32);
    FlagVector flags(L);
    for (int i = 0; i < L; ++i) flags(i) = static_cast<std::uint8_t>(rng.uniform_int(2));
    const auto layout = layout_of(flags);
    const MaskMatrix temp = build_temporal_mask(L);
    const MaskMatrix cond = build_conditional_mask(flags);
    const MaskMatrix self = build_self_mask(layout);
    bool all_zero_flags = true;
    for (int i = 0; i < L; ++i) all_zero_flags &= flags(i) == 0;
    for (int i = 0; i < L; ++i) {
      CHECK(self(i, i) == 1);
      for (int j = 0; j < L; ++j) {
        CHECK(self(i, j) == (temp(i, j) & cond(i, j)));
        if (flags(i) == 1 && flags(j) == 0 && i != j) CHECK(self(i, j) == 0);
      }
    }
    if (all_zero_flags) CHECK(self == temp);
  }
}

TEST_CASE("cross mask concatenates text and token rules") {
  SUBCASE("text only is all ones") {
    const auto layout = layout_of(flags_of({0, 0}), 3, 0);
    const MaskMatrix cross = build_cross_mask(layout);
    CHECK(cross.rows() == 2);
    CHECK(cross.cols() == 3);
    CHECK(cross.cast<int>().sum() == 6);
  }
  SUBCASE("tokens inherit the self rule") {
    const auto layout = layout_of(flags_of({0, 0, 0}), 0, 3);
    CHECK(build_cross_mask(layout) == build_temporal_mask(3));
  }
  SUBCASE("worked concatenation") {
    const auto layout = layout_of(flags_of({0, 0, 0}), 2, 3);
    const MaskMatrix cross = build_cross_mask(layout);
    const MaskMatrix expect_row0 = (MaskMatrix(1, 5) << 1, 1, 1, 0, 0).finished();
    CHECK(MaskMatrix(cross.row(0)) == expect_row0);
  }
  SUBCASE("misaligned token count rejected") {
    SequenceLayout bad = layout_of(flags_of({0, 0, 0}), 2, 2);
    CHECK_THROWS_AS(build_cross_mask(bad), ValidationError);
  }
}

TEST_CASE("baseline masks") {
  SUBCASE("CM is plain causal") {
    const auto layout = layout_of(flags_of({1, 0, 1}));
    CHECK(build_baseline_mask(BaselineMask::CM, layout) == build_temporal_mask(3));
  }
  SUBCASE("BCM equals CM when nothing is unmasked") {
    const auto layout = layout_of(flags_of({0, 0, 0, 0}));
    CHECK(build_baseline_mask(BaselineMask::BCM, layout) ==
          build_baseline_mask(BaselineMask::CM, layout));
  }
  SUBCASE("BCM sees future condition columns") {
    const auto layout = layout_of(flags_of({0, 0, 1}));
    const MaskMatrix m = build_baseline_mask(BaselineMask::BCM, layout);
    const MaskMatrix expect_row0 = (MaskMatrix(1, 3) << 1, 0, 1).finished();
    CHECK(MaskMatrix(m.row(0)) == expect_row0);
  }
  SUBCASE("string parsing rejects unknown kinds") {
    CHECK_THROWS_AS(mask_kind_from_string("XYZ"), ValidationError);
  }
}

TEST_CASE("masked attention matches the brute force oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int L = 1 + rng.uniform_int(16);
    const int ctx = 1 + rng.uniform_int(16);
    const int d = 1 + rng.uniform_int(8);
    MatD Q = rng.normal_matrix<double>(L, d);
    MatD K = rng.normal_matrix<double>(ctx, d);
    MatD V = rng.normal_matrix<double>(ctx, d);
    MaskMatrix mask(L, ctx);
    for (int i = 0; i < L; ++i) {
      bool any = false;
      for (int j = 0; j < ctx; ++j) {
        mask(i, j) = static_cast<std::uint8_t>(rng.uniform_int(2));
        any |= mask(i, j) != 0;
      }
      if (!any) mask(i, rng.uniform_int(ctx)) = 1;
    }
    const MatD got = masked_attention<double>(Q, K, V, mask);
    const MatD expect = brute_force_attention(Q, K, V, mask);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("attention is invariant to masked key and value changes") {
  Rng rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    const int L = 4 + rng.uniform_int(8);
    const int d = 4;
    MatD Q = rng.normal_matrix<double>(L, d);
    MatD K = rng.normal_matrix<double>(L, d);
    MatD V = rng.normal_matrix<double>(L, d);
    MaskMatrix mask = build_temporal_mask(L);
    const MatD base = masked_attention<double>(Q, K, V, mask);
    MatD K2 = K, V2 = V;
    // rewrite strictly-future rows, invisible to row 0..L-2 selectively
    K2.row(L - 1) += rng.normal_matrix<double>(1, d, 10.0);
    V2.row(L - 1) += rng.normal_matrix<double>(1, d, 10.0);
    const MatD moved = masked_attention<double>(Q, K2, V2, mask);
    CHECK((moved.topRows(L - 1) - base.topRows(L - 1)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("masked weight underflows to zero at float32") {
  const int L = 3;
  MatF Q = MatF::Ones(L, 2), K = MatF::Ones(L, 2), V = MatF::Identity(3, 2);
  MaskMatrix mask = build_temporal_mask(L);
  // recompute weights directly: blocked logits pick up -1e9
  MatF logits = (Q * K.transpose()) / std::sqrt(2.0f) + mask_to_additive<float>(mask);
  for (int i = 0; i < L; ++i) {
    float mx = logits.row(i).maxCoeff();
    for (int j = 0; j < L; ++j) {
      if (mask(i, j) == 0) {
        const float w = std::exp(logits(i, j) - mx);
        CHECK(w < 1e-30f);
      }
    }
  }
}

TEST_CASE("attention rejects rows with no visible entries") {
  MatD Q = MatD::Ones(2, 2), K = MatD::Ones(2, 2), V = MatD::Ones(2, 2);
  MaskMatrix mask = MaskMatrix::Zero(2, 2);
  mask(0, 0) = 1;
  CHECK_THROWS_AS(masked_attention<double>(Q, K, V, mask), ValidationError);
}

TEST_CASE("single visible column returns that value row") {
  Rng rng(555);
  MatD Q = rng.normal_matrix<double>(1, 4);
  MatD K = rng.normal_matrix<double>(5, 4);
  MatD V = rng.normal_matrix<double>(5, 4);
  MaskMatrix mask = MaskMatrix::Zero(1, 5);
  mask(0, 3) = 1;
  const MatD out = masked_attention<double>(Q, K, V, mask);
  CHECK((out.row(0) - V.row(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all ones mask equals unmasked attention") {
  Rng rng(777);
  MatD Q = rng.normal_matrix<double>(4, 3);
  MatD K = rng.normal_matrix<double>(6, 3);
  MatD V = rng.normal_matrix<double>(6, 3);
  MaskMatrix ones = MaskMatrix::Ones(4, 6);
  const MatD masked = masked_attention<double>(Q, K, V, ones);
  // plain softmax attention
  MatD logits = (Q * K.transpose()) / std::sqrt(3.0);
  MatD expect(4, 3);
  for (int i = 0; i < 4; ++i) {
    Eigen::Array<double, 1, Eigen::Dynamic> e =
        (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    expect.row(i) = (e / e.sum()).matrix() * V;
  }
  CHECK((masked - expect).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("mask export writes pgm and csv") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "cdamd_mask_test";
  fs::create_directories(dir);
  const MaskMatrix m = build_temporal_mask(4);
  CHECK_NOTHROW(write_mask_pgm(m, (dir / "m.pgm").string()));
  CHECK_NOTHROW(write_mask_csv(m, (dir / "m.csv").string()));
  CHECK(fs::file_size(dir / "m.pgm") > 0);
  CHECK(fs::file_size(dir / "m.csv") > 0);
}
