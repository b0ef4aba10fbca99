#include <doctest.h>

#include <set>

#include "cdamd/evaluator.hpp"
#include "cdamd/metrics.hpp"

using namespace cdamd;

namespace {

// Test-side eigensolver: cyclic Jacobi sweeps at long double, independent of
// the Eigen-based implementation path.
std::vector<long double> jacobi_eigenvalues(std::vector<std::vector<long double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30L) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs((double)a[p][q]) < 1e-300) continue;
        const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) /
                              (std::abs((double)theta) + std::sqrt((double)(theta * theta + 1.0L)));
        const long double c = 1.0L / std::sqrt((double)(t * t + 1.0L));
        const long double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<long double> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = a[i][i];
  return vals;
}

// frechet distance via the Jacobi oracle: eigendecompose cov_a to build its
// sqrt, then eigendecompose the symmetrized product
double frechet_oracle(const GaussianStats& a, const GaussianStats& b) {
  const int n = static_cast<int>(a.mean.size());
  // sqrt(cov_a) via Eigen would defeat the purpose; use power iteration-free
  // Jacobi on cov_a with full vectors. For the oracle we only need
  // tr((sqrtA B sqrtA)^1/2) = sum sqrt(eig(A B)); eig(A B) = eig(sqrtA B sqrtA)
  // and A B is similar to the symmetric product, so take eigenvalues of
  // sqrtA*B*sqrtA computed in long double via Jacobi on A first.
  std::vector<std::vector<long double>> am(n, std::vector<long double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) am[i][j] = a.cov(i, j);
  // Jacobi with eigenvectors for sqrt(A)
  std::vector<std::vector<long double>> v(n, std::vector<long double>(n, 0));
  for (int i = 0; i < n; ++i) v[i][i] = 1;
  auto amc = am;
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += amc[p][q] * amc[p][q];
    if (off < 1e-30L) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs((double)amc[p][q]) < 1e-300) continue;
        const long double theta = (amc[q][q] - amc[p][p]) / (2.0L * amc[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) /
                              (std::abs((double)theta) + std::sqrt((double)(theta * theta + 1.0L)));
        const long double c = 1.0L / std::sqrt((double)(t * t + 1.0L));
        const long double s = t * c;
        for (int k = 0; k < n; ++k) {
          const long double akp = amc[k][p], akq = amc[k][q];
          amc[k][p] = c * akp - s * akq;
          amc[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const long double apk = amc[p][k], aqk = amc[q][k];
          amc[p][k] = c * apk - s * aqk;
          amc[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const long double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  // sqrtA = V diag(sqrt(lam)) V^T
  std::vector<std::vector<long double>> sqrt_a(n, std::vector<long double>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      long double acc = 0;
      for (int k = 0; k < n; ++k) {
        const long double lam = std::max(amc[k][k], (long double)0);
        acc += v[i][k] * std::sqrt((double)lam) * v[j][k];
      }
      sqrt_a[i][j] = acc;
    }
  // inner = sqrtA * B * sqrtA
  std::vector<std::vector<long double>> tmp(n, std::vector<long double>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      long double acc = 0;
      for (int k = 0; k < n; ++k) acc += sqrt_a[i][k] * (long double)b.cov(k, j);
      tmp[i][j] = acc;
    }
  std::vector<std::vector<long double>> inner(n, std::vector<long double>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      long double acc = 0;
      for (int k = 0; k < n; ++k) acc += tmp[i][k] * sqrt_a[k][j];
      inner[i][j] = acc;
    }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const long double sym = 0.5L * (inner[i][j] + inner[j][i]);
      inner[i][j] = inner[j][i] = sym;
    }
  long double tr_cross = 0;
  for (auto lam : jacobi_eigenvalues(inner)) tr_cross += std::sqrt((double)std::max(lam, (long double)0));
  long double result = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                       2.0L * tr_cross;
  return (double)result;
}

MatD random_psd_rows(int n, int e, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix<double>(n, e);
}

}  // namespace

TEST_CASE("frechet distance closed forms") {
  SUBCASE("identical stats give zero") {
    GaussianStats a;
    a.mean = VecD::Zero(3);
    a.cov = MatD::Identity(3, 3);
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("one dimensional closed form") {
    GaussianStats a, b;
    a.mean = VecD::Zero(1);
    b.mean = VecD::Ones(1);
    a.cov = MatD::Ones(1, 1);
    b.cov = MatD::Ones(1, 1);
    CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("symmetry within 1e-8") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto ga = fit_gaussian(random_psd_rows(40, 5, 100 + trial));
      const auto gb = fit_gaussian(random_psd_rows(40, 5, 200 + trial));
      CHECK(std::abs(frechet_distance(ga, gb) - frechet_distance(gb, ga)) < 1e-8);
    }
  }
  SUBCASE("random pairs match the long-double Jacobi oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto ga = fit_gaussian(random_psd_rows(50, 4, 300 + trial));
      const auto gb = fit_gaussian(random_psd_rows(50, 4, 400 + trial));
      const double got = frechet_distance(ga, gb);
      const double expect = frechet_oracle(ga, gb);
      INFO("trial ", trial, " got ", got, " expect ", expect);
      CHECK(std::abs(got - expect) < 1e-5);
    }
  }
  SUBCASE("asymmetric covariance rejected") {
    GaussianStats a;
    a.mean = VecD::Zero(2);
    a.cov = (MatD(2, 2) << 1.0, 0.5, 0.0, 1.0).finished();
    CHECK_THROWS_AS(frechet_distance(a, a), NumericError);
  }
}

TEST_CASE("r precision basics") {
  Rng rng(1);
  MatD emb = rng.normal_matrix<double>(32, 8);
  SUBCASE("identical embeddings retrieve perfectly") {
    CHECK(r_precision(emb, emb, 1) == 1.0);
    CHECK(r_precision(emb, emb, 2) == 1.0);
    CHECK(r_precision(emb, emb, 3) == 1.0);
  }
  SUBCASE("monotone in k") {
    for (int trial = 0; trial < 50; ++trial) {
      MatD m = rng.normal_matrix<double>(32, 4);
      MatD t = rng.normal_matrix<double>(32, 4);
      const double r1 = r_precision(m, t, 1);
      const double r2 = r_precision(m, t, 2);
      const double r3 = r_precision(m, t, 3);
      CHECK(r3 >= r2);
      CHECK(r2 >= r1);
    }
  }
  SUBCASE("random embeddings hit chance level") {
    double total = 0.0;
    const int batches = 10000;
    for (int i = 0; i < batches; ++i) {
      MatD m = rng.normal_matrix<double>(32, 4);
      MatD t = rng.normal_matrix<double>(32, 4);
      total += r_precision(m, t, 1);
    }
    CHECK(std::abs(total / batches - 1.0 / 32.0) < 0.01);
  }
  SUBCASE("isometry invariance") {
    MatD m = rng.normal_matrix<double>(32, 3);
    MatD t = rng.normal_matrix<double>(32, 3);
    // a rotation by QR of a random matrix
    Eigen::HouseholderQR<MatD> qr(rng.normal_matrix<double>(3, 3));
    MatD q = qr.householderQ();
    const double before = r_precision(m, t, 2);
    const double after = r_precision(MatD(m * q), MatD(t * q), 2);
    CHECK(before == doctest::Approx(after));
  }
  SUBCASE("batch smaller than k rejected") {
    MatD m = rng.normal_matrix<double>(2, 4);
    CHECK_THROWS_AS(r_precision(m, m, 3), ValidationError);
  }
}

TEST_CASE("matching score") {
  Rng rng(2);
  MatD m = rng.normal_matrix<double>(10, 4);
  CHECK(matching_score(m, m) == 0.0);
  // antipodal unit vectors are distance 2 apart
  MatD unit = MatD::Zero(4, 3);
  unit(0, 0) = 1;
  unit(1, 1) = 1;
  unit(2, 2) = 1;
  unit(3, 0) = -1;
  CHECK(matching_score(unit, MatD(-unit)) == doctest::Approx(2.0));
  // scalar loop oracle
  MatD t = rng.normal_matrix<double>(10, 4);
  double expect = 0.0;
  for (int i = 0; i < 10; ++i) expect += (m.row(i) - t.row(i)).norm();
  CHECK(matching_score(m, t) == doctest::Approx(expect / 10.0));
}

TEST_CASE("diversity and multimodality") {
  SUBCASE("identical embeddings give zero") {
    MatD same = MatD::Ones(20, 4);
    Rng rng(3);
    CHECK(diversity(same, 5, rng) == 0.0);
    CHECK(multimodality({same.topRows(4), same.bottomRows(4)}) == 0.0);
  }
  SUBCASE("two clusters separated by 2 match the mixture expectation") {
    // balanced clusters at +-1 along axis 0: cross-pair distance 2, same-pair 0
    const int n = 2000;
    MatD emb = MatD::Zero(n, 2);
    for (int i = 0; i < n; ++i) emb(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
    Rng rng(4);
    double total = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) total += diversity(emb, 200, rng);
    // pairs are cross-cluster with probability 1/2
    CHECK(total / reps == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("insufficient samples rejected") {
    MatD emb = MatD::Zero(5, 2);
    Rng rng(5);
    CHECK_THROWS_AS(diversity(emb, 3, rng), ValidationError);
    CHECK_THROWS_AS(multimodality({MatD::Zero(1, 2)}), ValidationError);
  }
}

TEST_CASE("clip style score") {
  MatD a = MatD::Identity(3, 3);
  CHECK(clip_style_score(a, a) == doctest::Approx(1.0));
  MatD orth = MatD::Zero(3, 3);
  orth(0, 1) = 1;
  orth(1, 2) = 1;
  orth(2, 0) = 1;
  CHECK(clip_style_score(a, orth) == doctest::Approx(0.0));
  // negative cosine clamps to zero
  CHECK(clip_style_score(a, MatD(-a)) == doctest::Approx(0.0));
  // dot-product oracle on random unit rows
  Rng rng(6);
  MatD m = rng.normal_matrix<double>(8, 4);
  MatD t = rng.normal_matrix<double>(8, 4);
  for (int i = 0; i < 8; ++i) {
    m.row(i).normalize();
    t.row(i).normalize();
  }
  double expect = 0.0;
  for (int i = 0; i < 8; ++i) expect += std::max(0.0, m.row(i).dot(t.row(i)));
  CHECK(clip_style_score(m, t) == doctest::Approx(expect / 8.0));
}

TEST_CASE("evaluate_run schema and degenerate cases") {
  Rng rng(7);
  EmbeddedSet set;
  const int n = 96;
  set.motion = rng.normal_matrix<double>(n, 8);
  set.text = rng.normal_matrix<double>(n, 8);
  set.group.resize(n);
  for (int i = 0; i < n; ++i) set.group[static_cast<std::size_t>(i)] = i % 3;

  SUBCASE("identical sets give near-zero fid") {
    const MetricsReport r = evaluate_run(set, set, 5, 1);
    CHECK(r.fid.mean < 1e-6);
  }
  SUBCASE("repeats=1 reports zero ci") {
    const MetricsReport r = evaluate_run(set, set, 1, 1);
    CHECK(r.fid.ci95 == 0.0);
    CHECK(r.rp1.ci95 == 0.0);
  }
  SUBCASE("json report has exactly the contracted fields") {
    const MetricsReport r = evaluate_run(set, set, 2, 1);
    const auto j = r.to_json();
    const std::set<std::string> expect{"fid",      "rp1",       "rp2",
                                       "rp3",      "matching",  "diversity",
                                       "multimodality", "clip_score"};
    std::set<std::string> got;
    for (auto it = j.begin(); it != j.end(); ++it) got.insert(it.key());
    CHECK(got == expect);
  }
  SUBCASE("deterministic given seed") {
    const MetricsReport a = evaluate_run(set, set, 4, 9);
    const MetricsReport b = evaluate_run(set, set, 4, 9);
    CHECK(a.rp1.mean == b.rp1.mean);
    CHECK(a.diversity.mean == b.diversity.mean);
  }
}

TEST_CASE("evaluator embeddings are unit norm") {
  EvaluatorConfig cfg;
  cfg.embed_dim = 16;
  cfg.hidden = 24;
  Evaluator<float> model(cfg, 3);
  model.stats().mean = RowMajorMatF::Zero(kSkeletonJoints, 3);
  model.stats().std = RowMajorMatF::Ones(kSkeletonJoints, 3);
  Rng rng(8);
  MotionSequence m;
  m.joints = kSkeletonJoints;
  m.fps = 20.0f;
  m.coords = RowMajorMatF::Zero(20, 3 * kSkeletonJoints);
  for (int f = 0; f < 20; ++f)
    for (int c = 0; c < 3 * kSkeletonJoints; ++c) m.coords(f, c) = (float)rng.normal();
  CHECK(model.embed_motion(m).norm() == doctest::Approx(1.0f).epsilon(1e-5));
  CHECK(model.embed_text("a person walks").norm() == doctest::Approx(1.0f).epsilon(1e-5));
}
