#include "cdamd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace cdamd {

GaussianStats fit_gaussian(const MatD& rows) {
  if (rows.rows() < 1) throw ValidationError("fit_gaussian: empty sample");
  GaussianStats s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::Index n = rows.rows();
  if (n == 1) {
    s.cov = MatD::Zero(rows.cols(), rows.cols());
    return s;
  }
  MatD centered = rows.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return s;
}

namespace {

void check_stats(const GaussianStats& g, const char* label) {
  if (g.cov.rows() != g.cov.cols() || g.cov.rows() != g.mean.size())
    throw DimensionError(std::string("frechet: bad stats shape for ") + label);
  if ((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw NumericError(std::string("frechet: covariance not symmetric for ") + label);
}

MatD psd_sqrt(const MatD& m, const char* label) {
  MatD sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatD> eig(sym);
  if (eig.info() != Eigen::Success)
    throw NumericError(std::string("frechet: eigendecomposition failed for ") + label);
  VecD vals = eig.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) < -tol)
      throw NumericError(std::string("frechet: matrix not PSD within tolerance for ") + label);
    vals(i) = std::sqrt(std::max(vals(i), 0.0));
  }
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check_stats(a, "a");
  check_stats(b, "b");
  if (a.mean.size() != b.mean.size()) throw DimensionError("frechet: dimension mismatch");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const MatD sqrt_a = psd_sqrt(a.cov, "cov_a");
  const MatD inner = sqrt_a * b.cov * sqrt_a;
  const MatD cross = psd_sqrt(inner, "cov_a*cov_b");
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  if (value < -1e-6) throw NumericError("frechet: negative distance beyond tolerance");
  return std::max(value, 0.0);
}

double r_precision(const MatD& motion_emb, const MatD& text_emb, int k) {
  if (motion_emb.rows() != text_emb.rows() || motion_emb.cols() != text_emb.cols())
    throw DimensionError("r_precision: shape mismatch");
  if (k < 1) throw ValidationError("r_precision: k must be >= 1");
  if (motion_emb.rows() < k) throw ValidationError("r_precision: batch smaller than k");
  const Eigen::Index B = motion_emb.rows();
  int hits = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double d_true = (motion_emb.row(i) - text_emb.row(i)).norm();
    int closer = 0;
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j == i) continue;
      if ((motion_emb.row(i) - text_emb.row(j)).norm() < d_true) ++closer;
    }
    if (closer < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(B);
}

double matching_score(const MatD& motion_emb, const MatD& text_emb) {
  if (motion_emb.rows() != text_emb.rows() || motion_emb.cols() != text_emb.cols())
    throw DimensionError("matching_score: shape mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < motion_emb.rows(); ++i)
    sum += (motion_emb.row(i) - text_emb.row(i)).norm();
  return sum / static_cast<double>(motion_emb.rows());
}

double diversity(const MatD& embeddings, int subset_size, Rng& rng) {
  if (subset_size < 1) throw ValidationError("diversity: subset size must be >= 1");
  if (embeddings.rows() < 2 * subset_size)
    throw ValidationError("diversity: need at least 2*subset_size samples");
  auto perm = rng.permutation(static_cast<int>(embeddings.rows()));
  double sum = 0.0;
  for (int i = 0; i < subset_size; ++i) {
    const auto a = perm[static_cast<std::size_t>(i)];
    const auto b = perm[static_cast<std::size_t>(subset_size + i)];
    sum += (embeddings.row(a) - embeddings.row(b)).norm();
  }
  return sum / subset_size;
}

double multimodality(const std::vector<MatD>& groups) {
  if (groups.empty()) throw ValidationError("multimodality: no groups");
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.rows() < 2) throw ValidationError("multimodality: group needs at least 2 samples");
    double sum = 0.0;
    int pairs = 0;
    for (Eigen::Index a = 0; a < g.rows(); ++a)
      for (Eigen::Index b = a + 1; b < g.rows(); ++b) {
        sum += (g.row(a) - g.row(b)).norm();
        ++pairs;
      }
    total += sum / pairs;
  }
  return total / static_cast<double>(groups.size());
}

double clip_style_score(const MatD& motion_emb, const MatD& text_emb) {
  if (motion_emb.rows() != text_emb.rows() || motion_emb.cols() != text_emb.cols())
    throw DimensionError("clip_style_score: shape mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < motion_emb.rows(); ++i) {
    const double denom = motion_emb.row(i).norm() * text_emb.row(i).norm();
    const double cos = denom > 0.0 ? motion_emb.row(i).dot(text_emb.row(i)) / denom : 0.0;
    sum += std::max(cos, 0.0);
  }
  return sum / static_cast<double>(motion_emb.rows());
}

nlohmann::json MetricsReport::to_json() const {
  auto mv = [](const MetricValue& v) {
    return nlohmann::json{{"mean", v.mean}, {"ci95", v.ci95}};
  };
  return nlohmann::json{{"fid", mv(fid)},           {"rp1", mv(rp1)},
                        {"rp2", mv(rp2)},           {"rp3", mv(rp3)},
                        {"matching", mv(matching)}, {"diversity", mv(diversity)},
                        {"multimodality", mv(multimodality)}, {"clip_score", mv(clip_score)}};
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "metric,mean,ci95\n";
  auto row = [&](const char* name, const MetricValue& v) {
    out << name << ',' << v.mean << ',' << v.ci95 << '\n';
  };
  row("fid", fid);
  row("rp1", rp1);
  row("rp2", rp2);
  row("rp3", rp3);
  row("matching", matching);
  row("diversity", diversity);
  row("multimodality", multimodality);
  row("clip_score", clip_score);
  return out.str();
}

namespace {

MetricValue summarize(const std::vector<double>& values) {
  MetricValue v;
  if (values.empty()) return v;
  double sum = 0.0;
  for (double x : values) sum += x;
  v.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double x : values) sq += (x - v.mean) * (x - v.mean);
    const double sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
    v.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  }
  return v;
}

}  // namespace

MetricsReport evaluate_run(const EmbeddedSet& generated, const EmbeddedSet& reference,
                           int repeats, std::uint64_t seed, int rp_batch) {
  if (generated.motion.rows() < 1 || reference.motion.rows() < 1)
    throw ValidationError("evaluate_run: empty sets");
  if (repeats < 1) throw ValidationError("evaluate_run: repeats must be >= 1");
  const Eigen::Index n = generated.motion.rows();

  // Distribution-level metrics use the full sets and are identical across
  // repeats; batch-level metrics are re-drawn each repeat.
  const double fid_full =
      frechet_distance(fit_gaussian(generated.motion), fit_gaussian(reference.motion));
  const double clip_full = clip_style_score(generated.motion, generated.text);
  double mm_full = 0.0;
  {
    std::vector<std::vector<int>> by_group;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int gid = generated.group[static_cast<std::size_t>(i)];
      if (gid >= static_cast<int>(by_group.size()))
        by_group.resize(static_cast<std::size_t>(gid) + 1);
      by_group[static_cast<std::size_t>(gid)].push_back(static_cast<int>(i));
    }
    std::vector<MatD> groups;
    for (const auto& idx : by_group) {
      if (idx.size() < 2) continue;
      MatD gm(static_cast<Eigen::Index>(idx.size()), generated.motion.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        gm.row(static_cast<Eigen::Index>(i)) = generated.motion.row(idx[i]);
      groups.push_back(std::move(gm));
    }
    if (!groups.empty()) mm_full = multimodality(groups);
  }

  std::vector<double> fids, rp1s, rp2s, rp3s, matchings, divs, mms, clips;
  Rng base = Rng(seed).stream("metrics");
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = base.stream(static_cast<std::uint64_t>(rep));
    fids.push_back(fid_full);
    mms.push_back(mm_full);
    clips.push_back(clip_full);

    double b1 = 0.0, b2 = 0.0, b3 = 0.0, bm = 0.0;
    int batches = 0;
    auto perm = rng.permutation(static_cast<int>(n));
    for (Eigen::Index at = 0; at + rp_batch <= n; at += rp_batch) {
      MatD mb(rp_batch, generated.motion.cols());
      MatD tb(rp_batch, generated.text.cols());
      for (int i = 0; i < rp_batch; ++i) {
        mb.row(i) = generated.motion.row(perm[static_cast<std::size_t>(at + i)]);
        tb.row(i) = generated.text.row(perm[static_cast<std::size_t>(at + i)]);
      }
      b1 += r_precision(mb, tb, 1);
      b2 += r_precision(mb, tb, 2);
      b3 += r_precision(mb, tb, 3);
      bm += matching_score(mb, tb);
      ++batches;
    }
    if (batches == 0) {  // set smaller than one standard batch
      b1 = r_precision(generated.motion, generated.text, 1);
      b2 = r_precision(generated.motion, generated.text, std::min<int>(2, static_cast<int>(n)));
      b3 = r_precision(generated.motion, generated.text, std::min<int>(3, static_cast<int>(n)));
      bm = matching_score(generated.motion, generated.text);
      batches = 1;
    }
    rp1s.push_back(b1 / batches);
    rp2s.push_back(b2 / batches);
    rp3s.push_back(b3 / batches);
    matchings.push_back(bm / batches);

    const int subset = std::max(1, std::min(static_cast<int>(n) / 2, 100));
    divs.push_back(n >= 2 * subset ? diversity(generated.motion, subset, rng) : 0.0);
  }

  MetricsReport report;
  report.fid = summarize(fids);
  report.rp1 = summarize(rp1s);
  report.rp2 = summarize(rp2s);
  report.rp3 = summarize(rp3s);
  report.matching = summarize(matchings);
  report.diversity = summarize(divs);
  report.multimodality = summarize(mms);
  report.clip_score = summarize(clips);
  return report;
}

}  // namespace cdamd
