#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cdamd/errors.hpp"
#include "cdamd/rng.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

struct GaussianStats {
  VecD mean;
  MatD cov;
};

// Gaussian fit of embedding rows (unbiased covariance).
GaussianStats fit_gaussian(const MatD& rows);

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)); matrix square roots via
// symmetric eigendecomposition with negative eigenvalues clipped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Fraction of rows whose paired text ranks within the top k by Euclidean
// distance; the rank counts strictly closer competitors, so exact ties with
// duplicate prompts do not penalize.
double r_precision(const MatD& motion_emb, const MatD& text_emb, int k);

// Mean Euclidean distance between paired embeddings.
double matching_score(const MatD& motion_emb, const MatD& text_emb);

// Mean paired distance between two disjoint random subsets of the set.
double diversity(const MatD& embeddings, int subset_size, Rng& rng);

// Mean pairwise distance within same-prompt groups.
double multimodality(const std::vector<MatD>& groups);

// Mean of max(cosine, 0) over paired embeddings.
double clip_style_score(const MatD& motion_emb, const MatD& text_emb);

struct MetricValue {
  double mean = 0.0;
  double ci95 = 0.0;
};

struct MetricsReport {
  MetricValue fid, rp1, rp2, rp3, matching, diversity, multimodality, clip_score;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Paired embedding set; group ids tie samples generated from the same prompt.
struct EmbeddedSet {
  MatD motion;              // n x e
  MatD text;                // n x e
  std::vector<int> group;   // length n
};

// Repeated resampled evaluation of a generated set against a reference set;
// means with 95% normal confidence intervals over the repeats.
MetricsReport evaluate_run(const EmbeddedSet& generated, const EmbeddedSet& reference,
                           int repeats = 20, std::uint64_t seed = 0, int rp_batch = 32);

}  // namespace cdamd
