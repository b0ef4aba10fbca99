#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cdamd/motion.hpp"
#include "cdamd/rng.hpp"

namespace cdamd {

// Procedural paired text-motion corpus over a fixed 8-joint skeleton:
// 0 root, 1 torso, 2 head, 3/4 left arm, 5/6 right arm, 7 foot marker.
constexpr int kSkeletonJoints = 8;

std::vector<std::pair<int, int>> skeleton_mirror_pairs();

struct CorpusSpec {
  int class_count = 4;
  int sequences_per_class = 50;
  int length_min = 32;
  int length_max = 64;
  std::uint64_t seed = 1;
  float noise_scale = 0.02f;
  float fps = 20.0f;

  void validate() const {
    if (class_count < 2) throw ValidationError("corpus: class_count must be >= 2");
    if (length_min < 8) throw ValidationError("corpus: min length must be >= 8");
    if (length_max < length_min) throw ValidationError("corpus: length range inverted");
    if (sequences_per_class < 1) throw ValidationError("corpus: sequences_per_class must be >= 1");
    if (noise_scale < 0.0f) throw ValidationError("corpus: noise_scale must be >= 0");
  }
};

struct CorpusSample {
  MotionSequence motion;
  std::string text;
  int class_id = 0;
};

// Template sentence for a class id (cycles after the base motion set).
std::string class_prompt(int class_id);

// Deterministic in spec.seed; sample k is generated from its own derived
// stream, so any subset can be produced independently.
std::vector<CorpusSample> generate_corpus(const CorpusSpec& spec);

// Corpus directory layout: one .cdm file per sample plus manifest.json with
// [{"motion_path": ..., "text": ..., "class_id": ...}].
void save_corpus(const std::vector<CorpusSample>& corpus, const std::string& dir);
std::vector<CorpusSample> load_corpus(const std::string& dir);

}  // namespace cdamd
