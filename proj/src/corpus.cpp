#include "cdamd/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace cdamd {

namespace {

constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;

struct BasePose {
  Eigen::Vector3f p[kSkeletonJoints];
};

BasePose base_pose() {
  BasePose b;
  b.p[0] = {0.0f, 0.90f, 0.0f};    // root
  b.p[1] = {0.0f, 1.25f, 0.0f};    // torso
  b.p[2] = {0.0f, 1.60f, 0.0f};    // head
  b.p[3] = {0.25f, 1.40f, 0.0f};   // left shoulder
  b.p[4] = {0.45f, 1.15f, 0.0f};   // left hand
  b.p[5] = {-0.25f, 1.40f, 0.0f};  // right shoulder
  b.p[6] = {-0.45f, 1.15f, 0.0f};  // right hand
  b.p[7] = {0.0f, 0.10f, 0.10f};   // foot marker
  return b;
}

float smoothstep01(float u) {
  u = std::min(std::max(u, 0.0f), 1.0f);
  return u * u * (3.0f - 2.0f * u);
}

constexpr int kBaseClassCount = 6;

const char* kPrompts[kBaseClassCount] = {
    "a person walks forward swinging both arms",
    "a person raises the left arm high overhead",
    "a person turns around in place",
    "a person crouches down low to the ground",
    "a person jumps up and down repeatedly",
    "a person waves the right arm side to side",
};

// Class-specific joint trajectories at time t (seconds), progress u in [0,1].
// amp/freq/phase carry the per-sample jitter.
void pose_at(int base_class, float t, float u, float amp, float freq, float phase,
             BasePose& pose) {
  const BasePose rest = base_pose();
  pose = rest;
  switch (base_class) {
    case 0: {  // walk forward
      const float adv = 0.9f * amp * t;
      const float sway = std::sin(kTwoPi * freq * t + phase);
      for (auto& p : pose.p) p.z() += adv;
      for (int j : {0, 1, 2}) pose.p[j].y() += 0.03f * amp * std::sin(2.0f * kTwoPi * freq * t + phase);
      pose.p[4].z() += 0.28f * amp * sway;
      pose.p[6].z() -= 0.28f * amp * sway;
      pose.p[3].z() += 0.10f * amp * sway;
      pose.p[5].z() -= 0.10f * amp * sway;
      pose.p[7].z() += 0.30f * amp * std::sin(kTwoPi * freq * t + phase + 0.5f * std::numbers::pi_v<float>);
      pose.p[7].y() += 0.06f * amp * std::max(0.0f, std::sin(kTwoPi * freq * t + phase));
      break;
    }
    case 1: {  // raise left arm overhead
      const float s = smoothstep01(u * (1.0f + 0.2f * (amp - 1.0f)));
      pose.p[4] = rest.p[4] + s * (Eigen::Vector3f(0.05f, 2.05f, 0.0f) - rest.p[4]);
      pose.p[3] = rest.p[3] + s * (Eigen::Vector3f(0.15f, 1.72f, 0.0f) - rest.p[3]);
      pose.p[1].x() -= 0.10f * s;
      pose.p[2].x() -= 0.16f * s;
      pose.p[0].x() -= 0.05f * s;
      break;
    }
    case 2: {  // turn in place
      const float theta = kTwoPi * amp * u + 0.3f * phase;
      const float c = std::cos(theta), s = std::sin(theta);
      for (int j = 0; j < kSkeletonJoints; ++j) {
        const float x = rest.p[j].x(), z = rest.p[j].z();
        pose.p[j].x() = c * x + s * z;
        pose.p[j].z() = -s * x + c * z;
        pose.p[j].y() = rest.p[j].y();
      }
      break;
    }
    case 3: {  // crouch low
      const float s = smoothstep01(u * (1.0f + 0.2f * (amp - 1.0f)));
      const float drop = 0.45f * s;
      pose.p[0].y() -= drop;
      pose.p[1].y() -= 1.15f * drop;
      pose.p[2].y() -= 1.25f * drop;
      for (int j : {3, 4, 5, 6}) {
        pose.p[j].y() -= 1.1f * drop;
        pose.p[j].z() += 0.25f * s;
      }
      break;
    }
    case 4: {  // jump repeatedly
      const float ph = kTwoPi * freq * t + phase;
      const float air = 0.42f * amp * std::max(0.0f, std::sin(ph));
      const float crouch = 0.14f * amp * std::max(0.0f, -std::sin(ph));
      for (int j = 0; j < kSkeletonJoints; ++j) pose.p[j].y() += air - crouch * (j < 7 ? 1.0f : 0.2f);
      pose.p[4].y() += 0.30f * air;
      pose.p[6].y() += 0.30f * air;
      pose.p[4].x() += 0.15f * air;
      pose.p[6].x() -= 0.15f * air;
      break;
    }
    case 5: {  // wave right arm
      const float s = smoothstep01(std::min(1.0f, 4.0f * u));
      const float wave = std::sin(kTwoPi * freq * t + phase);
      pose.p[6] = rest.p[6] + s * (Eigen::Vector3f(-0.30f, 1.90f, 0.0f) - rest.p[6]);
      pose.p[6].x() += 0.30f * amp * wave * s;
      pose.p[5] = rest.p[5] + s * (Eigen::Vector3f(-0.25f, 1.62f, 0.0f) - rest.p[5]);
      pose.p[5].x() += 0.12f * amp * wave * s;
      pose.p[1].x() += 0.06f * s;
      pose.p[2].x() += 0.09f * s;
      break;
    }
    default:
      break;
  }
}

MotionSequence generate_sample(const CorpusSpec& spec, int class_id, int index) {
  Rng rng = Rng(spec.seed).stream("corpus").stream(
      static_cast<std::uint64_t>(class_id) * 1000003ULL + static_cast<std::uint64_t>(index));
  const int T = spec.length_min + rng.uniform_int(spec.length_max - spec.length_min + 1);
  const int base_class = class_id % kBaseClassCount;
  // Later prompt cycles get a tempo shift so classes stay distinguishable.
  const float cycle_rate = 1.0f + 0.35f * static_cast<float>(class_id / kBaseClassCount);

  const float amp = 1.0f + spec.noise_scale * 4.0f * static_cast<float>(rng.normal());
  const float freq = (1.1f + spec.noise_scale * 2.0f * static_cast<float>(rng.normal())) * cycle_rate;
  const float phase = spec.noise_scale * 12.0f * static_cast<float>(rng.normal());

  MotionSequence m;
  m.joints = kSkeletonJoints;
  m.fps = spec.fps;
  m.coords.resize(T, 3 * kSkeletonJoints);
  BasePose pose;
  for (int f = 0; f < T; ++f) {
    const float t = static_cast<float>(f) / spec.fps;
    const float u = static_cast<float>(f) / static_cast<float>(std::max(T - 1, 1));
    pose_at(base_class, t, u, amp, freq, phase, pose);
    for (int j = 0; j < kSkeletonJoints; ++j) {
      for (int a = 0; a < 3; ++a)
        m.coords(f, 3 * j + a) =
            pose.p[j](a) + 0.05f * spec.noise_scale * static_cast<float>(rng.normal());
    }
  }
  return m;
}

}  // namespace

std::vector<std::pair<int, int>> skeleton_mirror_pairs() { return {{3, 5}, {4, 6}}; }

std::string class_prompt(int class_id) {
  const int base = class_id % kBaseClassCount;
  const int cycle = class_id / kBaseClassCount;
  std::string p = kPrompts[base];
  for (int i = 0; i < cycle; ++i) p += " quickly";
  return p;
}

std::vector<CorpusSample> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<CorpusSample> out;
  out.reserve(static_cast<std::size_t>(spec.class_count) *
              static_cast<std::size_t>(spec.sequences_per_class));
  for (int c = 0; c < spec.class_count; ++c) {
    for (int i = 0; i < spec.sequences_per_class; ++i) {
      CorpusSample s;
      s.motion = generate_sample(spec, c, i);
      s.text = class_prompt(c);
      s.class_id = c;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void save_corpus(const std::vector<CorpusSample>& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  char name[64];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::snprintf(name, sizeof(name), "motion_%05zu.cdm", i);
    save_motion(corpus[i].motion, (fs::path(dir) / name).string());
    manifest.push_back({{"motion_path", name},
                        {"text", corpus[i].text},
                        {"class_id", corpus[i].class_id}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write corpus manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

std::vector<CorpusSample> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("missing manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  std::vector<CorpusSample> out;
  for (const auto& entry : manifest) {
    CorpusSample s;
    s.motion = load_motion((fs::path(dir) / entry.at("motion_path").get<std::string>()).string());
    s.text = entry.at("text").get<std::string>();
    s.class_id = entry.at("class_id").get<int>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cdamd
