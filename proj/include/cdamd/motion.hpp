#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cdamd/errors.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

// Raw motion clip: T frames of J joints with absolute 3D coordinates in
// meters. Coordinates are stored frame-major as a T x (3J) row-major matrix;
// column 3j+a is axis a of joint j.
struct MotionSequence {
  int joints = 0;
  float fps = 0.0f;
  RowMajorMatF coords;  // T x (3*joints)

  int frames() const { return static_cast<int>(coords.rows()); }

  Eigen::Vector3f joint(int frame, int j) const {
    return coords.block<1, 3>(frame, 3 * j).transpose();
  }
  void set_joint(int frame, int j, const Eigen::Vector3f& p) {
    coords.block<1, 3>(frame, 3 * j) = p.transpose();
  }

  void validate() const {
    if (frames() < 1) throw ValidationError("motion: needs at least one frame");
    if (joints < 2) throw ValidationError("motion: needs at least two joints");
    if (fps <= 0.0f) throw ValidationError("motion: fps must be positive");
    if (coords.cols() != 3 * joints) throw DimensionError("motion: coords width != 3*joints");
    if (!coords.allFinite()) throw ValidationError("motion: non-finite coordinates");
  }
};

// Per-joint, per-axis normalization statistics over a corpus.
struct MotionStats {
  RowMajorMatF mean;  // J x 3
  RowMajorMatF std;   // J x 3, entries clamped to >= 1e-6

  int joints() const { return static_cast<int>(mean.rows()); }

  // Flattened 1 x 3J views aligned with MotionSequence columns.
  Eigen::Map<const Eigen::RowVectorXf> mean_flat() const {
    return {mean.data(), mean.size()};
  }
  Eigen::Map<const Eigen::RowVectorXf> std_flat() const {
    return {std.data(), std.size()};
  }
};

constexpr float kStdFloor = 1e-6f;

MotionStats compute_stats(const std::vector<MotionSequence>& corpus);

MotionSequence normalize(const MotionSequence& m, const MotionStats& s);
MotionSequence denormalize(const MotionSequence& m, const MotionStats& s);

// Mirror across the x=0 plane: negate x and swap each (left, right) joint
// pair. Applying it twice returns the input exactly.
MotionSequence mirror(const MotionSequence& m,
                      const std::vector<std::pair<int, int>>& left_right_pairs);

void save_motion(const MotionSequence& m, const std::string& path);
MotionSequence load_motion(const std::string& path);

}  // namespace cdamd
