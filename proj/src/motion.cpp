#include "cdamd/motion.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cdamd {

namespace {

void check_shapes(const MotionSequence& m, const MotionStats& s) {
  if (s.mean.rows() != m.joints || s.mean.cols() != 3 || s.std.rows() != m.joints ||
      s.std.cols() != 3)
    throw DimensionError("stats shape does not match motion joint count");
}

// File layout: 16-byte magic field ("CDAMDMOT" zero padded), u32 version,
// u32 T, u32 J, u32 fps*1000, then T*J*3 float32 LE row-major.
constexpr char kMagic[16] = {'C', 'D', 'A', 'M', 'D', 'M', 'O', 'T',
                             0,   0,   0,   0,   0,   0,   0,   0};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

MotionStats compute_stats(const std::vector<MotionSequence>& corpus) {
  if (corpus.empty()) throw ValidationError("compute_stats: empty corpus");
  const int J = corpus.front().joints;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(3 * J);
  Eigen::RowVectorXd sum_sq = Eigen::RowVectorXd::Zero(3 * J);
  std::int64_t n = 0;
  for (const auto& m : corpus) {
    if (m.joints != J) throw DimensionError("compute_stats: mixed joint counts");
    sum += m.coords.cast<double>().colwise().sum();
    sum_sq += m.coords.cast<double>().array().square().colwise().sum().matrix();
    n += m.frames();
  }
  Eigen::RowVectorXd mean = sum / static_cast<double>(n);
  Eigen::RowVectorXd var = sum_sq / static_cast<double>(n) - mean.array().square().matrix();
  MotionStats s;
  s.mean.resize(J, 3);
  s.std.resize(J, 3);
  for (int j = 0; j < J; ++j)
    for (int a = 0; a < 3; ++a) {
      s.mean(j, a) = static_cast<float>(mean(3 * j + a));
      float sd = static_cast<float>(std::sqrt(std::max(var(3 * j + a), 0.0)));
      s.std(j, a) = std::max(sd, kStdFloor);
    }
  return s;
}

MotionSequence normalize(const MotionSequence& m, const MotionStats& s) {
  check_shapes(m, s);
  MotionSequence out = m;
  out.coords = (m.coords.rowwise() - s.mean_flat()).array().rowwise() /
               s.std_flat().array();
  return out;
}

MotionSequence denormalize(const MotionSequence& m, const MotionStats& s) {
  check_shapes(m, s);
  MotionSequence out = m;
  out.coords = (m.coords.array().rowwise() * s.std_flat().array()).matrix().rowwise() +
               s.mean_flat();
  return out;
}

MotionSequence mirror(const MotionSequence& m,
                      const std::vector<std::pair<int, int>>& left_right_pairs) {
  std::vector<char> seen(static_cast<std::size_t>(m.joints), 0);
  for (auto [a, b] : left_right_pairs) {
    if (a < 0 || b < 0 || a >= m.joints || b >= m.joints)
      throw ValidationError("mirror: pair index out of range");
    if (a == b || seen[static_cast<std::size_t>(a)] || seen[static_cast<std::size_t>(b)])
      throw ValidationError("mirror: overlapping joint pairs");
    seen[static_cast<std::size_t>(a)] = seen[static_cast<std::size_t>(b)] = 1;
  }
  MotionSequence out = m;
  for (int j = 0; j < m.joints; ++j) out.coords.col(3 * j) = -m.coords.col(3 * j);
  for (auto [a, b] : left_right_pairs) {
    RowMajorMatF tmp = out.coords.middleCols(3 * a, 3);
    out.coords.middleCols(3 * a, 3) = out.coords.middleCols(3 * b, 3);
    out.coords.middleCols(3 * b, 3) = tmp;
  }
  return out;
}

void save_motion(const MotionSequence& m, const std::string& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(m.frames()));
  write_u32(out, static_cast<std::uint32_t>(m.joints));
  write_u32(out, static_cast<std::uint32_t>(std::lround(m.fps * 1000.0f)));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(m.coords.data()),
            static_cast<std::streamsize>(sizeof(float)) * m.coords.size());
  if (!out) throw IoError("write failed: " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[16];
  if (!in.read(magic, sizeof(magic))) throw FormatError("file too short for header: " + path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad magic, not a motion file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) throw FormatError("unsupported motion file version");
  const std::uint32_t T = read_u32(in);
  const std::uint32_t J = read_u32(in);
  const std::uint32_t fps_milli = read_u32(in);
  if (T < 1 || J < 2 || fps_milli == 0) throw FormatError("invalid header fields");
  MotionSequence m;
  m.joints = static_cast<int>(J);
  m.fps = static_cast<float>(fps_milli) / 1000.0f;
  m.coords.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(3 * J));
  if (!in.read(reinterpret_cast<char*>(m.coords.data()),
               static_cast<std::streamsize>(sizeof(float)) * m.coords.size()))
    throw IoError("truncated payload: " + path);
  char extra;
  if (in.read(&extra, 1)) throw FormatError("payload larger than header declares: " + path);
  m.validate();
  return m;
}

}  // namespace cdamd
