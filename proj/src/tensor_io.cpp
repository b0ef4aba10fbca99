#include "cdamd/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cdamd/errors.hpp"

namespace cdamd {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'A', 'M', 'D', 'C', 'K', 'P'};
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
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, bool force) {
  if (!force && std::filesystem::exists(path))
    throw IoError("refusing to overwrite existing checkpoint " + path + " (use --force)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  static_assert(sizeof(float) == 4);
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.rows()));
    write_u32(out, static_cast<std::uint32_t>(tensor.cols()));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(sizeof(float)) * tensor.size());
  }
  const std::string meta = ckpt.metadata.is_null() ? "{}" : ckpt.metadata.dump();
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint file: " + path);
  if (read_u32(in) != kVersion) throw FormatError("unsupported checkpoint version");
  const std::uint32_t count = read_u32(in);
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("checkpoint: truncated name");
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    MatF tensor(rows, cols);
    if (!in.read(reinterpret_cast<char*>(tensor.data()),
                 static_cast<std::streamsize>(sizeof(float)) * tensor.size()))
      throw FormatError("checkpoint: truncated tensor payload for " + name);
    ckpt.tensors.emplace(std::move(name), std::move(tensor));
  }
  const std::uint32_t meta_len = read_u32(in);
  std::string meta(meta_len, '\0');
  if (!in.read(meta.data(), meta_len)) throw FormatError("checkpoint: truncated metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata json: ") + e.what());
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const ad::ParamStore<float>& params,
                  const std::string& prefix) {
  for (std::size_t i = 0; i < params.size(); ++i)
    ckpt.tensors[prefix + params[i].name] = params[i].value;
}

void load_params(const Checkpoint& ckpt, ad::ParamStore<float>& params,
                 const std::string& prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = ckpt.tensors.find(prefix + params[i].name);
    if (it == ckpt.tensors.end())
      throw FormatError("checkpoint missing tensor " + prefix + params[i].name);
    if (it->second.rows() != params[i].value.rows() || it->second.cols() != params[i].value.cols())
      throw DimensionError("checkpoint tensor shape mismatch for " + params[i].name);
    params[i].value = it->second;
  }
}

}  // namespace cdamd
