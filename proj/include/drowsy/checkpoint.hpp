#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "drowsy/common.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'S', 'Y', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  const std::uint64_t v = get_u64(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace ckpt_detail

/// Serialize a named tensor map. Entries are written in map (lexicographic)
/// order so equal contents produce identical bytes.
inline void save_checkpoint(std::ostream& out, const std::map<std::string, Tensor>& tensors) {
  using namespace ckpt_detail;
  out.write(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rank());
    for (std::size_t a = 0; a < t.rank(); ++a) put_u64(out, t.extent(a));
    for (std::size_t i = 0; i < t.numel(); ++i) put_f64(out, t.data()[i]);
  }
  if (!out) throw IoError("checkpoint write failed");
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::map<std::string, Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint " + path.string() + " for writing");
  save_checkpoint(out, tensors);
  out.close();
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

inline std::map<std::string, Tensor> load_checkpoint(std::istream& in) {
  using namespace ckpt_detail;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t count = get_u64(in);
  std::map<std::string, Tensor> tensors;
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::uint64_t name_len = get_u64(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw IoError("checkpoint truncated");
    const std::uint64_t rank = get_u64(in);
    if (rank < 1 || rank > 5)
      throw IoError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get_u64(in));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = get_f64(in);
    if (!tensors.emplace(std::move(name), std::move(t)).second)
      throw IoError("checkpoint has duplicate tensor names");
  }
  return tensors;
}

inline std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  try {
    return load_checkpoint(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace drowsy
