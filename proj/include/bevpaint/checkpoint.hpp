#pragma once

#include <cstring>
#include <fstream>

#include "bevpaint/adam.hpp"
#include "bevpaint/tensor.hpp"

namespace bevpaint {

// Checkpoint format: magic "BEVP", u32 format version, u32 parameter count,
// then per parameter: u32 name length + UTF-8 name, u32 ndim, u32 dims[],
// f32 data. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void ckpt_write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t ckpt_read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw ConfigError("truncated checkpoint: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::vector<Parameter<T>>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out.write("BEVP", 4);
  detail::ckpt_write_u32(out, kCheckpointVersion);
  detail::ckpt_write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::ckpt_write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::ckpt_write_u32(out, static_cast<std::uint32_t>(p.value.ndim()));
    for (std::size_t d = 0; d < p.value.ndim(); ++d) {
      detail::ckpt_write_u32(out, static_cast<std::uint32_t>(p.value.shape()[d]));
    }
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      const float v = static_cast<float>(p.value.data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::ckpt_write_u32(out, bits);
    }
  }
  if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

// Loads values into an existing parameter list. Names must match in order and
// shapes exactly; a mismatch names the offending tensor.
template <class T>
void load_checkpoint(std::vector<Parameter<T>>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "BEVP", 4) != 0) {
    throw ConfigError(path + " is not a BEVP checkpoint");
  }
  const std::uint32_t version = detail::ckpt_read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  const std::uint32_t count = detail::ckpt_read_u32(in, path);
  if (count != params.size()) {
    throw ShapeError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                     std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::uint32_t name_len = detail::ckpt_read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) throw ConfigError("truncated checkpoint: " + path);
    if (name != p.name) {
      throw ShapeError("checkpoint parameter '" + name + "' does not match model parameter '" + p.name + "'");
    }
    const std::uint32_t ndim = detail::ckpt_read_u32(in, path);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::ckpt_read_u32(in, path);
    if (shape != p.value.shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                       ", model expects " + shape_str(p.value.shape()));
    }
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      const std::uint32_t bits = detail::ckpt_read_u32(in, path);
      float v;
      std::memcpy(&v, &bits, 4);
      p.value.data()[i] = static_cast<T>(v);
    }
  }
}

}  // namespace bevpaint
