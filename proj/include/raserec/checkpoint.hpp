// Self-describing checkpoint container: version tag, free-form metadata
// (checkpoint id, lineage, model dims), then per-parameter name / dtype /
// shape / raw little-endian values.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/tensor.hpp"
#include "raserec/util.hpp"

namespace raserec {

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::string read_str(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}
inline void expect_magic(std::istream& in, const char* magic, const std::string& what) {
  char buf[8] = {};
  in.read(buf, 8);
  if (!in || std::string(buf, 8) != magic)
    throw std::runtime_error(what + ": bad magic (not a " + what + " file)");
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
  if constexpr (sizeof(T) == 4)
    return 0;  // f32
  else
    return 1;  // f64
}

}  // namespace detail

inline constexpr char kCheckpointMagic[] = "RSRCKPT1";

using Metadata = std::map<std::string, std::string>;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamRefs<T>& params,
                     const Metadata& meta) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kCheckpointMagic, 8);
    detail::write_u32(out, 1);  // format version
    detail::write_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      detail::write_str(out, k);
      detail::write_str(out, v);
    }
    detail::write_u64(out, params.size());
    for (const auto* p : params) {
      detail::write_str(out, p->name);
      out.put(static_cast<char>(detail::dtype_tag<T>()));
      out.put(p->trainable ? 1 : 0);
      detail::write_u32(out, static_cast<std::uint32_t>(p->value.shape().size()));
      for (std::size_t dim : p->value.shape()) detail::write_u64(out, dim);
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.numel() * sizeof(T)));
    }
  });
}

inline Metadata read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  detail::expect_magic(in, kCheckpointMagic, "checkpoint");
  std::uint32_t version = detail::read_u32(in);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  Metadata meta;
  std::uint32_t n = detail::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = detail::read_str(in);
    meta[k] = detail::read_str(in);
  }
  return meta;
}

// Loads values into an existing parameter set; names, shapes, and dtype must
// match exactly. Returns the file's metadata.
template <typename T>
Metadata load_checkpoint(const std::filesystem::path& path, const ParamRefs<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  detail::expect_magic(in, kCheckpointMagic, "checkpoint");
  std::uint32_t version = detail::read_u32(in);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  Metadata meta;
  std::uint32_t nmeta = detail::read_u32(in);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = detail::read_str(in);
    meta[k] = detail::read_str(in);
  }
  std::uint64_t count = detail::read_u64(in);

  std::map<std::string, ParameterT<T>*> by_name;
  for (auto* p : params) by_name[p->name] = p;
  std::size_t loaded = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::read_str(in);
    std::uint8_t dtype = static_cast<std::uint8_t>(in.get());
    bool trainable = in.get() != 0;
    std::uint32_t ndim = detail::read_u32(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& dim : shape) dim = detail::read_u64(in);
    std::size_t numel = TensorT<T>::numel_of(shape);

    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
    if (dtype != detail::dtype_tag<T>())
      throw std::runtime_error("checkpoint: dtype mismatch for '" + name + "'");
    if (it->second->value.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(it->second->value.data()),
            static_cast<std::streamsize>(numel * sizeof(T)));
    it->second->trainable = trainable;
    ++loaded;
  }
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path.string());
  if (loaded != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  return meta;
}

}  // namespace raserec
