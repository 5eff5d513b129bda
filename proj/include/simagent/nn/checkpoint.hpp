#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "simagent/nn/parameters.hpp"

namespace simagent::nn {

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'I', 'M', 'A', 'G', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct CheckpointHeader {
  std::uint64_t fingerprint = 0;
  std::string config_json;
};

namespace detail {

// Little-endian host assumed; values are written as raw IEEE-754 bytes.
template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated while reading " + what);
  return v;
}

inline std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get<std::uint64_t>(is, what);
  if (n > (1ULL << 30)) throw CheckpointError("checkpoint corrupt: oversized " + what);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("checkpoint truncated while reading " + what);
  return s;
}

inline void get_matrix(std::istream& is, Matrix& m, const std::string& what) {
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) throw CheckpointError("checkpoint truncated while reading " + what);
}

}  // namespace detail

/// Writes {name, shape, dtype, bytes} entries with moments, step counter and a config fingerprint.
inline void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                            const std::string& config_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put(os, kCheckpointVersion);
  detail::put(os, fnv1a(config_json));
  detail::put_string(os, config_json);
  detail::put<std::uint64_t>(os, store.step);
  detail::put<std::uint64_t>(os, store.size());
  for (const auto& e : store.entries()) {
    detail::put_string(os, e.name);
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(e.tensor.rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(e.tensor.cols()));
    detail::put<std::uint8_t>(os, 0);  // dtype f64
    detail::put_matrix(os, e.tensor.value());
    detail::put_matrix(os, e.m);
    detail::put_matrix(os, e.v);
  }
  if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw CheckpointError("not a checkpoint file: " + path.string());
  const auto version = detail::get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  CheckpointHeader h;
  h.fingerprint = detail::get<std::uint64_t>(is, "fingerprint");
  h.config_json = detail::get_string(is, "config");
  return h;
}

/// Loads values and optimizer state into a store with the same layout; the fingerprint must match.
inline void load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                            const std::string& expected_config_json) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw CheckpointError("not a checkpoint file: " + path.string());
  const auto version = detail::get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto fp = detail::get<std::uint64_t>(is, "fingerprint");
  detail::get_string(is, "config");
  if (fp != fnv1a(expected_config_json)) {
    throw CheckpointError("checkpoint config fingerprint mismatch for " + path.string());
  }
  store.step = detail::get<std::uint64_t>(is, "step");
  const auto count = detail::get<std::uint64_t>(is, "entry count");
  if (count != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(store.size()));
  }
  for (auto& e : store.entries()) {
    const auto name = detail::get_string(is, "tensor name");
    if (name != e.name) throw CheckpointError("checkpoint tensor '" + name + "' where '" + e.name + "' expected");
    const auto rows = detail::get<std::uint64_t>(is, name + " shape");
    const auto cols = detail::get<std::uint64_t>(is, name + " shape");
    if (static_cast<Eigen::Index>(rows) != e.tensor.rows() || static_cast<Eigen::Index>(cols) != e.tensor.cols()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "], model expects " + shape_str(e.tensor.value()));
    }
    if (detail::get<std::uint8_t>(is, name + " dtype") != 0) throw CheckpointError("unsupported dtype for " + name);
    detail::get_matrix(is, e.tensor.mutable_value(), name);
    detail::get_matrix(is, e.m, name + " moment");
    detail::get_matrix(is, e.v, name + " moment");
  }
}

}  // namespace simagent::nn
