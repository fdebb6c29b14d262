#pragma once

// Checkpoint file layout, integers and floats little-endian:
//   "ABCW" | version u16 | adam step u64 | tensor count u32
//   | per tensor: name length u16, name, kind u8 (0 parameter, 1 buffer),
//     rank u8, dims u32 x rank, values f32 x N, and for parameters the Adam
//     first and second moments, f32 x N each
//   | metadata length u32 | metadata text

#include "activebc/episode.hpp"
#include "activebc/error.hpp"
#include "activebc/nn/param_store.hpp"
#include "activebc/nn/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace activebc::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'A', 'B', 'C', 'W'};

struct Checkpoint {
  ParamStore<float> params;
  std::vector<std::pair<std::string, Tensor<float>>> buffers;
  std::string metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  activebc::detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.le<std::uint16_t>(kCheckpointVersion);
  w.le<std::uint64_t>(ck.params.step);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ck.params.params().size() + ck.buffers.size()));
  auto header = [&](const std::string& name, std::uint8_t kind, const Shape& shape) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(kind);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
  };
  auto values = [&](const Tensor<float>& t) {
    for (float v : t.data) w.f32(v);
  };
  for (const auto& p : ck.params.params()) {
    header(p.name, 0, p.value.shape);
    values(p.value);
    values(p.m);
    values(p.v);
  }
  for (const auto& [name, t] : ck.buffers) {
    header(name, 1, t.shape);
    values(t);
  }
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ck.metadata.size()));
  w.bytes(ck.metadata.data(), ck.metadata.size());
  return std::move(w.data());
}

inline Checkpoint decode_checkpoint(const std::uint8_t* data, std::size_t size) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (size - pos < n) throw Truncated(std::string("checkpoint ") + what, pos + n, size);
  };
  auto rd = [&](std::size_t n, const char* what) {
    need(n, what);
    activebc::detail::ByteReader r(data + pos, n);
    pos += n;
    return r;
  };
  need(4, "magic");
  if (std::memcmp(data, kCheckpointMagic, 4) != 0) throw BadMagic("checkpoint has bad magic");
  pos = 4;
  const auto version = rd(2, "header").le<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.params.step = rd(8, "header").le<std::uint64_t>();
  const auto count = rd(4, "header").le<std::uint32_t>();
  auto read_values = [&](Tensor<float>& t) {
    auto r = rd(t.size() * 4, "tensor data");
    for (auto& v : t.data) v = r.f32();
  };
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = rd(2, "tensor header").le<std::uint16_t>();
    need(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(data + pos), name_len);
    pos += name_len;
    auto r = rd(2, "tensor header");
    const auto kind = r.le<std::uint8_t>();
    const auto rank = r.le<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = rd(4, "tensor shape").le<std::uint32_t>();
    if (kind == 0) {
      auto& p = ck.params.add(name, shape);
      read_values(p.value);
      read_values(p.m);
      read_values(p.v);
    } else if (kind == 1) {
      Tensor<float> t(shape);
      read_values(t);
      ck.buffers.emplace_back(std::move(name), std::move(t));
    } else {
      throw FormatError("checkpoint tensor has unknown kind " + std::to_string(kind));
    }
  }
  const auto meta_len = rd(4, "metadata length").le<std::uint32_t>();
  need(meta_len, "metadata");
  ck.metadata.assign(reinterpret_cast<const char*>(data + pos), meta_len);
  pos += meta_len;
  if (pos != size) throw LengthMismatch("checkpoint has trailing bytes");
  return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  activebc::detail::write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = activebc::detail::read_file(path);
  return decode_checkpoint(bytes.data(), bytes.size());
}

}  // namespace activebc::nn
