#pragma once

// Episode container and its on-disk format.
//
// Layout, all integers little-endian:
//   "ABC1" | version u16 | T u32 | height u16 (64) | width u16 (64) | channels u8 (3)
//   | T raw frames, 12288 bytes each
//   | T joint records, 6 x float32 LE
//   | metadata length u32 | metadata, UTF-8 "key=value" lines

#include "activebc/arm.hpp"
#include "activebc/error.hpp"
#include "activebc/render.hpp"
#include "activebc/scene.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace activebc {

inline constexpr std::uint16_t kEpisodeVersion = 1;
inline constexpr char kEpisodeMagic[4] = {'A', 'B', 'C', '1'};

struct EpisodeMeta {
  SceneSpec scene;
  std::uint64_t expert_seed = 0;
  std::uint16_t format_version = kEpisodeVersion;
  std::string source = "expert";  // expert | teleop | rollout
  friend bool operator==(const EpisodeMeta&, const EpisodeMeta&) = default;
};

struct Episode {
  std::vector<Frame> frames;
  std::vector<JointConfig> joints;
  EpisodeMeta meta;

  std::size_t length() const { return frames.size(); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

inline void validate(const Episode& ep) {
  if (ep.frames.size() != ep.joints.size())
    throw std::invalid_argument("episode frames and joints differ in length");
  if (ep.frames.size() < 2) throw std::invalid_argument("episode needs at least 2 timesteps");
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view s, std::string_view key) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("bad metadata value for '" + std::string(key) + "'");
  return v;
}

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<std::uint8_t>(static_cast<std::make_unsigned_t<T>>(v) >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  template <typename T>
  T le() {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v = static_cast<T>(v | static_cast<T>(static_cast<T>(p_[pos_ + i]) << (8 * i)));
    pos_ += sizeof(T);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  const std::uint8_t* take(std::size_t n) {
    const auto* p = p_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::string encode_metadata(const EpisodeMeta& m) {
  std::ostringstream os;
  os << "format_version=" << m.format_version << '\n'
     << "source=" << m.source << '\n'
     << "side=" << to_string(m.scene.side_label) << '\n'
     << "azimuth=" << detail::format_double(m.scene.plant_azimuth) << '\n'
     << "range=" << detail::format_double(m.scene.plant_range) << '\n'
     << "height=" << detail::format_double(m.scene.plant_height) << '\n'
     << "scene_seed=" << m.scene.seed << '\n'
     << "expert_seed=" << m.expert_seed << '\n';
  return os.str();
}

inline std::map<std::string, std::string, std::less<>> parse_key_values(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("metadata line without '=': " + std::string(line));
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return kv;
}

inline EpisodeMeta decode_metadata(std::string_view text) {
  const auto kv = parse_key_values(text);
  auto get = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("metadata missing '" + std::string(key) + "'");
    return it->second;
  };
  EpisodeMeta m;
  m.format_version = detail::parse_number<std::uint16_t>(get("format_version"), "format_version");
  m.source = get("source");
  m.scene.side_label = side_from_string(get("side"));
  m.scene.plant_azimuth = detail::parse_number<double>(get("azimuth"), "azimuth");
  m.scene.plant_range = detail::parse_number<double>(get("range"), "range");
  m.scene.plant_height = detail::parse_number<double>(get("height"), "height");
  m.scene.seed = detail::parse_number<std::uint64_t>(get("scene_seed"), "scene_seed");
  m.expert_seed = detail::parse_number<std::uint64_t>(get("expert_seed"), "expert_seed");
  return m;
}

inline std::vector<std::uint8_t> encode_episode(const Episode& ep) {
  validate(ep);
  detail::ByteWriter w;
  w.bytes(kEpisodeMagic, 4);
  w.le<std::uint16_t>(kEpisodeVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ep.length()));
  w.le<std::uint16_t>(kImageSize);
  w.le<std::uint16_t>(kImageSize);
  w.le<std::uint8_t>(3);
  for (const auto& f : ep.frames) w.bytes(f.pixels.data(), kFrameBytes);
  for (const auto& q : ep.joints)
    for (double v : q.q) w.f32(static_cast<float>(v));
  const std::string meta = encode_metadata(ep.meta);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  return std::move(w.data());
}

inline Episode decode_episode(const std::uint8_t* data, std::size_t size) {
  constexpr std::size_t kHeader = 4 + 2 + 4 + 2 + 2 + 1;
  if (size < 4) throw Truncated("episode header", kHeader, size);
  if (std::memcmp(data, kEpisodeMagic, 4) != 0) throw BadMagic("episode file has bad magic");
  if (size < kHeader) throw Truncated("episode header", kHeader, size);
  detail::ByteReader r(data, size);
  r.take(4);
  const auto version = r.le<std::uint16_t>();
  if (version != kEpisodeVersion)
    throw VersionMismatch("episode format version " + std::to_string(version) +
                          ", expected " + std::to_string(kEpisodeVersion));
  const auto t = r.le<std::uint32_t>();
  const auto h = r.le<std::uint16_t>();
  const auto wpx = r.le<std::uint16_t>();
  const auto c = r.le<std::uint8_t>();
  if (h != kImageSize || wpx != kImageSize || c != 3)
    throw LengthMismatch("episode frame geometry must be 64x64x3");
  if (t < 2) throw LengthMismatch("episode declares fewer than 2 timesteps");

  const std::size_t frames_end = kHeader + std::size_t{t} * kFrameBytes;
  const std::size_t joints_end = frames_end + std::size_t{t} * kNumJoints * 4;
  if (size < frames_end) throw Truncated("episode frames", frames_end, size);
  if (size < joints_end + 4) throw Truncated("episode joints", joints_end + 4, size);

  Episode ep;
  ep.frames.resize(t);
  for (auto& f : ep.frames) std::memcpy(f.pixels.data(), r.take(kFrameBytes), kFrameBytes);
  ep.joints.resize(t);
  for (auto& q : ep.joints)
    for (auto& v : q.q) v = static_cast<double>(r.f32());
  const auto meta_len = r.le<std::uint32_t>();
  const std::size_t total = joints_end + 4 + meta_len;
  if (size < total) throw Truncated("episode metadata", total, size);
  if (size > total)
    throw LengthMismatch("episode has " + std::to_string(size - total) + " trailing bytes");
  const auto* meta = r.take(meta_len);
  ep.meta = decode_metadata(std::string_view(reinterpret_cast<const char*>(meta), meta_len));
  if (ep.meta.format_version != version)
    throw VersionMismatch("metadata version disagrees with header");
  return ep;
}

inline void write_episode(const Episode& ep, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_episode(ep));
}

inline Episode read_episode(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_episode(bytes.data(), bytes.size());
}

}  // namespace activebc
