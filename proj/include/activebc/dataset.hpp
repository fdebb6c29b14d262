#pragma once

// Sliding-window samples, train/val/test splits, and the dataset directory.

#include "activebc/arm.hpp"
#include "activebc/episode.hpp"
#include "activebc/error.hpp"
#include "activebc/rng.hpp"
#include "activebc/scene.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace activebc {

enum class Representation { delta, absolute };

inline std::string_view to_string(Representation r) {
  return r == Representation::delta ? "delta" : "absolute";
}

inline Representation representation_from_string(std::string_view s) {
  if (s == "delta") return Representation::delta;
  if (s == "absolute" || s == "position") return Representation::absolute;
  throw std::invalid_argument("unknown representation '" + std::string(s) + "'");
}

// History of H frame indices ending at t; indices before the episode start
// are replaced by frame 0. Both targets are always filled in.
struct WindowSample {
  std::size_t episode = 0;
  std::size_t t = 0;
  std::vector<std::uint32_t> history;  // oldest first
  JointConfig base_joints;             // a_t
  JointConfig target_absolute;         // a_{t+1}
  JointDelta target_delta;             // a_{t+1} - a_t

  friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

inline std::vector<WindowSample> build_windows(const Episode& ep, int history_len,
                                               std::size_t episode_id = 0) {
  if (history_len < 1) throw std::invalid_argument("history length must be >= 1");
  validate(ep);
  const std::size_t h = static_cast<std::size_t>(history_len);
  std::vector<WindowSample> out;
  out.reserve(ep.length() - 1);
  for (std::size_t t = 0; t + 1 < ep.length(); ++t) {
    WindowSample s;
    s.episode = episode_id;
    s.t = t;
    s.history.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(t + k + 1) - static_cast<std::ptrdiff_t>(h);
      s.history[k] = static_cast<std::uint32_t>(idx < 0 ? 0 : idx);
    }
    s.base_joints = ep.joints[t];
    s.target_absolute = ep.joints[t + 1];
    s.target_delta = difference(ep.joints[t + 1], ep.joints[t]);
    out.push_back(std::move(s));
  }
  return out;
}

struct SplitSpec {
  std::vector<Side> pool_sides;          // side of every pool episode, by id
  std::vector<std::size_t> train_pool_ids;  // the full 80% training portion
  std::vector<std::size_t> train_ids;       // the subset actually used
  std::vector<std::size_t> val_ids;
  std::vector<std::size_t> test_ids;
  std::size_t demo_count = 0;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

namespace detail {

inline std::vector<std::size_t> interleave(const std::vector<std::size_t>& left,
                                           const std::vector<std::size_t>& right) {
  std::vector<std::size_t> out;
  out.reserve(left.size() + right.size());
  for (std::size_t i = 0; i < std::max(left.size(), right.size()); ++i) {
    if (i < left.size()) out.push_back(left[i]);
    if (i < right.size()) out.push_back(right[i]);
  }
  return out;
}

inline void split_by_side(const std::vector<std::size_t>& ids, const std::vector<Side>& sides,
                          std::vector<std::size_t>& left, std::vector<std::size_t>& right) {
  for (auto id : ids) (sides.at(id) == Side::left ? left : right).push_back(id);
}

}  // namespace detail

// 80/10/10 split with every part balanced between left and right. Each side
// contributes n/20 episodes to validation and to test, so n must be a
// multiple of 20.
inline SplitSpec make_splits(std::span<const Side> sides, std::uint64_t seed) {
  const std::size_t n = sides.size();
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < n; ++i) {
    if (sides[i] == Side::left) left.push_back(i);
    else if (sides[i] == Side::right) right.push_back(i);
    else throw std::invalid_argument("pool episodes must be left or right");
  }
  if (left.size() != right.size())
    throw std::invalid_argument("pool is not balanced between left and right");
  if (n == 0 || n % 20 != 0)
    throw std::invalid_argument("pool size must be a positive multiple of 20 for balanced splits");
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(left.begin(), left.end());
  rng.shuffle(right.begin(), right.end());
  const std::size_t k = n / 20;
  auto part = [](const std::vector<std::size_t>& v, std::size_t lo, std::size_t hi) {
    return std::vector<std::size_t>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                    v.begin() + static_cast<std::ptrdiff_t>(hi));
  };
  SplitSpec s;
  s.pool_sides.assign(sides.begin(), sides.end());
  s.val_ids = detail::interleave(part(left, 0, k), part(right, 0, k));
  s.test_ids = detail::interleave(part(left, k, 2 * k), part(right, k, 2 * k));
  s.train_pool_ids = detail::interleave(part(left, 2 * k, left.size()),
                                        part(right, 2 * k, right.size()));
  s.train_ids = s.train_pool_ids;
  s.demo_count = s.train_ids.size();
  return s;
}

inline SplitSpec make_splits(std::span<const Episode> pool, std::uint64_t seed) {
  std::vector<Side> sides;
  sides.reserve(pool.size());
  for (const auto& ep : pool) sides.push_back(ep.meta.scene.side_label);
  return make_splits(std::span<const Side>(sides), seed);
}

// Balanced subsample of the training portion. For a fixed seed, the subset
// for 2k demos contains the subset for k demos.
inline SplitSpec subsample_train(const SplitSpec& spec, std::size_t demo_count,
                                 std::uint64_t seed) {
  if (demo_count == 0 || demo_count % 2 != 0)
    throw std::invalid_argument("demo count must be a positive even number");
  if (demo_count > spec.train_pool_ids.size())
    throw std::invalid_argument("demo count " + std::to_string(demo_count) +
                                " exceeds the training pool of " +
                                std::to_string(spec.train_pool_ids.size()));
  std::vector<std::size_t> left, right;
  detail::split_by_side(spec.train_pool_ids, spec.pool_sides, left, right);
  Rng rng(derive_seed(seed, 0x5ab5));
  rng.shuffle(left.begin(), left.end());
  rng.shuffle(right.begin(), right.end());
  left.resize(demo_count / 2);
  right.resize(demo_count / 2);
  SplitSpec out = spec;
  out.train_ids = detail::interleave(left, right);
  out.demo_count = demo_count;
  return out;
}

// splits.txt: one "name: id id ..." line per list; sides as L/R letters.
inline std::string encode_splits(const SplitSpec& s) {
  std::ostringstream os;
  auto ids = [&](const char* name, const std::vector<std::size_t>& v) {
    os << name << ':';
    for (auto id : v) os << ' ' << id;
    os << '\n';
  };
  os << "sides:";
  for (auto side : s.pool_sides) os << ' ' << (side == Side::left ? 'L' : 'R');
  os << '\n';
  ids("train_pool", s.train_pool_ids);
  ids("train", s.train_ids);
  ids("val", s.val_ids);
  ids("test", s.test_ids);
  os << "demo_count: " << s.demo_count << '\n';
  return os.str();
}

inline SplitSpec decode_splits(const std::string& text) {
  SplitSpec s;
  std::istringstream in(text);
  std::string line;
  bool seen_sides = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError("bad splits line: " + line);
    const std::string key = line.substr(0, colon);
    std::istringstream vals(line.substr(colon + 1));
    if (key == "sides") {
      std::string tok;
      while (vals >> tok) {
        if (tok == "L") s.pool_sides.push_back(Side::left);
        else if (tok == "R") s.pool_sides.push_back(Side::right);
        else throw FormatError("bad side token " + tok);
      }
      seen_sides = true;
      continue;
    }
    std::vector<std::size_t>* dst = nullptr;
    if (key == "train_pool") dst = &s.train_pool_ids;
    else if (key == "train") dst = &s.train_ids;
    else if (key == "val") dst = &s.val_ids;
    else if (key == "test") dst = &s.test_ids;
    else if (key == "demo_count") {
      if (!(vals >> s.demo_count)) throw FormatError("bad demo_count");
      continue;
    } else {
      throw FormatError("unknown splits key " + key);
    }
    std::size_t id;
    while (vals >> id) dst->push_back(id);
  }
  if (!seen_sides) throw FormatError("splits file has no sides line");
  return s;
}

// Dataset directory: pool/ep_00000.abc1 ..., manifest.txt, splits.txt.
namespace dataset_dir {

inline std::filesystem::path episode_path(const std::filesystem::path& root, std::size_t id) {
  char name[32];
  std::snprintf(name, sizeof name, "ep_%05zu.abc1", id);
  return root / "pool" / name;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  activebc::detail::write_file_atomic(path, bytes);
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = activebc::detail::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

inline SplitSpec read_splits(const std::filesystem::path& root) {
  return decode_splits(read_text(root / "splits.txt"));
}

inline std::size_t pool_size(const std::filesystem::path& root) {
  std::size_t n = 0;
  while (std::filesystem::exists(episode_path(root, n))) ++n;
  return n;
}

inline std::vector<Episode> read_pool(const std::filesystem::path& root) {
  const std::size_t n = pool_size(root);
  if (n == 0) throw Error("no episodes under " + (root / "pool").string());
  std::vector<Episode> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pool.push_back(read_episode(episode_path(root, i)));
  return pool;
}

}  // namespace dataset_dir

}  // namespace activebc
