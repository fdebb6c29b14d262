#pragma once

// Teleoperation protocol. JSON text messages:
//   client: {"type":"start","side":"left"|"right","seed":N}
//           {"type":"delta","dq":[6 numbers]}
//           {"type":"grip","value":0|1}        1 closes, 0 opens
//           {"type":"stop"}
//   server: {"type":"obs","frame_b64":...,"joints":[6],"t":N}
//           {"type":"verdict","success":bool,"reason":...,"episode":path,"frames":N}
//           {"type":"error","msg":...}
// The session is transport independent; teleop_server.hpp puts it on a
// websocket.

#include "activebc/arm.hpp"
#include "activebc/episode.hpp"
#include "activebc/render.hpp"
#include "activebc/rollout.hpp"
#include "activebc/scene.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace activebc {

inline std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(data), It(data + size));
  out.append((3 - size % 3) % 3, '=');
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  std::vector<std::uint8_t> out(It(text.cbegin()), It(text.cend()));
  return out;
}

class TeleopSession {
 public:
  explicit TeleopSession(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)) {}

  // Returns the replies for one client message, in order.
  std::vector<std::string> handle(const std::string& text) {
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      return {error("malformed JSON")};
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
      return {error("message needs a string 'type'")};
    const std::string type = msg["type"];
    try {
      if (type == "start") return start(msg);
      if (type == "delta") return delta(msg);
      if (type == "grip") return grip(msg);
      if (type == "stop") return stop();
    } catch (const std::exception& e) {
      return {error(e.what())};
    }
    return {error("unknown message type '" + type + "'")};
  }

  bool active() const { return plant_.has_value(); }
  std::size_t frames_recorded() const { return episode_.frames.size(); }
  const std::vector<std::filesystem::path>& saved() const { return saved_; }

  static std::string error(const std::string& msg) {
    return nlohmann::json{{"type", "error"}, {"msg", msg}}.dump();
  }

 private:
  std::vector<std::string> start(const nlohmann::json& msg) {
    if (!msg.contains("side") || !msg["side"].is_string())
      throw std::invalid_argument("start needs 'side' of \"left\" or \"right\"");
    const Side side = side_from_string(msg["side"].get<std::string>());
    if (side == Side::intermediate) throw std::invalid_argument("side must be left or right");
    std::uint64_t seed = 0;
    if (msg.contains("seed")) {
      if (!msg["seed"].is_number_unsigned()) throw std::invalid_argument("seed must be a non-negative integer");
      seed = msg["seed"].get<std::uint64_t>();
    }
    const SceneSpec scene = make_training_scene(side, seed);
    plant_ = grow_plant(scene);
    episode_ = Episode{};
    episode_.meta.scene = scene;
    episode_.meta.source = "teleop";
    q_ = home_config();
    return {observe()};
  }

  std::vector<std::string> delta(const nlohmann::json& msg) {
    require_active();
    if (!msg.contains("dq") || !msg["dq"].is_array() || msg["dq"].size() != kNumJoints)
      throw std::invalid_argument("delta needs 'dq' with 6 numbers");
    JointDelta dq;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto& v = msg["dq"][j];
      if (!v.is_number() || !std::isfinite(v.get<double>()))
        throw std::invalid_argument("dq entries must be finite numbers");
      dq[j] = v.get<double>();
    }
    q_ = step_joints(q_, dq);
    return {observe()};
  }

  // Moves the gripper to fully closed or open in clamped steps, arm held.
  std::vector<std::string> grip(const nlohmann::json& msg) {
    require_active();
    if (!msg.contains("value") || !msg["value"].is_number_integer() ||
        (msg["value"].get<int>() != 0 && msg["value"].get<int>() != 1))
      throw std::invalid_argument("grip needs 'value' 0 or 1");
    const double target = msg["value"].get<int>() == 1 ? 0.0 : 1.0;
    std::vector<std::string> out;
    while (q_[kGripper] != target) {
      JointDelta dq;
      dq[kGripper] = target - q_[kGripper];
      q_ = step_joints(q_, dq);
      out.push_back(observe());
    }
    return out;
  }

  std::vector<std::string> stop() {
    require_active();
    // A recording needs two frames; an immediate stop holds for one step.
    if (episode_.frames.size() < 2) {
      q_ = step_joints(q_, JointDelta{});
      observe();
    }
    std::filesystem::create_directories(out_dir_);
    std::filesystem::path path;
    for (std::size_t i = saved_.size();; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "teleop_%05zu.abc1", i);
      path = out_dir_ / name;
      if (!std::filesystem::exists(path)) break;
    }
    write_episode(episode_, path);
    saved_.push_back(path);
    const Verdict v = judge_episode(read_episode(path));
    const std::size_t n = episode_.frames.size();
    plant_.reset();
    episode_ = Episode{};
    nlohmann::json reply{{"type", "verdict"},
                         {"success", v.success},
                         {"reason", std::string(to_string(v.reason))},
                         {"episode", path.string()},
                         {"frames", n}};
    return {reply.dump()};
  }

  void require_active() const {
    if (!active()) throw std::logic_error("no active session; send start first");
  }

  std::string observe() {
    const Frame f = render(*plant_, forward_kinematics(ArmGeometry{}, q_));
    episode_.frames.push_back(f);
    episode_.joints.push_back(q_);
    nlohmann::json obs{{"type", "obs"},
                       {"frame_b64", base64_encode(f.pixels.data(), f.pixels.size())},
                       {"joints", q_.q},
                       {"t", episode_.frames.size() - 1}};
    return obs.dump();
  }

  std::filesystem::path out_dir_;
  std::optional<PlantModel> plant_;
  Episode episode_;
  JointConfig q_ = home_config();
  std::vector<std::filesystem::path> saved_;
};

}  // namespace activebc
