#include "activebc/expert.hpp"
#include "activebc/teleop.hpp"
#include "activebc/teleop_server.hpp"

#include <boost/asio/connect.hpp>
#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

using namespace activebc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TeleopDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("activebc_teleop_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

json one(const std::vector<std::string>& replies) {
  EXPECT_EQ(replies.size(), 1u);
  return json::parse(replies.at(0));
}

std::string delta_msg(const std::array<double, kNumJoints>& dq) {
  return json{{"type", "delta"}, {"dq", dq}}.dump();
}

const std::string kStop = R"({"type":"stop"})";

TEST(Base64, RoundTrip) {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 100u}) {
    std::vector<std::uint8_t> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<std::uint8_t>(i * 37 + 11);
    const auto text = base64_encode(data.data(), data.size());
    EXPECT_EQ(text.size() % 4, 0u);
    EXPECT_EQ(base64_decode(text), data);
  }
  const std::string hello = "hello";
  EXPECT_EQ(base64_encode(reinterpret_cast<const std::uint8_t*>(hello.data()), 5), "aGVsbG8=");
}

TEST_F(TeleopDir, StartSendsFirstObservation) {
  TeleopSession s(dir_);
  const json obs = one(s.handle(R"({"type":"start","side":"left","seed":5})"));
  EXPECT_EQ(obs["type"], "obs");
  EXPECT_EQ(obs["t"], 0);
  const JointConfig home = home_config();
  EXPECT_EQ(obs["joints"].get<std::vector<double>>(), std::vector<double>(home.q.begin(), home.q.end()));
  const auto pixels = base64_decode(obs["frame_b64"]);
  ASSERT_EQ(pixels.size(), kFrameBytes);
  const SceneSpec scene = make_training_scene(Side::left, 5);
  const Frame want = render(grow_plant(scene), forward_kinematics({}, home_config()));
  EXPECT_TRUE(std::equal(pixels.begin(), pixels.end(), want.pixels.begin()));
}

TEST_F(TeleopDir, ZeroDeltasRecordAHeldHomePose) {
  TeleopSession s(dir_);
  s.handle(R"({"type":"start","side":"right","seed":2})");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(one(s.handle(delta_msg({})))["t"], i + 1);
  const json v = one(s.handle(kStop));
  EXPECT_EQ(v["type"], "verdict");
  EXPECT_EQ(v["success"], false);
  EXPECT_EQ(v["reason"], "no_close");
  EXPECT_EQ(v["frames"], 11);
  const Episode ep = read_episode(v["episode"].get<std::string>());
  EXPECT_EQ(ep.length(), 11u);
  EXPECT_EQ(ep.meta.source, "teleop");
  for (const auto& q : ep.joints) EXPECT_EQ(q, home_config());
  EXPECT_EQ(judge_episode(ep).reason, FailureReason::no_close);
  EXPECT_FALSE(s.active());
}

TEST_F(TeleopDir, ImmediateStopIsNoClose) {
  TeleopSession s(dir_);
  s.handle(R"({"type":"start","side":"left","seed":1})");
  const json v = one(s.handle(kStop));
  EXPECT_EQ(v["reason"], "no_close");
  EXPECT_EQ(v["frames"], 2);
  EXPECT_EQ(s.saved().size(), 1u);
}

TEST_F(TeleopDir, CenteringThenOneGripSucceeds) {
  const SceneSpec scene = make_training_scene(Side::left, 9);
  const Episode ep = run_expert(scene, {}, 9);
  TeleopSession s(dir_);
  s.handle(json{{"type", "start"}, {"side", "left"}, {"seed", 9}}.dump());
  std::size_t t = 0;
  for (; t + 1 < ep.length() && ep.joints[t + 1][kGripper] == 1.0; ++t)
    s.handle(delta_msg(difference(ep.joints[t + 1], ep.joints[t]).dq));
  const auto obs = s.handle(R"({"type":"grip","value":1})");
  EXPECT_EQ(obs.size(), 4u);  // 1.0 -> 0.7 -> 0.4 -> 0.1 -> 0.0
  EXPECT_EQ(json::parse(obs.back())["joints"][5], 0.0);
  for (int i = 0; i < 5; ++i) s.handle(delta_msg({}));
  const json v = one(s.handle(kStop));
  EXPECT_EQ(v["success"], true) << v.dump();
  EXPECT_EQ(v["reason"], "none");
}

TEST_F(TeleopDir, DoubleGripIsMultipleClose) {
  TeleopSession s(dir_);
  s.handle(R"({"type":"start","side":"left","seed":3})");
  s.handle(R"({"type":"grip","value":1})");
  s.handle(R"({"type":"grip","value":0})");
  s.handle(R"({"type":"grip","value":1})");
  EXPECT_EQ(one(s.handle(kStop))["reason"], "multiple_close");
}

TEST_F(TeleopDir, ErrorsKeepTheSession) {
  TeleopSession s(dir_);
  EXPECT_EQ(one(s.handle("{not json"))["type"], "error");
  EXPECT_EQ(one(s.handle(R"({"kind":"start"})"))["type"], "error");
  EXPECT_EQ(one(s.handle(R"({"type":"dance"})"))["type"], "error");
  EXPECT_EQ(one(s.handle(delta_msg({})))["type"], "error");
  EXPECT_EQ(one(s.handle(kStop))["type"], "error");
  EXPECT_EQ(one(s.handle(R"({"type":"start","side":"intermediate"})"))["type"], "error");
  s.handle(R"({"type":"start","side":"left"})");
  EXPECT_EQ(one(s.handle(R"({"type":"delta","dq":[1,2]})"))["type"], "error");
  EXPECT_EQ(one(s.handle(R"({"type":"delta","dq":[0,0,0,0,0,"x"]})"))["type"], "error");
  EXPECT_EQ(one(s.handle(R"({"type":"grip","value":0.5})"))["type"], "error");
  EXPECT_TRUE(s.active());
  EXPECT_EQ(s.frames_recorded(), 1u);
  EXPECT_NEAR(one(s.handle(delta_msg({0.5, 0, 0, 0, 0, 0})))["joints"][0].get<double>(), 0.3,
              kEncoderResolution);
}

// ---- transport ----

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

struct RunningServer {
  explicit RunningServer(const fs::path& dir) : server(dir, 0), thread([this] { server.run(); }) {}
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  TeleopServer server;
  std::thread thread;
};

struct Client {
  Client(boost::asio::io_context& ioc, unsigned short port) : ws(ioc) {
    tcp::resolver resolver(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.text(true);
  }
  json roundtrip(const std::string& msg) {
    ws.write(boost::asio::buffer(msg));
    return read();
  }
  json read() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  websocket::stream<tcp::socket> ws;
};

TEST_F(TeleopDir, WebsocketSessionRecordsEpisode) {
  RunningServer rs(dir_);
  boost::asio::io_context ioc;
  Client c(ioc, rs.server.port());
  EXPECT_EQ(c.roundtrip(R"({"type":"start","side":"left","seed":4})")["type"], "obs");
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c.roundtrip(delta_msg({}))["t"], i + 1);
  const json v = c.roundtrip(kStop);
  EXPECT_EQ(v["type"], "verdict");
  EXPECT_EQ(v["reason"], "no_close");
  EXPECT_TRUE(fs::exists(v["episode"].get<std::string>()));
  c.ws.close(websocket::close_code::normal);
}

TEST_F(TeleopDir, SecondClientIsBusy) {
  RunningServer rs(dir_);
  boost::asio::io_context ioc;
  Client first(ioc, rs.server.port());
  EXPECT_EQ(first.roundtrip(R"({"type":"start","side":"right"})")["type"], "obs");
  Client second(ioc, rs.server.port());
  const json busy = second.read();
  EXPECT_EQ(busy["type"], "error");
  EXPECT_EQ(busy["msg"], "busy");
  EXPECT_EQ(first.roundtrip(delta_msg({}))["type"], "obs");
  first.ws.close(websocket::close_code::normal);
}

TEST_F(TeleopDir, HealthEndpoint) {
  RunningServer rs(dir_);
  boost::asio::io_context ioc;
  tcp::socket sock(ioc);
  tcp::resolver resolver(ioc);
  boost::asio::connect(sock, resolver.resolve("127.0.0.1", std::to_string(rs.server.port())));
  http::request<http::empty_body> req{http::verb::get, "/health", 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_EQ(res.body(), "ok\n");
}

}  // namespace
