#pragma once

// Websocket transport for TeleopSession. One interactive session at a time;
// a second client is told "busy" and closed. Plain HTTP GET /health answers
// "ok" on the same port.

#include "activebc/teleop.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace activebc {

namespace detail {
namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
}  // namespace detail

class TeleopServer {
 public:
  using tcp = boost::asio::ip::tcp;
  using Log = std::function<void(const std::string&)>;

  // Port 0 picks a free port; see port().
  TeleopServer(std::filesystem::path out_dir, unsigned short port, Log log = {})
      : out_dir_(std::move(out_dir)),
        acceptor_(ioc_, tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port)),
        log_(std::move(log)) {}

  ~TeleopServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  // Blocks until stop() is called from another thread.
  void run() {
    while (!stopping_) {
      tcp::socket socket(ioc_);
      boost::system::error_code ec;
      acceptor_.accept(socket, ec);
      if (stopping_) break;
      if (ec) continue;
      std::lock_guard lock(threads_mutex_);
      threads_.emplace_back([this, s = std::move(socket)]() mutable { serve(std::move(s)); });
    }
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(threads_mutex_);
      threads.swap(threads_);
    }
    for (auto& t : threads) t.join();
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    boost::system::error_code ec;
    // Wake the blocking accept with a throwaway connection.
    tcp::socket poke(ioc_);
    poke.connect(acceptor_.local_endpoint(), ec);
    std::lock_guard lock(active_mutex_);
    if (active_ != nullptr) active_->shutdown(tcp::socket::shutdown_both, ec);
  }

  std::vector<std::filesystem::path> saved() const {
    std::lock_guard lock(saved_mutex_);
    return saved_;
  }

 private:
  void log(const std::string& msg) {
    if (log_) {
      std::lock_guard lock(log_mutex_);
      log_(msg);
    }
  }

  void serve(tcp::socket socket) {
    namespace beast = detail::beast;
    namespace http = detail::http;
    namespace websocket = detail::websocket;
    boost::system::error_code ec;
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    http::read(socket, buffer, req, ec);
    if (ec) return;
    if (!websocket::is_upgrade(req)) {
      http::response<http::string_body> res;
      res.version(req.version());
      res.keep_alive(false);
      if (req.method() == http::verb::get && req.target() == "/health") {
        res.result(http::status::ok);
        res.body() = "ok\n";
      } else {
        res.result(http::status::not_found);
        res.body() = "not found\n";
      }
      res.set(http::field::content_type, "text/plain");
      res.prepare_payload();
      http::write(socket, res, ec);
      socket.shutdown(tcp::socket::shutdown_both, ec);
      return;
    }
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    if (busy_.exchange(true)) {
      ws.write(boost::asio::buffer(TeleopSession::error("busy")), ec);
      ws.close(websocket::close_code::try_again_later, ec);
      log("rejected a second client");
      return;
    }
    {
      std::lock_guard lock(active_mutex_);
      active_ = &ws.next_layer();
    }
    log("client connected");
    TeleopSession session(out_dir_);
    while (!stopping_) {
      beast::flat_buffer in;
      ws.read(in, ec);
      if (ec) break;
      const auto replies = session.handle(beast::buffers_to_string(in.data()));
      for (const auto& r : replies) {
        ws.write(boost::asio::buffer(r), ec);
        if (ec) break;
      }
      if (ec) break;
    }
    {
      std::lock_guard lock(saved_mutex_);
      saved_.insert(saved_.end(), session.saved().begin(), session.saved().end());
    }
    {
      std::lock_guard lock(active_mutex_);
      active_ = nullptr;
    }
    if (ws.is_open()) ws.close(websocket::close_code::normal, ec);
    busy_ = false;
    log("client disconnected");
  }

  std::filesystem::path out_dir_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  Log log_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> busy_{false};
  std::mutex threads_mutex_;
  std::vector<std::thread> threads_;
  mutable std::mutex saved_mutex_;
  std::vector<std::filesystem::path> saved_;
  std::mutex log_mutex_;
  std::mutex active_mutex_;
  tcp::socket* active_ = nullptr;
};

}  // namespace activebc
