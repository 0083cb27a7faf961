#pragma once

// WebSocket telemetry and control endpoint. One I/O thread owns all client
// state; broadcast() only posts to it, so callers never block on slow
// clients. Each client has a bounded outgoing queue that drops its oldest
// frame on overflow.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "accompanion/errors.hpp"
#include "accompanion/messages.hpp"

namespace accompanion {

template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  /// Returns true if an older element was discarded to make room.
  bool push(T value) {
    bool dropped = false;
    if (items_.size() >= limit_) {
      items_.pop_front();
      dropped = true;
    }
    items_.push_back(std::move(value));
    return dropped;
  }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  T pop() {
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

 private:
  std::size_t limit_;
  std::deque<T> items_;
};

class WsServer {
 public:
  using ControlHandler = std::function<void(const ScalingMsg&)>;

  struct Options {
    std::string address = "127.0.0.1";
    unsigned short port = 0;  // 0 picks a free port
    std::size_t clientQueueLimit = 256;
  };

  WsServer(Options options, std::string pieceFrame, ControlHandler onControl)
      : options_(std::move(options)), pieceFrame_(std::move(pieceFrame)),
        onControl_(std::move(onControl)), acceptor_(ioc_), work_(boost::asio::make_work_guard(ioc_)) {
    namespace net = boost::asio;
    boost::system::error_code ec;
    const auto address = net::ip::make_address(options_.address, ec);
    if (ec) throw ConfigError("bad listen address '" + options_.address + "'");
    const net::ip::tcp::endpoint endpoint(address, options_.port);
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (ec == net::error::address_in_use || ec == net::error::access_denied)
      throw PortBusy("WebSocket port " + std::to_string(options_.port) + " is unavailable: " + ec.message());
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot listen on port " + std::to_string(options_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
    spdlog::info("WebSocket server listening on ws://{}:{}", options_.address, port_);
  }

  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;
  ~WsServer() { stop(); }

  unsigned short port() const { return port_; }
  std::uint64_t dropped() const { return dropped_.load(); }
  std::size_t client_count() const { return clientCount_.load(); }

  void broadcast(const WsMessage& m) { broadcast_frame(serialize(m)); }

  void broadcast_frame(std::string text) {
    auto frame = std::make_shared<const std::string>(std::move(text));
    pendingPosts_.fetch_add(1);
    boost::asio::post(ioc_, [this, frame] {
      for (const auto& c : clients_) c->enqueue(frame);
      pendingPosts_.fetch_sub(1);
    });
  }

  /// Waits until queued frames have been handed to the sockets, or timeout.
  void flush(std::chrono::milliseconds timeout) {
    const auto end = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < end) {
      if (pendingPosts_.load() == 0 && busyClients_.load() == 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for (const auto& c : clients_) c->close();
      clients_.clear();
      work_.reset();
    });
    if (thread_.joinable()) thread_.join();
  }

 private:
  class Client : public std::enable_shared_from_this<Client> {
   public:
    Client(WsServer& server, boost::asio::ip::tcp::socket socket)
        : server_(server), ws_(std::move(socket)), queue_(server.options_.clientQueueLimit) {}

    void start() {
      ws_.set_option(boost::beast::websocket::stream_base::timeout::suggested(boost::beast::role_type::server));
      ws_.async_accept([self = this->shared_from_this()](boost::beast::error_code ec) {
        if (ec) return;
        self->server_.clients_.insert(self);
        self->server_.clientCount_.store(self->server_.clients_.size());
        self->enqueue(std::make_shared<const std::string>(self->server_.pieceFrame_));
        self->read();
      });
    }

    void enqueue(std::shared_ptr<const std::string> frame) {
      if (queue_.push(std::move(frame))) {
        const auto n = server_.dropped_.fetch_add(1) + 1;
        if (n == 1 || n % 100 == 0) spdlog::warn("slow WebSocket client: {} frames dropped so far", n);
      }
      if (!inflight_) write_next();
    }

    void close() {
      boost::beast::error_code ec;
      boost::beast::get_lowest_layer(ws_).socket().close(ec);
    }

   private:
    void write_next() {
      if (queue_.empty()) {
        if (inflight_) server_.busyClients_.fetch_sub(1);
        inflight_.reset();
        return;
      }
      if (!inflight_) server_.busyClients_.fetch_add(1);
      inflight_ = queue_.pop();
      ws_.text(true);
      ws_.async_write(boost::asio::buffer(*inflight_),
                      [self = this->shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        if (ec) return self->drop();
                        self->write_next();
                      });
    }

    void read() {
      ws_.async_read(buffer_, [self = this->shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if (ec) return self->drop();
        const std::string text = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        if (auto m = parse_message(text)) {
          if (auto* s = std::get_if<ScalingMsg>(&*m)) {
            if (self->server_.onControl_) self->server_.onControl_(*s);
          } else {
            spdlog::warn("ignoring client message of server-only type");
          }
        }
        self->read();
      });
    }

    void drop() {
      if (inflight_) server_.busyClients_.fetch_sub(1);
      inflight_.reset();
      server_.clients_.erase(this->shared_from_this());
      server_.clientCount_.store(server_.clients_.size());
    }

    WsServer& server_;
    boost::beast::websocket::stream<boost::beast::tcp_stream> ws_;
    boost::beast::flat_buffer buffer_;
    DropOldestQueue<std::shared_ptr<const std::string>> queue_;
    std::shared_ptr<const std::string> inflight_;
  };

  void do_accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, boost::asio::ip::tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<Client>(*this, std::move(socket))->start();
      do_accept();
    });
  }

  Options options_;
  std::string pieceFrame_;
  ControlHandler onControl_;
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::acceptor acceptor_;
  boost::asio::executor_work_guard<boost::asio::io_context::executor_type> work_;
  std::set<std::shared_ptr<Client>> clients_;
  std::thread thread_;
  unsigned short port_ = 0;
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<std::size_t> clientCount_{0};
  std::atomic<int> pendingPosts_{0};
  std::atomic<int> busyClients_{0};
  std::atomic<bool> stopped_{false};
};

}  // namespace accompanion
