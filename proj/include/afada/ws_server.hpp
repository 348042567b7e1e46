#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "afada/gateway.hpp"

namespace afada {

namespace ws_detail {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Gateway& gateway) : ws_(std::move(socket)), gateway_(gateway) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->joined_ = true;
      std::weak_ptr<Session> weak = self;
      self->id_ = self->gateway_.connect([weak](const std::string& text) {
        if (auto s = weak.lock()) s->queue(text);
      });
      self->read();
    });
  }

  void close() {
    if (joined_) gateway_.disconnect(id_);
    joined_ = false;
    beast::error_code ec;
    ws_.next_layer().socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->gateway_.receive(self->id_, text);
      self->read();
    });
  }

  void queue(const std::string& text) {
    outbox_.push_back(text);
    if (outbox_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      self->outbox_.pop_front();
      if (!self->outbox_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Gateway& gateway_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  Gateway::ClientId id_ = 0;
  bool joined_ = false;
};

}  // namespace ws_detail

/// Serves one gateway over WebSocket. Everything, the simulation included,
/// runs on the io_context's thread.
class WsServer {
 public:
  static constexpr int kTickMs = 20;

  /// Binds immediately; throws if the port is unavailable. Port 0 picks a
  /// free one.
  WsServer(boost::asio::io_context& io, Gateway& gateway, const std::string& host, unsigned short port)
      : io_(io), gateway_(gateway), acceptor_(io), timer_(io) {
    using ws_detail::tcp;
    const tcp::endpoint ep{boost::asio::ip::make_address(host), port};
    acceptor_.open(ep.protocol());
    acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept();
    last_ = std::chrono::steady_clock::now();
    tick();
  }

  void stop() {
    boost::system::error_code ec;
    acceptor_.close(ec);
    timer_.cancel();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, ws_detail::tcp::socket socket) {
      if (ec) return;
      std::make_shared<ws_detail::Session>(std::move(socket), gateway_)->start();
      accept();
    });
  }

  void tick() {
    timer_.expires_after(std::chrono::milliseconds(kTickMs));
    timer_.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      const auto now = std::chrono::steady_clock::now();
      const double elapsed = std::chrono::duration<double, std::milli>(now - last_).count();
      last_ = now;
      gateway_.advance(elapsed);
      tick();
    });
  }

  boost::asio::io_context& io_;
  Gateway& gateway_;
  ws_detail::tcp::acceptor acceptor_;
  boost::asio::steady_timer timer_;
  std::chrono::steady_clock::time_point last_;
};

}  // namespace afada
