#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "yor/bus.hpp"

namespace yor::transport {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void shutdown();

  void write_all(std::span<const std::uint8_t> bytes);
  /// Waits up to timeout for data; returns empty on timeout, throws on EOF.
  std::vector<std::uint8_t> read_some(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

Socket listen_tcp(const std::string& host, int port);
Socket connect_tcp(const std::string& host, int port);
int local_port(const Socket& s);

/// Carries bus frames over TCP. Every envelope published on the bus is
/// forwarded to each connected client; frames sent by a client are delivered
/// into the bus (and forwarded to the other clients, not echoed back).
class BusServer {
 public:
  BusServer(bus::Bus& bus, const std::string& host, int port);
  ~BusServer();
  BusServer(const BusServer&) = delete;
  BusServer& operator=(const BusServer&) = delete;

  int port() const { return port_; }
  std::size_t clients() const;

 private:
  struct Connection;
  struct Hub;
  void accept_loop(std::stop_token st);

  bus::Bus& bus_;
  Socket listener_;
  int port_ = 0;
  int tap_ = -1;
  std::shared_ptr<Hub> hub_;
  std::jthread acceptor_;
};

class BusClient {
 public:
  BusClient(const std::string& host, int port);
  void send(const bus::Envelope& env);
  std::optional<bus::Envelope> receive(std::chrono::milliseconds timeout);

 private:
  Socket sock_;
  std::vector<std::uint8_t> buffer_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);
/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept(const std::string& key);

/// JSON mirror of an envelope: {topic, type, seq, stamp_us, data}. Text
/// payloads holding JSON are embedded as objects, binary payloads as base64.
nlohmann::ordered_json to_json(const bus::Envelope& env, bus::PayloadType payload);
bus::Envelope from_json(const nlohmann::ordered_json& j, bus::PayloadType payload);

/// WebSocket endpoint for browser clients. Mirrors the selected topics as JSON
/// text frames and accepts commands (cmd_twist, cmd_lift, cmd_ee) and goal
/// requests, whose reply is sent back with type "reply".
class WebSocketBridge {
 public:
  WebSocketBridge(bus::Bus& bus, const std::string& host, int port,
                  std::vector<std::string> mirrored = default_mirror());
  ~WebSocketBridge();
  WebSocketBridge(const WebSocketBridge&) = delete;
  WebSocketBridge& operator=(const WebSocketBridge&) = delete;

  int port() const { return port_; }
  std::size_t clients() const;
  static std::vector<std::string> default_mirror();
  static std::vector<std::string> accepted_commands();

 private:
  struct Connection;
  struct Hub;
  void accept_loop(std::stop_token st);
  void serve_connection(Connection& c, std::stop_token st);
  void handle_text(Connection& c, const std::string& text);

  bus::Bus& bus_;
  Socket listener_;
  int port_ = 0;
  int tap_ = -1;
  std::shared_ptr<Hub> hub_;
  std::jthread acceptor_;
};

/// Minimal WebSocket client (text frames only), used by tests and tools.
class WebSocketClient {
 public:
  WebSocketClient(const std::string& host, int port, const std::string& path = "/");
  void send_text(const std::string& text);
  std::optional<std::string> receive_text(std::chrono::milliseconds timeout);
  void close();

 private:
  Socket sock_;
  std::vector<std::uint8_t> buffer_;
};

}  // namespace yor::transport
