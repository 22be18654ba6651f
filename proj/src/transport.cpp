#include "yor/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <list>
#include <mutex>
#include <random>

#include "yor/messages.hpp"

namespace yor::transport {

using Json = nlohmann::ordered_json;
using Bytes = std::vector<std::uint8_t>;

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.release();
  }
  return *this;
}

int Socket::release() { return std::exchange(fd_, -1); }

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

Bytes Socket::read_some(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r < 0) {
    if (errno == EINTR) return {};
    throw TransportError(std::string("poll: ") + std::strerror(errno));
  }
  if (r == 0) return {};
  Bytes buf(64 * 1024);
  const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
  if (n < 0) {
    if (errno == EINTR || errno == EAGAIN) return {};
    throw TransportError(std::string("recv: ") + std::strerror(errno));
  }
  if (n == 0) throw TransportError("connection closed");
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

namespace {

addrinfo* resolve(const std::string& host, int port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
  if (rc != 0) throw TransportError("resolve " + host + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

Socket listen_tcp(const std::string& host, int port) {
  addrinfo* res = resolve(host, port, true);
  Socket s(::socket(res->ai_family, res->ai_socktype, 0));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw TransportError("socket failed");
  }
  const int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const int rc = ::bind(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) throw TransportError("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(s.fd(), 16) != 0) throw TransportError("listen failed");
  return s;
}

Socket connect_tcp(const std::string& host, int port) {
  addrinfo* res = resolve(host, port, false);
  Socket s(::socket(res->ai_family, res->ai_socktype, 0));
  const int rc = s.valid() ? ::connect(s.fd(), res->ai_addr, res->ai_addrlen) : -1;
  ::freeaddrinfo(res);
  if (rc != 0) throw TransportError("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

int local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) throw TransportError("getsockname");
  return ntohs(addr.sin_port);
}

namespace {

std::optional<Socket> accept_within(const Socket& listener, std::chrono::milliseconds timeout) {
  pollfd p{listener.fd(), POLLIN, 0};
  if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return std::nullopt;
  const int fd = ::accept(listener.fd(), nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

constexpr auto kPoll = std::chrono::milliseconds(50);

// Drop-oldest outbound queue drained by a connection's writer thread, so a
// slow peer never blocks the publishing thread.
class OutQueue {
 public:
  explicit OutQueue(std::size_t depth) : depth_(depth) {}

  void push(Bytes b) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      if (q_.size() >= depth_) q_.pop_front();
      q_.push_back(std::move(b));
    }
    cv_.notify_one();
  }

  std::optional<Bytes> pop(std::stop_token st) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, st, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    Bytes b = std::move(q_.front());
    q_.pop_front();
    return b;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::size_t depth_;
  std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<Bytes> q_;
  bool closed_ = false;
};

void write_loop(Socket& sock, OutQueue& out, std::atomic<bool>& alive, std::stop_token st) {
  while (auto b = out.pop(st)) {
    try {
      sock.write_all(*b);
    } catch (const TransportError&) {
      alive = false;
      return;
    }
  }
}

// Connection whose envelope is being delivered by its own reader thread.
thread_local const void* g_origin = nullptr;

}  // namespace

struct BusServer::Connection {
  Socket sock;
  OutQueue out{256};
  std::atomic<bool> alive{true};
  std::jthread writer;
  std::jthread reader;

  ~Connection() {
    out.close();
    sock.shutdown();
    reader.request_stop();
    writer.request_stop();
  }
};

struct BusServer::Hub {
  std::mutex mu;
  std::list<std::shared_ptr<Connection>> conns;

  void forward(const bus::Envelope& env) {
    const Bytes frame = bus::encode(env);
    std::lock_guard lock(mu);
    for (const auto& c : conns) {
      if (c.get() != g_origin && c->alive) c->out.push(frame);
    }
  }
};

BusServer::BusServer(bus::Bus& bus, const std::string& host, int port)
    : bus_(bus), listener_(listen_tcp(host, port)), hub_(std::make_shared<Hub>()) {
  port_ = local_port(listener_);
  std::weak_ptr<Hub> weak = hub_;
  tap_ = bus_.add_tap([weak](const bus::Envelope& env) {
    if (auto hub = weak.lock()) hub->forward(env);
  });
  acceptor_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
}

BusServer::~BusServer() {
  bus_.remove_tap(tap_);
  acceptor_.request_stop();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(hub_->mu);
    conns.swap(hub_->conns);
  }
}

std::size_t BusServer::clients() const {
  std::lock_guard lock(hub_->mu);
  return static_cast<std::size_t>(
      std::count_if(hub_->conns.begin(), hub_->conns.end(), [](const auto& c) { return c->alive.load(); }));
}

void BusServer::accept_loop(std::stop_token st) {
  while (!st.stop_requested()) {
    std::list<std::shared_ptr<Connection>> dead;
    {
      std::lock_guard lock(hub_->mu);
      for (auto it = hub_->conns.begin(); it != hub_->conns.end();) {
        if (!(*it)->alive) {
          dead.push_back(*it);
          it = hub_->conns.erase(it);
        } else {
          ++it;
        }
      }
    }
    dead.clear();

    auto sock = accept_within(listener_, kPoll);
    if (!sock) continue;
    auto c = std::make_shared<Connection>();
    c->sock = std::move(*sock);
    Connection* raw = c.get();
    c->writer = std::jthread([raw](std::stop_token s) { write_loop(raw->sock, raw->out, raw->alive, s); });
    c->reader = std::jthread([this, raw](std::stop_token s) {
      Bytes buffer;
      try {
        while (!s.stop_requested() && raw->alive) {
          const Bytes chunk = raw->sock.read_some(kPoll);
          buffer.insert(buffer.end(), chunk.begin(), chunk.end());
          std::size_t consumed = 0;
          while (auto env = bus::try_decode(buffer, consumed)) {
            buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(consumed));
            g_origin = raw;
            bus_.deliver(*env);
            g_origin = nullptr;
          }
        }
      } catch (const std::exception&) {
        g_origin = nullptr;
      }
      raw->alive = false;
      raw->out.close();
    });
    std::lock_guard lock(hub_->mu);
    hub_->conns.push_back(std::move(c));
  }
}

BusClient::BusClient(const std::string& host, int port) : sock_(connect_tcp(host, port)) {}

void BusClient::send(const bus::Envelope& env) { sock_.write_all(bus::encode(env)); }

std::optional<bus::Envelope> BusClient::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    std::size_t consumed = 0;
    if (auto env = bus::try_decode(buffer_, consumed)) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed));
      return env;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    const Bytes chunk = sock_.read_some(left);
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  }
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw TransportError("base64 length must be a multiple of 4");
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw TransportError("invalid base64");
  // EVP_DecodeBlock keeps the padding bytes as zeros.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string websocket_accept(const std::string& key) {
  static constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  const std::string s = key + std::string(kGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
  return base64_encode(std::span<const std::uint8_t>(digest, SHA_DIGEST_LENGTH));
}

Json to_json(const bus::Envelope& env, bus::PayloadType payload) {
  Json j;
  j["topic"] = env.topic;
  j["type"] = payload == bus::PayloadType::kBinary ? "binary" : "text";
  j["seq"] = env.sequence;
  j["stamp_us"] = env.timestamp_us;
  if (payload == bus::PayloadType::kBinary) {
    j["data"] = base64_encode(env.payload);
  } else {
    Json data = Json::parse(env.payload.begin(), env.payload.end(), nullptr, false);
    j["data"] = data.is_discarded() ? Json(env.text()) : std::move(data);
  }
  return j;
}

bus::Envelope from_json(const Json& j, bus::PayloadType payload) {
  if (!j.is_object() || !j.contains("topic") || !j["topic"].is_string()) {
    throw msg::MessageError("envelope needs a string 'topic'");
  }
  bus::Envelope env;
  env.topic = j["topic"].get<std::string>();
  env.type = static_cast<std::uint8_t>(payload);
  if (j.contains("seq")) env.sequence = j["seq"].get<std::uint64_t>();
  if (j.contains("stamp_us")) env.timestamp_us = j["stamp_us"].get<std::uint64_t>();
  const Json data = j.contains("data") ? j["data"] : Json::object();
  if (payload == bus::PayloadType::kBinary) {
    if (!data.is_string()) throw msg::MessageError("binary data must be base64 text");
    env.payload = base64_decode(data.get<std::string>());
  } else {
    const std::string text = data.is_string() ? data.get<std::string>() : data.dump();
    env.payload.assign(text.begin(), text.end());
  }
  return env;
}

namespace {

enum Opcode : std::uint8_t { kCont = 0x0, kText = 0x1, kBinary = 0x2, kClose = 0x8, kPing = 0x9, kPong = 0xA };

Bytes ws_frame(std::uint8_t opcode, std::string_view payload, bool mask) {
  Bytes f;
  f.push_back(static_cast<std::uint8_t>(0x80 | opcode));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<std::uint8_t>(mbit | n));
  } else if (n <= 0xFFFF) {
    f.push_back(mbit | 126);
    f.push_back(static_cast<std::uint8_t>(n >> 8));
    f.push_back(static_cast<std::uint8_t>(n));
  } else {
    f.push_back(mbit | 127);
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> (8 * i)));
  }
  std::array<std::uint8_t, 4> key{};
  if (mask) {
    static thread_local std::mt19937 gen{std::random_device{}()};
    for (auto& k : key) k = static_cast<std::uint8_t>(gen());
    f.insert(f.end(), key.begin(), key.end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    f.push_back(static_cast<std::uint8_t>(payload[i]) ^ (mask ? key[i % 4] : 0));
  }
  return f;
}

struct WsFrame {
  bool fin = true;
  std::uint8_t opcode = 0;
  bool masked = false;
  std::string payload;
};

constexpr std::uint64_t kMaxWsPayload = 16u << 20;

// Parses one frame from the front of buffer; nullopt while incomplete.
std::optional<WsFrame> parse_ws(Bytes& buffer) {
  if (buffer.size() < 2) return std::nullopt;
  WsFrame f;
  f.fin = (buffer[0] & 0x80) != 0;
  f.opcode = buffer[0] & 0x0F;
  f.masked = (buffer[1] & 0x80) != 0;
  std::uint64_t len = buffer[1] & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (buffer.size() < 4) return std::nullopt;
    len = (std::uint64_t{buffer[2]} << 8) | buffer[3];
    pos = 4;
  } else if (len == 127) {
    if (buffer.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | buffer[2 + i];
    pos = 10;
  }
  if (len > kMaxWsPayload) throw TransportError("websocket frame too large");
  std::array<std::uint8_t, 4> key{};
  if (f.masked) {
    if (buffer.size() < pos + 4) return std::nullopt;
    std::copy_n(buffer.begin() + static_cast<std::ptrdiff_t>(pos), 4, key.begin());
    pos += 4;
  }
  if (buffer.size() < pos + len) return std::nullopt;
  f.payload.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    f.payload[i] = static_cast<char>(buffer[pos + i] ^ (f.masked ? key[i % 4] : 0));
  }
  buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(pos + len));
  return f;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

// Reads the HTTP upgrade request (header block only) and returns the key.
std::optional<std::string> read_upgrade(Socket& sock, Bytes& rest, std::stop_token st) {
  std::string head;
  for (;;) {
    if (st.stop_requested()) return std::nullopt;
    const Bytes chunk = sock.read_some(kPoll);
    head.append(chunk.begin(), chunk.end());
    const auto end = head.find("\r\n\r\n");
    if (end != std::string::npos) {
      rest.assign(head.begin() + static_cast<std::ptrdiff_t>(end + 4), head.end());
      head.resize(end);
      break;
    }
    if (head.size() > 16 * 1024) throw TransportError("upgrade request too large");
  }
  std::size_t start = 0;
  while (start < head.size()) {
    auto nl = head.find("\r\n", start);
    if (nl == std::string::npos) nl = head.size();
    const std::string line = head.substr(start, nl - start);
    const auto colon = line.find(':');
    if (colon != std::string::npos && lower(trim(line.substr(0, colon))) == "sec-websocket-key") {
      return trim(line.substr(colon + 1));
    }
    start = nl + 2;
  }
  return std::nullopt;
}

}  // namespace

struct WebSocketBridge::Connection {
  Socket sock;
  OutQueue out{64};
  std::atomic<bool> alive{true};
  std::atomic<bool> open{false};
  std::map<std::string, std::uint64_t> sequence;
  std::jthread writer;
  std::jthread reader;

  void send_json(const Json& j) { out.push(ws_frame(kText, j.dump(), false)); }

  ~Connection() {
    out.close();
    sock.shutdown();
    reader.request_stop();
    writer.request_stop();
  }
};

struct WebSocketBridge::Hub {
  std::mutex mu;
  std::list<std::shared_ptr<Connection>> conns;
  std::vector<std::string> mirrored;
  std::map<std::string, bus::PayloadType> payloads;

  void forward(const bus::Envelope& env) {
    if (std::find(mirrored.begin(), mirrored.end(), env.topic) == mirrored.end()) return;
    const auto it = payloads.find(env.topic);
    const auto type = it == payloads.end() ? bus::PayloadType::kText : it->second;
    const Bytes frame = ws_frame(kText, to_json(env, type).dump(), false);
    std::lock_guard lock(mu);
    for (const auto& c : conns) {
      if (c->open && c->alive) c->out.push(frame);
    }
  }
};

std::vector<std::string> WebSocketBridge::default_mirror() {
  return {"pose", "cloud", "costmap", "plan", "lift_state", "ee_state", "metrics"};
}

std::vector<std::string> WebSocketBridge::accepted_commands() {
  return {"cmd_twist", "cmd_lift", "cmd_ee", "goal"};
}

WebSocketBridge::WebSocketBridge(bus::Bus& bus, const std::string& host, int port,
                                 std::vector<std::string> mirrored)
    : bus_(bus), listener_(listen_tcp(host, port)), hub_(std::make_shared<Hub>()) {
  port_ = local_port(listener_);
  for (const auto& t : mirrored) hub_->payloads[t] = bus_.schema(t).payload;
  hub_->mirrored = std::move(mirrored);
  std::weak_ptr<Hub> weak = hub_;
  tap_ = bus_.add_tap([weak](const bus::Envelope& env) {
    if (auto hub = weak.lock()) hub->forward(env);
  });
  acceptor_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
}

WebSocketBridge::~WebSocketBridge() {
  bus_.remove_tap(tap_);
  acceptor_.request_stop();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(hub_->mu);
    conns.swap(hub_->conns);
  }
}

std::size_t WebSocketBridge::clients() const {
  std::lock_guard lock(hub_->mu);
  return static_cast<std::size_t>(std::count_if(hub_->conns.begin(), hub_->conns.end(),
                                                [](const auto& c) { return c->open && c->alive; }));
}

void WebSocketBridge::accept_loop(std::stop_token st) {
  while (!st.stop_requested()) {
    std::list<std::shared_ptr<Connection>> dead;
    {
      std::lock_guard lock(hub_->mu);
      for (auto it = hub_->conns.begin(); it != hub_->conns.end();) {
        if (!(*it)->alive) {
          dead.push_back(*it);
          it = hub_->conns.erase(it);
        } else {
          ++it;
        }
      }
    }
    dead.clear();

    auto sock = accept_within(listener_, kPoll);
    if (!sock) continue;
    auto c = std::make_shared<Connection>();
    c->sock = std::move(*sock);
    Connection* raw = c.get();
    c->writer = std::jthread([raw](std::stop_token s) { write_loop(raw->sock, raw->out, raw->alive, s); });
    c->reader = std::jthread([this, raw](std::stop_token s) {
      try {
        serve_connection(*raw, s);
      } catch (const std::exception&) {
      }
      raw->alive = false;
      raw->open = false;
      raw->out.close();
    });
    std::lock_guard lock(hub_->mu);
    hub_->conns.push_back(std::move(c));
  }
}

void WebSocketBridge::serve_connection(Connection& c, std::stop_token st) {
  Bytes buffer;
  const auto key = read_upgrade(c.sock, buffer, st);
  if (!key) {
    const std::string bad = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    c.sock.write_all(std::span(reinterpret_cast<const std::uint8_t*>(bad.data()), bad.size()));
    return;
  }
  const std::string ok = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                         "Sec-WebSocket-Accept: " + websocket_accept(*key) + "\r\n\r\n";
  // The handshake goes out directly; mirrored frames queue only once open.
  c.sock.write_all(std::span(reinterpret_cast<const std::uint8_t*>(ok.data()), ok.size()));
  c.open = true;

  std::string message;
  while (!st.stop_requested()) {
    while (auto f = parse_ws(buffer)) {
      if (!f->masked) {
        c.out.push(ws_frame(kClose, "\x03\xEA", false));  // 1002 protocol error
        return;
      }
      switch (f->opcode) {
        case kText:
        case kCont:
          message += f->payload;
          if (f->fin) {
            handle_text(c, message);
            message.clear();
          }
          break;
        case kPing:
          c.out.push(ws_frame(kPong, f->payload, false));
          break;
        case kClose:
          c.out.push(ws_frame(kClose, f->payload.substr(0, 2), false));
          return;
        case kBinary:
          c.send_json({{"type", "error"}, {"error", "binary frames are not accepted"}});
          break;
        default:
          break;
      }
    }
    const Bytes chunk = c.sock.read_some(kPoll);
    buffer.insert(buffer.end(), chunk.begin(), chunk.end());
  }
}

void WebSocketBridge::handle_text(Connection& c, const std::string& text) {
  auto error = [&](const std::string& what) { c.send_json({{"type", "error"}, {"error", what}}); };
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("topic") || !j["topic"].is_string()) {
    error("expected {\"topic\": ..., \"data\": ...}");
    return;
  }
  const std::string topic = j["topic"].get<std::string>();
  const auto accepted = accepted_commands();
  if (std::find(accepted.begin(), accepted.end(), topic) == accepted.end()) {
    error("topic not accepted from clients: " + topic);
    return;
  }
  try {
    const auto& schema = bus_.schema(topic);
    bus::Envelope env = from_json(j, schema.payload);
    const std::string body = env.text();
    if (topic == "cmd_twist") msg::parse_twist(body);
    if (topic == "cmd_lift") msg::parse_lift_command(body);
    if (topic == "cmd_ee") msg::parse_ee_command(body);
    if (topic == "goal") msg::parse_goal(body);

    if (schema.kind == bus::TopicKind::kRequest) {
      const Bytes reply = bus_.request(topic, env.payload);
      bus::Envelope r{topic, env.type, env.sequence, env.timestamp_us, reply};
      Json out = to_json(r, bus::PayloadType::kText);
      out["type"] = "reply";
      c.send_json(out);
      return;
    }
    if (!j.contains("seq")) env.sequence = ++c.sequence[topic];
    bus_.deliver(env);
  } catch (const std::exception& e) {
    error(e.what());
  }
}

WebSocketClient::WebSocketClient(const std::string& host, int port, const std::string& path)
    : sock_(connect_tcp(host, port)) {
  std::array<std::uint8_t, 16> nonce{};
  std::random_device rd;
  for (auto& b : nonce) b = static_cast<std::uint8_t>(rd());
  const std::string key = base64_encode(nonce);
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                          "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  sock_.write_all(std::span(reinterpret_cast<const std::uint8_t*>(req.data()), req.size()));

  std::string head;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  std::size_t end = std::string::npos;
  while ((end = head.find("\r\n\r\n")) == std::string::npos) {
    if (std::chrono::steady_clock::now() > deadline) throw TransportError("websocket handshake timed out");
    const Bytes chunk = sock_.read_some(kPoll);
    head.append(chunk.begin(), chunk.end());
  }
  buffer_.assign(head.begin() + static_cast<std::ptrdiff_t>(end + 4), head.end());
  head.resize(end);
  if (head.rfind("HTTP/1.1 101", 0) != 0) throw TransportError("websocket upgrade refused");
  if (lower(head).find(lower("sec-websocket-accept: " + websocket_accept(key))) == std::string::npos) {
    throw TransportError("bad Sec-WebSocket-Accept");
  }
}

void WebSocketClient::send_text(const std::string& text) { sock_.write_all(ws_frame(kText, text, true)); }

std::optional<std::string> WebSocketClient::receive_text(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string message;
  for (;;) {
    while (auto f = parse_ws(buffer_)) {
      if (f->opcode == kClose) throw TransportError("closed by server");
      if (f->opcode == kText || f->opcode == kCont) {
        message += f->payload;
        if (f->fin) return message;
      }
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    const Bytes chunk = sock_.read_some(left);
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  }
}

void WebSocketClient::close() {
  if (!sock_.valid()) return;
  try {
    sock_.write_all(ws_frame(kClose, "\x03\xE8", true));
  } catch (const TransportError&) {
  }
  sock_.shutdown();
}

}  // namespace yor::transport
