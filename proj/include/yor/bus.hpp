#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace yor::bus {

enum class PayloadType : std::uint8_t { kText = 0, kBinary = 1 };

struct Envelope {
  std::string topic;
  std::uint8_t type = 0;
  std::uint64_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Envelope&, const Envelope&) = default;
  std::string text() const { return {payload.begin(), payload.end()}; }
};

inline constexpr std::size_t kMaxPayload = 16u << 20;
// length(4) type(1) sequence(8) timestamp(8) topic length(4)
inline constexpr std::size_t kFixedHeader = 25;

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frame: u32 BE total length (whole frame) | u8 type | u64 BE sequence |
/// u64 BE timestamp_us | u32 BE topic length | topic | payload.
std::vector<std::uint8_t> encode(const Envelope& env);
/// Decodes exactly one frame; throws FrameError("incomplete frame") if truncated.
Envelope decode(std::span<const std::uint8_t> frame);
/// Decodes a frame from the front of a stream buffer if one is complete.
std::optional<Envelope> try_decode(std::span<const std::uint8_t> buffer, std::size_t& consumed);
/// Splits a byte stream of concatenated frames (a message log).
std::vector<Envelope> decode_all(std::span<const std::uint8_t> stream);

enum class TopicKind { kStream, kRequest };

struct TopicSchema {
  std::string name;
  TopicKind kind = TopicKind::kStream;
  PayloadType payload = PayloadType::kText;
  double rate_hz = 0.0;  // nominal; 0 = on change
};

const std::vector<TopicSchema>& default_topics();

class UnknownTopic : public std::invalid_argument {
 public:
  explicit UnknownTopic(const std::string& t) : std::invalid_argument("unknown topic: " + t) {}
};

class Timeout : public std::runtime_error {
 public:
  Timeout() : std::runtime_error("request timed out") {}
};

/// Bounded drop-oldest queue owned by one subscriber.
class Subscription {
 public:
  explicit Subscription(std::size_t depth) : depth_(depth) {}

  void push(const Envelope& env);
  std::optional<Envelope> try_pop();
  std::optional<Envelope> pop(std::chrono::milliseconds timeout);
  std::vector<Envelope> drain();
  std::size_t dropped() const;
  void close();

 private:
  std::size_t depth_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> queue_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

class Bus;

class Publisher {
 public:
  Publisher(Bus* bus, TopicSchema schema) : bus_(bus), schema_(std::move(schema)) {}

  /// Stamps the next sequence number and delivers to current subscribers.
  Envelope publish(std::vector<std::uint8_t> payload, std::uint64_t timestamp_us);
  Envelope publish(const std::string& text, std::uint64_t timestamp_us);
  const std::string& topic() const { return schema_.name; }

 private:
  Bus* bus_;
  TopicSchema schema_;
  std::uint64_t sequence_ = 0;
};

/// Handler-driven subscription running on its own consumer thread.
class Listener {
 public:
  Listener(std::shared_ptr<Subscription> sub, std::function<void(const Envelope&)> handler);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

 private:
  std::shared_ptr<Subscription> sub_;
  std::jthread worker_;
};

using Responder = std::function<std::vector<std::uint8_t>(const Envelope&)>;

/// In-process publish/subscribe and request/response.
class Bus {
 public:
  Bus();
  ~Bus();
  Bus(const Bus&) = delete;
  Bus& operator=(const Bus&) = delete;

  void register_topic(TopicSchema schema);
  const TopicSchema& schema(const std::string& topic) const;

  Publisher advertise(const std::string& topic);
  /// Late subscribers see only messages published after they subscribe.
  std::shared_ptr<Subscription> subscribe(const std::string& topic, std::size_t depth = 8);
  std::unique_ptr<Listener> listen(const std::string& topic, std::function<void(const Envelope&)> handler,
                                   std::size_t depth = 8);
  /// Observes every published envelope (logging, bridges). Called on the publisher's thread.
  int add_tap(std::function<void(const Envelope&)> tap);
  void remove_tap(int id);

  /// Registers the single responder for a request topic; it runs on its own thread.
  void serve(const std::string& topic, Responder responder);
  std::vector<std::uint8_t> request(const std::string& topic, std::vector<std::uint8_t> payload,
                                    std::chrono::milliseconds timeout = std::chrono::seconds(1));

  /// Delivers an envelope that already carries its sequence (remote publishers).
  void deliver(const Envelope& env);

 private:
  struct Server;

  mutable std::mutex mu_;
  std::map<std::string, TopicSchema> topics_;
  std::map<std::string, std::vector<std::weak_ptr<Subscription>>> subs_;
  std::map<int, std::function<void(const Envelope&)>> taps_;
  int next_tap_ = 0;
  std::map<std::string, std::unique_ptr<Server>> servers_;
  std::uint64_t request_seq_ = 0;
};

/// Reads YOR_BUS_ADDR ("host:port"), falling back to the given default.
std::pair<std::string, int> bus_address(const std::string& fallback = "127.0.0.1:7447");

}  // namespace yor::bus
