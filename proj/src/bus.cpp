#include "yor/bus.hpp"

#include <cstdlib>
#include <future>

#include "yor/wire.hpp"

namespace yor::bus {

std::vector<std::uint8_t> encode(const Envelope& env) {
  if (env.payload.size() > kMaxPayload) throw FrameError("payload exceeds 16 MiB");
  const std::size_t total = kFixedHeader + env.topic.size() + env.payload.size();
  wire::Writer w;
  w.buffer().reserve(total);
  w.be(static_cast<std::uint32_t>(total));
  w.be(env.type);
  w.be(env.sequence);
  w.be(env.timestamp_us);
  w.be(static_cast<std::uint32_t>(env.topic.size()));
  w.bytes(env.topic);
  w.bytes(env.payload);
  return w.take();
}

namespace {

Envelope decode_body(wire::Reader& r, std::size_t total) {
  Envelope env;
  env.type = r.be<std::uint8_t>();
  env.sequence = r.be<std::uint64_t>();
  env.timestamp_us = r.be<std::uint64_t>();
  const auto topic_len = r.be<std::uint32_t>();
  if (kFixedHeader + static_cast<std::size_t>(topic_len) > total) throw FrameError("bad topic length");
  const auto topic = r.bytes(topic_len);
  env.topic.assign(topic.begin(), topic.end());
  const auto payload = r.bytes(total - kFixedHeader - topic_len);
  env.payload.assign(payload.begin(), payload.end());
  return env;
}

std::uint32_t peek_length(std::span<const std::uint8_t> b) {
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

}  // namespace

Envelope decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFixedHeader) throw FrameError("incomplete frame");
  const std::uint32_t total = peek_length(frame);
  if (total < kFixedHeader || total > kFixedHeader + kMaxPayload + 0xFFFF) throw FrameError("bad frame length");
  if (frame.size() < total) throw FrameError("incomplete frame");
  if (frame.size() > total) throw FrameError("trailing bytes after frame");
  wire::Reader r(frame.subspan(4, total - 4));
  try {
    return decode_body(r, total);
  } catch (const wire::DecodeError&) {
    throw FrameError("incomplete frame");
  }
}

std::optional<Envelope> try_decode(std::span<const std::uint8_t> buffer, std::size_t& consumed) {
  consumed = 0;
  if (buffer.size() < 4) return std::nullopt;
  const std::uint32_t total = peek_length(buffer);
  if (total < kFixedHeader) throw FrameError("bad frame length");
  if (buffer.size() < total) return std::nullopt;
  Envelope env = decode(buffer.first(total));
  consumed = total;
  return env;
}

std::vector<Envelope> decode_all(std::span<const std::uint8_t> stream) {
  std::vector<Envelope> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    std::size_t used = 0;
    auto env = try_decode(stream.subspan(pos), used);
    if (!env) throw FrameError("incomplete frame");
    out.push_back(std::move(*env));
    pos += used;
  }
  return out;
}

const std::vector<TopicSchema>& default_topics() {
  using K = TopicKind;
  using P = PayloadType;
  static const std::vector<TopicSchema> topics = {
      {"pose", K::kStream, P::kText, 120.0},      {"true_pose", K::kStream, P::kText, 120.0},
      {"cloud", K::kStream, P::kBinary, 5.0},     {"costmap", K::kStream, P::kBinary, 10.0},
      {"cmd_twist", K::kStream, P::kText, 50.0},  {"cmd_lift", K::kStream, P::kText, 0.0},
      {"cmd_ee", K::kStream, P::kText, 0.0},      {"plan", K::kStream, P::kText, 0.0},
      {"lift_state", K::kStream, P::kText, 50.0}, {"ee_state", K::kStream, P::kText, 120.0},
      {"metrics", K::kStream, P::kText, 0.0},     {"goal", K::kRequest, P::kText, 0.0},
      {"scenario", K::kRequest, P::kText, 0.0},
  };
  return topics;
}

void Subscription::push(const Envelope& env) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= depth_) {
      queue_.pop_front();
      ++dropped_;
    }
    queue_.push_back(env);
  }
  cv_.notify_one();
}

std::optional<Envelope> Subscription::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  Envelope e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::optional<Envelope> Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; })) return std::nullopt;
  if (queue_.empty()) return std::nullopt;
  Envelope e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::vector<Envelope> Subscription::drain() {
  std::lock_guard lock(mu_);
  std::vector<Envelope> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

std::size_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

Envelope Publisher::publish(std::vector<std::uint8_t> payload, std::uint64_t timestamp_us) {
  Envelope env{schema_.name, static_cast<std::uint8_t>(schema_.payload), ++sequence_, timestamp_us,
               std::move(payload)};
  if (env.payload.size() > kMaxPayload) throw FrameError("payload exceeds 16 MiB");
  bus_->deliver(env);
  return env;
}

Envelope Publisher::publish(const std::string& text, std::uint64_t timestamp_us) {
  return publish(std::vector<std::uint8_t>(text.begin(), text.end()), timestamp_us);
}

Listener::Listener(std::shared_ptr<Subscription> sub, std::function<void(const Envelope&)> handler)
    : sub_(std::move(sub)), worker_([this, handler = std::move(handler)](std::stop_token st) {
        while (!st.stop_requested()) {
          if (auto env = sub_->pop(std::chrono::milliseconds(20))) handler(*env);
        }
      }) {}

Listener::~Listener() {
  worker_.request_stop();
  sub_->close();
}

struct Bus::Server {
  struct Pending {
    Envelope request;
    std::promise<std::vector<std::uint8_t>> reply;
  };

  explicit Server(Responder r)
      : responder(std::move(r)), worker([this](std::stop_token st) { run(st); }) {}
  ~Server() {
    {
      std::lock_guard lock(mu);
      worker.request_stop();
    }
    cv.notify_all();
  }

  void submit(Pending p) {
    {
      std::lock_guard lock(mu);
      queue.push_back(std::move(p));
    }
    cv.notify_one();
  }

  void run(std::stop_token st) {
    while (true) {
      Pending p;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return st.stop_requested() || !queue.empty(); });
        if (st.stop_requested()) return;
        p = std::move(queue.front());
        queue.pop_front();
      }
      try {
        p.reply.set_value(responder(p.request));
      } catch (...) {
        p.reply.set_exception(std::current_exception());
      }
    }
  }

  Responder responder;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Pending> queue;
  std::jthread worker;
};

Bus::Bus() {
  for (const auto& t : default_topics()) topics_[t.name] = t;
}

Bus::~Bus() {
  std::map<std::string, std::unique_ptr<Server>> servers;
  {
    std::lock_guard lock(mu_);
    servers.swap(servers_);
  }
}

void Bus::register_topic(TopicSchema schema) {
  std::lock_guard lock(mu_);
  topics_[schema.name] = std::move(schema);
}

const TopicSchema& Bus::schema(const std::string& topic) const {
  std::lock_guard lock(mu_);
  const auto it = topics_.find(topic);
  if (it == topics_.end()) throw UnknownTopic(topic);
  return it->second;
}

Publisher Bus::advertise(const std::string& topic) { return Publisher(this, schema(topic)); }

std::shared_ptr<Subscription> Bus::subscribe(const std::string& topic, std::size_t depth) {
  (void)schema(topic);
  auto sub = std::make_shared<Subscription>(depth);
  std::lock_guard lock(mu_);
  subs_[topic].push_back(sub);
  return sub;
}

std::unique_ptr<Listener> Bus::listen(const std::string& topic,
                                      std::function<void(const Envelope&)> handler, std::size_t depth) {
  return std::make_unique<Listener>(subscribe(topic, depth), std::move(handler));
}

int Bus::add_tap(std::function<void(const Envelope&)> tap) {
  std::lock_guard lock(mu_);
  taps_[next_tap_] = std::move(tap);
  return next_tap_++;
}

void Bus::remove_tap(int id) {
  std::lock_guard lock(mu_);
  taps_.erase(id);
}

void Bus::deliver(const Envelope& env) {
  std::vector<std::shared_ptr<Subscription>> targets;
  std::vector<std::function<void(const Envelope&)>> taps;
  {
    std::lock_guard lock(mu_);
    if (!topics_.contains(env.topic)) throw UnknownTopic(env.topic);
    auto& list = subs_[env.topic];
    std::erase_if(list, [](const auto& w) { return w.expired(); });
    for (const auto& w : list) {
      if (auto s = w.lock()) targets.push_back(std::move(s));
    }
    for (const auto& [id, t] : taps_) taps.push_back(t);
  }
  for (const auto& s : targets) s->push(env);
  for (const auto& t : taps) t(env);
}

void Bus::serve(const std::string& topic, Responder responder) {
  if (schema(topic).kind != TopicKind::kRequest) {
    throw std::invalid_argument("topic is not request/response: " + topic);
  }
  auto server = std::make_unique<Server>(std::move(responder));
  std::unique_ptr<Server> old;
  {
    std::lock_guard lock(mu_);
    old = std::exchange(servers_[topic], std::move(server));
  }
}

std::vector<std::uint8_t> Bus::request(const std::string& topic, std::vector<std::uint8_t> payload,
                                       std::chrono::milliseconds timeout) {
  const auto& sc = schema(topic);
  Server::Pending p;
  p.request = {topic, static_cast<std::uint8_t>(sc.payload), 0, 0, std::move(payload)};
  auto fut = p.reply.get_future();
  {
    std::lock_guard lock(mu_);
    p.request.sequence = ++request_seq_;
    const auto it = servers_.find(topic);
    if (it == servers_.end()) {
      // Nobody serves this topic: behaves like a lost request.
      p.reply.set_exception(std::make_exception_ptr(Timeout()));
    } else {
      it->second->submit(std::move(p));
    }
  }
  if (fut.wait_for(timeout) != std::future_status::ready) throw Timeout();
  return fut.get();
}

std::pair<std::string, int> bus_address(const std::string& fallback) {
  const char* env = std::getenv("YOR_BUS_ADDR");
  const std::string addr = (env && *env) ? env : fallback;
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("bus address must be host:port");
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

}  // namespace yor::bus
