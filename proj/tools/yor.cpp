// yor: run scenarios headless or with the teleop bridge, summarize logs, self-test.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "yor/harness.hpp"
#include "yor/transport.hpp"

using namespace yor;

namespace {

constexpr int kExitUsage = 2;

struct UiLinks {
  std::unique_ptr<transport::WebSocketBridge> bridge;
  std::unique_ptr<transport::BusServer> server;
};

int cmd_run(const std::string& scenario, std::uint64_t seed, const std::string& config_path,
            const std::string& scene_path, const std::vector<std::string>& overrides, const std::string& metrics_out,
            const std::string& log_path, bool ui) {
  const auto id = harness::parse_scenario(scenario);
  if (!id) {
    std::cerr << "unknown scenario '" << scenario << "' (tally, wholebody, obstacle, freeplay)\n";
    return kExitUsage;
  }
  harness::RunOptions opts;
  opts.scenario = *id;
  opts.seed = seed;
  try {
    if (!config_path.empty()) opts.config = harness::Config::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      opts.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << '\n';
    return kExitUsage;
  }
  opts.scene_path = scene_path;
  opts.log_path = log_path;
  if (ui) {
    opts.realtime = true;
    const int ui_port = opts.config.ui_port;
    opts.on_bus = [ui_port](bus::Bus& b) -> std::shared_ptr<void> {
      auto links = std::make_shared<UiLinks>();
      links->bridge = std::make_unique<transport::WebSocketBridge>(b, "0.0.0.0", ui_port);
      const auto [host, port] = bus::bus_address();
      links->server = std::make_unique<transport::BusServer>(b, host, port);
      std::cerr << "websocket bridge on :" << links->bridge->port() << ", bus on " << host << ':'
                << links->server->port() << '\n';
      return links;
    };
  }

  harness::Metrics m;
  try {
    m = harness::run(opts);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 1;
  }
  const std::string text = harness::to_json(m).dump(2);
  std::cout << text << '\n';
  if (!metrics_out.empty()) {
    std::ofstream out(metrics_out);
    out << text << '\n';
    if (!out) {
      std::cerr << "cannot write " << metrics_out << '\n';
      return 1;
    }
  }
  return m.success ? 0 : 1;
}

int cmd_replay(const std::string& log_path) {
  try {
    const auto topics = harness::summarize_log(log_path);
    std::printf("%-12s %8s %12s %12s %12s\n", "topic", "count", "bytes", "first_s", "last_s");
    for (const auto& t : topics) {
      std::printf("%-12s %8llu %12llu %12.3f %12.3f\n", t.topic.c_str(), static_cast<unsigned long long>(t.count),
                  static_cast<unsigned long long>(t.bytes), t.first_stamp, t.last_stamp);
    }
  } catch (const std::exception& e) {
    std::cerr << "replay: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Short end-to-end checks that need no scene tuning.
int cmd_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", name);
    if (!ok) ++failures;
  };

  {
    bus::Envelope e{"pose", 0, 3, 4, {'{', '}'}};
    check("frame round trip", bus::decode(bus::encode(e)) == e);
  }
  {
    harness::RunOptions o;
    o.scenario = harness::ScenarioId::kWholebody;
    o.config.pose_latency_frames = 0;
    o.config.odom_noise = false;
    const auto m = harness::run(o);
    check("ee hold with exact feedback", m.success && m.max_ee_deviation < 1e-9);
  }
  {
    harness::RunOptions o;
    o.scenario = harness::ScenarioId::kWholebody;
    o.seed = 4;
    const auto a = harness::sim_metrics_bytes(harness::run(o));
    const auto b = harness::sim_metrics_bytes(harness::run(o));
    check("repeatable metrics", a == b);
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"yor mobile manipulator stack"};
  app.require_subcommand(1);

  std::string scenario, config_path, scene_path, metrics_out, log_path;
  std::uint64_t seed = 1;
  bool headless = false, ui = false;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "run a scenario");
  run->add_option("--scenario", scenario, "tally | wholebody | obstacle | freeplay")->required();
  run->add_option("--seed", seed, "noise seed");
  run->add_option("--config", config_path, "key = value parameter file");
  run->add_option("--set", overrides, "override one parameter, key=value");
  run->add_option("--scene", scene_path, "scene file (default per scenario)");
  run->add_option("--metrics", metrics_out, "write metrics JSON here");
  run->add_option("--log", log_path, "record every bus message to this file");
  run->add_flag("--headless", headless, "no bridge, run as fast as possible (default)");
  run->add_flag("--ui", ui, "serve the WebSocket bridge and pace to the wall clock");

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "summarize a recorded bus log");
  replay->add_option("--log", replay_log, "log file")->required();

  auto* selftest = app.add_subcommand("selftest", "quick end-to-end checks");

  std::string dump_from;
  auto* config = app.add_subcommand("config", "print every parameter with its value");
  config->add_option("--config", dump_from, "start from this file instead of the defaults");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    if (headless && ui) {
      std::cerr << "--headless and --ui are exclusive\n";
      return kExitUsage;
    }
    return cmd_run(scenario, seed, config_path, scene_path, overrides, metrics_out, log_path, ui);
  }
  if (*replay) return cmd_replay(replay_log);
  if (*selftest) return cmd_selftest();
  if (*config) {
    try {
      std::cout << (dump_from.empty() ? harness::Config{} : harness::Config::load(dump_from)).dump();
    } catch (const std::exception& e) {
      std::cerr << "config: " << e.what() << '\n';
      return kExitUsage;
    }
    return 0;
  }
  return kExitUsage;
}
