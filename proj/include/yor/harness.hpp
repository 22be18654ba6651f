#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "yor/base_control.hpp"
#include "yor/bus.hpp"
#include "yor/manip.hpp"
#include "yor/mapping.hpp"
#include "yor/planner.hpp"
#include "yor/sim.hpp"

namespace yor::harness {

/// Every tunable of the stack, with the reference defaults;
/// a key=value file overrides any of them by dotted name (see keys()).
struct Config {
  // clock and rates (Hz)
  double sim_dt = 0.005;
  double control_rate = 50.0;
  double pose_rate = 120.0;
  double cloud_rate = 5.0;
  double costmap_rate = 10.0;
  double closure_rate = 1.0;
  double cmd_timeout = 0.5;  // s without cmd_twist before the base stops

  control::PidGains pid;
  control::PursuitParams pursuit;
  control::DockParams dock;
  double ema_alpha = 0.2;
  swerve::VelocityLimits limits;

  mapping::MappingParams mapping;
  double floor_alpha = 0.2;
  double floor_band = 0.1;
  planner::PlannerParams planner;

  sim::OdomNoise odom;
  bool odom_noise = true;
  bool depth_noise = true;
  bool loop_closure = true;
  double keyframe_spacing = 1.0;
  sim::LoopClosureParams closure;

  // tally
  int loops = 10;
  double survey_rate = 0.6;  // rad/s during the mapping spin
  bool tally_live_mapping = false;
  double leg_timeout = 120.0;

  // whole-body
  double wholebody_distance = 0.4;
  double wholebody_speed = 0.25;
  double wholebody_hold = 1.0;  // s observed after the move
  double wholebody_dt = 1.0 / 120.0;  // one step per pose message
  int pose_latency_frames = 1;
  manip::EeHold::Params ee_hold;

  // obstacle / freeplay
  double obstacle_timeout = 120.0;
  double freeplay_duration = 60.0;

  // transport
  int ui_port = 8765;

  /// Sets one parameter; throws std::invalid_argument for an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  /// Applies "key = value" lines ('#' comments allowed).
  void apply(const std::string& text);
  static Config load(const std::string& path);
  static std::vector<std::string> keys();
  /// Current values as key=value text, in keys() order.
  std::string dump() const;
};

enum class ScenarioId { kTally, kWholebody, kObstacle, kFreeplay };

std::optional<ScenarioId> parse_scenario(std::string_view name);
std::string_view scenario_name(ScenarioId id);
/// Scene file used when none is given.
std::string default_scene_path(ScenarioId id);

struct LoopRecord {
  int loop = 0;
  double dx = 0.0;         // mark drift from the initial mark, m
  double dz = 0.0;
  double yaw_error = 0.0;  // true yaw minus HOME yaw at dock completion, rad
  bool docked = false;
  std::uint64_t collisions = 0;
  double finished_at = 0.0;  // sim s
};

struct ReplanRecord {
  double cloud_stamp = 0.0;   // cloud that revealed the blocked path
  double detected_at = 0.0;   // costmap tick that found it
  double published_at = 0.0;  // new plan on the bus
  double latency = 0.0;       // published_at - cloud_stamp
  double blocked_at = -1.0;   // true walker first overlapped the plan; < 0 if unseen
  double block_to_plan = 0.0; // published_at - blocked_at
};

struct Metrics {
  std::string scenario;
  std::uint64_t seed = 0;
  bool success = false;
  std::string failure;
  double sim_time = 0.0;
  std::uint64_t collisions = 0;  // contact events

  // tally
  bool loop_closure = false;
  std::vector<LoopRecord> loops;
  double scatter_radius = 0.0;
  std::uint64_t closures = 0;

  // whole-body
  int latency_frames = 0;
  double max_ee_deviation = 0.0;

  // obstacle
  int plans = 0;
  int replans = 0;
  std::vector<ReplanRecord> replan_events;
  double max_replan_latency = 0.0;
  double max_block_to_plan = 0.0;  // ground truth onset to new plan, s
  int no_path_events = 0;
  int lethal_plan_violations = 0;
  bool goal_reached = false;
  bool halted = false;

  // wall clock; excluded from determinism comparisons
  double wall_time = 0.0;
  double max_plan_ms = 0.0;
  double mean_plan_ms = 0.0;
};

nlohmann::ordered_json to_json(const Metrics& m, bool include_wall = true);
/// Serialized metrics without the wall-clock block.
std::string sim_metrics_bytes(const Metrics& m);

struct RunOptions {
  ScenarioId scenario = ScenarioId::kTally;
  std::uint64_t seed = 1;
  Config config;
  std::optional<sim::Scene> scene;  // overrides the scene file
  std::string scene_path;           // empty: default_scene_path
  std::string log_path;             // bus log (concatenated frames), empty: none
  bool realtime = false;            // pace sim time to the wall clock
  /// Called once the bus exists, before the first step. Whatever it returns
  /// (bridges, servers) is released before the bus is torn down.
  std::function<std::shared_ptr<void>(bus::Bus&)> on_bus;
};

Metrics run(const RunOptions& opts);

/// Per-topic counts and stamps of a bus log.
struct TopicSummary {
  std::string topic;
  std::uint64_t count = 0;
  std::uint64_t bytes = 0;
  double first_stamp = 0.0;
  double last_stamp = 0.0;
};
std::vector<TopicSummary> summarize_log(const std::string& path);

}  // namespace yor::harness
