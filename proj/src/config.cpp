#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <variant>

#include "yor/harness.hpp"

namespace yor::harness {

namespace {

using Slot = std::variant<double*, int*, bool*>;

struct Binding {
  const char* key;
  Slot slot;
};

std::vector<Binding> bindings(Config& c) {
  return {
      {"sim.dt", &c.sim_dt},
      {"rate.control", &c.control_rate},
      {"rate.pose", &c.pose_rate},
      {"rate.cloud", &c.cloud_rate},
      {"rate.costmap", &c.costmap_rate},
      {"rate.closure", &c.closure_rate},
      {"cmd.timeout", &c.cmd_timeout},
      {"pid.kp_pos", &c.pid.kp_pos},
      {"pid.ki_pos", &c.pid.ki_pos},
      {"pid.kd_pos", &c.pid.kd_pos},
      {"pid.kp_yaw", &c.pid.kp_yaw},
      {"pid.ki_yaw", &c.pid.ki_yaw},
      {"pid.kd_yaw", &c.pid.kd_yaw},
      {"pid.position_tolerance", &c.pid.position_tolerance},
      {"pid.yaw_tolerance", &c.pid.yaw_tolerance},
      {"pid.integral_clamp_pos", &c.pid.integral_clamp_pos},
      {"pid.integral_clamp_yaw", &c.pid.integral_clamp_yaw},
      {"pid.v_max", &c.pid.v_max},
      {"pid.omega_max", &c.pid.omega_max},
      {"pursuit.lookahead_min", &c.pursuit.lookahead_min},
      {"pursuit.lookahead_max", &c.pursuit.lookahead_max},
      {"pursuit.cruise_speed", &c.pursuit.cruise_speed},
      {"pursuit.speed_for_max_lookahead", &c.pursuit.speed_for_max_lookahead},
      {"pursuit.goal_tolerance", &c.pursuit.goal_tolerance},
      {"dock.translation_tolerance", &c.dock.translation_tolerance},
      {"dock.yaw_tolerance", &c.dock.yaw_tolerance},
      {"dock.settle_time", &c.dock.settle_time},
      {"dock.timeout", &c.dock.timeout},
      {"ema.alpha", &c.ema_alpha},
      {"limits.v_max", &c.limits.v_max},
      {"limits.omega_max", &c.limits.omega_max},
      {"limits.steer_rate_max", &c.limits.steer_rate_max},
      {"limits.drive_accel_max", &c.limits.drive_accel_max},
      {"mapping.voxel_size", &c.mapping.voxel_size},
      {"mapping.outlier_radius", &c.mapping.outlier_radius},
      {"mapping.outlier_neighbors", &c.mapping.outlier_neighbors},
      {"mapping.occupancy_floor_band", &c.mapping.occupancy_floor_band},
      {"mapping.robot_height", &c.mapping.robot_height},
      {"mapping.robot_radius", &c.mapping.robot_radius},
      {"mapping.soft_band", &c.mapping.soft_band},
      {"mapping.fuse_lambda", &c.mapping.fuse_lambda},
      {"floor.alpha", &c.floor_alpha},
      {"floor.band", &c.floor_band},
      {"planner.heuristic_weight", &c.planner.heuristic_weight},
      {"planner.cost_scale", &c.planner.cost_scale},
      {"planner.goal_radius", &c.planner.goal_radius},
      {"planner.avoid_unknown", &c.planner.avoid_unknown},
      {"odom.k_trans", &c.odom.k_trans},
      {"odom.k_yaw", &c.odom.k_yaw},
      {"odom.noise", &c.odom_noise},
      {"depth.noise", &c.depth_noise},
      {"closure.enabled", &c.loop_closure},
      {"closure.keyframe_spacing", &c.keyframe_spacing},
      {"closure.keyframe_radius", &c.closure.keyframe_radius},
      {"closure.residual", &c.closure.residual},
      {"closure.min_travel_gap", &c.closure.min_travel_gap},
      {"tally.loops", &c.loops},
      {"tally.survey_rate", &c.survey_rate},
      {"tally.live_mapping", &c.tally_live_mapping},
      {"tally.leg_timeout", &c.leg_timeout},
      {"wholebody.distance", &c.wholebody_distance},
      {"wholebody.speed", &c.wholebody_speed},
      {"wholebody.hold", &c.wholebody_hold},
      {"wholebody.dt", &c.wholebody_dt},
      {"wholebody.latency_frames", &c.pose_latency_frames},
      {"wholebody.tau_trans", &c.ee_hold.tau_trans},
      {"wholebody.tau_rot", &c.ee_hold.tau_rot},
      {"wholebody.smoothing", &c.ee_hold.smoothing},
      {"obstacle.timeout", &c.obstacle_timeout},
      {"freeplay.duration", &c.freeplay_duration},
      {"ui.port", &c.ui_port},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  }
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  for (auto& b : bindings(*this)) {
    if (key != b.key) continue;
    if (auto* d = std::get_if<double*>(&b.slot)) {
      **d = parse_number<double>(key, value);
    } else if (auto* i = std::get_if<int*>(&b.slot)) {
      **i = parse_number<int>(key, value);
    } else {
      bool* flag = std::get<bool*>(b.slot);
      if (value == "1" || value == "true" || value == "on") {
        *flag = true;
      } else if (value == "0" || value == "false" || value == "off") {
        *flag = false;
      } else {
        throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
      }
    }
    if (loops < 1) throw std::invalid_argument("tally.loops must be at least 1");
    if (!(sim_dt > 0.0 && sim_dt <= 0.05)) throw std::invalid_argument("sim.dt must be in (0, 0.05]");
    if (pose_latency_frames < 0) throw std::invalid_argument("wholebody.latency_frames must be >= 0");
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

void Config::apply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(n) + ": missing '='");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  c.apply(ss.str());
  return c;
}

std::vector<std::string> Config::keys() {
  Config c;
  std::vector<std::string> out;
  for (const auto& b : bindings(c)) out.emplace_back(b.key);
  return out;
}

std::string Config::dump() const {
  Config copy = *this;
  std::string out;
  for (const auto& b : bindings(copy)) {
    out += b.key;
    out += " = ";
    std::visit(
        [&](auto* p) {
          if constexpr (std::is_same_v<decltype(p), bool*>) {
            out += *p ? "true" : "false";
          } else {
            char buf[32];
            const auto r = std::to_chars(buf, buf + sizeof buf, *p);  // shortest round trip
            out.append(buf, r.ptr);
          }
        },
        b.slot);
    out += '\n';
  }
  return out;
}

}  // namespace yor::harness
