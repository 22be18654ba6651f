#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "yor/base_control.hpp"
#include "yor/frames.hpp"
#include "yor/manip.hpp"

// Structured-text payloads of the control-plane topics. The same field names
// are used on the in-process bus, the socket transport and the WebSocket bridge.
namespace yor::msg {

using Json = nlohmann::ordered_json;

class MessageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Json parse(std::string_view text);

// cmd_twist: {"vx", "vy", "omega"} in the body frame
std::string twist(const Twist2& v);
Twist2 parse_twist(std::string_view text);

// pose, true_pose: {"pose": [qx, qy, qz, qw, x, y, z], "quality": "good" | "degraded"}
std::string pose(const Pose3& p, bool degraded = false);
Pose3 parse_pose(std::string_view text);

// lift_state: {"height", "velocity"}
std::string lift_state(const manip::LiftState& s);
manip::LiftState parse_lift_state(std::string_view text);

// cmd_lift: {"velocity"} or {"height"}
std::string lift_command(const manip::LiftCommand& c);
manip::LiftCommand parse_lift_command(std::string_view text);

// cmd_ee: {"pose": [7]} base frame. ee_state: {"base": [7], "world": [7]}
std::string ee_command(const Pose3& base_ee);
Pose3 parse_ee_command(std::string_view text);
std::string ee_state(const Pose3& base_ee, const Pose3& world_ee);

// goal request: {"x", "z", "yaw"}; reply: {"accepted", "error"?}
std::string goal(const Pose2& g);
Pose2 parse_goal(std::string_view text);
std::string goal_reply(bool accepted, const std::string& error = {});

// plan: {"waypoints": [[x, z], ...], "cost", "revision"}
std::string plan(const control::Waypoints& wp, double cost, int revision);
control::Waypoints parse_plan(std::string_view text);

}  // namespace yor::msg
