#include "yor/messages.hpp"

namespace yor::msg {

namespace {

double number(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw MessageError(std::string("missing numeric field '") + key + "'");
  }
  return j[key].get<double>();
}

Json pose_array(const Pose3& p) {
  const auto w = p.to_wire();
  return Json(std::vector<double>(w.begin(), w.end()));
}

Pose3 pose_from(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 7) {
    throw MessageError(std::string("field '") + key + "' must be a 7-element array");
  }
  std::array<double, 7> a{};
  for (std::size_t i = 0; i < 7; ++i) {
    if (!j[key][i].is_number()) throw MessageError("pose entries must be numbers");
    a[i] = j[key][i].get<double>();
  }
  return Pose3::from_wire(a);
}

}  // namespace

Json parse(std::string_view text) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw MessageError("payload is not a JSON object");
  return j;
}

std::string twist(const Twist2& v) { return Json{{"vx", v.vx}, {"vy", v.vy}, {"omega", v.omega}}.dump(); }

Twist2 parse_twist(std::string_view text) {
  const Json j = parse(text);
  const Twist2 v{number(j, "vx"), number(j, "vy"), number(j, "omega")};
  if (!v.finite()) throw MessageError("twist must be finite");
  return v;
}

std::string pose(const Pose3& p, bool degraded) {
  return Json{{"pose", pose_array(p)}, {"quality", degraded ? "degraded" : "good"}}.dump();
}

Pose3 parse_pose(std::string_view text) { return pose_from(parse(text), "pose"); }

std::string lift_state(const manip::LiftState& s) {
  return Json{{"height", s.height}, {"velocity", s.velocity}}.dump();
}

manip::LiftState parse_lift_state(std::string_view text) {
  const Json j = parse(text);
  return {number(j, "height"), number(j, "velocity")};
}

std::string lift_command(const manip::LiftCommand& c) {
  if (const auto* v = std::get_if<manip::LiftVelocity>(&c)) return Json{{"velocity", v->value}}.dump();
  return Json{{"height", std::get<manip::LiftTarget>(c).height}}.dump();
}

manip::LiftCommand parse_lift_command(std::string_view text) {
  const Json j = parse(text);
  if (j.contains("velocity")) return manip::LiftVelocity{number(j, "velocity")};
  if (j.contains("height")) return manip::LiftTarget{number(j, "height")};
  throw MessageError("cmd_lift needs 'velocity' or 'height'");
}

std::string ee_command(const Pose3& base_ee) { return Json{{"pose", pose_array(base_ee)}}.dump(); }

Pose3 parse_ee_command(std::string_view text) { return pose_from(parse(text), "pose"); }

std::string ee_state(const Pose3& base_ee, const Pose3& world_ee) {
  return Json{{"base", pose_array(base_ee)}, {"world", pose_array(world_ee)}}.dump();
}

std::string goal(const Pose2& g) { return Json{{"x", g.x}, {"z", g.z}, {"yaw", g.yaw}}.dump(); }

Pose2 parse_goal(std::string_view text) {
  const Json j = parse(text);
  const double yaw = j.contains("yaw") ? number(j, "yaw") : 0.0;
  return {number(j, "x"), number(j, "z"), yaw};
}

std::string goal_reply(bool accepted, const std::string& error) {
  Json j{{"accepted", accepted}};
  if (!error.empty()) j["error"] = error;
  return j.dump();
}

std::string plan(const control::Waypoints& wp, double cost, int revision) {
  Json pts = Json::array();
  for (const auto& p : wp.points) pts.push_back({p.x, p.z});
  return Json{{"waypoints", pts}, {"cost", cost}, {"revision", revision}}.dump();
}

control::Waypoints parse_plan(std::string_view text) {
  const Json j = parse(text);
  if (!j.contains("waypoints") || !j["waypoints"].is_array()) throw MessageError("plan needs 'waypoints'");
  control::Waypoints wp;
  for (const auto& p : j["waypoints"]) {
    if (!p.is_array() || p.size() != 2) throw MessageError("waypoint must be [x, z]");
    wp.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return wp;
}

}  // namespace yor::msg
