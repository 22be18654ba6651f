#include "yor/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace yor::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kOdomStream = 1;
constexpr std::uint64_t kRenderStreamBase = 1ULL << 32;

std::vector<double> numbers(std::istringstream& in, int line) {
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::runtime_error("scene line " + std::to_string(line) + ": bad number '" + tok + "'");
    }
  }
  return out;
}

void expect(const std::vector<double>& v, std::size_t n, int line, const std::string& key) {
  if (v.size() != n) {
    throw std::runtime_error("scene line " + std::to_string(line) + ": '" + key + "' expects " +
                             std::to_string(n) + " values");
  }
}

}  // namespace

bool Scene::occluded(double t) const {
  return std::any_of(occlusions.begin(), occlusions.end(),
                     [t](const OcclusionEvent& e) { return t >= e.start && t < e.end; });
}

const Pose2& Scene::point(const std::string& name) const {
  const auto it = points.find(name);
  if (it == points.end()) throw std::out_of_range("scene has no point '" + name + "'");
  return it->second;
}

Scene parse_scene(const std::string& text) {
  Scene scene;
  std::istringstream lines(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(lines, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto eq = raw.find('=');
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": missing '='");
    }
    std::istringstream lhs(raw.substr(0, eq));
    std::istringstream rhs(raw.substr(eq + 1));
    std::string key;
    std::string name;
    lhs >> key >> name;

    if (key == "point") {
      const auto v = numbers(rhs, line_no);
      expect(v, 3, line_no, key);
      if (name.empty()) throw std::runtime_error("scene line " + std::to_string(line_no) + ": point needs a name");
      scene.points[name] = Pose2(v[0], v[1], v[2]);
      continue;
    }
    if (key == "seed") {
      std::string tok;
      rhs >> tok;
      scene.seed = std::stoull(tok);
      continue;
    }
    const auto v = numbers(rhs, line_no);
    if (key == "grid") {
      expect(v, 5, line_no, key);
      scene.grid = {v[0], v[1], v[2], static_cast<int>(v[3]), static_cast<int>(v[4])};
    } else if (key == "box") {
      expect(v, 5, line_no, key);
      scene.boxes.push_back({std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]),
                             std::max(v[1], v[3]), v[4]});
    } else if (key == "walker") {
      if (v.size() < 9 || (v.size() - 5) % 2 != 0) {
        throw std::runtime_error("scene line " + std::to_string(line_no) +
                                 ": walker = radius height speed start loop x z x z ...");
      }
      Walker wk{v[0], v[1], v[2], v[3], v[4] != 0.0, {}};
      for (std::size_t i = 5; i + 1 < v.size(); i += 2) wk.waypoints.push_back({v[i], v[i + 1]});
      scene.walkers.push_back(std::move(wk));
    } else if (key == "occlusion") {
      expect(v, 2, line_no, key);
      scene.occlusions.push_back({v[0], v[1]});
    } else if (key == "start") {
      expect(v, 3, line_no, key);
      scene.robot_start = Pose2(v[0], v[1], v[2]);
    } else if (key == "lift") {
      expect(v, 1, line_no, key);
      scene.lift_start = v[0];
    } else if (key == "camera") {
      expect(v, 9, line_no, key);
      auto& c = scene.camera;
      c.fx = v[0];
      c.fy = v[1];
      c.cx = v[2];
      c.cy = v[3];
      c.width = static_cast<int>(v[4]);
      c.height = static_cast<int>(v[5]);
      c.max_range = v[6];
      c.noise_coeff = v[7];
      c.pitch_down = v[8];
      if (!(c.fx > 0 && c.fy > 0)) throw std::runtime_error("camera focal lengths must be positive");
    } else {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return scene;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

WorldState initial_state(const Scene& scene) {
  WorldState w;
  w.robot = scene.robot_start;
  w.lift.height = std::clamp(scene.lift_start, manip::kLiftMinHeight, manip::kLiftMaxHeight);
  for (const auto& wk : scene.walkers) {
    WalkerState s;
    if (!wk.waypoints.empty()) s.position = wk.waypoints.front();
    s.parked = wk.waypoints.size() < 2;
    w.walkers.push_back(s);
  }
  return w;
}

namespace {

void advance_walker(const Walker& wk, WalkerState& s, double t, double dt) {
  if (s.parked || t < wk.start_time) return;
  double budget = wk.speed * dt;
  while (budget > 0.0 && !s.parked) {
    const Point2 goal = wk.waypoints[s.next];
    const double dx = goal.x - s.position.x;
    const double dz = goal.z - s.position.z;
    const double d = std::hypot(dx, dz);
    if (d > budget) {
      s.position.x += dx / d * budget;
      s.position.z += dz / d * budget;
      break;
    }
    s.position = goal;
    budget -= d;
    if (s.next + 1 < wk.waypoints.size()) {
      ++s.next;
    } else if (wk.loop) {
      s.next = 0;
    } else {
      s.parked = true;
    }
  }
}

double box_distance(const Box& b, double x, double z) {
  const double dx = std::max({b.min_x - x, 0.0, x - b.max_x});
  const double dz = std::max({b.min_z - z, 0.0, z - b.max_z});
  if (dx > 0.0 || dz > 0.0) return std::hypot(dx, dz);
  // Inside: negative depth to the nearest edge.
  return -std::min({x - b.min_x, b.max_x - x, z - b.min_z, b.max_z - z});
}

}  // namespace

double clearance(const Scene& scene, const std::vector<WalkerState>& walkers, const Pose2& pose,
                 double footprint_radius) {
  double best = kInf;
  for (const auto& b : scene.boxes) best = std::min(best, box_distance(b, pose.x, pose.z));
  for (std::size_t i = 0; i < walkers.size() && i < scene.walkers.size(); ++i) {
    const double d = std::hypot(walkers[i].position.x - pose.x, walkers[i].position.z - pose.z);
    best = std::min(best, d - scene.walkers[i].radius);
  }
  return best - footprint_radius;
}

WorldState step_world(const Scene& scene, const WorldState& w, const Twist2& base_cmd,
                      const std::optional<manip::LiftCommand>& lift_cmd,
                      const std::optional<Pose3>& ee_cmd, double dt, const SimParams& params) {
  if (!(dt > 0.0 && dt <= 0.05)) throw std::invalid_argument("sim dt must be in (0, 0.05]");
  WorldState n = w;
  n.time = w.time + dt;
  n.step = w.step + 1;

  for (std::size_t i = 0; i < n.walkers.size() && i < scene.walkers.size(); ++i) {
    advance_walker(scene.walkers[i], n.walkers[i], w.time, dt);
  }
  n.lift = manip::lift_step(w.lift, lift_cmd.value_or(manip::LiftVelocity{0.0}), dt);
  if (ee_cmd) n.ee_in_base = *ee_cmd;

  // Base: module-level limits between the commanded and realized twist.
  swerve::Steers steers{};
  for (int i = 0; i < 4; ++i) steers[i] = w.modules[i].steer;
  const auto target = swerve::inverse_kinematics(base_cmd, params.geometry, steers);
  const double max_turn = params.limits.steer_rate_max * dt;
  const double max_dv = params.limits.drive_accel_max * dt;
  for (int i = 0; i < 4; ++i) {
    const auto opt = swerve::optimize_module(w.modules[i].steer, target[i]);
    const double turn = std::clamp(normalize_angle(opt.steer - w.modules[i].steer), -max_turn, max_turn);
    n.modules[i].steer = normalize_angle(w.modules[i].steer + turn);
    n.modules[i].drive = w.modules[i].drive + std::clamp(opt.drive - w.modules[i].drive, -max_dv, max_dv);
  }
  const Twist2 twist = swerve::forward_kinematics(n.modules, params.geometry);
  const Pose2 attempted = integrate(w.robot, twist, dt);
  const double clr = clearance(scene, n.walkers, attempted, params.footprint_radius);
  n.clearance = clr;
  if (clr > 0.0) {
    n.robot = attempted;
    n.realized = twist;
    n.collision = false;
    return n;
  }

  // Contact: bisect for the last collision-free fraction of the motion.
  double lo = 0.0;
  double hi = 1.0;
  if (clearance(scene, n.walkers, w.robot, params.footprint_radius) > 0.0) {
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (clearance(scene, n.walkers, integrate(w.robot, twist, mid * dt), params.footprint_radius) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  n.robot = integrate(w.robot, twist, lo * dt);
  n.realized = {};
  for (auto& m : n.modules) m.drive = 0.0;
  n.collision = true;
  ++n.collision_count;
  return n;
}

Pose3 base_pose3(const Pose2& p) { return p.to_pose3(0.0); }

Pose3 camera_pose(const Pose2& robot, double lift_height, const CameraModel& cam) {
  const Pose3 mount{Quat::from_axis_angle({1.0, 0.0, 0.0}, cam.pitch_down),
                    Vec3{0.0, lift_height + cam.mount_above_lift, cam.mount_forward}};
  return compose(base_pose3(robot), mount);
}

Pose3 ee_world(const Pose2& robot, const Pose3& ee_in_base) {
  return compose(base_pose3(robot), ee_in_base);
}

double cast_ray(const Scene& scene, const std::vector<WalkerState>& walkers, const Vec3& o,
                const Vec3& d) {
  double best = kInf;
  if (d.y < 0.0) best = -o.y / d.y;
  for (const auto& b : scene.boxes) {
    double t0 = 0.0;
    double t1 = kInf;
    const double lo[3] = {b.min_x, 0.0, b.min_z};
    const double hi[3] = {b.max_x, b.height, b.max_z};
    const double oo[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (dd[a] == 0.0) {
        miss = oo[a] < lo[a] || oo[a] > hi[a];
        continue;
      }
      double ta = (lo[a] - oo[a]) / dd[a];
      double tb = (hi[a] - oo[a]) / dd[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      miss = t0 > t1;
    }
    if (!miss && t0 > 0.0) best = std::min(best, t0);
  }
  for (std::size_t i = 0; i < walkers.size() && i < scene.walkers.size(); ++i) {
    const auto& wk = scene.walkers[i];
    const double px = o.x - walkers[i].position.x;
    const double pz = o.z - walkers[i].position.z;
    const double a = d.x * d.x + d.z * d.z;
    if (a == 0.0) continue;
    const double bq = 2.0 * (px * d.x + pz * d.z);
    const double c = px * px + pz * pz - wk.radius * wk.radius;
    const double disc = bq * bq - 4.0 * a * c;
    if (disc < 0.0 || c < 0.0) continue;
    const double t = (-bq - std::sqrt(disc)) / (2.0 * a);
    if (t <= 0.0) continue;
    const double y = o.y + t * d.y;
    if (y >= 0.0 && y <= wk.height) best = std::min(best, t);
  }
  return best;
}

namespace {

void render_row(const Scene& scene, const WorldState& w, const CameraModel& cam,
                const CounterRng& rng, const RenderRequest& req, const Pose3& pose, int v,
                std::vector<Vec3>& out) {
  constexpr int kOcclusionStride = 10;
  for (int u = 0; u < cam.width; ++u) {
    const std::uint64_t pixel = static_cast<std::uint64_t>(v) * cam.width + u;
    if (req.occluded && pixel % kOcclusionStride != 0) continue;
    const Vec3 ray{-(u - cam.cx) / cam.fx, -(v - cam.cy) / cam.fy, 1.0};
    const double t = cast_ray(scene, w.walkers, pose.translation, pose.rotation.rotate(ray));
    if (!(t <= cam.max_range)) continue;
    double depth = t;
    if (req.noise && cam.noise_coeff > 0.0) {
      depth += cam.noise_coeff * t * rng.normal(kRenderStreamBase + req.frame, pixel);
    }
    if (depth <= 0.0) continue;
    out.push_back(depth * ray);
  }
}

}  // namespace

mapping::PointCloud render_depth(const Scene& scene, const WorldState& w, const CameraModel& cam,
                                 const CounterRng& rng, const RenderRequest& req) {
  const Pose3 pose = camera_pose(w.robot, w.lift.height, cam);
  std::vector<std::vector<Vec3>> rows(cam.height);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < cam.height; ++v) render_row(scene, w, cam, rng, req, pose, v, rows[v]);
  mapping::PointCloud cloud;
  cloud.stamp = w.time;
  for (auto& r : rows) cloud.points.insert(cloud.points.end(), r.begin(), r.end());
  return cloud;
}

mapping::PointCloud serial::render_depth(const Scene& scene, const WorldState& w,
                                         const CameraModel& cam, const CounterRng& rng,
                                         const RenderRequest& req) {
  const Pose3 pose = camera_pose(w.robot, w.lift.height, cam);
  mapping::PointCloud cloud;
  cloud.stamp = w.time;
  for (int v = 0; v < cam.height; ++v) render_row(scene, w, cam, rng, req, pose, v, cloud.points);
  return cloud;
}

OdomState initial_odometry(const Pose2& start) {
  OdomState od;
  od.truth = start;
  od.keyframes.push_back({start, start, 0.0});
  return od;
}

OdomState odometry_step(const OdomState& od, const PlanarDelta& delta, const OdomNoise& noise,
                        bool occluded, const CounterRng& rng, double keyframe_spacing) {
  OdomState n = od;
  const double dist = std::hypot(delta.forward, delta.left);
  const double scale = occluded ? 2.0 : 1.0;
  const double sig_t = scale * noise.k_trans * std::sqrt(dist);
  const double sig_y = scale * noise.k_yaw * std::sqrt(dist);
  double nf = 0.0;
  double nl = 0.0;
  double ny = 0.0;
  if (dist > 0.0) {
    const std::uint64_t c = 3 * od.counter;
    nf = sig_t * rng.normal(kOdomStream, c);
    nl = sig_t * rng.normal(kOdomStream, c + 1);
    ny = sig_y * rng.normal(kOdomStream, c + 2);
    n.counter = od.counter + 1;
  }

  // Error propagation: the estimate moves the noisy increment along its own
  // heading, the truth moves the exact increment along the true heading.
  const Pose2 est_heading(0.0, 0.0, od.truth.yaw + od.err_yaw);
  const auto est_d = est_heading.to_world(delta.forward + nf, delta.left + nl);
  const auto true_d = od.truth.to_world(delta.forward, delta.left);
  n.err_x = od.err_x + (est_d[0] - true_d[0]);
  n.err_z = od.err_z + (est_d[1] - true_d[1]);
  n.err_yaw = normalize_angle(od.err_yaw + ny);
  n.truth = apply(od.truth, delta);

  n.quality = occluded ? mapping::PoseQuality::kDegraded : mapping::PoseQuality::kGood;
  n.travel = od.travel + dist;
  n.since_keyframe = od.since_keyframe + dist;
  if (n.since_keyframe >= keyframe_spacing) {
    n.keyframes.push_back({n.truth, n.estimate(), n.travel});
    n.since_keyframe = 0.0;
  }
  return n;
}

OdomState odometry_step(const OdomState& od, const Pose2& new_truth, const OdomNoise& noise,
                        bool occluded, const CounterRng& rng, double keyframe_spacing) {
  OdomState n = odometry_step(od, relative(od.truth, new_truth), noise, occluded, rng, keyframe_spacing);
  n.truth = new_truth;
  if (!n.keyframes.empty() && n.keyframes.size() > od.keyframes.size()) {
    n.keyframes.back().truth = new_truth;
    n.keyframes.back().estimate = n.estimate();
  }
  return n;
}

OdomState loop_closure_update(const OdomState& od, const LoopClosureParams& params) {
  for (const auto& kf : od.keyframes) {
    if (od.travel - kf.travel < params.min_travel_gap) continue;
    if (std::hypot(kf.truth.x - od.truth.x, kf.truth.z - od.truth.z) > params.keyframe_radius) continue;
    OdomState n = od;
    n.err_x *= params.residual;
    n.err_z *= params.residual;
    n.err_yaw *= params.residual;
    ++n.closures;
    return n;
  }
  return od;
}

}  // namespace yor::sim
