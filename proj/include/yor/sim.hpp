#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "yor/base_control.hpp"
#include "yor/frames.hpp"
#include "yor/manip.hpp"
#include "yor/mapping.hpp"
#include "yor/rng.hpp"
#include "yor/swerve.hpp"

namespace yor::sim {

using control::Point2;

/// Axis-aligned box extruded up from the floor.
struct Box {
  double min_x = 0.0;
  double min_z = 0.0;
  double max_x = 0.0;
  double max_z = 0.0;
  double height = 1.0;
};

/// Scripted pedestrian: a vertical cylinder walking its waypoints.
struct Walker {
  double radius = 0.25;
  double height = 1.7;
  double speed = 1.0;        // m/s
  double start_time = 0.0;   // s
  bool loop = false;
  std::vector<Point2> waypoints;
};

struct OcclusionEvent {
  double start = 0.0;
  double end = 0.0;
};

struct CameraModel {
  double fx = 80.0;
  double fy = 80.0;
  double cx = 79.5;
  double cy = 59.5;
  int width = 160;
  int height = 120;
  double max_range = 8.0;
  double noise_coeff = 0.01;     // sigma(d) = coeff * d
  double mount_forward = 0.10;   // m ahead of the base center
  double mount_above_lift = 0.10;
  double pitch_down = 0.45;      // rad
};

struct Scene {
  std::vector<Box> boxes;
  std::vector<Walker> walkers;
  std::vector<OcclusionEvent> occlusions;
  std::map<std::string, Pose2> points;  // named poses (HOME, P1, ...)
  Pose2 robot_start;
  double lift_start = 0.80;
  mapping::GridGeometry grid{-5.0, -5.0, 0.05, 200, 200};
  CameraModel camera;
  std::uint64_t seed = 1;

  bool occluded(double t) const;
  /// Looks up a named pose; throws std::out_of_range naming the key.
  const Pose2& point(const std::string& name) const;
};

/// Parses the key-value scene format (see README). Throws std::runtime_error
/// with the line number on malformed input.
Scene parse_scene(const std::string& text);
Scene load_scene(const std::string& path);

struct WalkerState {
  Point2 position;
  std::size_t next = 1;
  bool parked = false;
};

struct SimParams {
  swerve::ChassisGeometry geometry;
  swerve::VelocityLimits limits{0.25, 1.0, 8.0, 2.0};
  double footprint_radius = 0.3;
};

struct WorldState {
  double time = 0.0;
  std::uint64_t step = 0;
  Pose2 robot;
  Twist2 realized;  // body twist achieved over the last step
  swerve::Modules modules{};
  manip::LiftState lift;
  Pose3 ee_in_base = Pose3::from_translation({0.0, 0.9, 0.45});
  std::vector<WalkerState> walkers;
  bool collision = false;      // raised during the last step
  double clearance = 0.0;      // footprint-obstacle distance at the attempted pose
  std::uint64_t collision_count = 0;
};

WorldState initial_state(const Scene& scene);

/// Advances the world by dt in (0, 0.05]. The base twist goes through swerve
/// IK, per-module steer-rate and drive-acceleration limits, then FK. Contact
/// stops the base at the last free pose and raises the collision flag.
WorldState step_world(const Scene& scene, const WorldState& w, const Twist2& base_cmd,
                      const std::optional<manip::LiftCommand>& lift_cmd,
                      const std::optional<Pose3>& ee_cmd, double dt, const SimParams& params = {});

/// Signed distance from the robot footprint circle at pose to the nearest obstacle.
double clearance(const Scene& scene, const std::vector<WalkerState>& walkers, const Pose2& pose,
                 double footprint_radius);

Pose3 base_pose3(const Pose2& p);
/// World pose of the depth camera (optical axis +Z, +X left, +Y up).
Pose3 camera_pose(const Pose2& robot, double lift_height, const CameraModel& cam);
/// End effector in the world for a given base pose.
Pose3 ee_world(const Pose2& robot, const Pose3& ee_in_base);

struct RenderRequest {
  std::uint64_t frame = 0;  // selects the noise counter block
  bool occluded = false;
  bool noise = true;
};

/// Synthesizes a depth cloud in the camera frame by ray casting the floor,
/// boxes, and walkers. Depth noise is drawn per pixel from the counter RNG.
mapping::PointCloud render_depth(const Scene& scene, const WorldState& w, const CameraModel& cam,
                                 const CounterRng& rng, const RenderRequest& req);

namespace serial {
mapping::PointCloud render_depth(const Scene& scene, const WorldState& w, const CameraModel& cam,
                                 const CounterRng& rng, const RenderRequest& req);
}

/// Ray hit distance along a world ray against the scene (infinity when nothing is hit).
double cast_ray(const Scene& scene, const std::vector<WalkerState>& walkers, const Vec3& origin,
                const Vec3& dir);

struct OdomNoise {
  double k_trans = 0.0072;  // m / sqrt(m) travelled, per body axis
  double k_yaw = 0.001;     // rad / sqrt(m) travelled
};

struct Keyframe {
  Pose2 truth;
  Pose2 estimate;
  double travel = 0.0;
};

struct OdomState {
  Pose2 truth;
  // estimate = truth + error (x, z, yaw)
  double err_x = 0.0;
  double err_z = 0.0;
  double err_yaw = 0.0;
  std::vector<Keyframe> keyframes;
  mapping::PoseQuality quality = mapping::PoseQuality::kGood;
  double travel = 0.0;
  double since_keyframe = 0.0;
  std::uint64_t counter = 0;
  std::uint64_t closures = 0;

  Pose2 estimate() const { return {truth.x + err_x, truth.z + err_z, truth.yaw + err_yaw}; }
  double position_error() const { return std::hypot(err_x, err_z); }
};

OdomState initial_odometry(const Pose2& start);

/// Integrates a true body-frame increment perturbed by zero-mean Gaussian
/// noise with variance proportional to the distance travelled. Occlusion
/// doubles the noise and degrades the pose quality.
OdomState odometry_step(const OdomState& od, const PlanarDelta& true_motion, const OdomNoise& noise,
                        bool occluded, const CounterRng& rng, double keyframe_spacing = 1.0);
/// Same, with the increment taken from the tracked truth to new_truth; the
/// tracked truth is then set to new_truth exactly.
OdomState odometry_step(const OdomState& od, const Pose2& new_truth, const OdomNoise& noise,
                        bool occluded, const CounterRng& rng, double keyframe_spacing = 1.0);

struct LoopClosureParams {
  double keyframe_radius = 0.5;
  double residual = 0.1;
  double min_travel_gap = 3.0;  // only keyframes at least this far back in travel count
};

/// Shrinks the estimate error by `residual` when the true pose revisits an
/// eligible keyframe.
OdomState loop_closure_update(const OdomState& od, const LoopClosureParams& params = {});

}  // namespace yor::sim
