#pragma once

#include <stdexcept>
#include <vector>

#include "yor/frames.hpp"
#include "yor/swerve.hpp"

namespace yor::control {

inline constexpr double kControlRate = 50.0;  // Hz

/// v_filt(t) = (1 - alpha) v_cmd(t) + alpha v_filt(t-1)
class EmaFilter {
 public:
  explicit EmaFilter(double alpha = 0.2);

  Twist2 step(const Twist2& cmd);
  void reset(const Twist2& value = {}) { state_ = value; }

  double alpha() const { return alpha_; }
  const Twist2& state() const { return state_; }

 private:
  double alpha_;
  Twist2 state_;
};

struct PidGains {
  double kp_pos = 1.5;
  double ki_pos = 0.02;
  double kd_pos = 0.15;
  double kp_yaw = 2.1;
  double ki_yaw = 0.01;
  double kd_yaw = 0.2;
  double position_tolerance = 0.015;  // m
  double yaw_tolerance = 0.03;        // rad
  double integral_clamp_pos = 0.5;    // m*s
  double integral_clamp_yaw = 0.5;    // rad*s
  double v_max = 0.35;                // controller saturation, m/s
  double omega_max = 1.0;             // rad/s
};

struct PidOutput {
  Twist2 twist;  // body frame
  bool done = false;
  double position_error = 0.0;
  double yaw_error = 0.0;
};

/// Planar pose PID. Errors are formed in the world frame and rotated into the
/// body frame; the derivative acts on the measurement.
class PidController {
 public:
  explicit PidController(PidGains gains = {}, swerve::VelocityLimits limits = {});

  PidOutput step(const Pose2& est, const Pose2& target, double dt);
  void reset();

  const PidGains& gains() const { return gains_; }
  PidGains& gains() { return gains_; }
  double integral_x() const { return ix_; }
  double integral_z() const { return iz_; }
  double integral_yaw() const { return iyaw_; }

 private:
  PidGains gains_;
  swerve::VelocityLimits limits_;
  double ix_ = 0.0;
  double iz_ = 0.0;
  double iyaw_ = 0.0;
  bool has_prev_ = false;
  Pose2 prev_;
};

/// One-shot PID evaluation with fresh memory.
PidOutput pid_step(const Pose2& est, const Pose2& target, const PidGains& gains, double dt,
                   const swerve::VelocityLimits& limits = {});

struct Point2 {
  double x = 0.0;
  double z = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Waypoints {
  std::vector<Point2> points;
  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

class NoPathError : public std::runtime_error {
 public:
  NoPathError() : std::runtime_error("no path") {}
};

struct PursuitParams {
  double lookahead_min = 0.2;   // m
  double lookahead_max = 0.4;   // m
  double cruise_speed = 0.25;   // m/s
  double speed_for_max_lookahead = 0.25;
  double goal_tolerance = 0.02; // m
};

struct PursuitOutput {
  Twist2 twist;
  bool done = false;
  Point2 lookahead;
  double lookahead_distance = 0.0;
};

/// Look-ahead distance L_min + (L_max - L_min) * speed / v_ref, clamped to the range.
double lookahead_distance(const PursuitParams& p, double current_speed);

/// Holonomic pure pursuit: picks a look-ahead point along the path and lets
/// the pose PID drive toward it, heading along the path tangent.
class PurePursuit {
 public:
  explicit PurePursuit(PursuitParams params = {}, PidGains gains = {},
                       swerve::VelocityLimits limits = {});

  void set_path(Waypoints path);
  const Waypoints& path() const { return path_; }
  /// Index of the path segment the robot was last projected onto.
  std::size_t progress() const { return segment_; }

  /// Throws NoPathError if no path is set.
  PursuitOutput step(const Pose2& est, double current_speed, double dt);

 private:
  PursuitParams params_;
  PidController pid_;
  swerve::VelocityLimits limits_;
  Waypoints path_;
  std::size_t segment_ = 0;
};

PursuitOutput pursuit_step(const Pose2& est, const Waypoints& path, const PursuitParams& params,
                           double current_speed, double dt = 1.0 / kControlRate);

struct DockParams {
  double translation_tolerance = 0.02;  // m
  double yaw_tolerance = 0.04;          // rad
  double settle_time = 1.0;             // s inside tolerance before a stage completes
  double timeout = 30.0;                // s
};

enum class DockStage { kMoveTo, kAlign, kDone, kFailed };

struct DockReport {
  double dx = 0.0;
  double dz = 0.0;
  double yaw_error = 0.0;
  double elapsed = 0.0;
  bool timed_out = false;
};

struct DockCommand {
  Twist2 twist;
  DockStage stage = DockStage::kMoveTo;
};

/// Two-stage docking: absolute move_to(x, z, yaw) then in-place heading alignment.
class Docker {
 public:
  Docker(Pose2 home, DockParams params = {}, PidGains gains = {}, swerve::VelocityLimits limits = {});

  DockCommand step(const Pose2& est, double dt);

  DockStage stage() const { return stage_; }
  bool finished() const { return stage_ == DockStage::kDone || stage_ == DockStage::kFailed; }
  /// Drift of the estimate relative to home; filled once finished.
  const DockReport& report() const { return report_; }

 private:
  void finish(const Pose2& est, bool failed);

  Pose2 home_;
  DockParams params_;
  PidController pid_;
  DockStage stage_ = DockStage::kMoveTo;
  double elapsed_ = 0.0;
  double settled_ = 0.0;
  DockReport report_;
};

class DockTimeout : public std::runtime_error {
 public:
  explicit DockTimeout(DockReport partial)
      : std::runtime_error("dock timeout"), report(partial) {}
  DockReport report;
};

struct DockResult {
  std::vector<DockCommand> commands;
  DockReport report;
  Pose2 final_pose;
};

/// Runs the docking sequence against an ideal kinematic base (the commanded
/// twist is realized exactly). Throws DockTimeout with partial metrics.
DockResult dock(const Pose2& est, const Pose2& home, const DockParams& params = {},
                const PidGains& gains = {}, double dt = 1.0 / kControlRate);

}  // namespace yor::control
