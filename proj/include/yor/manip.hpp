#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "yor/frames.hpp"

namespace yor::manip {

struct JointState {
  std::vector<double> q;   // rad
  std::vector<double> qd;  // rad/s
  std::size_t size() const { return q.size(); }
};

struct StiffnessGains {
  std::vector<double> kp;  // N*m/rad
  std::vector<double> kd;  // N*m*s/rad
};

using GravityModel = std::function<std::vector<double>(std::span<const double>)>;

class DimensionMismatch : public std::invalid_argument {
 public:
  DimensionMismatch() : std::invalid_argument("joint dimension mismatch") {}
};

/// tau = tau_g(q) + K_p (q_ref - q) + K_d (qd_ref - qd)
std::vector<double> stiffness_torque(const JointState& state, const JointState& ref,
                                     const StiffnessGains& gains, const GravityModel& gravity);

struct ShaperLimits {
  double max_velocity = 1.0;       // rad/s
  double max_acceleration = 10.0;  // rad/s^2
};

/// Per-joint trapezoidal approach to the targets: |velocity| <= v_max and
/// |delta velocity| <= a_max * dt every step. Braking follows the discrete
/// profile so a stationary target is reached without overshoot.
JointState shape_command(const JointState& current, std::span<const double> target,
                         const ShaperLimits& limits, double dt);

/// Continuous trapezoid (or triangle) duration for a rest-to-rest move.
double trapezoid_time(double distance, const ShaperLimits& limits);

inline constexpr double kLiftMinHeight = 0.60;   // m
inline constexpr double kLiftMaxHeight = 1.24;   // m
inline constexpr double kLiftMaxSpeed = 0.035;   // m/s

struct LiftState {
  double height = kLiftMinHeight;
  double velocity = 0.0;
  friend bool operator==(const LiftState&, const LiftState&) = default;
};

struct LiftVelocity {
  double value = 0.0;  // m/s
};
struct LiftTarget {
  double height = 0.0;  // m
};
using LiftCommand = std::variant<LiftVelocity, LiftTarget>;

/// Kinematic self-locking lift: zero velocity holds position exactly.
LiftState lift_step(const LiftState& state, const LiftCommand& command, double dt);

/// Commanded base-to-EE pose keeping the initial world EE pose fixed:
/// inverse(T_WB_t) * T_WB0 * T_BE0.
Pose3 ee_hold_target(const Pose3& world_base_0, const Pose3& base_ee_0, const Pose3& world_base_t);

/// Blending coefficient 1 - exp(-dt / tau).
double blend_alpha(double dt, double tau);

/// Exponential low-pass on translation and slerp on rotation.
Pose3 smooth_pose(const Pose3& prev_cmd, const Pose3& new_cmd, double dt, double tau_trans = 0.20,
                  double tau_rot = 0.30);

/// World-frame end-effector hold. The smoothed quantity is the world-frame EE
/// target; each step re-expresses it in the base frame with the freshest
/// cached base pose.
class EeHold {
 public:
  struct Params {
    double tau_trans = 0.20;
    double tau_rot = 0.30;
    bool smoothing = true;
  };

  EeHold(const Pose3& world_base_0, const Pose3& base_ee_0, Params params);

  /// Moves the world-frame target (e.g. an operator nudge).
  void set_world_target(const Pose3& world_ee) { target_ = world_ee; }
  const Pose3& world_target() const { return target_; }

  /// Base-frame EE command for the given base pose estimate.
  Pose3 step(const Pose3& world_base_t, double dt);

 private:
  Params params_;
  Pose3 target_;
  Pose3 smoothed_;
};

/// Planar two-link arm with point masses at the link ends, used as the
/// compliance testbed. Joint angles are measured from horizontal.
struct TwoLinkArm {
  double l1 = 0.3;
  double l2 = 0.25;
  double m1 = 1.0;
  double m2 = 0.8;
  double gravity = 9.81;
  double joint_friction = 0.0;  // viscous, N*m*s/rad

  std::vector<double> gravity_torque(std::span<const double> q) const;
  /// Joint accelerations for applied torque (motor + external).
  std::array<double, 2> forward_dynamics(std::span<const double> q, std::span<const double> qd,
                                         std::span<const double> tau) const;
};

}  // namespace yor::manip
