#pragma once

#include <array>

#include "yor/frames.hpp"

namespace yor::swerve {

struct ChassisGeometry {
  double half_width = 0.152;   // W
  double half_length = 0.106;  // L
};

struct ModuleState {
  double steer = 0.0;  // rad, (-pi, pi]
  double drive = 0.0;  // m/s, signed
};

/// Module order follows the coupling matrix rows.
enum Module : int { kFL = 0, kFR = 1, kRR = 2, kRL = 3 };
using Modules = std::array<ModuleState, 4>;
using Steers = std::array<double, 4>;

struct VelocityLimits {
  double v_max = 0.25;            // m/s, final safety clamp
  double omega_max = 1.0;         // rad/s
  double steer_rate_max = 8.0;    // rad/s
  double drive_accel_max = 2.0;   // m/s^2
};

struct ModuleVelocity {
  double vx = 0.0;
  double vy = 0.0;
};

/// V = C v_b. Rows of C: vx_i = vx +/- W w, vy_i = vy +/- L w.
std::array<ModuleVelocity, 4> module_velocities(const Twist2& v, const ChassisGeometry& g);

/// Body-frame (forward, left) position at which row i of C is a rigid-body
/// velocity v + w x r_i.
std::array<double, 2> module_position(int module, const ChassisGeometry& g);

/// Polar conversion of module_velocities. A module whose Cartesian velocity is
/// exactly zero keeps its previous steer angle with zero drive.
Modules inverse_kinematics(const Twist2& v, const ChassisGeometry& g, const Steers& previous = {});

/// Shortest-turn: if the target is more than 90 degrees away, steer to the
/// opposite angle and reverse the drive.
ModuleState optimize_module(double current_steer, const ModuleState& target);

/// Least-squares twist from module states (pseudo-inverse of C).
Twist2 forward_kinematics(const Modules& states, const ChassisGeometry& g);

Twist2 clamp_twist(const Twist2& v, const VelocityLimits& lim);
/// Translation scaled uniformly to v_max, omega clamped independently.
Twist2 clamp_twist(const Twist2& v, double v_max, double omega_max);

/// Stateful low-level module controller: keeps the last steer per module.
class SwerveDrive {
 public:
  explicit SwerveDrive(ChassisGeometry g = {}) : geometry_(g) {}

  /// IK plus shortest-turn against the last commanded steers.
  Modules command(const Twist2& v);

  const Steers& steers() const { return steers_; }
  const ChassisGeometry& geometry() const { return geometry_; }

 private:
  ChassisGeometry geometry_;
  Steers steers_{};
};

}  // namespace yor::swerve
