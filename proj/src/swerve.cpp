#include "yor/swerve.hpp"

#include <algorithm>
#include <cmath>

namespace yor::swerve {

namespace {
// Signs of the omega column of C, per module row: (x-row, y-row).
constexpr std::array<std::array<double, 2>, 4> kOmegaSigns = {{
    {+1.0, +1.0},  // FL
    {-1.0, +1.0},  // FR
    {-1.0, -1.0},  // RR
    {+1.0, -1.0},  // RL
}};
}  // namespace

std::array<ModuleVelocity, 4> module_velocities(const Twist2& v, const ChassisGeometry& g) {
  std::array<ModuleVelocity, 4> out{};
  for (int i = 0; i < 4; ++i) {
    out[i].vx = v.vx + kOmegaSigns[i][0] * g.half_width * v.omega;
    out[i].vy = v.vy + kOmegaSigns[i][1] * g.half_length * v.omega;
  }
  return out;
}

std::array<double, 2> module_position(int module, const ChassisGeometry& g) {
  // w x r = (-w r_left, w r_forward)
  return {kOmegaSigns[module][1] * g.half_length, -kOmegaSigns[module][0] * g.half_width};
}

Modules inverse_kinematics(const Twist2& v, const ChassisGeometry& g, const Steers& previous) {
  const auto mv = module_velocities(v, g);
  Modules out{};
  for (int i = 0; i < 4; ++i) {
    if (mv[i].vx == 0.0 && mv[i].vy == 0.0) {
      out[i] = {previous[i], 0.0};
    } else {
      out[i] = {normalize_angle(std::atan2(mv[i].vy, mv[i].vx)), std::hypot(mv[i].vx, mv[i].vy)};
    }
  }
  return out;
}

ModuleState optimize_module(double current_steer, const ModuleState& target) {
  const double delta = normalize_angle(target.steer - current_steer);
  if (std::abs(delta) > 0.5 * kPi) {
    return {normalize_angle(target.steer + kPi), -target.drive};
  }
  return target;
}

Twist2 forward_kinematics(const Modules& states, const ChassisGeometry& g) {
  // C^T C = diag(4, 4, 4 (W^2 + L^2)), so the normal equations decouple.
  double sx = 0.0;
  double sy = 0.0;
  double sw = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double vx = states[i].drive * std::cos(states[i].steer);
    const double vy = states[i].drive * std::sin(states[i].steer);
    sx += vx;
    sy += vy;
    sw += kOmegaSigns[i][0] * g.half_width * vx + kOmegaSigns[i][1] * g.half_length * vy;
  }
  const double r2 = g.half_width * g.half_width + g.half_length * g.half_length;
  return {sx / 4.0, sy / 4.0, sw / (4.0 * r2)};
}

Twist2 clamp_twist(const Twist2& v, double v_max, double omega_max) {
  Twist2 out = v;
  const double s = v.speed();
  if (s > v_max) {
    // Step the factor down until rounding lands inside the limit, so a second
    // clamp is a no-op.
    double k = v_max / s;
    out = {v.vx * k, v.vy * k, v.omega};
    while (out.speed() > v_max) {
      k = std::nextafter(k, 0.0);
      out = {v.vx * k, v.vy * k, v.omega};
    }
  }
  out.omega = std::clamp(v.omega, -omega_max, omega_max);
  return out;
}

Twist2 clamp_twist(const Twist2& v, const VelocityLimits& lim) {
  return clamp_twist(v, lim.v_max, lim.omega_max);
}

Modules SwerveDrive::command(const Twist2& v) {
  Modules target = inverse_kinematics(v, geometry_, steers_);
  for (int i = 0; i < 4; ++i) {
    target[i] = optimize_module(steers_[i], target[i]);
    steers_[i] = target[i].steer;
  }
  return target;
}

}  // namespace yor::swerve
