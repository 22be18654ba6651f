#include "yor/manip.hpp"

#include <algorithm>
#include <cmath>

namespace yor::manip {

std::vector<double> stiffness_torque(const JointState& state, const JointState& ref,
                                     const StiffnessGains& gains, const GravityModel& gravity) {
  const std::size_t n = state.q.size();
  if (state.qd.size() != n || ref.q.size() != n || ref.qd.size() != n || gains.kp.size() != n ||
      gains.kd.size() != n) {
    throw DimensionMismatch();
  }
  std::vector<double> tau = gravity ? gravity(state.q) : std::vector<double>(n, 0.0);
  if (tau.size() != n) throw DimensionMismatch();
  for (std::size_t i = 0; i < n; ++i) {
    tau[i] += gains.kp[i] * (ref.q[i] - state.q[i]) + gains.kd[i] * (ref.qd[i] - state.qd[i]);
  }
  return tau;
}

namespace {

// Largest speed from which braking by a*dt per step stops within `distance`.
double braking_speed(double distance, double accel, double dt) {
  const double step = accel * dt;
  const double k = 0.5 * (-1.0 + std::sqrt(1.0 + 8.0 * distance / (accel * dt * dt)));
  const double m = std::floor(k);
  const double v = (distance / dt + step * m * (m + 1.0) / 2.0) / (m + 1.0);
  return std::min(v, (m + 1.0) * step);
}

}  // namespace

JointState shape_command(const JointState& current, std::span<const double> target,
                         const ShaperLimits& limits, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("shaper dt must be positive");
  const std::size_t n = current.q.size();
  if (current.qd.size() != n || target.size() != n) throw DimensionMismatch();
  const double dv = limits.max_acceleration * dt;
  JointState next = current;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = target[i] - current.q[i];
    const double v = current.qd[i];
    if (std::abs(e) < 1e-12 && std::abs(v) <= dv) {
      next.q[i] = target[i];
      next.qd[i] = 0.0;
      continue;
    }
    const double dist = std::abs(e);
    const double speed = std::min(limits.max_velocity, braking_speed(dist, limits.max_acceleration, dt));
    const double desired = std::copysign(speed, e);
    double vn = v + std::clamp(desired - v, -dv, dv);
    vn = std::clamp(vn, -limits.max_velocity, limits.max_velocity);
    double qn = current.q[i] + vn * dt;
    // Land exactly when the step reaches the target.
    if ((e > 0 && qn >= target[i]) || (e < 0 && qn <= target[i])) {
      if (std::abs(vn - v) <= dv) qn = target[i];
    }
    next.q[i] = qn;
    next.qd[i] = vn;
  }
  return next;
}

double trapezoid_time(double distance, const ShaperLimits& limits) {
  const double d = std::abs(distance);
  const double v = limits.max_velocity;
  const double a = limits.max_acceleration;
  if (d >= v * v / a) return v / a + d / v;
  return 2.0 * std::sqrt(d / a);
}

LiftState lift_step(const LiftState& state, const LiftCommand& command, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("lift dt must be positive");
  double v = 0.0;
  if (const auto* vel = std::get_if<LiftVelocity>(&command)) {
    v = vel->value;
  } else {
    const double target = std::clamp(std::get<LiftTarget>(command).height, kLiftMinHeight, kLiftMaxHeight);
    v = (target - state.height) / dt;
  }
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, -kLiftMaxSpeed, kLiftMaxSpeed);
  if (v == 0.0) return {state.height, 0.0};
  const double h = std::clamp(state.height + v * dt, kLiftMinHeight, kLiftMaxHeight);
  return {h, std::clamp((h - state.height) / dt, -kLiftMaxSpeed, kLiftMaxSpeed)};
}

Pose3 ee_hold_target(const Pose3& world_base_0, const Pose3& base_ee_0, const Pose3& world_base_t) {
  return compose(inverse(world_base_t), compose(world_base_0, base_ee_0));
}

double blend_alpha(double dt, double tau) { return 1.0 - std::exp(-dt / tau); }

Pose3 smooth_pose(const Pose3& prev_cmd, const Pose3& new_cmd, double dt, double tau_trans,
                  double tau_rot) {
  if (!(dt > 0.0)) throw std::invalid_argument("smoothing dt must be positive");
  const double at = blend_alpha(dt, tau_trans);
  const double ar = blend_alpha(dt, tau_rot);
  const Vec3 t = prev_cmd.translation + at * (new_cmd.translation - prev_cmd.translation);
  return {slerp(prev_cmd.rotation, new_cmd.rotation, ar), t};
}

EeHold::EeHold(const Pose3& world_base_0, const Pose3& base_ee_0, Params params)
    : params_(params), target_(compose(world_base_0, base_ee_0)), smoothed_(target_) {}

Pose3 EeHold::step(const Pose3& world_base_t, double dt) {
  smoothed_ = params_.smoothing ? smooth_pose(smoothed_, target_, dt, params_.tau_trans, params_.tau_rot)
                                : target_;
  return compose(inverse(world_base_t), smoothed_);
}

std::vector<double> TwoLinkArm::gravity_torque(std::span<const double> q) const {
  const double c1 = std::cos(q[0]);
  const double c12 = std::cos(q[0] + q[1]);
  return {(m1 + m2) * gravity * l1 * c1 + m2 * gravity * l2 * c12, m2 * gravity * l2 * c12};
}

std::array<double, 2> TwoLinkArm::forward_dynamics(std::span<const double> q,
                                                   std::span<const double> qd,
                                                   std::span<const double> tau) const {
  const double c2 = std::cos(q[1]);
  const double s2 = std::sin(q[1]);
  const double m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
  const double m12 = m2 * (l2 * l2 + l1 * l2 * c2);
  const double m22 = m2 * l2 * l2;
  const double h = m2 * l1 * l2 * s2;
  const auto g = gravity_torque(q);
  const double b1 = tau[0] + h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) - g[0] - joint_friction * qd[0];
  const double b2 = tau[1] - h * qd[0] * qd[0] - g[1] - joint_friction * qd[1];
  const double det = m11 * m22 - m12 * m12;
  return {(m22 * b1 - m12 * b2) / det, (m11 * b2 - m12 * b1) / det};
}

}  // namespace yor::manip
