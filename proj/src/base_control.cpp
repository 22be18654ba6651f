#include "yor/base_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace yor::control {

EmaFilter::EmaFilter(double alpha) : alpha_(alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ema alpha must be in [0, 1)");
}

Twist2 EmaFilter::step(const Twist2& cmd) {
  // (1 - a) cmd + a prev, written so that cmd == prev is an exact fixed point.
  state_ = {cmd.vx + alpha_ * (state_.vx - cmd.vx), cmd.vy + alpha_ * (state_.vy - cmd.vy),
            cmd.omega + alpha_ * (state_.omega - cmd.omega)};
  return state_;
}

PidController::PidController(PidGains gains, swerve::VelocityLimits limits)
    : gains_(gains), limits_(limits) {}

void PidController::reset() {
  ix_ = iz_ = iyaw_ = 0.0;
  has_prev_ = false;
}

PidOutput PidController::step(const Pose2& est, const Pose2& target, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid dt must be positive");
  const double ex = target.x - est.x;
  const double ez = target.z - est.z;
  const double eyaw = normalize_angle(target.yaw - est.yaw);

  double rx = 0.0;
  double rz = 0.0;
  double ryaw = 0.0;
  if (has_prev_) {
    rx = (est.x - prev_.x) / dt;
    rz = (est.z - prev_.z) / dt;
    ryaw = normalize_angle(est.yaw - prev_.yaw) / dt;
  }

  const auto& g = gains_;
  const double ux = g.kp_pos * ex + g.ki_pos * ix_ - g.kd_pos * rx;
  const double uz = g.kp_pos * ez + g.ki_pos * iz_ - g.kd_pos * rz;
  const double uyaw = g.kp_yaw * eyaw + g.ki_yaw * iyaw_ - g.kd_yaw * ryaw;

  const auto body = est.to_body(ux, uz);
  const Twist2 raw{body[0], body[1], uyaw};
  const Twist2 sat = swerve::clamp_twist(raw, g.v_max, g.omega_max);
  const bool trans_saturated = raw.speed() > g.v_max;
  const bool yaw_saturated = std::abs(uyaw) > g.omega_max;

  // Conditional integration: freeze the integral while the output saturates.
  if (!trans_saturated) {
    ix_ = std::clamp(ix_ + ex * dt, -g.integral_clamp_pos, g.integral_clamp_pos);
    iz_ = std::clamp(iz_ + ez * dt, -g.integral_clamp_pos, g.integral_clamp_pos);
  }
  if (!yaw_saturated) {
    iyaw_ = std::clamp(iyaw_ + eyaw * dt, -g.integral_clamp_yaw, g.integral_clamp_yaw);
  }
  prev_ = est;
  has_prev_ = true;

  PidOutput out;
  out.twist = swerve::clamp_twist(sat, limits_);
  out.position_error = std::hypot(ex, ez);
  out.yaw_error = eyaw;
  out.done = out.position_error <= g.position_tolerance && std::abs(eyaw) <= g.yaw_tolerance;
  return out;
}

PidOutput pid_step(const Pose2& est, const Pose2& target, const PidGains& gains, double dt,
                   const swerve::VelocityLimits& limits) {
  PidController pid(gains, limits);
  return pid.step(est, target, dt);
}

double lookahead_distance(const PursuitParams& p, double current_speed) {
  const double frac = std::clamp(std::abs(current_speed) / p.speed_for_max_lookahead, 0.0, 1.0);
  return std::clamp(p.lookahead_min + (p.lookahead_max - p.lookahead_min) * frac, p.lookahead_min,
                    p.lookahead_max);
}

PurePursuit::PurePursuit(PursuitParams params, PidGains gains, swerve::VelocityLimits limits)
    : params_(params), pid_(gains, limits), limits_(limits) {}

void PurePursuit::set_path(Waypoints path) {
  path_ = std::move(path);
  segment_ = 0;
  pid_.reset();
}

namespace {

double heading_of(const Point2& a, const Point2& b) { return std::atan2(b.x - a.x, b.z - a.z); }

// Closest point on segment [a, b] to p; returns (t, squared distance).
std::pair<double, double> project(const Point2& a, const Point2& b, double px, double pz) {
  const double dx = b.x - a.x;
  const double dz = b.z - a.z;
  const double len2 = dx * dx + dz * dz;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (pz - a.z) * dz) / len2, 0.0, 1.0);
  const double cx = a.x + t * dx - px;
  const double cz = a.z + t * dz - pz;
  return {t, cx * cx + cz * cz};
}

constexpr std::size_t kProjectionWindow = 40;

}  // namespace

PursuitOutput PurePursuit::step(const Pose2& est, double current_speed, double dt) {
  if (path_.empty()) throw NoPathError();
  const auto& pts = path_.points;
  const Point2 goal = pts.back();

  PursuitOutput out;
  out.lookahead_distance = lookahead_distance(params_, current_speed);
  if (std::hypot(goal.x - est.x, goal.z - est.z) <= params_.goal_tolerance) {
    out.done = true;
    out.lookahead = goal;
    return out;
  }

  double target_yaw = est.yaw;
  if (pts.size() == 1) {
    out.lookahead = goal;
  } else {
    const std::size_t last_seg = pts.size() - 2;
    std::size_t best = segment_;
    double best_t = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = segment_; s <= std::min(last_seg, segment_ + kProjectionWindow); ++s) {
      const auto [t, d] = project(pts[s], pts[s + 1], est.x, est.z);
      if (d < best_d) {
        best_d = d;
        best = s;
        best_t = t;
      }
    }
    segment_ = best;

    // Walk the look-ahead distance along the path from the projection.
    double remaining = out.lookahead_distance;
    std::size_t s = best;
    double t = best_t;
    out.lookahead = goal;
    target_yaw = heading_of(pts[last_seg], pts[last_seg + 1]);
    while (s <= last_seg) {
      const Point2& a = pts[s];
      const Point2& b = pts[s + 1];
      const double seg_len = std::hypot(b.x - a.x, b.z - a.z);
      const double avail = (1.0 - t) * seg_len;
      if (avail >= remaining && seg_len > 0.0) {
        const double tt = t + remaining / seg_len;
        out.lookahead = {a.x + tt * (b.x - a.x), a.z + tt * (b.z - a.z)};
        target_yaw = heading_of(a, b);
        break;
      }
      remaining -= avail;
      t = 0.0;
      ++s;
    }
  }

  const PidOutput pid = pid_.step(est, Pose2(out.lookahead.x, out.lookahead.z, target_yaw), dt);
  out.twist = swerve::clamp_twist(pid.twist, params_.cruise_speed, limits_.omega_max);
  return out;
}

PursuitOutput pursuit_step(const Pose2& est, const Waypoints& path, const PursuitParams& params,
                           double current_speed, double dt) {
  PurePursuit pp(params);
  pp.set_path(path);
  return pp.step(est, current_speed, dt);
}

Docker::Docker(Pose2 home, DockParams params, PidGains gains, swerve::VelocityLimits limits)
    : home_(home), params_(params), pid_(gains, limits) {}

void Docker::finish(const Pose2& est, bool failed) {
  stage_ = failed ? DockStage::kFailed : DockStage::kDone;
  report_.dx = est.x - home_.x;
  report_.dz = est.z - home_.z;
  report_.yaw_error = normalize_angle(est.yaw - home_.yaw);
  report_.elapsed = elapsed_;
  report_.timed_out = failed;
}

DockCommand Docker::step(const Pose2& est, double dt) {
  // Deep inside the tolerance counts as converged without waiting out the window.
  constexpr double kConvergedFraction = 0.25;
  DockCommand cmd;
  if (finished()) {
    cmd.stage = stage_;
    return cmd;
  }
  if (elapsed_ >= params_.timeout) {
    finish(est, true);
    cmd.stage = stage_;
    return cmd;
  }

  if (stage_ == DockStage::kMoveTo) {
    const PidOutput out = pid_.step(est, home_, dt);
    const double tol = params_.translation_tolerance;
    settled_ = out.position_error <= tol ? settled_ + dt : 0.0;
    if (out.position_error <= kConvergedFraction * tol || settled_ >= params_.settle_time) {
      stage_ = DockStage::kAlign;
      settled_ = 0.0;
      pid_.reset();
    } else {
      cmd.twist = out.twist;
    }
  }
  if (stage_ == DockStage::kAlign) {
    const PidOutput out = pid_.step(est, Pose2(est.x, est.z, home_.yaw), dt);
    const double err = std::abs(out.yaw_error);
    const double tol = params_.yaw_tolerance;
    settled_ = err <= tol ? settled_ + dt : 0.0;
    if (err <= kConvergedFraction * tol || settled_ >= params_.settle_time) {
      finish(est, false);
      cmd.twist = {};
    } else {
      cmd.twist = {0.0, 0.0, out.twist.omega};
    }
  }
  elapsed_ += dt;
  cmd.stage = stage_;
  return cmd;
}

DockResult dock(const Pose2& est, const Pose2& home, const DockParams& params,
                const PidGains& gains, double dt) {
  Docker docker(home, params, gains);
  DockResult result;
  Pose2 pose = est;
  while (!docker.finished()) {
    const DockCommand cmd = docker.step(pose, dt);
    result.commands.push_back(cmd);
    pose = integrate(pose, cmd.twist, dt);
  }
  if (docker.stage() == DockStage::kFailed) throw DockTimeout(docker.report());
  result.report = docker.report();
  result.final_pose = pose;
  return result;
}

}  // namespace yor::control
