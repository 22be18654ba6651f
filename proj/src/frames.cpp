#include "yor/frames.hpp"

#include <algorithm>

namespace yor {

double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Quat Quat::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  const double s = std::sin(0.5 * angle) / n;
  return {std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s};
}

Quat Quat::from_yaw(double psi) { return {std::cos(0.5 * psi), 0.0, std::sin(0.5 * psi), 0.0}; }

Quat Quat::normalized() const {
  const double n = norm();
  return {w / n, x / n, y / n, z / n};
}

Vec3 Quat::rotate(const Vec3& v) const {
  // v' = v + 2w (u x v) + 2 u x (u x v)
  const Vec3 u{x, y, z};
  const Vec3 t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

double Quat::yaw() const {
  const Vec3 f = rotate({0.0, 0.0, 1.0});
  return std::atan2(f.x, f.z);
}

double Quat::angle() const {
  const double vn = std::sqrt(x * x + y * y + z * z);
  return 2.0 * std::atan2(vn, std::abs(w));
}

Quat operator*(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quat slerp(const Quat& q0, const Quat& q1_in, double t) {
  Quat q1 = q1_in;
  double d = q0.dot(q1);
  if (d < 0.0) {
    q1 = {-q1.w, -q1.x, -q1.y, -q1.z};
    d = -d;
  }
  d = std::min(d, 1.0);
  double s0 = 1.0 - t;
  double s1 = t;
  // Nearly parallel: linear blend is exact to rounding.
  if (d < 1.0 - 1e-12) {
    const double theta = std::acos(d);
    const double sin_theta = std::sin(theta);
    s0 = std::sin((1.0 - t) * theta) / sin_theta;
    s1 = std::sin(t * theta) / sin_theta;
  }
  Quat r{s0 * q0.w + s1 * q1.w, s0 * q0.x + s1 * q1.x, s0 * q0.y + s1 * q1.y,
         s0 * q0.z + s1 * q1.z};
  return r.normalized();
}

std::array<double, 7> Pose3::to_wire() const {
  return {rotation.x, rotation.y, rotation.z, rotation.w, translation.x, translation.y,
          translation.z};
}

Pose3 Pose3::from_wire(const std::array<double, 7>& a) {
  return {Quat{a[3], a[0], a[1], a[2]}.normalized(), Vec3{a[4], a[5], a[6]}};
}

Pose3 compose(const Pose3& a, const Pose3& b) {
  return {(a.rotation * b.rotation).normalized(), a.rotation.rotate(b.translation) + a.translation};
}

Pose3 inverse(const Pose3& p) {
  const Quat qi = p.rotation.conjugate();
  return {qi, -1.0 * qi.rotate(p.translation)};
}

Pose3 Pose2::to_pose3(double height) const {
  return {Quat::from_yaw(yaw), Vec3{x, height, z}};
}

Pose2 Pose2::from_pose3(const Pose3& p) {
  return {p.translation.x, p.translation.z, p.rotation.yaw()};
}

std::array<double, 2> Pose2::to_body(double dx, double dz) const {
  const double s = std::sin(yaw);
  const double c = std::cos(yaw);
  return {dx * s + dz * c, dx * c - dz * s};
}

std::array<double, 2> Pose2::to_world(double forward_m, double left_m) const {
  const double s = std::sin(yaw);
  const double c = std::cos(yaw);
  return {forward_m * s + left_m * c, forward_m * c - left_m * s};
}

Pose2 integrate(const Pose2& p, const Twist2& v, double dt) {
  const double th = v.omega * dt;
  double f = 0.0;
  double l = 0.0;
  if (std::abs(th) < 1e-9) {
    f = v.vx * dt;
    l = v.vy * dt;
  } else {
    const double a = std::sin(th) / v.omega;
    const double b = (1.0 - std::cos(th)) / v.omega;
    f = a * v.vx - b * v.vy;
    l = b * v.vx + a * v.vy;
  }
  const auto d = p.to_world(f, l);
  return {p.x + d[0], p.z + d[1], p.yaw + th};
}

PlanarDelta relative(const Pose2& a, const Pose2& b) {
  const auto d = a.to_body(b.x - a.x, b.z - a.z);
  return {d[0], d[1], normalize_angle(b.yaw - a.yaw)};
}

Pose2 apply(const Pose2& p, const PlanarDelta& d) {
  const auto w = p.to_world(d.forward, d.left);
  return {p.x + w[0], p.z + w[1], p.yaw + d.yaw};
}

}  // namespace yor
