#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace yor {

// World frame: ground plane X-Z, +Y up. Body frame: +Z forward, +X left, +Y up.
// Planar yaw psi is a right-handed rotation about +Y: psi = 0 faces +Z,
// psi = pi/2 faces +X.

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi]. Ties at pi map to +pi.
double normalize_angle(double a);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Unit quaternion, scalar first.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(const Vec3& axis, double angle);
  /// Rotation about +Y (world up) by psi.
  static Quat from_yaw(double psi);

  friend bool operator==(const Quat&, const Quat&) = default;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const;
  Quat conjugate() const { return {w, -x, -y, -z}; }
  Vec3 rotate(const Vec3& v) const;
  double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  /// Heading about +Y of the rotated body +Z axis.
  double yaw() const;
  /// Angle of the rotation in [0, pi].
  double angle() const;
};

Quat operator*(const Quat& a, const Quat& b);

/// Spherical interpolation along the shortest arc. t = 0 gives q0, t = 1 gives q1
/// (or its antipode, which is the same rotation).
Quat slerp(const Quat& q0, const Quat& q1, double t);

/// Rigid transform. Maps points from the child frame into the parent frame.
struct Pose3 {
  Quat rotation;
  Vec3 translation;

  static Pose3 identity() { return {}; }
  static Pose3 from_translation(const Vec3& t) { return {Quat::identity(), t}; }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }

  /// Wire order [qx, qy, qz, qw, x, y, z] (vector part first, scalar last).
  std::array<double, 7> to_wire() const;
  static Pose3 from_wire(const std::array<double, 7>& w);
};

/// a * b: applies b first, then a.
Pose3 compose(const Pose3& a, const Pose3& b);
Pose3 inverse(const Pose3& p);

/// Planar pose on the X-Z ground plane.
struct Pose2 {
  double x = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double z_, double yaw_) : x(x_), z(z_), yaw(normalize_angle(yaw_)) {}

  friend bool operator==(const Pose2&, const Pose2&) = default;

  /// Unit heading (x, z) of body forward.
  std::array<double, 2> forward() const { return {std::sin(yaw), std::cos(yaw)}; }
  /// Unit (x, z) of body left.
  std::array<double, 2> left() const { return {std::cos(yaw), -std::sin(yaw)}; }

  /// Lifts to SE(3) at the given height.
  Pose3 to_pose3(double height = 0.0) const;
  static Pose2 from_pose3(const Pose3& p);

  /// World-frame displacement (dx, dz) expressed in the body frame (forward, left).
  std::array<double, 2> to_body(double dx, double dz) const;
  /// Body (forward, left) vector rotated into world (dx, dz).
  std::array<double, 2> to_world(double forward_m, double left_m) const;
};

/// Chassis velocity in the body frame: vx forward, vy left, omega = d(yaw)/dt.
struct Twist2 {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;

  friend bool operator==(const Twist2&, const Twist2&) = default;
  double speed() const { return std::hypot(vx, vy); }
  bool finite() const { return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(omega); }
};

/// Integrates a constant body twist over dt exactly (arc motion).
Pose2 integrate(const Pose2& p, const Twist2& v, double dt);

/// Body-frame increment (forward, left, dyaw) from a to b.
struct PlanarDelta {
  double forward = 0.0;
  double left = 0.0;
  double yaw = 0.0;
};
PlanarDelta relative(const Pose2& a, const Pose2& b);
Pose2 apply(const Pose2& p, const PlanarDelta& d);

}  // namespace yor
