#pragma once

// Independent reference implementations used only by tests. They share no
// code with the library beyond plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "yor/frames.hpp"
#include "yor/mapping.hpp"

namespace oracle {

using Mat4 = std::array<std::array<double, 4>, 4>;

inline Mat4 identity4() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

/// Homogeneous matrix from axis-angle via Rodrigues (no quaternion algebra).
inline Mat4 from_axis_angle(const yor::Vec3& axis, double angle, const yor::Vec3& t) {
  const double n = axis.norm();
  const double kx = axis.x / n, ky = axis.y / n, kz = axis.z / n;
  const double c = std::cos(angle), s = std::sin(angle), v = 1.0 - c;
  Mat4 m = identity4();
  m[0] = {c + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s, t.x};
  m[1] = {ky * kx * v + kz * s, c + ky * ky * v, ky * kz * v - kx * s, t.y};
  m[2] = {kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v, t.z};
  return m;
}

/// Homogeneous matrix from a quaternion by the textbook element formula.
inline Mat4 from_pose(const yor::Pose3& p) {
  const auto& q = p.rotation;
  Mat4 m = identity4();
  m[0] = {1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.z * q.w), 2 * (q.x * q.z + q.y * q.w),
          p.translation.x};
  m[1] = {2 * (q.x * q.y + q.z * q.w), 1 - 2 * (q.x * q.x + q.z * q.z), 2 * (q.y * q.z - q.x * q.w),
          p.translation.y};
  m[2] = {2 * (q.x * q.z - q.y * q.w), 2 * (q.y * q.z + q.x * q.w), 1 - 2 * (q.x * q.x + q.y * q.y),
          p.translation.z};
  return m;
}

inline Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// General 4x4 inverse by Gauss-Jordan with partial pivoting.
inline Mat4 invert(Mat4 a) {
  Mat4 inv = identity4();
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = a[col][col];
    for (int j = 0; j < 4; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int j = 0; j < 4; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

inline double max_abs_diff(const Mat4& a, const Mat4& b) {
  double m = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

/// Rigid-body velocity v + w x r in the planar body frame (forward, left).
inline std::array<double, 2> rigid_velocity(double vx, double vy, double w, double r_forward,
                                            double r_left) {
  return {vx - w * r_left, vy + w * r_forward};
}

/// Solves the 3x3 system A x = b by Cramer's rule.
inline std::array<double, 3> solve3(const std::array<std::array<double, 3>, 3>& A,
                                    const std::array<double, 3>& b) {
  auto det = [](const std::array<std::array<double, 3>, 3>& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double d = det(A);
  std::array<double, 3> x{};
  for (int k = 0; k < 3; ++k) {
    auto Ak = A;
    for (int i = 0; i < 3; ++i) Ak[i][k] = b[i];
    x[k] = det(Ak) / d;
  }
  return x;
}

/// Least-squares twist through the normal equations (C^T C) x = C^T y for an
/// 8x3 coupling matrix given row by row.
inline std::array<double, 3> normal_equations(const std::vector<std::array<double, 3>>& C,
                                              const std::vector<double>& y) {
  std::array<std::array<double, 3>, 3> A{};
  std::array<double, 3> b{};
  for (std::size_t r = 0; r < C.size(); ++r) {
    for (int i = 0; i < 3; ++i) {
      b[i] += C[r][i] * y[r];
      for (int j = 0; j < 3; ++j) A[i][j] += C[r][i] * C[r][j];
    }
  }
  return solve3(A, b);
}

/// O(n^2) neighbor counting.
inline std::vector<bool> brute_force_inliers(const std::vector<yor::Vec3>& pts, double radius,
                                             int min_neighbors) {
  std::vector<bool> keep(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int count = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i != j && (pts[i] - pts[j]).norm() <= radius) ++count;
    }
    keep[i] = count >= min_neighbors;
  }
  return keep;
}

/// Exact Euclidean distance (m) from each cell center to the nearest occupied
/// cell center, by exhaustive search.
inline std::vector<double> distance_transform(const yor::mapping::OccupancyGrid& grid) {
  const auto& g = grid.geometry;
  std::vector<std::pair<int, int>> occ;
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c)
      if (grid.at(c, r) == yor::mapping::CellState::kOccupied) occ.emplace_back(c, r);
  std::vector<double> d(g.cell_count(), std::numeric_limits<double>::infinity());
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [oc, orow] : occ) best = std::min(best, std::hypot(c - oc, r - orow));
      d[g.index(c, r)] = best * g.cell_size;
    }
  }
  return d;
}

/// Dijkstra on the 8-connected grid with edge cost step * (1 + beta * cost of
/// the entered cell). Returns the optimal cost to the goal cell, or infinity.
inline double dijkstra(const yor::mapping::CostMap& map, int sc, int sr, int gc, int gr,
                       double beta) {
  const auto& g = map.geometry;
  std::vector<double> dist(g.cell_count(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const std::size_t s = g.index(sc, sr);
  dist[s] = 0.0;
  pq.push({0.0, s});
  while (!pq.empty()) {
    const auto [d, i] = pq.top();
    pq.pop();
    if (d > dist[i]) continue;
    const int c = static_cast<int>(i % g.width), r = static_cast<int>(i / g.width);
    if (c == gc && r == gr) return d;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int nc = c + dc, nr = r + dr;
        if (nc < 0 || nr < 0 || nc >= g.width || nr >= g.height) continue;
        const std::size_t ni = g.index(nc, nr);
        if (map.cost[ni] == yor::mapping::kLethal) continue;
        const double step = std::hypot(dc, dr) * g.cell_size;
        const double nd = d + step * (1.0 + beta * map.cost[ni]);
        if (nd < dist[ni]) {
          dist[ni] = nd;
          pq.push({nd, ni});
        }
      }
    }
  }
  return std::numeric_limits<double>::infinity();
}

/// 5th percentile (linear interpolation on the sorted sample) plus band mean.
inline double floor_formula(std::vector<double> ys, double band) {
  std::sort(ys.begin(), ys.end());
  const double pos = 0.05 * (ys.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, ys.size() - 1);
  const double p5 = ys[lo] + (pos - lo) * (ys[hi] - ys[lo]);
  double sum = 0.0;
  int n = 0;
  for (double y : ys) {
    if (y >= p5 && y <= p5 + band) {
      sum += y;
      ++n;
    }
  }
  return sum / n;
}

}  // namespace oracle
