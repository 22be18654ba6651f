#include "yor/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>

namespace yor::planner {

namespace {

constexpr std::array<std::array<int, 2>, 8> kNeighbors = {
    {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

struct OpenEntry {
  double f;
  double h;
  std::uint32_t index;
  // Min-heap on (f, h, index).
  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return index > o.index;
  }
};

bool blocked(const mapping::CostMap& map, std::size_t idx, bool avoid_unknown) {
  return map.cost[idx] == mapping::kLethal || (avoid_unknown && map.unknown[idx]);
}

}  // namespace

Path plan(const mapping::CostMap& map, const Pose2& start, const Pose2& goal,
          const PlannerParams& params) {
  using Reason = PlanError::Reason;
  const auto& g = map.geometry;
  const auto start_cell = g.cell_of(start.x, start.z);
  if (!start_cell) throw PlanError(Reason::kStartBlocked);
  const std::size_t start_idx = g.index(start_cell->first, start_cell->second);
  if (blocked(map, start_idx, params.avoid_unknown)) throw PlanError(Reason::kStartBlocked);

  // Goal acceptance region: cells whose centers are within goal_radius.
  std::vector<std::uint8_t> is_goal(g.cell_count(), 0);
  std::vector<Cell> goal_cells;
  const int reach = static_cast<int>(std::ceil(params.goal_radius / g.cell_size)) + 1;
  const int gc = static_cast<int>(std::floor((goal.x - g.origin_x) / g.cell_size));
  const int gr = static_cast<int>(std::floor((goal.z - g.origin_z) / g.cell_size));
  for (int r = gr - reach; r <= gr + reach; ++r) {
    for (int c = gc - reach; c <= gc + reach; ++c) {
      if (!g.contains(c, r)) continue;
      const auto [cx, cz] = g.center(c, r);
      if (std::hypot(cx - goal.x, cz - goal.z) <= params.goal_radius) goal_cells.push_back({c, r});
    }
  }
  bool approximated = false;
  if (goal_cells.empty()) {
    const int c = std::clamp(gc, 0, g.width - 1);
    const int r = std::clamp(gr, 0, g.height - 1);
    goal_cells.push_back({c, r});
    approximated = true;
  }
  std::erase_if(goal_cells, [&](const Cell& c) {
    return blocked(map, g.index(c.col, c.row), params.avoid_unknown);
  });
  if (goal_cells.empty()) throw PlanError(Reason::kNoPath);
  for (const Cell& c : goal_cells) is_goal[g.index(c.col, c.row)] = 1;

  const double cs = g.cell_size;
  auto heuristic = [&](int col, int row) {
    double best = std::numeric_limits<double>::infinity();
    for (const Cell& gcell : goal_cells) {
      const double dx = std::abs(col - gcell.col);
      const double dy = std::abs(row - gcell.row);
      const double octile = std::max(dx, dy) + (std::sqrt(2.0) - 1.0) * std::min(dx, dy);
      best = std::min(best, octile * cs);
    }
    return params.heuristic_weight * best;
  };

  const std::size_t n = g.cell_count();
  std::vector<double> cost_so_far(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> parent(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint8_t> closed(n, 0);
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open;

  cost_so_far[start_idx] = 0.0;
  {
    const double h = heuristic(start_cell->first, start_cell->second);
    open.push({h, h, static_cast<std::uint32_t>(start_idx)});
  }

  std::int64_t reached = -1;
  while (!open.empty()) {
    const OpenEntry cur = open.top();
    open.pop();
    if (closed[cur.index]) continue;
    closed[cur.index] = 1;
    if (is_goal[cur.index]) {
      reached = cur.index;
      break;
    }
    const int col = static_cast<int>(cur.index % g.width);
    const int row = static_cast<int>(cur.index / g.width);
    for (const auto& d : kNeighbors) {
      const int nc = col + d[0];
      const int nr = row + d[1];
      if (!g.contains(nc, nr)) continue;
      const std::size_t ni = g.index(nc, nr);
      if (closed[ni] || blocked(map, ni, params.avoid_unknown)) continue;
      const double step = (d[0] != 0 && d[1] != 0) ? std::sqrt(2.0) * cs : cs;
      const double next = cost_so_far[cur.index] + step * (1.0 + params.cost_scale * map.cost[ni]);
      if (next < cost_so_far[ni]) {
        cost_so_far[ni] = next;
        parent[ni] = cur.index;
        const double h = heuristic(nc, nr);
        open.push({next + h, h, static_cast<std::uint32_t>(ni)});
      }
    }
  }
  if (reached < 0) throw PlanError(Reason::kNoPath);

  Path path;
  path.cost = cost_so_far[reached];
  path.goal_approximated = approximated;
  for (auto i = static_cast<std::uint32_t>(reached); i != std::numeric_limits<std::uint32_t>::max();
       i = parent[i]) {
    path.cells.push_back({static_cast<int>(i % g.width), static_cast<int>(i / g.width)});
    if (i == start_idx) break;
  }
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

control::Waypoints extract_waypoints(const Path& path, const mapping::GridGeometry& geometry) {
  control::Waypoints wp;
  if (path.cells.empty()) return wp;
  const double spacing = 2.0 * geometry.cell_size;
  auto center = [&](std::size_t i) {
    const auto [x, z] = geometry.center(path.cells[i].col, path.cells[i].row);
    return control::Point2{x, z};
  };
  std::size_t last = 0;
  wp.points.push_back(center(0));
  while (last + 1 < path.cells.size()) {
    const control::Point2 a = center(last);
    std::size_t next = last + 1;
    while (next + 1 < path.cells.size()) {
      const control::Point2 b = center(next + 1);
      if (std::hypot(b.x - a.x, b.z - a.z) > spacing + 1e-9) break;
      ++next;
    }
    wp.points.push_back(center(next));
    last = next;
  }
  return wp;
}

bool needs_replan(const Path& path, const mapping::CostMap& map, std::size_t from_index) {
  for (std::size_t i = from_index; i < path.cells.size(); ++i) {
    const Cell& c = path.cells[i];
    if (!map.geometry.contains(c.col, c.row)) continue;
    if (map.lethal(c.col, c.row)) return true;
  }
  return false;
}

std::size_t nearest_cell_index(const Path& path, const mapping::GridGeometry& geometry, double x,
                               double z, std::size_t hint) {
  std::size_t best = std::min(hint, path.cells.empty() ? 0 : path.cells.size() - 1);
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = best; i < path.cells.size(); ++i) {
    const auto [cx, cz] = geometry.center(path.cells[i].col, path.cells[i].row);
    const double d = std::hypot(cx - x, cz - z);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace yor::planner
