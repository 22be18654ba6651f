#pragma once

#include <stdexcept>
#include <vector>

#include "yor/base_control.hpp"
#include "yor/frames.hpp"
#include "yor/mapping.hpp"

namespace yor::planner {

struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct Path {
  std::vector<Cell> cells;  // start to goal, 8-adjacent
  double cost = 0.0;
  /// The goal had no cell center within the acceptance radius; the nearest cell was used.
  bool goal_approximated = false;
};

struct PlannerParams {
  double heuristic_weight = 1.2;
  double cost_scale = 1.0 / 64.0;   // beta: edge factor 1 + beta * cell cost
  double goal_radius = 0.02;        // m
  bool avoid_unknown = false;
};

class PlanError : public std::runtime_error {
 public:
  enum class Reason { kStartBlocked, kNoPath };
  explicit PlanError(Reason r)
      : std::runtime_error(r == Reason::kStartBlocked ? "start blocked" : "no path"), reason(r) {}
  Reason reason;
};

/// Weighted A* over the 8-connected grid. Edge cost is the metric step length
/// times (1 + beta * cost of the entered cell); the heuristic is w times the
/// octile distance. Ties break on lower f, then lower h, then row-major index.
Path plan(const mapping::CostMap& map, const Pose2& start, const Pose2& goal,
          const PlannerParams& params = {});

/// Subsamples cell centers greedily: each kept waypoint is the farthest
/// following cell still within the target spacing (2 cells) of the previous one.
/// The last cell is always kept.
control::Waypoints extract_waypoints(const Path& path, const mapping::GridGeometry& geometry);

/// True iff a cell of the path at or after from_index is lethal in the map.
bool needs_replan(const Path& path, const mapping::CostMap& map, std::size_t from_index = 0);

/// Index of the path cell nearest to a world position, searched from hint onward.
std::size_t nearest_cell_index(const Path& path, const mapping::GridGeometry& geometry, double x,
                               double z, std::size_t hint = 0);

}  // namespace yor::planner
