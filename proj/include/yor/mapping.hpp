#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "yor/frames.hpp"

namespace yor::mapping {

struct PointCloud {
  std::vector<Vec3> points;
  double stamp = 0.0;
};

enum class PoseQuality : std::uint8_t { kGood, kDegraded };

struct VoxelKey {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;
  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(k.x);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(k.y);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(k.z);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Sparse world-frame voxel set with per-voxel hit counts. One representative
/// (the voxel center) stands for all points that fell into a voxel.
class VoxelMap {
 public:
  explicit VoxelMap(double voxel_size = 0.02);

  double voxel_size() const { return voxel_size_; }
  VoxelKey key_of(const Vec3& p) const;
  Vec3 center(const VoxelKey& k) const;

  void add(const VoxelKey& k, std::uint32_t hits = 1) { hits_[k] += hits; }
  std::uint32_t hits(const VoxelKey& k) const;
  std::size_t size() const { return hits_.size(); }
  const std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash>& voxels() const { return hits_; }
  void clear() { hits_.clear(); }

  friend bool operator==(const VoxelMap&, const VoxelMap&) = default;

 private:
  double voxel_size_;
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> hits_;
};

/// Row-major 2D grid on the X-Z plane. Column index runs along +X, row along +Z.
struct GridGeometry {
  double origin_x = 0.0;  // world x of the lower corner of cell (0, 0)
  double origin_z = 0.0;
  double cell_size = 0.05;
  int width = 0;   // columns
  int height = 0;  // rows

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;

  std::size_t cell_count() const { return static_cast<std::size_t>(width) * height; }
  bool contains(int col, int row) const { return col >= 0 && row >= 0 && col < width && row < height; }
  std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
  std::optional<std::pair<int, int>> cell_of(double x, double z) const;
  std::pair<double, double> center(int col, int row) const {
    return {origin_x + (col + 0.5) * cell_size, origin_z + (row + 0.5) * cell_size};
  }
};

enum class CellState : std::uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

struct OccupancyGrid {
  GridGeometry geometry;
  std::vector<CellState> cells;

  explicit OccupancyGrid(GridGeometry g = {})
      : geometry(g), cells(g.cell_count(), CellState::kUnknown) {}
  CellState at(int col, int row) const { return cells[geometry.index(col, row)]; }
  CellState& at(int col, int row) { return cells[geometry.index(col, row)]; }
  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;
};

inline constexpr std::uint8_t kLethal = 255;

struct CostMap {
  GridGeometry geometry;
  std::vector<std::uint8_t> cost;
  std::vector<std::uint8_t> unknown;  // 1 where the source cell was never observed

  explicit CostMap(GridGeometry g = {})
      : geometry(g), cost(g.cell_count(), 0), unknown(g.cell_count(), 0) {}
  std::uint8_t at(int col, int row) const { return cost[geometry.index(col, row)]; }
  bool lethal(int col, int row) const { return at(col, row) == kLethal; }
  friend bool operator==(const CostMap&, const CostMap&) = default;
};

struct FloorEstimate {
  double height = 0.0;
  bool initialized = false;
  bool stale = false;
  double alpha = 0.2;  // weight of the new sample
  double band = 0.1;   // m above the 5th percentile that is averaged
};

struct MappingParams {
  double voxel_size = 0.02;
  double outlier_radius = 0.12;
  int outlier_neighbors = 3;
  double occupancy_floor_band = 0.25;
  double robot_height = 1.5;
  double robot_radius = 0.3;
  double soft_band = 0.2;
  double fuse_lambda = 0.5;
};

/// Keeps points with at least min_neighbors other points within radius.
PointCloud reject_outliers(const PointCloud& cloud, double radius = 0.12, int min_neighbors = 3);

/// Percentile with linear interpolation between order statistics.
double percentile(std::span<const double> values, double q);

/// Instantaneous floor = mean vertical coordinate in [p5, p5 + band]; the
/// state height is an EMA of the instantaneous values. Empty cloud marks the
/// estimate stale and leaves the height unchanged.
FloorEstimate estimate_floor(const PointCloud& world_cloud, FloorEstimate state);

/// Quantizes sensor points transformed by sensor_pose into the map. A degraded
/// pose leaves the map untouched.
void integrate_cloud(VoxelMap& map, const PointCloud& cloud, const Pose3& sensor_pose,
                     PoseQuality quality);
VoxelMap integrated(VoxelMap map, const PointCloud& cloud, const Pose3& sensor_pose,
                    PoseQuality quality);

/// Voxels up to floor_band above the floor observe free cells; voxels in
/// (floor_band, robot_height] mark their cell occupied; higher voxels are
/// ignored. Cells without observations stay unknown.
OccupancyGrid project_occupancy(const VoxelMap& map, const FloorEstimate& floor,
                                const GridGeometry& geometry, double floor_band = 0.25,
                                double robot_height = 1.5);

/// Cells within robot_radius of an occupied cell are lethal; the cost then
/// decays linearly to zero across soft_band. Unknown cells cost 0 and stay flagged.
CostMap inflate(const OccupancyGrid& grid, double robot_radius = 0.3, double soft_band = 0.2);

/// Cost of a cell at distance d from the nearest obstacle.
std::uint8_t inflation_cost(double distance, double robot_radius, double soft_band);

class GeometryMismatch : public std::invalid_argument {
 public:
  GeometryMismatch() : std::invalid_argument("cost map geometry mismatch") {}
};

/// Per-cell (1 - lambda) * global + lambda * local; lethal in either stays lethal.
CostMap fuse(const CostMap& global_map, const CostMap& local_map, double lambda = 0.5);

/// Nearest-cell resampling of a map into another grid geometry. Cells outside
/// the source map are zero cost and flagged unknown.
CostMap resample(const CostMap& source, const GridGeometry& target);

/// Serial reference kernels, same results as the parallel versions.
namespace serial {
PointCloud reject_outliers(const PointCloud& cloud, double radius = 0.12, int min_neighbors = 3);
CostMap inflate(const OccupancyGrid& grid, double robot_radius = 0.3, double soft_band = 0.2);
}  // namespace serial

// Wire layouts (little-endian).
//   cloud:   u32 count, then count x (f32 x, f32 y, f32 z)
//   costmap: f64 origin_x, f64 origin_z, f64 origin_yaw (always 0), f64 cell_size,
//            u32 width, u32 height, then width*height cost bytes, row-major
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_costmap(const CostMap& map);
CostMap decode_costmap(std::span<const std::uint8_t> bytes);

}  // namespace yor::mapping
