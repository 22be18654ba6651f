#include "yor/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "yor/wire.hpp"

namespace yor::mapping {

VoxelMap::VoxelMap(double voxel_size) : voxel_size_(voxel_size) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel size must be positive");
}

VoxelKey VoxelMap::key_of(const Vec3& p) const {
  return {static_cast<std::int32_t>(std::floor(p.x / voxel_size_)),
          static_cast<std::int32_t>(std::floor(p.y / voxel_size_)),
          static_cast<std::int32_t>(std::floor(p.z / voxel_size_))};
}

Vec3 VoxelMap::center(const VoxelKey& k) const {
  return {(k.x + 0.5) * voxel_size_, (k.y + 0.5) * voxel_size_, (k.z + 0.5) * voxel_size_};
}

std::uint32_t VoxelMap::hits(const VoxelKey& k) const {
  const auto it = hits_.find(k);
  return it == hits_.end() ? 0 : it->second;
}

std::optional<std::pair<int, int>> GridGeometry::cell_of(double x, double z) const {
  const double c = std::floor((x - origin_x) / cell_size);
  const double r = std::floor((z - origin_z) / cell_size);
  if (c < 0 || r < 0 || c >= width || r >= height) return std::nullopt;
  return std::pair{static_cast<int>(c), static_cast<int>(r)};
}

namespace {

using Buckets = std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash>;

VoxelKey bucket_of(const Vec3& p, double cell) {
  return {static_cast<std::int32_t>(std::floor(p.x / cell)),
          static_cast<std::int32_t>(std::floor(p.y / cell)),
          static_cast<std::int32_t>(std::floor(p.z / cell))};
}

Buckets build_buckets(const std::vector<Vec3>& pts, double cell) {
  Buckets b;
  for (std::uint32_t i = 0; i < pts.size(); ++i) b[bucket_of(pts[i], cell)].push_back(i);
  return b;
}

// Neighbors of point i within radius, stopping once `enough` are found.
int count_neighbors(const std::vector<Vec3>& pts, const Buckets& buckets, std::size_t i,
                    double cell, double r2, int enough) {
  const Vec3& p = pts[i];
  const VoxelKey k = bucket_of(p, cell);
  int n = 0;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        const auto it = buckets.find({k.x + dx, k.y + dy, k.z + dz});
        if (it == buckets.end()) continue;
        for (const std::uint32_t j : it->second) {
          if (j == i) continue;
          const Vec3 d = pts[j] - p;
          if (d.dot(d) <= r2 && ++n >= enough) return n;
        }
      }
    }
  }
  return n;
}

PointCloud gather(const PointCloud& cloud, const std::vector<std::uint8_t>& keep) {
  PointCloud out;
  out.stamp = cloud.stamp;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.points.push_back(cloud.points[i]);
  }
  return out;
}

// Offsets within max_cells, sorted by distance (ties row-major for determinism).
struct Offset {
  int dc;
  int dr;
  int d2;
};

std::vector<Offset> sorted_offsets(int max_cells) {
  std::vector<Offset> offs;
  for (int dr = -max_cells; dr <= max_cells; ++dr) {
    for (int dc = -max_cells; dc <= max_cells; ++dc) {
      const int d2 = dc * dc + dr * dr;
      if (d2 <= max_cells * max_cells) offs.push_back({dc, dr, d2});
    }
  }
  std::stable_sort(offs.begin(), offs.end(),
                   [](const Offset& a, const Offset& b) { return a.d2 < b.d2; });
  return offs;
}

// Summed-area table of occupied cells, (width + 1) x (height + 1).
std::vector<int> occupied_sums(const OccupancyGrid& grid) {
  const GridGeometry& g = grid.geometry;
  const int w = g.width + 1;
  std::vector<int> s(static_cast<std::size_t>(w) * (g.height + 1), 0);
  for (int r = 0; r < g.height; ++r) {
    int run = 0;
    for (int c = 0; c < g.width; ++c) {
      run += grid.at(c, r) == CellState::kOccupied ? 1 : 0;
      s[(r + 1) * w + c + 1] = s[r * w + c + 1] + run;
    }
  }
  return s;
}

int occupied_in_window(const std::vector<int>& s, const GridGeometry& g, int c0, int r0, int c1,
                       int r1) {
  c0 = std::max(c0, 0);
  r0 = std::max(r0, 0);
  c1 = std::min(c1, g.width - 1);
  r1 = std::min(r1, g.height - 1);
  if (c0 > c1 || r0 > r1) return 0;
  const int w = g.width + 1;
  return s[(r1 + 1) * w + c1 + 1] - s[r0 * w + c1 + 1] - s[(r1 + 1) * w + c0] + s[r0 * w + c0];
}

void inflate_row(const OccupancyGrid& grid, const std::vector<Offset>& offs,
                 const std::vector<int>& sums, int reach, double robot_radius, double soft_band,
                 int row, CostMap& out) {
  const GridGeometry& g = grid.geometry;
  for (int col = 0; col < g.width; ++col) {
    const std::size_t idx = g.index(col, row);
    out.unknown[idx] = grid.cells[idx] == CellState::kUnknown ? 1 : 0;
    std::uint8_t cost = 0;
    // Nothing occupied in the bounding square: no offset can hit.
    if (occupied_in_window(sums, g, col - reach, row - reach, col + reach, row + reach) == 0) {
      out.cost[idx] = 0;
      continue;
    }
    for (const Offset& o : offs) {
      const int c = col + o.dc;
      const int r = row + o.dr;
      if (!g.contains(c, r) || grid.at(c, r) != CellState::kOccupied) continue;
      cost = inflation_cost(g.cell_size * std::sqrt(static_cast<double>(o.d2)), robot_radius,
                            soft_band);
      break;
    }
    out.cost[idx] = cost;
  }
}

int inflation_cells(const GridGeometry& g, double robot_radius, double soft_band) {
  return static_cast<int>(std::ceil((robot_radius + soft_band) / g.cell_size + 1e-9));
}

}  // namespace

PointCloud reject_outliers(const PointCloud& cloud, double radius, int min_neighbors) {
  const auto& pts = cloud.points;
  const Buckets buckets = build_buckets(pts, radius);
  const double r2 = radius * radius;
  std::vector<std::uint8_t> keep(pts.size(), 0);
  const auto n = static_cast<std::int64_t>(pts.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) {
    keep[i] = count_neighbors(pts, buckets, i, radius, r2, min_neighbors) >= min_neighbors;
  }
  return gather(cloud, keep);
}

PointCloud serial::reject_outliers(const PointCloud& cloud, double radius, int min_neighbors) {
  const auto& pts = cloud.points;
  const Buckets buckets = build_buckets(pts, radius);
  const double r2 = radius * radius;
  std::vector<std::uint8_t> keep(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    keep[i] = count_neighbors(pts, buckets, i, radius, r2, min_neighbors) >= min_neighbors;
  }
  return gather(cloud, keep);
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  std::vector<double> v(values.begin(), values.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + lo, v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + lo + 1, v.end());
  return a + (pos - lo) * (b - a);
}

FloorEstimate estimate_floor(const PointCloud& world_cloud, FloorEstimate state) {
  if (world_cloud.points.empty()) {
    state.stale = true;
    return state;
  }
  std::vector<double> ys;
  ys.reserve(world_cloud.points.size());
  for (const auto& p : world_cloud.points) ys.push_back(p.y);
  const double p5 = percentile(ys, 0.05);
  double sum = 0.0;
  std::size_t n = 0;
  for (const double y : ys) {
    if (y >= p5 && y <= p5 + state.band) {
      sum += y;
      ++n;
    }
  }
  const double instant = sum / static_cast<double>(n);
  state.height = state.initialized ? state.alpha * instant + (1.0 - state.alpha) * state.height
                                   : instant;
  state.initialized = true;
  state.stale = false;
  return state;
}

void integrate_cloud(VoxelMap& map, const PointCloud& cloud, const Pose3& sensor_pose,
                     PoseQuality quality) {
  if (quality == PoseQuality::kDegraded) return;
  for (const auto& p : cloud.points) map.add(map.key_of(sensor_pose.apply(p)));
}

VoxelMap integrated(VoxelMap map, const PointCloud& cloud, const Pose3& sensor_pose,
                    PoseQuality quality) {
  integrate_cloud(map, cloud, sensor_pose, quality);
  return map;
}

OccupancyGrid project_occupancy(const VoxelMap& map, const FloorEstimate& floor,
                                const GridGeometry& geometry, double floor_band,
                                double robot_height) {
  OccupancyGrid grid(geometry);
  for (const auto& [key, hits] : map.voxels()) {
    const Vec3 c = map.center(key);
    const double h = c.y - floor.height;
    if (h > robot_height) continue;
    const auto cell = geometry.cell_of(c.x, c.z);
    if (!cell) continue;
    CellState& s = grid.at(cell->first, cell->second);
    if (h > floor_band) {
      s = CellState::kOccupied;
    } else if (s == CellState::kUnknown) {
      s = CellState::kFree;
    }
  }
  return grid;
}

std::uint8_t inflation_cost(double distance, double robot_radius, double soft_band) {
  constexpr double kEps = 1e-9;
  if (distance <= robot_radius + kEps) return kLethal;
  if (distance > robot_radius + soft_band + kEps) return 0;
  const double frac = 1.0 - (distance - robot_radius) / soft_band;
  return static_cast<std::uint8_t>(std::clamp(std::lround(254.0 * frac), 0L, 254L));
}

CostMap inflate(const OccupancyGrid& grid, double robot_radius, double soft_band) {
  CostMap out(grid.geometry);
  const int reach = inflation_cells(grid.geometry, robot_radius, soft_band);
  const auto offs = sorted_offsets(reach);
  const auto sums = occupied_sums(grid);
  const int rows = grid.geometry.height;
#pragma omp parallel for schedule(static)
  for (int row = 0; row < rows; ++row) {
    inflate_row(grid, offs, sums, reach, robot_radius, soft_band, row, out);
  }
  return out;
}

CostMap serial::inflate(const OccupancyGrid& grid, double robot_radius, double soft_band) {
  CostMap out(grid.geometry);
  const int reach = inflation_cells(grid.geometry, robot_radius, soft_band);
  const auto offs = sorted_offsets(reach);
  const auto sums = occupied_sums(grid);
  for (int row = 0; row < grid.geometry.height; ++row) {
    inflate_row(grid, offs, sums, reach, robot_radius, soft_band, row, out);
  }
  return out;
}

CostMap fuse(const CostMap& global_map, const CostMap& local_map, double lambda) {
  if (!(global_map.geometry == local_map.geometry)) throw GeometryMismatch();
  CostMap out(global_map.geometry);
  for (std::size_t i = 0; i < out.cost.size(); ++i) {
    const std::uint8_t g = global_map.cost[i];
    const std::uint8_t l = local_map.cost[i];
    if (g == kLethal || l == kLethal) {
      out.cost[i] = kLethal;
    } else {
      const double v = (1.0 - lambda) * g + lambda * l;
      out.cost[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 254L));
    }
    out.unknown[i] = global_map.unknown[i] && local_map.unknown[i];
  }
  return out;
}

CostMap resample(const CostMap& source, const GridGeometry& target) {
  CostMap out(target);
  for (int row = 0; row < target.height; ++row) {
    for (int col = 0; col < target.width; ++col) {
      const auto [x, z] = target.center(col, row);
      const std::size_t idx = target.index(col, row);
      const auto src = source.geometry.cell_of(x, z);
      if (!src) {
        out.unknown[idx] = 1;
        continue;
      }
      const std::size_t s = source.geometry.index(src->first, src->second);
      out.cost[idx] = source.cost[s];
      out.unknown[idx] = source.unknown[s];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  wire::Writer w;
  w.le(static_cast<std::uint32_t>(cloud.points.size()));
  for (const auto& p : cloud.points) {
    w.le(static_cast<float>(p.x));
    w.le(static_cast<float>(p.y));
    w.le(static_cast<float>(p.z));
  }
  return w.take();
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  const auto n = r.le<std::uint32_t>();
  if (r.remaining() != static_cast<std::size_t>(n) * 12) throw wire::DecodeError("cloud size mismatch");
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float x = r.le<float>();
    const float y = r.le<float>();
    const float z = r.le<float>();
    cloud.points.push_back({x, y, z});
  }
  return cloud;
}

std::vector<std::uint8_t> encode_costmap(const CostMap& map) {
  const auto& g = map.geometry;
  wire::Writer w;
  w.le(g.origin_x);
  w.le(g.origin_z);
  w.le(0.0);
  w.le(g.cell_size);
  w.le(static_cast<std::uint32_t>(g.width));
  w.le(static_cast<std::uint32_t>(g.height));
  w.bytes(map.cost);
  return w.take();
}

CostMap decode_costmap(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  GridGeometry g;
  g.origin_x = r.le<double>();
  g.origin_z = r.le<double>();
  (void)r.le<double>();
  g.cell_size = r.le<double>();
  g.width = static_cast<int>(r.le<std::uint32_t>());
  g.height = static_cast<int>(r.le<std::uint32_t>());
  if (r.remaining() != g.cell_count()) throw wire::DecodeError("costmap size mismatch");
  CostMap map(g);
  const auto cells = r.bytes(g.cell_count());
  std::copy(cells.begin(), cells.end(), map.cost.begin());
  return map;
}

}  // namespace yor::mapping
