#include "yor/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>
#include <tuple>

#include "yor/messages.hpp"

#ifndef YOR_SCENE_DIR
#define YOR_SCENE_DIR "scenes"
#endif

namespace yor::harness {

namespace {

using WallClock = std::chrono::steady_clock;
using Bytes = std::vector<std::uint8_t>;
using control::Point2;

std::uint64_t to_us(double t) { return static_cast<std::uint64_t>(std::llround(t * 1e6)); }
double from_us(std::uint64_t us) { return static_cast<double>(us) * 1e-6; }

// Fires at a fixed rate on the sim clock; k-th firing at the first step with t >= k / rate.
class Periodic {
 public:
  explicit Periodic(double rate) : period_(rate > 0.0 ? 1.0 / rate : 0.0) {}

  bool due(double t) {
    if (period_ <= 0.0) return false;
    if (t + 1e-9 < static_cast<double>(k_) * period_) return false;
    while (static_cast<double>(k_) * period_ <= t + 1e-9) ++k_;
    return true;
  }

 private:
  double period_;
  std::uint64_t k_ = 0;
};

template <class T>
std::optional<T> latest(bus::Subscription& sub) {
  std::optional<T> out;
  while (auto e = sub.try_pop()) out = std::move(*e);
  return out;
}

// ---------------------------------------------------------------------------
// Simulated robot: consumes commands, steps the world and the odometry model,
// publishes the sensor and state streams.

class World {
 public:
  World(const sim::Scene& scene, const Config& cfg, std::uint64_t seed, bus::Bus& bus, double dt)
      : scene_(scene),
        cfg_(cfg),
        dt_(dt),
        rng_(seed),
        state_(sim::initial_state(scene)),
        odom_(sim::initial_odometry(scene.robot_start)),
        twist_sub_(bus.subscribe("cmd_twist")),
        lift_sub_(bus.subscribe("cmd_lift")),
        ee_sub_(bus.subscribe("cmd_ee")),
        pose_pub_(bus.advertise("pose")),
        true_pub_(bus.advertise("true_pose")),
        cloud_pub_(bus.advertise("cloud")),
        lift_pub_(bus.advertise("lift_state")),
        ee_pub_(bus.advertise("ee_state")),
        pose_tick_(cfg.pose_rate),
        cloud_tick_(cfg.cloud_rate),
        closure_tick_(cfg.closure_rate) {
    params_.limits = cfg.limits;
    params_.footprint_radius = cfg.mapping.robot_radius;
    if (!cfg.odom_noise) noise_ = {0.0, 0.0};
    else noise_ = cfg.odom;
  }

  bool clouds = true;

  void step() {
    read_commands();
    const Twist2 base = swerve::clamp_twist(cmd_, cfg_.limits);
    const bool was_colliding = state_.collision;
    state_ = sim::step_world(scene_, state_, base, lift_cmd_, std::nullopt, dt_, params_);
    if (state_.collision && !was_colliding) ++contacts_;
    const bool occluded = scene_.occluded(state_.time);
    odom_ = sim::odometry_step(odom_, state_.robot, noise_, occluded, rng_, cfg_.keyframe_spacing);
    if (closure_tick_.due(state_.time) && cfg_.loop_closure) odom_ = sim::loop_closure_update(odom_, cfg_.closure);
    publish(occluded);
  }

  /// The arm is kinematic: a pending EE command takes effect immediately.
  void apply_pending_ee() {
    if (auto e = latest<bus::Envelope>(*ee_sub_)) {
      try {
        state_.ee_in_base = msg::parse_ee_command(e->text());
      } catch (const msg::MessageError&) {
      }
    }
  }

  double time() const { return state_.time; }
  const sim::WorldState& state() const { return state_; }
  const sim::OdomState& odom() const { return odom_; }
  std::uint64_t contacts() const { return contacts_; }
  const sim::Scene& scene() const { return scene_; }

 private:
  void read_commands() {
    while (auto e = twist_sub_->try_pop()) {
      try {
        cmd_ = msg::parse_twist(e->text());
        cmd_time_ = state_.time;
      } catch (const msg::MessageError&) {
      }
    }
    if (state_.time - cmd_time_ > cfg_.cmd_timeout + 1e-9) cmd_ = {};
    while (auto e = lift_sub_->try_pop()) {
      try {
        lift_cmd_ = msg::parse_lift_command(e->text());
      } catch (const msg::MessageError&) {
      }
    }
    apply_pending_ee();
  }

  void publish(bool occluded) {
    const std::uint64_t stamp = to_us(state_.time);
    if (pose_tick_.due(state_.time)) {
      const Pose2 est = odom_.estimate();
      pose_pub_.publish(msg::pose(est.to_pose3(0.0), odom_.quality == mapping::PoseQuality::kDegraded), stamp);
      true_pub_.publish(msg::pose(state_.robot.to_pose3(0.0)), stamp);
      lift_pub_.publish(msg::lift_state(state_.lift), stamp);
      ee_pub_.publish(msg::ee_state(state_.ee_in_base, sim::ee_world(state_.robot, state_.ee_in_base)), stamp);
    }
    if (cloud_tick_.due(state_.time) && clouds) {
      const sim::RenderRequest req{frame_++, occluded, cfg_.depth_noise};
      auto cloud = sim::render_depth(scene_, state_, scene_.camera, rng_, req);
      cloud.stamp = state_.time;
      cloud_pub_.publish(mapping::encode_cloud(cloud), stamp);
    }
  }

  sim::Scene scene_;
  const Config& cfg_;
  double dt_;
  CounterRng rng_;
  sim::SimParams params_;
  sim::OdomNoise noise_;
  sim::WorldState state_;
  sim::OdomState odom_;
  std::shared_ptr<bus::Subscription> twist_sub_, lift_sub_, ee_sub_;
  bus::Publisher pose_pub_, true_pub_, cloud_pub_, lift_pub_, ee_pub_;
  Periodic pose_tick_, cloud_tick_, closure_tick_;
  Twist2 cmd_;
  double cmd_time_ = 0.0;
  std::optional<manip::LiftCommand> lift_cmd_;
  std::uint64_t frame_ = 0;
  std::uint64_t contacts_ = 0;
};

// ---------------------------------------------------------------------------
// Mapping: voxel filter, outlier rejection, floor, occupancy, inflation.
// The global map is built until frozen; afterwards each new cloud forms a
// local map (unknown cells taken from the global map) fused into the cost map.

class Mapper {
 public:
  Mapper(bus::Bus& bus, const Config& cfg, const mapping::GridGeometry& grid, const sim::CameraModel& cam)
      : cfg_(cfg),
        grid_(grid),
        cam_(cam),
        global_(cfg.mapping.voxel_size),
        cloud_sub_(bus.subscribe("cloud")),
        pose_sub_(bus.subscribe("pose")),
        lift_sub_(bus.subscribe("lift_state")),
        costmap_pub_(bus.advertise("costmap")),
        tick_(cfg.costmap_rate) {
    floor_.alpha = cfg.floor_alpha;
    floor_.band = cfg.floor_band;
  }

  void freeze() { frozen_ = true; }
  bool live_local = true;

  void tick(double t) {
    if (auto e = latest<bus::Envelope>(*pose_sub_)) {
      const auto j = msg::parse(e->text());
      pose_ = msg::parse_pose(e->text());
      degraded_ = j.value("quality", "good") == "degraded";
    }
    if (auto e = latest<bus::Envelope>(*lift_sub_)) lift_ = msg::parse_lift_state(e->text()).height;
    while (auto e = cloud_sub_->try_pop()) integrate(*e);
    if (tick_.due(t) && dirty_) publish();
  }

  /// Forces a cost map out now (used when the global map is frozen).
  void publish() {
    if (global_dirty_) {
      global_occ_ = mapping::project_occupancy(global_, floor_, grid_, cfg_.mapping.occupancy_floor_band,
                                               cfg_.mapping.robot_height);
      global_cost_ = mapping::inflate(global_occ_, cfg_.mapping.robot_radius, cfg_.mapping.soft_band);
      global_dirty_ = false;
    }
    mapping::CostMap out = global_cost_;
    if (frozen_ && live_local && local_) {
      mapping::OccupancyGrid occ = mapping::project_occupancy(*local_, floor_, grid_,
                                                              cfg_.mapping.occupancy_floor_band,
                                                              cfg_.mapping.robot_height);
      for (std::size_t i = 0; i < occ.cells.size(); ++i) {
        if (occ.cells[i] == mapping::CellState::kUnknown) occ.cells[i] = global_occ_.cells[i];
      }
      const auto local_cost = mapping::inflate(occ, cfg_.mapping.robot_radius, cfg_.mapping.soft_band);
      out = mapping::fuse(global_cost_, local_cost, cfg_.mapping.fuse_lambda);
    }
    costmap_pub_.publish(mapping::encode_costmap(out), to_us(cloud_stamp_));
    dirty_ = false;
  }

  std::size_t clouds() const { return clouds_; }

 private:
  void integrate(const bus::Envelope& e) {
    if (degraded_) return;  // pose-quality gate
    const mapping::PointCloud cloud = mapping::decode_cloud(e.payload);
    const Pose3 sensor = sim::camera_pose(Pose2::from_pose3(pose_), lift_, cam_);

    // Voxel filter: one representative per voxel, in a deterministic order.
    mapping::VoxelMap scan(cfg_.mapping.voxel_size);
    mapping::integrate_cloud(scan, cloud, sensor, mapping::PoseQuality::kGood);
    std::vector<mapping::VoxelKey> keys;
    keys.reserve(scan.size());
    for (const auto& [k, n] : scan.voxels()) keys.push_back(k);
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
      return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
    });
    mapping::PointCloud centers;
    centers.points.reserve(keys.size());
    for (const auto& k : keys) centers.points.push_back(scan.center(k));
    const auto kept = mapping::reject_outliers(centers, cfg_.mapping.outlier_radius, cfg_.mapping.outlier_neighbors);
    floor_ = mapping::estimate_floor(kept, floor_);

    mapping::VoxelMap local(cfg_.mapping.voxel_size);
    for (const auto& p : kept.points) local.add(local.key_of(p));
    if (!frozen_) {
      for (const auto& [k, n] : local.voxels()) global_.add(k, n);
      global_dirty_ = true;
    }
    local_ = std::move(local);
    cloud_stamp_ = from_us(e.timestamp_us);
    dirty_ = true;
    ++clouds_;
  }

  const Config& cfg_;
  mapping::GridGeometry grid_;
  sim::CameraModel cam_;
  mapping::VoxelMap global_;
  std::optional<mapping::VoxelMap> local_;
  mapping::FloorEstimate floor_;
  mapping::OccupancyGrid global_occ_;
  mapping::CostMap global_cost_;
  bool global_dirty_ = true;
  bool frozen_ = false;
  bool dirty_ = false;
  double cloud_stamp_ = 0.0;
  std::size_t clouds_ = 0;
  Pose3 pose_;
  bool degraded_ = false;
  double lift_ = 0.8;
  std::shared_ptr<bus::Subscription> cloud_sub_, pose_sub_, lift_sub_;
  bus::Publisher costmap_pub_;
  Periodic tick_;
};

// ---------------------------------------------------------------------------
// Planner: serves goal requests, plans on the latest cost map, replans when
// the remaining path turns lethal, retries while no path exists.

class PlannerNode {
 public:
  PlannerNode(bus::Bus& bus, const Config& cfg, Metrics& metrics)
      : cfg_(cfg),
        metrics_(metrics),
        costmap_sub_(bus.subscribe("costmap", 2)),
        pose_sub_(bus.subscribe("pose")),
        plan_pub_(bus.advertise("plan")),
        tick_(cfg.costmap_rate) {
    bus.serve("goal", [this](const bus::Envelope& e) {
      std::string reply;
      try {
        const Pose2 g = msg::parse_goal(e.text());
        std::lock_guard lock(mu_);
        pending_goal_ = g;
        reply = msg::goal_reply(true);
      } catch (const std::exception& ex) {
        reply = msg::goal_reply(false, ex.what());
      }
      return Bytes(reply.begin(), reply.end());
    });
  }

  void tick(double t) {
    if (auto e = latest<bus::Envelope>(*pose_sub_)) est_ = Pose2::from_pose3(msg::parse_pose(e->text()));
    bool fresh = false;
    if (auto e = latest<bus::Envelope>(*costmap_sub_)) {
      map_ = mapping::decode_costmap(e->payload);
      map_stamp_ = from_us(e->timestamp_us);
      fresh = true;
    }
    {
      std::lock_guard lock(mu_);
      if (pending_goal_) {
        goal_ = *pending_goal_;
        pending_goal_.reset();
        path_.reset();
        blocked_ = false;
        ++goal_id_;
        attempt_ = true;
      }
    }
    if (!goal_ || !map_) return;
    const bool periodic = tick_.due(t);

    if (path_ && fresh && !blocked_) {
      const auto from = planner::nearest_cell_index(*path_, map_->geometry, est_.x, est_.z, progress_);
      progress_ = from;
      if (planner::needs_replan(*path_, *map_, from)) {
        blocked_ = true;
        detection_ = ReplanRecord{map_stamp_, t, 0.0, 0.0};
        attempt_ = true;
      }
    }
    if (attempt_ || (blocked_ && (fresh || periodic))) plan(t);
  }

  int goal_id() const { return goal_id_; }
  int revision() const { return revision_; }
  const planner::Path* path() const { return path_ ? &*path_ : nullptr; }
  std::size_t progress() const { return progress_; }
  /// Ground-truth onset of a blocked plan, attached to the next replan.
  void note_blocked(double t) {
    if (!truth_onset_) truth_onset_ = t;
  }
  void clear_blocked() { truth_onset_.reset(); }
  bool has_path() const { return path_.has_value() && !blocked_; }
  bool no_path() const { return no_path_; }

 private:
  void plan(double t) {
    attempt_ = false;
    const auto w0 = WallClock::now();
    try {
      planner::Path p = planner::plan(*map_, est_, *goal_, cfg_.planner);
      record_compute(w0);
      for (const auto& c : p.cells) {
        if (map_->lethal(c.col, c.row)) ++metrics_.lethal_plan_violations;
      }
      control::Waypoints wp = planner::extract_waypoints(p, map_->geometry);
      if (!p.goal_approximated && !wp.points.empty()) wp.points.back() = {goal_->x, goal_->z};
      path_ = std::move(p);
      progress_ = 0;
      ++revision_;
      ++metrics_.plans;
      if (blocked_ && detection_) {
        ++metrics_.replans;
        detection_->published_at = t;
        detection_->latency = t - detection_->cloud_stamp;
        metrics_.max_replan_latency = std::max(metrics_.max_replan_latency, detection_->latency);
        if (truth_onset_) {
          detection_->blocked_at = *truth_onset_;
          detection_->block_to_plan = t - *truth_onset_;
          metrics_.max_block_to_plan = std::max(metrics_.max_block_to_plan, detection_->block_to_plan);
        }
        metrics_.replan_events.push_back(*detection_);
        detection_.reset();
      }
      truth_onset_.reset();
      blocked_ = false;
      no_path_ = false;
      plan_pub_.publish(msg::plan(wp, path_->cost, revision_), to_us(t));
    } catch (const planner::PlanError&) {
      record_compute(w0);
      if (!no_path_) ++metrics_.no_path_events;
      no_path_ = true;
      blocked_ = true;
      path_.reset();
      ++revision_;
      plan_pub_.publish(msg::plan({}, 0.0, revision_), to_us(t));
    }
  }

  void record_compute(WallClock::time_point w0) {
    const double ms = std::chrono::duration<double, std::milli>(WallClock::now() - w0).count();
    metrics_.max_plan_ms = std::max(metrics_.max_plan_ms, ms);
    compute_sum_ += ms;
    ++compute_n_;
    metrics_.mean_plan_ms = compute_sum_ / compute_n_;
  }

  const Config& cfg_;
  Metrics& metrics_;
  std::mutex mu_;
  std::optional<Pose2> pending_goal_;
  std::optional<Pose2> goal_;
  std::optional<mapping::CostMap> map_;
  double map_stamp_ = 0.0;
  std::optional<planner::Path> path_;
  std::size_t progress_ = 0;
  Pose2 est_;
  bool blocked_ = false;
  bool attempt_ = false;
  bool no_path_ = false;
  std::optional<ReplanRecord> detection_;
  std::optional<double> truth_onset_;
  int goal_id_ = 0;
  int revision_ = 0;
  double compute_sum_ = 0.0;
  int compute_n_ = 0;
  std::shared_ptr<bus::Subscription> costmap_sub_, pose_sub_;
  bus::Publisher plan_pub_;
  Periodic tick_;
};

// ---------------------------------------------------------------------------
// Base control at 50 Hz: pure pursuit on plans, two-stage docking, or a
// direct twist; all outputs pass the EMA filter and the safety clamp.

class Navigator {
 public:
  enum class Mode { kIdle, kFollow, kDock, kDirect };

  Navigator(bus::Bus& bus, const Config& cfg)
      : cfg_(cfg),
        plan_sub_(bus.subscribe("plan")),
        pose_sub_(bus.subscribe("pose")),
        twist_pub_(bus.advertise("cmd_twist")),
        pursuit_(cfg.pursuit, cfg.pid, cfg.limits),
        ema_(cfg.ema_alpha),
        tick_(cfg.control_rate) {}

  void direct(const Twist2& v) {
    mode_ = Mode::kDirect;
    direct_ = v;
  }
  void follow() {
    mode_ = Mode::kFollow;
    done_ = false;
  }
  void dock(const Pose2& home) {
    mode_ = Mode::kDock;
    docker_.emplace(home, cfg_.dock, cfg_.pid, cfg_.limits);
  }
  void idle() { mode_ = Mode::kIdle; }

  void tick(double t) {
    if (auto e = latest<bus::Envelope>(*pose_sub_)) est_ = Pose2::from_pose3(msg::parse_pose(e->text()));
    if (auto e = latest<bus::Envelope>(*plan_sub_)) {
      const auto j = msg::parse(e->text());
      revision_ = j.value("revision", 0);
      auto wp = msg::parse_plan(e->text());
      has_path_ = !wp.empty();
      if (has_path_) pursuit_.set_path(std::move(wp));
      done_ = false;
    }
    if (!tick_.due(t)) return;
    const double dt = 1.0 / cfg_.control_rate;
    Twist2 raw;
    switch (mode_) {
      case Mode::kIdle:
        return;  // leaves the base to other command sources
      case Mode::kDirect:
        raw = direct_;
        break;
      case Mode::kFollow:
        if (has_path_ && !done_) {
          const auto out = pursuit_.step(est_, ema_.state().speed(), dt);
          done_ = out.done;
          raw = out.twist;
        }
        break;
      case Mode::kDock:
        if (docker_ && !docker_->finished()) raw = docker_->step(est_, dt).twist;
        break;
    }
    Twist2 cmd = swerve::clamp_twist(ema_.step(raw), cfg_.limits);
    // A finished manoeuvre ends at rest rather than on the filter tail.
    if ((mode_ == Mode::kFollow && (done_ || !has_path_)) ||
        (mode_ == Mode::kDock && docker_ && docker_->finished())) {
      ema_.reset();
      cmd = {};
    }
    twist_pub_.publish(msg::twist(cmd), to_us(t));
  }

  bool done() const { return done_; }
  int revision() const { return revision_; }
  bool has_path() const { return has_path_; }
  const Pose2& estimate() const { return est_; }
  const control::Docker* docker() const { return docker_ ? &*docker_ : nullptr; }

 private:
  const Config& cfg_;
  std::shared_ptr<bus::Subscription> plan_sub_, pose_sub_;
  bus::Publisher twist_pub_;
  control::PurePursuit pursuit_;
  control::EmaFilter ema_;
  std::optional<control::Docker> docker_;
  Periodic tick_;
  Mode mode_ = Mode::kIdle;
  Twist2 direct_;
  Pose2 est_;
  bool has_path_ = false;
  bool done_ = false;
  int revision_ = 0;
};

// ---------------------------------------------------------------------------

class BusLog {
 public:
  BusLog(bus::Bus& bus, const std::string& path) : bus_(bus), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open log file " + path);
    tap_ = bus_.add_tap([this](const bus::Envelope& e) {
      const auto f = bus::encode(e);
      std::lock_guard lock(mu_);
      out_.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
    });
  }
  ~BusLog() { bus_.remove_tap(tap_); }

 private:
  bus::Bus& bus_;
  std::mutex mu_;
  std::ofstream out_;
  int tap_ = -1;
};

/// Owns the bus and the nodes of one run and advances them in a fixed order.
class Stack {
 public:
  Stack(const RunOptions& opts, const sim::Scene& scene, double dt, Metrics& metrics)
      : opts_(opts), cfg_(opts.config), metrics_(metrics) {
    if (!opts.log_path.empty()) log_.emplace(bus_, opts.log_path);
    world_.emplace(scene, cfg_, opts.seed, bus_, dt);
    mapper_.emplace(bus_, cfg_, scene.grid, scene.camera);
    planner_.emplace(bus_, cfg_, metrics_);
    nav_.emplace(bus_, cfg_);
    bus_.serve("scenario", [this](const bus::Envelope&) {
      std::lock_guard lock(status_mu_);
      return Bytes(status_.begin(), status_.end());
    });
    if (opts.on_bus) attachment_ = opts.on_bus(bus_);
    wall0_ = WallClock::now();
  }

  void step() {
    world_->step();
    if (mapping_) mapper_->tick(world_->time());
    planner_->tick(world_->time());
    nav_->tick(world_->time());
    if (world_->state().step % 20 == 0) update_status();
    if (status_tick_.due(world_->time())) {
      std::string snapshot;
      {
        std::lock_guard lock(status_mu_);
        snapshot = status_;
      }
      metrics_pub_.publish(snapshot, to_us(world_->time()));
    }
    if (opts_.realtime) {
      const auto target = wall0_ + std::chrono::duration_cast<WallClock::duration>(
                                       std::chrono::duration<double>(world_->time()));
      std::this_thread::sleep_until(target);
    }
  }

  /// Steps until pred() holds or the sim clock passes deadline; returns pred().
  template <class Pred>
  bool run_until(Pred pred, double deadline) {
    while (!pred()) {
      if (world_->time() >= deadline) return false;
      step();
    }
    return true;
  }

  void goal(const Pose2& g) {
    const std::string body = msg::goal(g);
    const auto reply = bus_.request("goal", Bytes(body.begin(), body.end()));
    const auto j = msg::parse(std::string(reply.begin(), reply.end()));
    if (!j.value("accepted", false)) throw std::runtime_error("goal rejected: " + j.value("error", std::string{}));
  }

  /// Spins in place once to build the global map, then freezes it.
  void survey() {
    nav_->direct({0.0, 0.0, cfg_.survey_rate});
    const double spin = 2.0 * std::numbers::pi / cfg_.survey_rate;
    const double t0 = world_->time();
    run_until([] { return false; }, t0 + spin);
    nav_->direct({});
    run_until([] { return false; }, world_->time() + 0.5);
    mapper_->freeze();
    mapper_->publish();
  }

  bus::Bus bus_;
  const RunOptions& opts_;
  const Config& cfg_;
  Metrics& metrics_;
  std::optional<BusLog> log_;
  std::optional<World> world_;
  std::optional<Mapper> mapper_;
  std::optional<PlannerNode> planner_;
  std::optional<Navigator> nav_;
  std::shared_ptr<void> attachment_;
  bool mapping_ = true;

 private:
  void update_status() {
    nlohmann::ordered_json j{{"scenario", metrics_.scenario},
                             {"time", world_->time()},
                             {"collisions", world_->contacts()},
                             {"plans", metrics_.plans},
                             {"replans", metrics_.replans}};
    std::lock_guard lock(status_mu_);
    status_ = j.dump();
  }

  std::mutex status_mu_;
  std::string status_ = "{}";
  bus::Publisher metrics_pub_ = bus_.advertise("metrics");
  Periodic status_tick_{1.0};
  WallClock::time_point wall0_;
};

Point2 mark_of(const sim::WorldState& w) {
  const Vec3 p = sim::ee_world(w.robot, w.ee_in_base).translation;
  return {p.x, p.z};
}

void run_tally(const RunOptions& opts, const sim::Scene& scene, Metrics& m) {
  const Config& cfg = opts.config;
  Stack s(opts, scene, cfg.sim_dt, m);
  m.loop_closure = cfg.loop_closure;
  const Pose2 home = scene.point("HOME");
  const std::vector<Pose2> route{scene.point("P1"), scene.point("P2"), scene.point("P3"), home};
  const Point2 mark0 = mark_of(s.world_->state());

  s.survey();
  s.world_->clouds = cfg.tally_live_mapping;
  s.mapper_->live_local = cfg.tally_live_mapping;

  for (int loop = 1; loop <= cfg.loops; ++loop) {
    LoopRecord rec;
    rec.loop = loop;
    const std::uint64_t contacts0 = s.world_->contacts();
    bool ok = true;
    for (const Pose2& target : route) {
      s.goal(target);
      const int goal_id = s.planner_->goal_id() + 1;
      s.nav_->follow();
      ok = s.run_until(
          [&] {
            return s.planner_->goal_id() == goal_id && s.planner_->has_path() &&
                   s.nav_->revision() == s.planner_->revision() && s.nav_->done();
          },
          s.world_->time() + cfg.leg_timeout);
      if (!ok) break;
    }
    if (ok) {
      s.nav_->dock(home);
      s.run_until([&] { return s.nav_->docker()->finished(); }, s.world_->time() + cfg.dock.timeout + 1.0);
      // Let the base come to rest before reading the mark.
      s.run_until([] { return false; }, s.world_->time() + 0.2);
      rec.docked = s.nav_->docker()->stage() == control::DockStage::kDone;
    }
    const Point2 mark = mark_of(s.world_->state());
    rec.dx = mark.x - mark0.x;
    rec.dz = mark.z - mark0.z;
    rec.yaw_error = normalize_angle(s.world_->state().robot.yaw - home.yaw);
    rec.collisions = s.world_->contacts() - contacts0;
    rec.finished_at = s.world_->time();
    m.scatter_radius = std::max(m.scatter_radius, std::hypot(rec.dx, rec.dz));
    m.loops.push_back(rec);
    if (!ok) {
      m.failure = "loop " + std::to_string(loop) + ": leg timed out";
      break;
    }
    s.nav_->idle();
  }
  m.closures = s.world_->odom().closures;
  m.collisions = s.world_->contacts();
  m.sim_time = s.world_->time();
  const bool all_docked = std::all_of(m.loops.begin(), m.loops.end(), [](const auto& l) { return l.docked; });
  if (m.failure.empty() && !all_docked) m.failure = "dock timeout";
  if (m.failure.empty() && m.collisions > 0) m.failure = "collision";
  m.success = m.failure.empty() && static_cast<int>(m.loops.size()) == cfg.loops;
}

void run_wholebody(const RunOptions& opts, const sim::Scene& scene, Metrics& m) {
  Config cfg = opts.config;
  // The EE loop runs on every pose message; one sim step per message.
  cfg.pose_rate = 1.0 / cfg.wholebody_dt;
  RunOptions local = opts;
  local.config = cfg;
  Stack s(local, scene, cfg.wholebody_dt, m);
  s.mapping_ = false;
  s.world_->clouds = false;
  m.latency_frames = cfg.pose_latency_frames;

  auto pose_sub = s.bus_.subscribe("pose", static_cast<std::size_t>(cfg.pose_latency_frames) + 8);
  auto ee_pub = s.bus_.advertise("cmd_ee");
  const Pose3 world_base0 = s.world_->odom().estimate().to_pose3(0.0);
  const Pose3 base_ee0 = s.world_->state().ee_in_base;
  const Vec3 ee0 = sim::ee_world(s.world_->state().robot, base_ee0).translation;
  manip::EeHold hold(world_base0, base_ee0, cfg.ee_hold);
  std::deque<Pose3> received;

  const double move_time = cfg.wholebody_distance / cfg.wholebody_speed;
  const double end = move_time + cfg.wholebody_hold;
  s.nav_->direct({0.0, cfg.wholebody_speed, 0.0});
  while (s.world_->time() < end - 1e-9) {
    if (s.world_->time() >= move_time - 1e-9) s.nav_->direct({});
    s.step();
    while (auto e = pose_sub->try_pop()) {
      received.push_back(msg::parse_pose(e->text()));
    }
    const std::size_t lag = static_cast<std::size_t>(cfg.pose_latency_frames);
    while (received.size() > lag + 1) received.pop_front();
    const Pose3& cached = received.size() > lag ? received.front() : world_base0;
    ee_pub.publish(msg::ee_command(hold.step(cached, cfg.wholebody_dt)), to_us(s.world_->time()));
    s.world_->apply_pending_ee();
    const Vec3 ee = sim::ee_world(s.world_->state().robot, s.world_->state().ee_in_base).translation;
    m.max_ee_deviation = std::max(m.max_ee_deviation, (ee - ee0).norm());
  }
  m.collisions = s.world_->contacts();
  m.sim_time = s.world_->time();
  m.success = m.collisions == 0;
  if (!m.success) m.failure = "collision";
}

// True when a walker's disk, grown by the robot radius, covers a remaining cell of the plan.
bool walker_blocks(const sim::Scene& scene, const sim::WorldState& w, const planner::Path& path,
                   std::size_t from, double robot_radius) {
  for (std::size_t i = 0; i < scene.walkers.size(); ++i) {
    const auto& p = w.walkers[i].position;
    const double reach = scene.walkers[i].radius + robot_radius;
    for (std::size_t k = from; k < path.cells.size(); ++k) {
      const auto [x, z] = scene.grid.center(path.cells[k].col, path.cells[k].row);
      if (std::hypot(x - p.x, z - p.z) < reach) return true;
    }
  }
  return false;
}

void run_obstacle(const RunOptions& opts, const sim::Scene& scene, Metrics& m) {
  const Config& cfg = opts.config;
  Stack s(opts, scene, cfg.sim_dt, m);
  s.survey();
  const Pose2 goal = scene.point("GOAL");
  s.goal(goal);
  s.nav_->follow();
  const double deadline = s.world_->time() + cfg.obstacle_timeout;
  double no_path_since = -1.0;
  constexpr double kGiveUp = 5.0;  // s of continuous "no path" before halting for good
  while (s.world_->time() < deadline) {
    s.step();
    if (const auto* path = s.planner_->path()) {
      if (walker_blocks(scene, s.world_->state(), *path, s.planner_->progress(), cfg.mapping.robot_radius)) {
        s.planner_->note_blocked(s.world_->time());
      } else {
        s.planner_->clear_blocked();
      }
    }
    const bool arrived = s.nav_->done() && s.planner_->has_path() && s.nav_->revision() == s.planner_->revision();
    if (arrived) {
      m.goal_reached = true;
      break;
    }
    if (s.planner_->no_path()) {
      if (no_path_since < 0.0) no_path_since = s.world_->time();
      if (s.world_->time() - no_path_since >= kGiveUp) {
        m.halted = true;
        break;
      }
    } else {
      no_path_since = -1.0;
    }
  }
  // Observe the halted robot for a moment: it must stay clear.
  s.nav_->direct({});
  s.run_until([] { return false; }, s.world_->time() + 1.0);
  m.collisions = s.world_->contacts();
  m.sim_time = s.world_->time();
  if (m.collisions > 0) m.failure = "collision";
  else if (m.halted) m.failure = "no path";
  else if (!m.goal_reached) m.failure = "timeout";
  m.success = m.failure.empty();
}

void run_freeplay(const RunOptions& opts, const sim::Scene& scene, Metrics& m) {
  const Config& cfg = opts.config;
  Stack s(opts, scene, cfg.sim_dt, m);
  s.survey();
  s.nav_->follow();
  const double end = s.world_->time() + cfg.freeplay_duration;
  // Manual twists from a client are honoured while no plan is active.
  while (s.world_->time() < end) {
    if (s.nav_->has_path() && !s.nav_->done()) s.nav_->follow();
    else s.nav_->idle();
    s.step();
    if (s.nav_->done() && s.planner_->has_path() && s.nav_->revision() == s.planner_->revision()) m.goal_reached = true;
  }
  m.collisions = s.world_->contacts();
  m.sim_time = s.world_->time();
  m.success = m.collisions == 0;
  if (!m.success) m.failure = "collision";
}

}  // namespace

std::optional<ScenarioId> parse_scenario(std::string_view name) {
  if (name == "tally") return ScenarioId::kTally;
  if (name == "wholebody") return ScenarioId::kWholebody;
  if (name == "obstacle") return ScenarioId::kObstacle;
  if (name == "freeplay") return ScenarioId::kFreeplay;
  return std::nullopt;
}

std::string_view scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::kTally:
      return "tally";
    case ScenarioId::kWholebody:
      return "wholebody";
    case ScenarioId::kObstacle:
      return "obstacle";
    case ScenarioId::kFreeplay:
      return "freeplay";
  }
  return "unknown";
}

std::string default_scene_path(ScenarioId id) {
  const char* dir = std::getenv("YOR_SCENE_DIR");
  const std::string base = (dir && *dir) ? dir : YOR_SCENE_DIR;
  const char* file = id == ScenarioId::kFreeplay ? "doorway" : scenario_name(id).data();
  return base + "/" + file + ".scene";
}

Metrics run(const RunOptions& opts) {
  const auto w0 = WallClock::now();
  const sim::Scene scene = opts.scene ? *opts.scene
                                      : sim::load_scene(opts.scene_path.empty() ? default_scene_path(opts.scenario)
                                                                                : opts.scene_path);
  Metrics m;
  m.scenario = std::string(scenario_name(opts.scenario));
  m.seed = opts.seed;
  switch (opts.scenario) {
    case ScenarioId::kTally:
      run_tally(opts, scene, m);
      break;
    case ScenarioId::kWholebody:
      run_wholebody(opts, scene, m);
      break;
    case ScenarioId::kObstacle:
      run_obstacle(opts, scene, m);
      break;
    case ScenarioId::kFreeplay:
      run_freeplay(opts, scene, m);
      break;
  }
  m.wall_time = std::chrono::duration<double>(WallClock::now() - w0).count();
  return m;
}

nlohmann::ordered_json to_json(const Metrics& m, bool include_wall) {
  using J = nlohmann::ordered_json;
  J j;
  j["scenario"] = m.scenario;
  j["seed"] = m.seed;
  j["success"] = m.success;
  j["failure"] = m.failure;
  j["sim_time_s"] = m.sim_time;
  j["collisions"] = m.collisions;
  if (m.scenario == "tally") {
    J loops = J::array();
    for (const auto& l : m.loops) {
      loops.push_back({{"loop", l.loop},
                       {"dx_m", l.dx},
                       {"dz_m", l.dz},
                       {"yaw_error_rad", l.yaw_error},
                       {"docked", l.docked},
                       {"collisions", l.collisions},
                       {"finished_at_s", l.finished_at}});
    }
    j["tally"] = {{"loop_closure", m.loop_closure},
                  {"closures", m.closures},
                  {"scatter_radius_m", m.scatter_radius},
                  {"loops", loops}};
  }
  if (m.scenario == "wholebody") {
    j["wholebody"] = {{"latency_frames", m.latency_frames}, {"max_ee_deviation_m", m.max_ee_deviation}};
  }
  if (m.scenario == "obstacle" || m.scenario == "freeplay") {
    J events = J::array();
    for (const auto& r : m.replan_events) {
      events.push_back({{"cloud_stamp_s", r.cloud_stamp},
                        {"detected_at_s", r.detected_at},
                        {"published_at_s", r.published_at},
                        {"latency_s", r.latency},
                        {"blocked_at_s", r.blocked_at},
                        {"block_to_plan_s", r.block_to_plan}});
    }
    j["navigation"] = {{"goal_reached", m.goal_reached},
                       {"halted", m.halted},
                       {"plans", m.plans},
                       {"replans", m.replans},
                       {"no_path_events", m.no_path_events},
                       {"lethal_plan_violations", m.lethal_plan_violations},
                       {"max_replan_latency_s", m.max_replan_latency},
                       {"max_block_to_plan_s", m.max_block_to_plan},
                       {"replan_events", events}};
  }
  if (include_wall) {
    j["wall"] = {{"run_s", m.wall_time}, {"max_plan_ms", m.max_plan_ms}, {"mean_plan_ms", m.mean_plan_ms}};
  }
  return j;
}

std::string sim_metrics_bytes(const Metrics& m) { return to_json(m, false).dump(2); }

std::vector<TopicSummary> summarize_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log file " + path);
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::map<std::string, TopicSummary> by_topic;
  for (const auto& e : bus::decode_all(data)) {
    auto& s = by_topic[e.topic];
    if (s.count == 0) {
      s.topic = e.topic;
      s.first_stamp = from_us(e.timestamp_us);
    }
    ++s.count;
    s.bytes += e.payload.size();
    s.last_stamp = from_us(e.timestamp_us);
  }
  std::vector<TopicSummary> out;
  for (auto& [k, v] : by_topic) out.push_back(std::move(v));
  return out;
}

}  // namespace yor::harness
