// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Reference values come from the oracles in oracles.hpp, never from the library.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"
#include "yor/base_control.hpp"
#include "yor/harness.hpp"
#include "yor/manip.hpp"
#include "yor/mapping.hpp"
#include "yor/planner.hpp"
#include "yor/swerve.hpp"

using namespace yor;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are kept for the report.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 3) detail_ += (detail_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome outcome() const {
    if (failures_ == 0) return {true, notes_};
    return {false, std::to_string(failures_) + " failed: " + detail_ + (notes_.empty() ? "" : " | " + notes_)};
  }

 private:
  int failures_ = 0;
  std::string detail_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

Outcome swerve_kinematics() {
  Checker c;
  const swerve::ChassisGeometry g;
  const double W = 0.152, L = 0.106;
  // Corners (forward, left); each module must sit on a distinct one.
  const std::array<std::array<double, 2>, 4> corners{{{L, W}, {L, -W}, {-L, W}, {-L, -W}}};
  std::array<int, 4> corner_of{-1, -1, -1, -1};
  {
    const auto mv = swerve::module_velocities({0.0, 0.0, 1.0}, g);
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 4; ++k) {
        const auto r = oracle::rigid_velocity(0, 0, 1.0, corners[k][0], corners[k][1]);
        if (std::abs(r[0] - mv[i].vx) < 1e-12 && std::abs(r[1] - mv[i].vy) < 1e-12) corner_of[i] = k;
      }
    }
    std::array<int, 4> sorted = corner_of;
    std::sort(sorted.begin(), sorted.end());
    c.expect(sorted == std::array<int, 4>{0, 1, 2, 3}, "modules do not occupy the four corners");
  }
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> v(-1.0, 1.0), w(-3.0, 3.0);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Twist2 t{v(rng), v(rng), w(rng)};
    const auto mv = swerve::module_velocities(t, g);
    for (int i = 0; i < 4 && corner_of[i] >= 0; ++i) {
      const auto r = oracle::rigid_velocity(t.vx, t.vy, t.omega, corners[corner_of[i]][0], corners[corner_of[i]][1]);
      worst = std::max({worst, std::abs(r[0] - mv[i].vx), std::abs(r[1] - mv[i].vy)});
    }
    if (n < 100) {
      const Twist2 spin{0.0, 0.0, t.omega};
      for (const auto& m : swerve::inverse_kinematics(spin, g)) {
        c.expect(std::abs(std::abs(m.drive) - 0.18531 * std::abs(t.omega)) < 1e-5 * std::max(1.0, std::abs(t.omega)),
                 "pure rotation speed");
      }
    }
  }
  c.expect(worst < 1e-9, "module velocity error " + fmt("%.3g", worst));
  c.expect(std::abs(std::hypot(W, L) - 0.18531) < 5e-6, "sqrt(W^2+L^2)");
  c.note("max err " + fmt("%.2g", worst));
  return c.outcome();
}

Outcome shortest_turn() {
  Checker c;
  auto wrap = [](double a) { return std::remainder(a, 2.0 * kPi); };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-kPi, kPi), spd(-2.0, 2.0);
  double worst_delta = 0.0;
  for (int n = 0; n < 100000; ++n) {
    const double cur = ang(rng);
    const swerve::ModuleState target{ang(rng), spd(rng)};
    const auto out = swerve::optimize_module(cur, target);
    const double delta = std::abs(wrap(out.steer - cur));
    worst_delta = std::max(worst_delta, delta);
    c.expect(delta <= kPi / 2 + 1e-12, "steer delta above 90 deg");
    c.expect(std::abs(std::abs(out.drive) - std::abs(target.drive)) < 1e-12, "speed magnitude changed");
    // Same wheel velocity vector.
    const double ex = out.drive * std::cos(out.steer) - target.drive * std::cos(target.steer);
    const double ez = out.drive * std::sin(out.steer) - target.drive * std::sin(target.steer);
    c.expect(std::hypot(ex, ez) < 1e-9, "wheel velocity vector changed");
  }
  const double deg = kPi / 180.0;
  const auto ex = swerve::optimize_module(0.0, {170.0 * deg, 0.5});
  c.expect(std::abs(wrap(ex.steer + 10.0 * deg)) < 1e-12 && ex.drive == -0.5, "170 deg example");
  c.note("max delta " + fmt("%.4f", worst_delta) + " rad");
  return c.outcome();
}

Outcome planner_optimality() {
  Checker c;
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> cell(0, 63), cost(0, 254);
  std::bernoulli_distribution lethal(0.2);
  int solved = 0;
  double worst_ratio = 0.0;
  for (int n = 0; n < 50; ++n) {
    mapping::CostMap map({0.0, 0.0, 0.05, 64, 64});
    for (auto& v : map.cost) v = lethal(rng) ? mapping::kLethal : static_cast<std::uint8_t>(cost(rng));
    int sc, sr, gc, gr;
    do {
      sc = cell(rng), sr = cell(rng), gc = cell(rng), gr = cell(rng);
    } while (map.lethal(sc, sr) || map.lethal(gc, gr) || (sc == gc && sr == gr));
    const auto [sx, sz] = map.geometry.center(sc, sr);
    const auto [gx, gz] = map.geometry.center(gc, gr);
    planner::PlannerParams p;
    const double best = oracle::dijkstra(map, sc, sr, gc, gr, p.cost_scale);
    for (const double w : {1.0, 1.2}) {
      p.heuristic_weight = w;
      try {
        const auto path = planner::plan(map, Pose2(sx, sz, 0), Pose2(gx, gz, 0), p);
        c.expect(std::isfinite(best), "plan found where the oracle has none");
        for (const auto& k : path.cells) c.expect(!map.lethal(k.col, k.row), "path touches a lethal cell");
        if (w == 1.0) {
          c.expect(std::abs(path.cost - best) <= 1e-9 * std::max(1.0, best), "w=1 cost differs from optimum");
          ++solved;
        } else {
          c.expect(path.cost <= 1.2 * best + 1e-9, "w=1.2 cost above bound");
          worst_ratio = std::max(worst_ratio, path.cost / best);
        }
      } catch (const planner::PlanError&) {
        c.expect(!std::isfinite(best), "no plan where the oracle finds one");
      }
    }
  }
  c.note(std::to_string(solved) + "/50 solvable, worst w=1.2 ratio " + fmt("%.4f", worst_ratio));
  return c.outcome();
}

Outcome mapping_oracles() {
  Checker c;
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_real_distribution<double> u(-1.0 - 0.3 * trial, 1.0 + 0.3 * trial);
    mapping::PointCloud cloud;
    for (int i = 0; i < 2000; ++i) cloud.points.push_back({u(rng), 0.3 * u(rng), u(rng)});
    const auto keep = oracle::brute_force_inliers(cloud.points, 0.12, 3);
    std::vector<Vec3> expected;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) expected.push_back(cloud.points[i]);
    c.expect(mapping::reject_outliers(cloud, 0.12, 3).points == expected, "outlier set differs");
  }
  for (int trial = 0; trial < 3; ++trial) {
    mapping::OccupancyGrid grid({-2.0, -2.0, 0.05, 80, 80});
    std::bernoulli_distribution occ(0.01 + 0.01 * trial);
    for (auto& v : grid.cells) v = occ(rng) ? mapping::CellState::kOccupied : mapping::CellState::kFree;
    const auto d = oracle::distance_transform(grid);
    const auto cost = mapping::inflate(grid, 0.3, 0.2);
    for (std::size_t i = 0; i < d.size(); ++i) {
      c.expect((d[i] <= 0.3 + 1e-9) == (cost.cost[i] == mapping::kLethal), "lethal set differs from distance transform");
    }
  }
  for (int trial = 0; trial < 20; ++trial) {
    std::normal_distribution<double> floor_y(0.02 * trial - 0.2, 0.01);
    std::uniform_real_distribution<double> clutter(-0.2, 1.5);
    mapping::PointCloud cloud;
    std::vector<double> ys;
    for (int i = 0; i < 500 + 50 * trial; ++i) {
      const double y = i % 3 == 0 ? clutter(rng) : floor_y(rng);
      cloud.points.push_back({0.0, y, 0.0});
      ys.push_back(y);
    }
    const auto est = mapping::estimate_floor(cloud, {});
    const double want = oracle::floor_formula(ys, 0.1);
    c.expect(std::abs(est.height - want) < 1e-12, "floor estimate differs from formula");
    const auto next = mapping::estimate_floor(cloud, est);
    c.expect(std::abs(next.height - want) < 1e-12, "EMA of equal samples moved");
  }
  return c.outcome();
}

Outcome controller_values() {
  Checker c;
  control::EmaFilter f(0.2);
  f.reset({0.1, 0, 0});
  const double ema = f.step({0.5, 0, 0}).vx;
  c.expect(std::abs(ema - 0.42) <= 1e-15, "EMA step " + fmt("%.17g", ema));

  const auto first = control::pid_step(Pose2(0, 0, kPi / 2), Pose2(0.1, 0, kPi / 2), {}, 0.02);
  c.expect(std::abs(first.twist.vx - 0.15) <= 1e-12, "first PID step " + fmt("%.17g", first.twist.vx));
  const auto yaw = control::pid_step(Pose2(0, 0, 0), Pose2(0, 0, 0.5), {}, 0.02);
  c.expect(yaw.twist.omega == 1.0, "yaw command " + fmt("%.17g", yaw.twist.omega));

  control::PidController pid;
  Pose2 est(0.5, 0, 0.5);
  const Pose2 target(0, 0, 0);
  const double dt = 1.0 / control::kControlRate;
  double t = 0.0;
  bool done = false;
  for (; t < 15.0 && !done; t += dt) {
    const auto out = pid.step(est, target, dt);
    done = out.done;
    est = integrate(est, out.twist, dt);
  }
  const double pos = std::hypot(est.x, est.z);
  c.expect(done && pos <= 0.015 && std::abs(est.yaw) <= 0.03, "offset not driven to tolerance");
  c.note("converged in " + fmt("%.2f", t) + " s");
  return c.outcome();
}

Outcome compliance() {
  Checker c;
  const manip::TwoLinkArm arm;
  const manip::GravityModel g = [&](std::span<const double> q) { return arm.gravity_torque(q); };
  auto settle = [&](std::array<double, 2> q_ref, std::array<double, 2> tau_ext, double kp) {
    manip::JointState s{{q_ref[0], q_ref[1]}, {0, 0}};
    const manip::JointState ref{{q_ref[0], q_ref[1]}, {0, 0}};
    const manip::StiffnessGains gains{{kp, kp}, {0.1 * kp, 0.1 * kp}};
    const double dt = 1e-4;
    for (int i = 0; i < 200000; ++i) {
      const auto tau = manip::stiffness_torque(s, ref, gains, g);
      const std::array<double, 2> total{tau[0] + tau_ext[0], tau[1] + tau_ext[1]};
      const auto acc = arm.forward_dynamics(s.q, s.qd, total);
      for (int j = 0; j < 2; ++j) {
        s.qd[j] += acc[j] * dt;
        s.q[j] += s.qd[j] * dt;
      }
    }
    return std::array<double, 2>{s.q[0] - q_ref[0], s.q[1] - q_ref[1]};
  };
  struct Case {
    std::array<double, 2> q, tau;
    double kp;
  };
  for (const Case& k : {Case{{0.3, 0.4}, {1.0, 0.0}, 20.0}, Case{{-0.2, 1.0}, {0.5, -0.4}, 20.0},
                        Case{{0.8, -0.5}, {-0.6, 0.3}, 40.0}}) {
    const auto d = settle(k.q, k.tau, k.kp);
    for (int j = 0; j < 2; ++j) {
      const double want = k.tau[j] / k.kp;
      const double tol = want == 0.0 ? 1e-2 * 0.01 : 0.01 * std::abs(want);
      c.expect(std::abs(d[j] - want) <= tol, "deflection " + fmt("%.6f", d[j]) + " vs " + fmt("%.6f", want));
    }
  }
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const manip::JointState s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    c.expect(manip::stiffness_torque(s, s, {{20, 20}, {2, 2}}, g) == arm.gravity_torque(s.q),
             "setpoint torque differs from gravity");
  }
  std::uniform_real_distribution<double> pos(-2.0, 2.0), vmax(0.2, 2.0), amax(1.0, 20.0);
  const double dt = 0.005;
  for (int move = 0; move < 10000; ++move) {
    const manip::ShaperLimits lim{vmax(rng), amax(rng)};
    const double target = pos(rng);
    manip::JointState s{{pos(rng)}, {0.0}};
    for (int steps = 0; steps < 4000 && !(s.q[0] == target && s.qd[0] == 0.0); ++steps) {
      const auto n = manip::shape_command(s, std::vector<double>{target}, lim, dt);
      c.expect(std::abs(n.qd[0]) <= lim.max_velocity + 1e-12, "shaper velocity bound");
      c.expect(std::abs(n.qd[0] - s.qd[0]) <= lim.max_acceleration * dt + 1e-12, "shaper acceleration bound");
      s = n;
    }
  }
  return c.outcome();
}

Outcome lift_contract() {
  Checker c;
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> v(-5.0, 5.0), h(-3.0, 4.0), dt(1e-4, 0.5);
  std::bernoulli_distribution kind(0.5), hold(0.1);
  manip::LiftState s;
  for (int i = 0; i < 100000; ++i) {
    manip::LiftCommand cmd = kind(rng) ? manip::LiftCommand{manip::LiftVelocity{v(rng)}}
                                       : manip::LiftCommand{manip::LiftTarget{h(rng)}};
    const bool zero = hold(rng);
    if (zero) cmd = manip::LiftVelocity{0.0};
    const auto n = manip::lift_step(s, cmd, dt(rng));
    c.expect(n.height >= manip::kLiftMinHeight && n.height <= manip::kLiftMaxHeight, "height out of range");
    c.expect(std::abs(n.velocity) <= manip::kLiftMaxSpeed, "speed above limit");
    if (zero) c.expect(n.height == s.height && n.velocity == 0.0, "zero command moved the lift");
    s = n;
  }
  return c.outcome();
}

// ---------------------------------------------------------------------------
// Scenario criteria.

struct SweepRun {
  harness::Metrics m;
  double wall = 0.0;
};

SweepRun run_scenario(harness::ScenarioId id, std::uint64_t seed, harness::Config cfg = {},
                      const std::string& scene = {}) {
  harness::RunOptions o;
  o.scenario = id;
  o.seed = seed;
  o.config = std::move(cfg);
  o.scene_path = scene;
  const auto t0 = Clock::now();
  SweepRun r{harness::run(o), 0.0};
  r.wall = seconds_since(t0);
  return r;
}

constexpr int kSeeds = 20;

Outcome tally(std::vector<std::string>& det_bytes) {
  Checker c;
  harness::Config off;
  off.loop_closure = false;
  int within = 0;
  double worst_on = 0.0, min_ratio = 1e9, slowest = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto on = run_scenario(harness::ScenarioId::kTally, seed);
    const auto no = run_scenario(harness::ScenarioId::kTally, seed, off);
    if (seed == 1) det_bytes.push_back(harness::sim_metrics_bytes(on.m));
    c.expect(on.m.success, "seed " + std::to_string(seed) + " closure-on run failed: " + on.m.failure);
    c.expect(static_cast<int>(no.m.loops.size()) == 10, "seed " + std::to_string(seed) + " closure-off run incomplete");
    const double r_on = on.m.scatter_radius, r_off = no.m.scatter_radius;
    if (on.m.success && r_on <= 0.012) ++within;
    worst_on = std::max(worst_on, r_on);
    min_ratio = std::min(min_ratio, r_off / r_on);
    c.expect(r_off >= 3.0 * r_on, "seed " + std::to_string(seed) + " closure-off scatter below 3x");
    slowest = std::max({slowest, on.wall, no.wall});
  }
  c.expect(within >= 16, std::to_string(within) + "/20 seeds within 12 mm");
  c.expect(slowest < 60.0, "run took " + fmt("%.1f", slowest) + " s");
  c.note(std::to_string(within) + "/20 <= 12 mm, worst " + fmt("%.1f", worst_on * 1e3) + " mm, min off/on " +
         fmt("%.1f", min_ratio) + "x, slowest run " + fmt("%.1f", slowest) + " s");
  return c.outcome();
}

Outcome wholebody(std::vector<std::string>& det_bytes) {
  Checker c;
  {
    harness::Config exact;
    exact.pose_latency_frames = 0;
    exact.odom_noise = false;
    const auto r = run_scenario(harness::ScenarioId::kWholebody, 1, exact);
    c.expect(r.m.max_ee_deviation < 1e-9, "identity deviation " + fmt("%.3g", r.m.max_ee_deviation));
  }
  harness::Config two;
  two.pose_latency_frames = 2;
  int within = 0;
  double sum1 = 0.0, sum2 = 0.0, worst = 0.0, slowest = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto a = run_scenario(harness::ScenarioId::kWholebody, seed);
    const auto b = run_scenario(harness::ScenarioId::kWholebody, seed, two);
    if (seed == 1) det_bytes.push_back(harness::sim_metrics_bytes(a.m));
    if (a.m.success && a.m.max_ee_deviation <= 0.016) ++within;
    sum1 += a.m.max_ee_deviation;
    sum2 += b.m.max_ee_deviation;
    worst = std::max(worst, a.m.max_ee_deviation);
    slowest = std::max({slowest, a.wall, b.wall});
  }
  c.expect(within >= 16, std::to_string(within) + "/20 seeds within 16 mm");
  c.expect(sum2 > sum1, "doubled latency did not increase the mean deviation");
  c.expect(slowest < 30.0, "run took " + fmt("%.1f", slowest) + " s");
  c.note(std::to_string(within) + "/20 <= 16 mm, worst " + fmt("%.1f", worst * 1e3) + " mm, mean 1 frame " +
         fmt("%.2f", sum1 / kSeeds * 1e3) + " mm vs 2 frames " + fmt("%.2f", sum2 / kSeeds * 1e3) + " mm");
  return c.outcome();
}

Outcome obstacle(std::vector<std::string>& det_bytes) {
  Checker c;
  double worst_latency = 0.0, worst_ms = 0.0, slowest = 0.0;
  std::uint64_t collisions = 0;
  int min_replans = 1 << 30;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto r = run_scenario(harness::ScenarioId::kObstacle, seed);
    if (seed == 1) det_bytes.push_back(harness::sim_metrics_bytes(r.m));
    const std::string s = "seed " + std::to_string(seed) + ": ";
    c.expect(r.m.goal_reached, s + "goal not reached (" + r.m.failure + ")");
    c.expect(r.m.replans >= 1, s + "no replan");
    c.expect(r.m.lethal_plan_violations == 0, s + "plan through lethal cell");
    for (const auto& e : r.m.replan_events) {
      worst_latency = std::max({worst_latency, e.latency, e.block_to_plan});
    }
    collisions += r.m.collisions;
    min_replans = std::min(min_replans, r.m.replans);
    worst_ms = std::max(worst_ms, r.m.max_plan_ms);
    slowest = std::max(slowest, r.wall);
  }
  c.expect(worst_latency <= 1.0, "replan latency " + fmt("%.3f", worst_latency) + " s");
  c.expect(worst_ms <= 100.0, "planning took " + fmt("%.1f", worst_ms) + " ms");
  c.expect(collisions == 0, std::to_string(collisions) + " collisions");
  c.expect(slowest < 60.0, "run took " + fmt("%.1f", slowest) + " s");

  const auto clear = run_scenario(harness::ScenarioId::kObstacle, 1, {}, std::string(YOR_SCENE_DIR) + "/obstacle_clear.scene");
  c.expect(clear.m.goal_reached && clear.m.plans == 1 && clear.m.replans == 0, "no walker: expected a single plan");
  const auto blocked =
      run_scenario(harness::ScenarioId::kObstacle, 1, {}, std::string(YOR_SCENE_DIR) + "/corridor_blocked.scene");
  c.expect(blocked.m.halted && blocked.m.failure == "no path" && blocked.m.collisions == 0,
           "blocked corridor: expected no path and a halt");
  worst_ms = std::max({worst_ms, clear.m.max_plan_ms, blocked.m.max_plan_ms});

  c.note("min replans " + std::to_string(min_replans) + ", worst latency " + fmt("%.3f", worst_latency) +
         " s, worst plan " + fmt("%.2f", worst_ms) + " ms, " + std::to_string(collisions) + " collisions");
  return c.outcome();
}

Outcome determinism(const std::vector<std::string>& first_bytes) {
  Checker c;
  const std::array<harness::ScenarioId, 3> ids{harness::ScenarioId::kTally, harness::ScenarioId::kWholebody,
                                               harness::ScenarioId::kObstacle};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto again = harness::sim_metrics_bytes(run_scenario(ids[i], 1).m);
    const std::string name(harness::scenario_name(ids[i]));
    c.expect(i < first_bytes.size() && again == first_bytes[i], name + " metrics differ between runs");
  }
  c.note("tally, wholebody, obstacle at seed 1");
  return c.outcome();
}

}  // namespace

int main() {
  std::vector<std::string> bytes;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"swerve kinematics oracle", swerve_kinematics},
      {"shortest-turn property", shortest_turn},
      {"planner optimality", planner_optimality},
      {"mapping oracles", mapping_oracles},
      {"controller unit values", controller_values},
      {"tally-mark reproduction", [&] { return tally(bytes); }},
      {"whole-body coordination", [&] { return wholebody(bytes); }},
      {"dynamic obstacle avoidance", [&] { return obstacle(bytes); }},
      {"compliance law", compliance},
      {"lift contract", lift_contract},
      {"determinism", [&] { return determinism(bytes); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-28s %6.1fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
