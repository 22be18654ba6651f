#include <gtest/gtest.h>

#include <cstring>

#include "yor/mapping.hpp"
#include "yor/sim.hpp"

using namespace yor;
using namespace yor::sim;

namespace {

std::vector<std::uint8_t> bytes_of(const mapping::PointCloud& c) { return mapping::encode_cloud(c); }

// Drives a square loop with the given side length in 5 mm odometry steps,
// turning in place at the corners.
OdomState square_loop(double side, const OdomNoise& noise, const CounterRng& rng) {
  OdomState od = initial_odometry(Pose2(0, 0, 0));
  const double step = 0.005;
  const int n = static_cast<int>(std::lround(side / step));
  for (int leg = 0; leg < 4; ++leg) {
    for (int i = 0; i < n; ++i) od = odometry_step(od, PlanarDelta{step, 0, 0}, noise, false, rng);
    od = odometry_step(od, PlanarDelta{0, 0, -kPi / 2}, noise, false, rng);
  }
  return od;
}

}  // namespace

TEST(Scene, ParsesAllKeys) {
  const auto s = parse_scene(R"(
# comment
grid = -2 -3 0.05 80 120
box = 1 1 0 0 0.8     # corners in any order
walker = 0.25 1.7 1.0 2.5 0 0 0 1 1 2 1
occlusion = 3 4
point HOME = 0 0 0
point P1 = 1 2 1.5708
start = 0.5 0.5 0.1
lift = 0.9
camera = 100 100 63.5 47.5 128 96 6 0.02 0.3
seed = 77
)");
  EXPECT_EQ(s.grid.width, 80);
  EXPECT_EQ(s.grid.origin_z, -3);
  ASSERT_EQ(s.boxes.size(), 1u);
  EXPECT_EQ(s.boxes[0].min_x, 0.0);
  EXPECT_EQ(s.boxes[0].max_z, 1.0);
  ASSERT_EQ(s.walkers.size(), 1u);
  EXPECT_EQ(s.walkers[0].waypoints.size(), 3u);
  EXPECT_EQ(s.walkers[0].start_time, 2.5);
  EXPECT_TRUE(s.occluded(3.5));
  EXPECT_FALSE(s.occluded(4.0));
  EXPECT_NEAR(s.point("P1").yaw, 1.5708, 1e-12);
  EXPECT_EQ(s.robot_start.x, 0.5);
  EXPECT_EQ(s.lift_start, 0.9);
  EXPECT_EQ(s.camera.width, 128);
  EXPECT_EQ(s.seed, 77u);
  EXPECT_THROW(s.point("P9"), std::out_of_range);
}

TEST(Scene, RejectsMalformedInput) {
  EXPECT_THROW(parse_scene("box = 1 2 3\n"), std::runtime_error);
  EXPECT_THROW(parse_scene("bogus = 1\n"), std::runtime_error);
  EXPECT_THROW(parse_scene("box 1 2 3 4 5\n"), std::runtime_error);
  EXPECT_THROW(parse_scene("start = 1 x 0\n"), std::runtime_error);
}

TEST(StepWorld, ZeroCommand) {
  Scene scene;
  const WorldState w0 = initial_state(scene);
  const WorldState w1 = step_world(scene, w0, {}, std::nullopt, std::nullopt, 0.01);
  EXPECT_EQ(w1.robot, w0.robot);
  EXPECT_DOUBLE_EQ(w1.time, 0.01);
  EXPECT_FALSE(w1.collision);
}

TEST(StepWorld, ConstantVelocityDisplacement) {
  Scene scene;
  SimParams generous;
  generous.limits.drive_accel_max = 1e6;
  generous.limits.steer_rate_max = 1e6;
  WorldState w = initial_state(scene);
  for (int i = 0; i < 800; ++i) w = step_world(scene, w, {0.25, 0, 0}, std::nullopt, std::nullopt, 0.005, generous);
  EXPECT_NEAR(w.robot.z, 1.0, 1e-9);
  EXPECT_NEAR(w.robot.x, 0.0, 1e-12);

  // Default limits: the 2 m/s^2 ramp costs v^2 / (2a) = 15.6 mm.
  WorldState d = initial_state(scene);
  for (int i = 0; i < 800; ++i) d = step_world(scene, d, {0.25, 0, 0}, std::nullopt, std::nullopt, 0.005);
  EXPECT_NEAR(d.robot.z, 1.0, 0.02);
  EXPECT_LT(d.robot.z, 1.0);
}

TEST(StepWorld, SteerRateAttenuatesTurn) {
  Scene scene;
  WorldState w = initial_state(scene);
  // Wheels start at 0; a sideways command needs a 90 deg turn at 8 rad/s.
  w = step_world(scene, w, {0, 0.25, 0}, std::nullopt, std::nullopt, 0.01);
  for (const auto& m : w.modules) EXPECT_NEAR(m.steer, 0.08, 1e-12);
  EXPECT_LT(w.realized.vy, 0.25);
}

TEST(StepWorld, CollisionStopsAtContact) {
  Scene scene;
  scene.boxes.push_back({-1.0, 0.5, 1.0, 1.0, 1.0});  // wall face 0.2 m beyond the footprint
  WorldState w = initial_state(scene);
  bool hit = false;
  double t_hit = 0.0;
  for (int i = 0; i < 400 && !hit; ++i) {
    w = step_world(scene, w, {0.25, 0, 0}, std::nullopt, std::nullopt, 0.005);
    hit = w.collision;
    t_hit = w.time;
    if (hit) EXPECT_LE(w.clearance, 0.0);
  }
  ASSERT_TRUE(hit);
  EXPECT_LT(t_hit, 1.0);
  EXPECT_NEAR(w.robot.z, 0.2, 1e-6);
  EXPECT_GE(clearance(scene, w.walkers, w.robot, 0.3), 0.0);
  const auto stuck = step_world(scene, w, {0.25, 0, 0}, std::nullopt, std::nullopt, 0.005);
  EXPECT_NEAR(stuck.robot.z, w.robot.z, 1e-6);
}

TEST(StepWorld, WalkersFollowScript) {
  Scene scene;
  scene.walkers.push_back({0.25, 1.7, 1.0, 1.0, false, {{0, 3}, {2, 3}}});
  WorldState w = initial_state(scene);
  for (int i = 0; i < 200; ++i) w = step_world(scene, w, {}, std::nullopt, std::nullopt, 0.01);
  EXPECT_NEAR(w.walkers[0].position.x, 1.0, 1e-9);
  for (int i = 0; i < 200; ++i) w = step_world(scene, w, {}, std::nullopt, std::nullopt, 0.01);
  EXPECT_TRUE(w.walkers[0].parked);
  EXPECT_EQ(w.walkers[0].position.x, 2.0);
}

TEST(StepWorld, LiftAndEe) {
  Scene scene;
  WorldState w = initial_state(scene);
  const Pose3 ee = Pose3::from_translation({0.1, 1.0, 0.5});
  for (int i = 0; i < 100; ++i) w = step_world(scene, w, {}, manip::LiftVelocity{1.0}, ee, 0.01);
  EXPECT_NEAR(w.lift.height, 0.8 + 0.035, 1e-12);
  EXPECT_EQ(w.ee_in_base.translation, ee.translation);
}

TEST(Render, BoxFaceDepth) {
  Scene scene;
  scene.camera.pitch_down = 0.0;
  scene.lift_start = 0.6;  // camera 0.7 m up, 0.1 m forward
  scene.boxes.push_back({-0.5, 2.1, 0.5, 3.1, 1.4});
  const WorldState w = initial_state(scene);
  const auto cloud = render_depth(scene, w, scene.camera, CounterRng(1), {0, false, false});
  int center = 0;
  for (const auto& p : cloud.points) {
    if (std::abs(p.x) < 0.3 && std::abs(p.y) < 0.3) {
      EXPECT_NEAR(p.z, 2.0, 1e-6);
      ++center;
    }
  }
  EXPECT_GT(center, 100);
}

TEST(Render, FloorMatchesAnalyticDepth) {
  Scene scene;
  const WorldState w = initial_state(scene);
  const auto cam = scene.camera;
  const auto cloud = render_depth(scene, w, cam, CounterRng(1), {0, false, false});
  ASSERT_FALSE(cloud.points.empty());
  const Pose3 pose = camera_pose(w.robot, w.lift.height, cam);
  for (const auto& p : cloud.points) {
    EXPECT_NEAR(pose.apply(p).y, 0.0, 1e-9);
    EXPECT_LE(p.z, cam.max_range + 1e-9);
  }
}

TEST(Render, FacingUpSeesNothing) {
  Scene scene;
  scene.camera.pitch_down = -kPi / 2;
  const WorldState w = initial_state(scene);
  scene.camera.fx = scene.camera.fy = 400.0;  // narrow field of view, all rays point up
  EXPECT_TRUE(render_depth(scene, w, scene.camera, CounterRng(1), {}).points.empty());
}

TEST(Render, DeterministicAndParallelMatchesSerial) {
  Scene scene;
  scene.boxes.push_back({-1, 1.5, 1, 2.5, 1.0});
  scene.walkers.push_back({0.25, 1.7, 1.0, 0.0, false, {{0.5, 1.0}}});
  const WorldState w = initial_state(scene);
  const CounterRng rng(123);
  const auto a = render_depth(scene, w, scene.camera, rng, {7, false, true});
  const auto b = render_depth(scene, w, scene.camera, rng, {7, false, true});
  const auto s = serial::render_depth(scene, w, scene.camera, rng, {7, false, true});
  EXPECT_EQ(bytes_of(a), bytes_of(b));
  EXPECT_EQ(bytes_of(a), bytes_of(s));
  const auto other = render_depth(scene, w, scene.camera, rng, {8, false, true});
  EXPECT_NE(bytes_of(a), bytes_of(other));
}

TEST(Render, OcclusionKeepsAtMostTenPercent) {
  Scene scene;
  const WorldState w = initial_state(scene);
  const auto full = render_depth(scene, w, scene.camera, CounterRng(1), {0, false, false});
  const auto occ = render_depth(scene, w, scene.camera, CounterRng(1), {0, true, false});
  EXPECT_LE(occ.points.size(), static_cast<std::size_t>(0.1 * scene.camera.width * scene.camera.height));
  EXPECT_GT(occ.points.size(), 0u);
  EXPECT_LT(occ.points.size(), full.points.size());
}

TEST(Odometry, ZeroMotionAndZeroNoise) {
  const CounterRng rng(5);
  OdomState od = initial_odometry(Pose2(1, 2, 0.3));
  const OdomState still = odometry_step(od, PlanarDelta{}, {}, false, rng);
  EXPECT_EQ(still.estimate(), od.estimate());
  const OdomState zero = square_loop(5.0, {0.0, 0.0}, rng);
  EXPECT_EQ(zero.err_x, 0.0);
  EXPECT_EQ(zero.err_z, 0.0);
  EXPECT_EQ(zero.err_yaw, 0.0);
  EXPECT_NEAR(zero.truth.x, 0.0, 1e-9);
  EXPECT_NEAR(zero.truth.z, 0.0, 1e-9);
}

TEST(Odometry, OcclusionDegradesQuality) {
  const CounterRng rng(5);
  OdomState od = initial_odometry(Pose2());
  od = odometry_step(od, PlanarDelta{0.01, 0, 0}, {}, true, rng);
  EXPECT_EQ(od.quality, mapping::PoseQuality::kDegraded);
  od = odometry_step(od, PlanarDelta{0.01, 0, 0}, {}, false, rng);
  EXPECT_EQ(od.quality, mapping::PoseQuality::kGood);
}

TEST(Odometry, KeyframesEveryMetre) {
  const OdomState od = square_loop(5.0, {}, CounterRng(1));
  EXPECT_NEAR(static_cast<double>(od.keyframes.size()), 21.0, 1.0);
  EXPECT_NEAR(od.keyframes[3].travel, 3.0, 0.01);
}

TEST(Odometry, TwentyMetreLoopCalibration) {
  double sum = 0.0;
  const int runs = 100;
  for (int seed = 0; seed < runs; ++seed) {
    const OdomState od = square_loop(5.0, {}, CounterRng(1000 + seed));
    sum += od.err_x * od.err_x + od.err_z * od.err_z;
  }
  const double rms = std::sqrt(sum / runs);
  EXPECT_GT(rms, 0.040);
  EXPECT_LT(rms, 0.060);
}

TEST(LoopClosure, Examples) {
  OdomState od = initial_odometry(Pose2());
  od.travel = 10.0;
  od.truth = Pose2(5, 5, 0);
  od.err_x = 0.1;
  od.err_yaw = 0.05;
  const OdomState far = loop_closure_update(od);
  EXPECT_EQ(far.err_x, 0.1);
  EXPECT_EQ(far.closures, 0u);

  od.truth = Pose2(0.2, 0.1, 0);
  OdomState c = loop_closure_update(od);
  EXPECT_NEAR(c.err_x, 0.010, 1e-15);
  EXPECT_EQ(c.err_z, 0.0);
  EXPECT_NEAR(c.err_yaw, 0.005, 1e-15);
  c = loop_closure_update(c);
  EXPECT_NEAR(c.err_x, 0.001, 1e-15);

  // Recent keyframes are not eligible.
  od.travel = 1.0;
  EXPECT_EQ(loop_closure_update(od).err_x, 0.1);
}

TEST(LoopClosure, NeverIncreasesError) {
  const CounterRng rng(9);
  OdomState od = initial_odometry(Pose2());
  for (int i = 0; i < 20000; ++i) {
    od = odometry_step(od, PlanarDelta{0.005, 0, (i % 2000 < 1000) ? 0.003 : -0.001}, {}, false, rng);
    if (i % 200 == 0) {
      const OdomState c = loop_closure_update(od);
      EXPECT_LE(c.position_error(), od.position_error());
      EXPECT_LE(std::abs(c.err_yaw), std::abs(od.err_yaw));
      od = c;
    }
  }
}

TEST(Determinism, SameSeedSameTrajectory) {
  Scene scene;
  scene.walkers.push_back({0.25, 1.7, 0.8, 0.5, true, {{2, 2}, {-2, 2}}});
  auto run = [&](std::uint64_t seed) {
    WorldState w = initial_state(scene);
    OdomState od = initial_odometry(w.robot);
    const CounterRng rng(seed);
    std::vector<std::uint8_t> trace;
    for (int i = 0; i < 400; ++i) {
      w = step_world(scene, w, {0.2, 0.05 * std::sin(0.01 * i), 0.3}, std::nullopt, std::nullopt, 0.005);
      od = odometry_step(od, w.robot, {}, false, rng);
      const double v[3] = {od.estimate().x, od.estimate().z, w.walkers[0].position.x};
      const auto* b = reinterpret_cast<const std::uint8_t*>(v);
      trace.insert(trace.end(), b, b + sizeof(v));
      if (i % 100 == 0) {
        const auto c = bytes_of(render_depth(scene, w, scene.camera, rng, {static_cast<std::uint64_t>(i), false, true}));
        trace.insert(trace.end(), c.begin(), c.end());
      }
    }
    return trace;
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}
