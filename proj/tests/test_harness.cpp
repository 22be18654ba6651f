#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "yor/harness.hpp"
#include "yor/messages.hpp"

using namespace yor;
using namespace yor::harness;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "yor_harness_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(YOR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, SetAndApply) {
  Config c;
  c.set("tally.loops", "3");
  c.set("closure.enabled", "off");
  c.set("limits.v_max", " 0.2 ");
  EXPECT_EQ(c.loops, 3);
  EXPECT_FALSE(c.loop_closure);
  EXPECT_EQ(c.limits.v_max, 0.2);

  c.apply("# comment\n\nwholebody.latency_frames = 2  # trailing\nodom.noise = true\n");
  EXPECT_EQ(c.pose_latency_frames, 2);
  EXPECT_TRUE(c.odom_noise);
}

TEST(Config, RejectsBadInput) {
  Config c;
  EXPECT_THROW(c.set("no.such.key", "1"), std::invalid_argument);
  EXPECT_THROW(c.set("tally.loops", "ten"), std::invalid_argument);
  EXPECT_THROW(c.set("tally.loops", "0"), std::invalid_argument);
  EXPECT_THROW(c.set("sim.dt", "0.5"), std::invalid_argument);
  EXPECT_THROW(c.set("closure.enabled", "maybe"), std::invalid_argument);
  EXPECT_THROW(c.apply("tally.loops 4\n"), std::invalid_argument);
}

TEST(Config, DumpRoundTrips) {
  Config c;
  c.set("mapping.robot_radius", "0.31");
  c.set("wholebody.dt", "0.004166666666666667");
  c.set("depth.noise", "0");
  Config back;
  back.apply(c.dump());
  EXPECT_EQ(back.dump(), c.dump());
  EXPECT_EQ(back.mapping.robot_radius, 0.31);
  const std::string text = c.dump();
  EXPECT_EQ(Config::keys().size(), static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(Scenario, Names) {
  for (const auto id : {ScenarioId::kTally, ScenarioId::kWholebody, ScenarioId::kObstacle, ScenarioId::kFreeplay}) {
    EXPECT_EQ(parse_scenario(scenario_name(id)), id);
    EXPECT_TRUE(std::filesystem::exists(default_scene_path(id))) << default_scene_path(id);
  }
  EXPECT_FALSE(parse_scenario("warehouse"));
}

TEST(Wholebody, ExactFeedbackHoldsTheEndEffector) {
  RunOptions o;
  o.scenario = ScenarioId::kWholebody;
  o.config.pose_latency_frames = 0;
  o.config.odom_noise = false;
  const auto m = run(o);
  EXPECT_TRUE(m.success);
  EXPECT_LT(m.max_ee_deviation, 1e-9);
  EXPECT_NEAR(m.sim_time, 0.4 / 0.25 + 1.0, 1e-6);
}

TEST(Wholebody, LatencyWithoutNoiseIsSpeedTimesDelay) {
  // No odometry noise: the lag is the only error, v * L / f_pose once the
  // base reaches cruise speed.
  for (int frames : {1, 2, 3}) {
    RunOptions o;
    o.scenario = ScenarioId::kWholebody;
    o.config.pose_latency_frames = frames;
    o.config.odom_noise = false;
    const auto m = run(o);
    EXPECT_NEAR(m.max_ee_deviation, 0.25 * frames / 120.0, 1e-9) << frames;
  }
}

TEST(Metrics, JsonLayoutAndDeterminism) {
  RunOptions o;
  o.scenario = ScenarioId::kWholebody;
  o.seed = 9;
  const auto a = run(o);
  const auto b = run(o);
  EXPECT_EQ(sim_metrics_bytes(a), sim_metrics_bytes(b));
  const auto j = to_json(a);
  EXPECT_EQ(j["scenario"], "wholebody");
  EXPECT_EQ(j["seed"], 9);
  EXPECT_TRUE(j.contains("wall"));
  EXPECT_FALSE(to_json(a, false).contains("wall"));
  EXPECT_EQ(j["wholebody"]["latency_frames"], 1);

  o.seed = 10;
  EXPECT_NE(sim_metrics_bytes(run(o)), sim_metrics_bytes(a));
}

TEST(Log, RecordsEveryTopicInOrder) {
  const auto path = scratch("wholebody.log");
  RunOptions o;
  o.scenario = ScenarioId::kWholebody;
  o.log_path = path.string();
  run(o);
  const auto topics = summarize_log(path.string());
  std::map<std::string, TopicSummary> by;
  for (const auto& t : topics) by[t.topic] = t;
  ASSERT_TRUE(by.count("pose"));
  ASSERT_TRUE(by.count("cmd_ee"));
  ASSERT_TRUE(by.count("cmd_twist"));
  // One pose per 1/120 s step over 2.6 s.
  EXPECT_EQ(by["pose"].count, 312u);
  EXPECT_EQ(by["pose"].count, by["cmd_ee"].count);
  EXPECT_LE(by["pose"].first_stamp, by["pose"].last_stamp);
  EXPECT_NEAR(by["pose"].last_stamp, 2.6, 1e-6);
}

TEST(Obstacle, ClearRouteNeedsOnePlan) {
  RunOptions o;
  o.scenario = ScenarioId::kObstacle;
  o.scene_path = std::string(YOR_SCENE_DIR) + "/obstacle_clear.scene";
  const auto m = run(o);
  EXPECT_TRUE(m.success) << m.failure;
  EXPECT_EQ(m.plans, 1);
  EXPECT_EQ(m.replans, 0);
  EXPECT_EQ(m.collisions, 0u);
}

TEST(Freeplay, ScriptedGoalThroughDoorway) {
  RunOptions o;
  o.scenario = ScenarioId::kFreeplay;
  o.config.freeplay_duration = 60.0;
  o.on_bus = [](bus::Bus& b) -> std::shared_ptr<void> {
    const std::string g = msg::goal(Pose2(2.5, 0.0, kPi / 2));
    b.request("goal", std::vector<std::uint8_t>(g.begin(), g.end()));
    return nullptr;
  };
  const auto m = run(o);
  EXPECT_TRUE(m.goal_reached);
  EXPECT_EQ(m.collisions, 0u);
  EXPECT_EQ(m.lethal_plan_violations, 0);
}

TEST(Bus, GoalServiceValidates) {
  // A malformed goal request gets a reply with an error rather than a timeout.
  RunOptions o;
  o.scenario = ScenarioId::kWholebody;
  std::string reply;
  o.on_bus = [&](bus::Bus& b) -> std::shared_ptr<void> {
    const std::string bad = R"({"x": "left"})";
    const auto r = b.request("goal", std::vector<std::uint8_t>(bad.begin(), bad.end()));
    reply.assign(r.begin(), r.end());
    return nullptr;
  };
  run(o);
  const auto j = msg::parse(reply);
  EXPECT_FALSE(j["accepted"].get<bool>());
  EXPECT_FALSE(j["error"].get<std::string>().empty());
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("run --scenario warehouse --seed 1"), 2);
  EXPECT_EQ(cli("run --scenario wholebody --set no.such=1"), 2);
  const auto metrics = scratch("m.json");
  const auto log = scratch("cli.log");
  EXPECT_EQ(cli("run --scenario wholebody --seed 2 --headless --metrics " + metrics.string() + " --log " + log.string()),
            0);
  std::ifstream in(metrics);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["seed"], 2);
  EXPECT_EQ(cli("replay --log " + log.string()), 0);
  EXPECT_EQ(cli("replay --log /nonexistent/file"), 1);
  EXPECT_EQ(cli("selftest"), 0);
  EXPECT_EQ(cli("config"), 0);

  const auto cfg = scratch("exact.cfg");
  std::ofstream(cfg) << "wholebody.latency_frames = 0\nodom.noise = 0\n";
  EXPECT_EQ(cli("run --scenario wholebody --config " + cfg.string() + " --metrics " + metrics.string()), 0);
  std::ifstream again(metrics);
  EXPECT_EQ(nlohmann::json::parse(again)["wholebody"]["max_ee_deviation_m"], 0.0);
}
