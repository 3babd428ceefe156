#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "swarmfield/scenario.hpp"

using namespace swarmfield;

TEST(Scenario, EveryBuiltinLoadsAndSpawns) {
  for (const auto& name : builtin_scenario_names()) {
    const auto c = builtin_scenario(name);
    EXPECT_EQ(c.name, name);
    EXPECT_NO_THROW(spawn_layout(c)) << name;
    EXPECT_FALSE(c.script.empty()) << name;
  }
  EXPECT_THROW(builtin_scenario("no_such"), UnknownScenario);
}

TEST(Scenario, StaticHazardSharesOneGoal) {
  const auto c = builtin_scenario("static_hazard_n10");
  EXPECT_FALSE(c.expect_converge);
  EXPECT_FALSE(c.stop_on_convergence);
  EXPECT_DOUBLE_EQ(c.duration, 60.0);
  ASSERT_TRUE(c.script[0].command.goals);
  EXPECT_EQ(*c.script[0].command.goals, std::vector<Vec3>(10, Vec3{0, 0, 2}));
}

TEST(Scenario, AgentOverrideResizes) {
  auto c = builtin_scenario("static_hazard_n3", 5);
  EXPECT_EQ(c.n_agents, 5u);
  EXPECT_EQ(c.script[0].command.goals->size(), 5u);
  c = builtin_scenario("formation_grid_n30", 12);
  EXPECT_FALSE(c.script[0].command.formation->rows);
  EXPECT_THROW(builtin_scenario("swap", 0), InvalidScenario);
}

TEST(Scenario, JsonRoundTrip) {
  for (const auto& name : builtin_scenario_names()) {
    const auto c = builtin_scenario(name);
    const auto j = to_json_value(c);
    const auto back = scenario_from_json(j);
    EXPECT_EQ(to_json_value(back), j) << name;
  }
}

TEST(Scenario, MinimalFileUsesDefaults) {
  const auto c = scenario_from_string(R"({"n_agents": 4, "spawn": "circle",
      "script": [{"at_time": 1.0, "formation": {"shape": "line", "spacing": 1.2}}]})");
  EXPECT_EQ(c.spawn.kind, SpawnKind::circle);
  EXPECT_EQ(c.params, ControllerParams{});
  ASSERT_EQ(c.script.size(), 1u);
  EXPECT_EQ(c.script[0].command.formation->shape, Shape::line);
  EXPECT_EQ(c.script[0].command.formation->spacing, 1.2);
}

TEST(Scenario, DefectsAreInvalidScenario) {
  const char* bad[] = {
      "[]",
      "not json",
      R"({"name": "x"})",
      R"({"n_agents": 0})",
      R"({"n_agents": 2, "colour": "red"})",
      R"({"n_agents": 2, "version": 9})",
      R"({"n_agents": 2, "params": {"k_rep": -1}})",
      R"({"n_agents": 2, "params": {"kp": 1}})",
      R"({"n_agents": 2, "fence": {"z_min": 0}})",
      R"({"n_agents": 2, "spawn": "spiral"})",
      R"({"n_agents": 2, "spawn": {"kind": "explicit", "positions": [[0,0,1]]}})",
      R"({"n_agents": 2, "escape_side": "right"})",
      R"({"n_agents": 2, "script": [{"swap": true}]})",
      R"({"n_agents": 2, "script": [{"at_time": 0, "swap": true, "text": "also"}]})",
      R"({"n_agents": 2, "script": [{"at_time": 0, "formation": {"shape": "hexagon"}}]})",
      R"({"n_agents": 2, "script": [{"at_time": 0, "formation": {"shape": "grid", "tilt": 3}}]})",
      R"({"n_agents": 2, "script": [{"at_time": 0, "text": ""}]})",
      R"({"n_agents": 2, "script": [{"at_time": 0, "goals": [[0, 0]]}]})",
      R"({"n_agents": 2, "script": [{"at_time": -1, "swap": true}]})",
  };
  for (const char* text : bad) EXPECT_THROW(scenario_from_string(text), InvalidScenario) << text;
}

TEST(Scenario, CommandJson) {
  const auto c = plan_command_from_json(nlohmann::json::parse(R"({"text": "form a ring"})"));
  EXPECT_EQ(c.text, "form a ring");
  EXPECT_FALSE(c.structured());
  EXPECT_EQ(to_json_value(c), nlohmann::json::parse(R"({"text": "form a ring"})"));
  PlanCommand swap;
  swap.swap = true;
  EXPECT_TRUE(plan_command_from_json(to_json_value(swap)).swap);
  EXPECT_THROW(plan_command_from_json(nlohmann::json::parse(R"({"swap": false})")), InvalidScenario);
}

TEST(Scenario, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "swarmfield_scenario_test.json";
  {
    std::ofstream out(path);
    out << R"({"name": "from_file", "n_agents": 3, "script": [{"at_time": 0, "swap": true}]})";
  }
  const auto c = load_scenario(path.string());
  EXPECT_EQ(c.name, "from_file");
  EXPECT_EQ(load_scenario(path.string(), 6).n_agents, 6u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_scenario(path.string()), UnknownScenario);
  EXPECT_EQ(load_scenario("swap_n10").n_agents, 10u);
}
