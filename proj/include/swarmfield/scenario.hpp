#pragma once

// Scenario files and the built-in scenario registry. Schema in
// docs/scenario-format.md.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmfield/error.hpp"
#include "swarmfield/formation.hpp"
#include "swarmfield/log.hpp"
#include "swarmfield/planner.hpp"
#include "swarmfield/sim.hpp"

namespace swarmfield {

inline constexpr int kScenarioSchemaVersion = 1;

// ---------------------------------------------------------------------------
// FormationSpec and PlanCommand

inline json to_json_value(const FormationSpec& s) {
  json j = {{"shape", to_string(s.shape)}};
  if (s.center) j["center"] = to_json_value(*s.center);
  if (s.altitude) j["altitude"] = *s.altitude;
  if (s.radius) j["radius"] = *s.radius;
  if (s.rows) j["rows"] = *s.rows;
  if (s.cols) j["cols"] = *s.cols;
  if (s.spacing) j["spacing"] = *s.spacing;
  if (s.edge) j["edge"] = *s.edge;
  if (s.height) j["height"] = *s.height;
  if (s.base_radius) j["base_radius"] = *s.base_radius;
  return j;
}

inline FormationSpec formation_spec_from_json(const json& j) {
  if (!j.is_object()) throw InvalidScenario("formation must be an object");
  FormationSpec s;
  if (!j.contains("shape")) throw InvalidScenario("formation needs a shape");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "shape") {
        const auto name = v.get<std::string>();
        const auto shape = shape_from_string(name);
        if (!shape) throw InvalidScenario("unknown shape '" + name + "'");
        s.shape = *shape;
      } else if (key == "center") s.center = vec3_from_json(v);
      else if (key == "altitude") s.altitude = v.get<double>();
      else if (key == "radius") s.radius = v.get<double>();
      else if (key == "rows") s.rows = v.get<int>();
      else if (key == "cols") s.cols = v.get<int>();
      else if (key == "spacing") s.spacing = v.get<double>();
      else if (key == "edge") s.edge = v.get<double>();
      else if (key == "height") s.height = v.get<double>();
      else if (key == "base_radius") s.base_radius = v.get<double>();
      else throw InvalidScenario("unknown formation key '" + key + "'");
    }
  } catch (const InvalidScenario&) {
    throw;
  } catch (const Error& e) {
    throw InvalidScenario(e.what());
  } catch (const json::exception& e) {
    throw InvalidScenario(std::string("formation: ") + e.what());
  }
  return s;
}

inline json to_json_value(const PlanCommand& c) {
  if (c.formation) return {{"formation", to_json_value(*c.formation)}};
  if (c.swap) return {{"swap", true}};
  if (c.goals) return {{"goals", to_json_value(std::span<const Vec3>(*c.goals))}};
  return {{"text", c.text}};
}

/// Reads exactly one of formation, swap, goals or text. Keys listed in
/// `extra` are ignored.
inline PlanCommand plan_command_from_json(const json& j,
                                          std::initializer_list<std::string_view> extra = {}) {
  if (!j.is_object()) throw InvalidScenario("command must be an object");
  PlanCommand c;
  int kinds = 0;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "formation") {
        c.formation = formation_spec_from_json(v);
        ++kinds;
      } else if (key == "swap") {
        if (!v.get<bool>()) throw InvalidScenario("swap must be true when present");
        c.swap = true;
        ++kinds;
      } else if (key == "goals") {
        c.goals = vec3_list_from_json(v);
        ++kinds;
      } else if (key == "text") {
        c.text = v.get<std::string>();
        if (c.text.empty()) throw InvalidScenario("text command is empty");
        ++kinds;
      } else if (std::find(extra.begin(), extra.end(), key) == extra.end()) {
        throw InvalidScenario("unknown command key '" + key + "'");
      }
    }
  } catch (const InvalidScenario&) {
    throw;
  } catch (const Error& e) {
    throw InvalidScenario(e.what());
  } catch (const json::exception& e) {
    throw InvalidScenario(std::string("command: ") + e.what());
  }
  if (kinds != 1) throw InvalidScenario("command needs exactly one of formation, swap, goals, text");
  return c;
}

// ---------------------------------------------------------------------------
// Scenario files

inline json to_json_value(const SpawnSpec& s) {
  json j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case SpawnKind::grid:
      j["spacing"] = s.spacing;
      j["altitude"] = s.altitude;
      break;
    case SpawnKind::circle:
      j["radius"] = s.radius;
      j["altitude"] = s.altitude;
      j["layers"] = s.layers;
      j["layer_gap"] = s.layer_gap;
      break;
    case SpawnKind::explicit_list:
      j["positions"] = to_json_value(std::span<const Vec3>(s.positions));
      break;
    case SpawnKind::random:
      j["spacing"] = s.spacing;
      j["altitude"] = s.altitude;
      j["extent"] = s.extent;
      j["height"] = s.height;
      break;
  }
  return j;
}

inline SpawnSpec spawn_from_json(const json& j) {
  SpawnSpec s;
  if (j.is_string()) {
    s.kind = spawn_kind_from_string(j.get<std::string>());
    return s;
  }
  if (!j.is_object()) throw InvalidScenario("spawn must be a string or an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") s.kind = spawn_kind_from_string(v.get<std::string>());
    else if (key == "spacing") s.spacing = v.get<double>();
    else if (key == "altitude") s.altitude = v.get<double>();
    else if (key == "radius") s.radius = v.get<double>();
    else if (key == "layers") s.layers = v.get<int>();
    else if (key == "layer_gap") s.layer_gap = v.get<double>();
    else if (key == "extent") s.extent = v.get<double>();
    else if (key == "height") s.height = v.get<double>();
    else if (key == "positions") s.positions = vec3_list_from_json(v);
    else throw InvalidScenario("unknown spawn key '" + key + "'");
  }
  return s;
}

inline json to_json_value(const SimConfig& c) {
  json script = json::array();
  for (const auto& e : c.script) {
    json item = to_json_value(e.command);
    item["at_time"] = e.at_time;
    script.push_back(std::move(item));
  }
  return {{"version", kScenarioSchemaVersion},
          {"name", c.name},
          {"n_agents", c.n_agents},
          {"seed", c.seed},
          {"duration", c.duration},
          {"spawn", to_json_value(c.spawn)},
          {"params", to_json_value(c.params)},
          {"fence", to_json_value(c.fence)},
          {"expect_converge", c.expect_converge},
          {"stop_on_convergence", c.stop_on_convergence},
          {"escape_side", c.escape_side == EscapeSide::left ? "left" : "by_id_parity"},
          {"script", std::move(script)}};
}

/// Parses and validates a scenario. Every defect is an InvalidScenario.
inline SimConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw InvalidScenario("scenario must be a JSON object");
  SimConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "version") {
        if (v.get<int>() != kScenarioSchemaVersion)
          throw InvalidScenario("unsupported scenario version " + v.dump());
      } else if (key == "name") c.name = v.get<std::string>();
      else if (key == "n_agents") {
        const auto n = v.get<long long>();
        if (n < 1) throw InvalidScenario("n_agents must be >= 1");
        c.n_agents = static_cast<std::size_t>(n);
      } else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "duration") c.duration = v.get<double>();
      else if (key == "spawn") c.spawn = spawn_from_json(v);
      else if (key == "params") c.params = params_from_json(v);
      else if (key == "fence") c.fence = fence_from_json(v);
      else if (key == "expect_converge") c.expect_converge = v.get<bool>();
      else if (key == "stop_on_convergence") c.stop_on_convergence = v.get<bool>();
      else if (key == "escape_side") {
        const auto side = v.get<std::string>();
        if (side == "left") c.escape_side = EscapeSide::left;
        else if (side == "by_id_parity") c.escape_side = EscapeSide::by_id_parity;
        else throw InvalidScenario("unknown escape_side '" + side + "'");
      } else if (key == "script") {
        if (!v.is_array()) throw InvalidScenario("script must be an array");
        for (const auto& item : v) {
          if (!item.is_object() || !item.contains("at_time"))
            throw InvalidScenario("script entries need at_time");
          c.script.push_back({item.at("at_time").get<double>(),
                              plan_command_from_json(item, {"at_time"})});
        }
      } else {
        throw InvalidScenario("unknown scenario key '" + key + "'");
      }
    }
    if (!j.contains("n_agents")) throw InvalidScenario("scenario needs n_agents");
    c.validate();
  } catch (const InvalidScenario&) {
    throw;
  } catch (const Error& e) {
    throw InvalidScenario(e.what());
  } catch (const json::exception& e) {
    throw InvalidScenario(e.what());
  }
  return c;
}

inline SimConfig scenario_from_string(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InvalidScenario("scenario is not valid JSON");
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Registry

namespace detail {

inline SimConfig base_scenario(std::string name, std::size_t n, double duration) {
  SimConfig c;
  c.name = std::move(name);
  c.n_agents = n;
  c.seed = 0;
  c.duration = duration;
  return c;
}

inline SpawnSpec ring_spawn(double radius, double altitude, int layers = 1) {
  SpawnSpec s;
  s.kind = SpawnKind::circle;
  s.radius = radius;
  s.altitude = altitude;
  s.layers = layers;
  return s;
}

/// Every agent commanded to one point.
inline SimConfig static_hazard(std::string name, std::size_t n) {
  SimConfig c = base_scenario(std::move(name), n, 60.0);
  if (n <= 10) c.spawn = ring_spawn(3.0, 2.0);
  c.expect_converge = false;  // the shared goal cannot be reached by all
  c.stop_on_convergence = false;
  c.script.push_back({0.0, {std::nullopt, false, std::vector<Vec3>(n, Vec3{0.0, 0.0, 2.0}),
                            "converge on a single point"}});
  return c;
}

inline SimConfig swap(std::string name, std::size_t n, int layers = 1) {
  SimConfig c = base_scenario(std::move(name), n, 120.0);
  c.spawn = ring_spawn(3.0, layers > 1 ? 1.0 : 2.0, layers);
  PlanCommand cmd;
  cmd.swap = true;
  c.script.push_back({0.0, cmd});
  return c;
}

inline SimConfig formation(std::string name, std::size_t n, FormationSpec spec) {
  SimConfig c = base_scenario(std::move(name), n, 120.0);
  PlanCommand cmd;
  cmd.formation = spec;
  c.script.push_back({0.0, cmd});
  return c;
}

}  // namespace detail

inline const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = {
      "static_hazard_n3",     "static_hazard_n10",   "static_hazard_n30", "swap_n10",
      "swap_n30",             "swap",                "formation_circle_n10",
      "formation_grid_n30",   "formation_cube_n8",   "formation_sphere_n30",
      "formation_tree_n10"};
  return names;
}

/// Built-in scenario by name. `agents` resizes it; the static hazard goal
/// list is resized to match.
inline SimConfig builtin_scenario(std::string_view name,
                                  std::optional<std::size_t> agents = std::nullopt) {
  SimConfig c;
  if (name == "static_hazard_n3") c = detail::static_hazard("static_hazard_n3", 3);
  else if (name == "static_hazard_n10") c = detail::static_hazard("static_hazard_n10", 10);
  else if (name == "static_hazard_n30") c = detail::static_hazard("static_hazard_n30", 30);
  else if (name == "swap_n10") c = detail::swap("swap_n10", 10);
  else if (name == "swap_n30") c = detail::swap("swap_n30", 30, 3);
  else if (name == "swap") c = detail::swap("swap", 10);
  else if (name == "formation_circle_n10") {
    FormationSpec s;
    s.shape = Shape::circle;
    s.radius = 3.0;
    s.altitude = 2.0;
    c = detail::formation("formation_circle_n10", 10, s);
  } else if (name == "formation_grid_n30") {
    FormationSpec s;
    s.shape = Shape::grid;
    s.rows = 5;
    s.cols = 6;
    s.spacing = 1.0;
    s.altitude = 2.0;
    c = detail::formation("formation_grid_n30", 30, s);
  } else if (name == "formation_cube_n8") {
    FormationSpec s;
    s.shape = Shape::cube;
    c = detail::formation("formation_cube_n8", 8, s);
  } else if (name == "formation_sphere_n30") {
    FormationSpec s;
    s.shape = Shape::sphere;
    s.radius = 2.0;
    c = detail::formation("formation_sphere_n30", 30, s);
  } else if (name == "formation_tree_n10") {
    FormationSpec s;
    s.shape = Shape::tree;
    c = detail::formation("formation_tree_n10", 10, s);
  } else {
    throw UnknownScenario("no built-in scenario named '" + std::string(name) + "'");
  }
  if (agents && *agents != c.n_agents) {
    if (*agents < 1) throw InvalidScenario("agent count must be >= 1");
    c.n_agents = *agents;
    for (auto& e : c.script)
      if (e.command.goals)
        e.command.goals->assign(*agents, e.command.goals->empty() ? Vec3{} : e.command.goals->front());
    // Grid rows/cols no longer match; let the oracle factorize.
    for (auto& e : c.script)
      if (e.command.formation && e.command.formation->shape == Shape::grid) {
        e.command.formation->rows.reset();
        e.command.formation->cols.reset();
      }
  }
  c.validate();
  return c;
}

/// A registry name, or a path to a scenario JSON file.
inline SimConfig load_scenario(const std::string& name_or_path,
                               std::optional<std::size_t> agents = std::nullopt) {
  const bool looks_like_path = name_or_path.find('/') != std::string::npos ||
                               name_or_path.ends_with(".json");
  if (!looks_like_path) return builtin_scenario(name_or_path, agents);
  std::ifstream in(name_or_path);
  if (!in) throw UnknownScenario("cannot open scenario file " + name_or_path);
  std::stringstream ss;
  ss << in.rdbuf();
  SimConfig c = scenario_from_string(ss.str());
  if (agents && *agents != c.n_agents) {
    if (c.spawn.kind == SpawnKind::explicit_list)
      throw InvalidScenario("cannot resize a scenario with an explicit spawn list");
    c.n_agents = *agents;
    for (auto& e : c.script)
      if (e.command.goals) throw InvalidScenario("cannot resize a scenario with explicit goals");
    c.validate();
  }
  return c;
}

}  // namespace swarmfield
