// swarmfield: run scenarios, replay logs, serve the gateway.

#include <pthread.h>
#include <signal.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "swarmfield/gateway_server.hpp"
#include "swarmfield/llm.hpp"
#include "swarmfield/llm_http.hpp"
#include "swarmfield/metrics.hpp"
#include "swarmfield/scenario.hpp"
#include "swarmfield/sim.hpp"

namespace fs = std::filesystem;
using namespace swarmfield;

namespace {

int config_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
  return kExitConfigError;
}

void print_summary(std::ostream& out, const RunReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? detail::shortest(*v) : std::string("none");
  };
  out << "scenario          " << r.scenario << '\n'
      << "agents            " << r.n_agents << '\n'
      << "ticks             " << r.ticks << '\n'
      << "converged         " << (r.converged ? "yes" : "no") << '\n'
      << "convergence_time  " << opt(r.convergence_time) << '\n'
      << "d_min_global      " << opt(r.d_min_global) << '\n'
      << "speed_max_global  " << detail::shortest(r.speed_max_global) << '\n'
      << "collisions        " << r.collisions << '\n'
      << "apf_activations   " << r.apf_activations << '\n'
      << "escape_events     " << r.escape_events << '\n'
      << "stalled_at_end    " << r.stalled_at_end << '\n'
      << "planner_failures  " << r.planner_failures << '\n';
  if (r.timing)
    out << "on_time_fraction  " << detail::shortest(r.timing->on_time_fraction()) << '\n';
  out << "exit              " << exit_code(r) << " (" << exit_reason(r) << ")\n";
}

void write_outputs(const fs::path& dir, const RunReport& report,
                   const std::vector<TickRecord>& ticks) {
  {
    std::ofstream out(dir / "report.json");
    out << report_json(report);
  }
  std::ofstream csv(dir / "metrics.csv");
  write_metrics_csv(csv, report, ticks);
}

struct RunOptions {
  std::string scenario;
  std::optional<std::size_t> agents;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::string planner = "oracle";
  bool lenient = false;
  bool no_escape = false;
  bool realtime = false;
  std::optional<std::string> out;
  std::optional<std::string> transcript;
};

int run_command(const RunOptions& o) {
  SimConfig config;
  try {
    config = load_scenario(o.scenario, o.agents);
    if (o.seed) config.seed = *o.seed;
    if (o.duration) config.duration = *o.duration;
    if (o.no_escape) config.params.escape_enabled = false;
    config.realtime = o.realtime;
    config.validate();
  } catch (const Error& e) {
    return config_error(e.code(), e.what());
  }

  std::unique_ptr<Planner> planner;
  std::unique_ptr<Planner> inner;
  RecordingPlanner* recording = nullptr;
  if (o.planner == "llm") {
    if (o.transcript) {
      std::ifstream in(*o.transcript);
      if (!in) return config_error("InvalidConfig", "cannot open transcript " + *o.transcript);
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) return config_error("SchemaMismatch", "transcript is not valid JSON");
      try {
        planner = std::make_unique<TranscriptPlanner>(transcript_from_json(j), config.fence,
                                                      config.params.r_min, o.lenient);
      } catch (const Error& e) {
        return config_error(e.code(), e.what());
      }
    } else {
      std::optional<LlmEndpoint> endpoint;
      try {
        endpoint = LlmEndpoint::from_env();
      } catch (const Error& e) {
        return config_error(e.code(), e.what());
      }
      if (!endpoint)
        return config_error("InvalidConfig",
                            "llm planner needs SWARMFIELD_LLM_ENDPOINT and SWARMFIELD_LLM_MODEL");
      inner = std::make_unique<LlmPlanner>(*endpoint, std::make_shared<HttpChatTransport>(),
                                           config.fence, config.params.r_min, o.lenient);
      auto rec = std::make_unique<RecordingPlanner>(*inner);
      recording = rec.get();
      planner = std::move(rec);
    }
  } else if (o.planner == "oracle") {
    planner = std::make_unique<OraclePlanner>(config.fence, config.params.r_min);
  } else {
    return config_error("InvalidConfig", "unknown planner '" + o.planner + "'");
  }

  std::optional<fs::path> dir;
  std::ofstream log;
  if (o.out) {
    dir = fs::path(*o.out);
    std::error_code ec;
    fs::create_directories(*dir, ec);
    if (ec) return config_error("InvalidConfig", "cannot create " + dir->string() + ": " + ec.message());
    log.open(*dir / "log.jsonl");
    if (!log) return config_error("InvalidConfig", "cannot write " + (*dir / "log.jsonl").string());
  }

  RunResult result;
  try {
    result = run_scenario(config, *planner, dir ? &log : nullptr);
  } catch (const Error& e) {
    return config_error(e.code(), e.what());
  }
  log.close();
  if (dir) {
    write_outputs(*dir, result.report, result.ticks);
    if (recording) {
      std::ofstream t(*dir / "transcript.json");
      t << transcript_to_json(recording->entries()).dump(2) << '\n';
    }
  }
  print_summary(std::cout, result.report);
  const int code = exit_code(result.report);
  if (code != kExitOk)
    std::cerr << nlohmann::json{{"error", exit_reason(result.report)}, {"exit_code", code}}.dump()
              << '\n';
  return code;
}

std::optional<RunLog> load_log(const std::string& path, int& status) {
  std::ifstream in(path);
  if (!in) {
    status = config_error("SchemaMismatch", "cannot open log " + path);
    return std::nullopt;
  }
  try {
    return read_log(in);
  } catch (const Error& e) {
    status = config_error(e.code(), e.what());
    return std::nullopt;
  }
}

int replay_command(const std::string& path, const std::optional<std::string>& out) {
  int status = 0;
  auto log = load_log(path, status);
  if (!log) return status;
  RunReport report;
  try {
    report = summarize_run(*log);
  } catch (const Error& e) {
    return config_error(e.code(), e.what());
  }
  if (out) {
    std::error_code ec;
    fs::create_directories(*out, ec);
    write_outputs(*out, report, log->ticks);
  } else {
    std::cout << report_json(report);
  }
  return exit_code(report);
}

int report_command(const std::string& path) {
  int status = 0;
  auto log = load_log(path, status);
  if (!log) return status;
  try {
    const auto report = summarize_run(*log);
    print_summary(std::cout, report);
    return exit_code(report);
  } catch (const Error& e) {
    return config_error(e.code(), e.what());
  }
}

int serve_command(const std::optional<std::string>& config_path,
                  const std::optional<std::string>& bind, const std::optional<std::string>& mode,
                  bool lenient) {
  GatewayConfig config;
  try {
    config = GatewayConfig::load(config_path);
    if (bind) config.set_bind(*bind);
    if (mode) config.mode = planner_mode_from_string(*mode);
    if (lenient) config.lenient_parse = true;
    if (config.mode == PlannerMode::llm && !config.endpoint)
      return config_error("InvalidConfig",
                          "llm mode needs SWARMFIELD_LLM_ENDPOINT and SWARMFIELD_LLM_MODEL");
  } catch (const Error& e) {
    return config_error(e.code(), e.what());
  }

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // threads started below inherit the mask

  GatewayServer server(config);
  try {
    server.start();
  } catch (const std::exception& e) {
    return config_error("InvalidConfig", std::string("cannot bind: ") + e.what());
  }
  std::cerr << "listening on " << config.host << ':' << server.port() << " (mode "
            << to_string(config.mode) << ")\n";
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.wait();
  watcher.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarmfield: potential-field swarm simulator"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario as fast as possible");
  run_cmd->add_option("--scenario", run.scenario, "Built-in scenario name or JSON file")->required();
  run_cmd->add_option("--agents", run.agents, "Override the agent count");
  run_cmd->add_option("--seed", run.seed, "Override the seed");
  run_cmd->add_option("--duration", run.duration, "Override the duration in simulated seconds");
  run_cmd->add_option("--planner", run.planner, "oracle or llm")
      ->check(CLI::IsMember({"oracle", "llm"}));
  run_cmd->add_flag("--lenient-parse", run.lenient, "Strip one code fence and prose lines from replies");
  run_cmd->add_flag("--no-escape", run.no_escape, "Disable the deadlock escape nudge");
  run_cmd->add_flag("--realtime", run.realtime, "Pace the loop to wall-clock time");
  run_cmd->add_option("--out", run.out, "Directory for log.jsonl, report.json, metrics.csv");
  run_cmd->add_option("--transcript", run.transcript,
                      "Answer llm commands from a recorded transcript instead of the network");

  std::string replay_log;
  std::optional<std::string> replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Recompute the report of a JSONL log");
  replay_cmd->add_option("log", replay_log, "Log file")->required();
  replay_cmd->add_option("--out", replay_out, "Write report.json and metrics.csv here instead of stdout");

  std::string report_log;
  auto* report_cmd = app.add_subcommand("report", "Print the summary of a JSONL log");
  report_cmd->add_option("log", report_log, "Log file")->required();

  std::optional<std::string> serve_config, serve_bind, serve_mode;
  bool serve_lenient = false;
  auto* serve_cmd = app.add_subcommand("serve", "Host the HTTP/WebSocket gateway");
  serve_cmd->add_option("--config", serve_config, "Gateway config JSON");
  serve_cmd->add_option("--bind", serve_bind, "host:port");
  serve_cmd->add_option("--mode", serve_mode, "oracle or llm")->check(CLI::IsMember({"oracle", "llm"}));
  serve_cmd->add_flag("--lenient-parse", serve_lenient, "Lenient reply parsing in llm mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfigError;
  }

  if (*run_cmd) return run_command(run);
  if (*replay_cmd) return replay_command(replay_log, replay_out);
  if (*report_cmd) return report_command(report_log);
  if (*serve_cmd) return serve_command(serve_config, serve_bind, serve_mode, serve_lenient);
  return kExitConfigError;
}
