#pragma once

// Session state behind the network gateway: one swarm per process, a
// realtime control loop on its own thread, and a broadcast bus for state
// frames. Nothing here touches sockets; see gateway_server.hpp.

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "swarmfield/error.hpp"
#include "swarmfield/llm.hpp"
#include "swarmfield/log.hpp"
#include "swarmfield/metrics.hpp"
#include "swarmfield/planner.hpp"
#include "swarmfield/scenario.hpp"
#include "swarmfield/sim.hpp"

namespace swarmfield {

enum class PlannerMode { oracle, llm };

inline std::string_view to_string(PlannerMode m) noexcept {
  return m == PlannerMode::llm ? "llm" : "oracle";
}

inline PlannerMode planner_mode_from_string(std::string_view s) {
  if (s == "oracle") return PlannerMode::oracle;
  if (s == "llm") return PlannerMode::llm;
  throw InvalidConfig("unknown planner mode '" + std::string(s) + "'");
}

enum class RunStatus { idle, running, holding };

inline std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::idle: return "idle";
    case RunStatus::running: return "running";
    case RunStatus::holding: return "holding";
  }
  return "idle";
}

struct GatewayConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  PlannerMode mode = PlannerMode::oracle;
  bool lenient_parse = false;
  std::string token;  // when set, requests need "Authorization: Bearer <token>"
  double session_duration = 3600.0;  // s of simulated flight per session
  std::optional<LlmEndpoint> endpoint;

  /// Overlays a JSON object {bind, mode, lenient_parse, token, session_duration}.
  void apply_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidConfig("gateway config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "bind") set_bind(v.get<std::string>());
      else if (key == "mode") mode = planner_mode_from_string(v.get<std::string>());
      else if (key == "lenient_parse") lenient_parse = v.get<bool>();
      else if (key == "token") token = v.get<std::string>();
      else if (key == "session_duration") session_duration = v.get<double>();
      else throw InvalidConfig("unknown gateway config key '" + key + "'");
    }
  }

  /// "host:port" or ":port".
  void set_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw InvalidConfig("bind address needs host:port: " + bind);
    if (colon > 0) host = bind.substr(0, colon);
    const int p = std::atoi(bind.c_str() + colon + 1);
    if (p < 0 || p > 65535) throw InvalidConfig("bad port in " + bind);
    port = static_cast<std::uint16_t>(p);
  }

  /// Config file first, then SWARMFIELD_BIND / SWARMFIELD_MODE /
  /// SWARMFIELD_TOKEN, then the LLM endpoint variables.
  static GatewayConfig load(const std::optional<std::string>& path) {
    GatewayConfig c;
    if (path) {
      std::ifstream in(*path);
      if (!in) throw InvalidConfig("cannot open gateway config " + *path);
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) throw InvalidConfig("gateway config is not valid JSON");
      c.apply_json(j);
    }
    if (const char* b = std::getenv("SWARMFIELD_BIND")) c.set_bind(b);
    if (const char* m = std::getenv("SWARMFIELD_MODE")) c.mode = planner_mode_from_string(m);
    if (const char* t = std::getenv("SWARMFIELD_TOKEN")) c.token = t;
    c.endpoint = LlmEndpoint::from_env();
    if (c.mode == PlannerMode::llm && !c.endpoint)
      throw InvalidConfig("llm mode needs SWARMFIELD_LLM_ENDPOINT and SWARMFIELD_LLM_MODEL");
    return c;
  }
};

// ---------------------------------------------------------------------------
// Streaming

/// Every stride-th tick is delivered to a subscriber asking for `rate` Hz.
inline std::uint64_t stream_stride(double tick_rate, double rate) {
  if (!(rate > 0.0) || rate >= tick_rate) return 1;
  return static_cast<std::uint64_t>(std::ceil(tick_rate / rate - 1e-9));
}

struct Frame {
  std::uint64_t seq = 0;
  std::optional<std::uint64_t> tick;  // absent on status frames
  std::shared_ptr<const std::string> data;
};

/// Latest-frames broadcast. Publishers never block on readers; a reader
/// that falls behind skips to the newest frame it wants.
class FrameBus {
public:
  static constexpr std::size_t kHistory = 64;

  void publish(std::optional<std::uint64_t> tick, std::string data) {
    {
      std::lock_guard lock(mu_);
      frames_.push_back({++seq_, tick, std::make_shared<const std::string>(std::move(data))});
      if (frames_.size() > kHistory) frames_.pop_front();
    }
    cv_.notify_all();
  }

  /// Newest frame after `after` that is a status frame or a tick divisible
  /// by `stride`. Waits up to `timeout`; nullopt on timeout or close.
  std::optional<Frame> next(std::uint64_t after, std::uint64_t stride,
                            std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    std::optional<Frame> found;
    cv_.wait_for(lock, timeout, [&] {
      if (closed_) return true;
      for (auto it = frames_.rbegin(); it != frames_.rend() && it->seq > after; ++it)
        if (!it->tick || *it->tick % stride == 0) {
          found = *it;
          return true;
        }
      return false;
    });
    return found;
  }

  std::uint64_t last_seq() const {
    std::lock_guard lock(mu_);
    return seq_;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> frames_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

inline std::string state_frame(const TickRecord& row, const WaypointPlan& plan, RunStatus status) {
  nlohmann::json speeds = nlohmann::json::array();
  for (const auto& v : row.commanded_velocities) speeds.push_back(norm(v));
  nlohmann::json j = {{"type", "state"},
                      {"tick", row.tick},
                      {"sim_time", row.sim_time},
                      {"positions", to_json_value(std::span<const Vec3>(row.positions))},
                      {"goals", to_json_value(std::span<const Vec3>(plan.goals))},
                      {"d_min", row.d_min ? nlohmann::json(*row.d_min) : nlohmann::json(nullptr)},
                      {"speeds", std::move(speeds)},
                      {"plan_source", to_string(plan.source)},
                      {"run_status", to_string(status)}};
  return j.dump();
}

inline std::string status_frame(RunStatus status, std::uint64_t session_id) {
  return nlohmann::json{{"type", "status"}, {"run_status", to_string(status)}, {"session_id", session_id}}
      .dump();
}

inline nlohmann::json plan_summary(const PlanEvent& e) {
  return {{"status", e.status},
          {"source", to_string(e.source)},
          {"accepted", e.accepted},
          {"outcome", to_string(e.outcome)},
          {"rejection_reason", e.rejection_reason ? nlohmann::json(*e.rejection_reason) : nlohmann::json(nullptr)},
          {"error_code", e.error_code},
          {"latency", e.latency},
          {"command_text", e.command_text},
          {"tick", e.tick}};
}

// ---------------------------------------------------------------------------
// Session

/// The single interactive swarm. start() launches a realtime loop; commands
/// are queued for the next tick boundary and planned off the loop thread.
class Session {
public:
  explicit Session(GatewayConfig config) : config_(std::move(config)) {}
  ~Session() { stop(); }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  std::unique_ptr<Planner> make_planner(const SimConfig& sim) const {
    if (config_.mode == PlannerMode::llm) {
      if (!config_.endpoint || !transport_factory_)
        throw InvalidConfig("llm mode needs an endpoint and a transport");
      return std::make_unique<LlmPlanner>(*config_.endpoint, transport_factory_(), sim.fence,
                                          sim.params.r_min, config_.lenient_parse);
    }
    return std::make_unique<OraclePlanner>(sim.fence, sim.params.r_min);
  }

  /// Replaces the transport used in llm mode (tests inject a fake).
  void set_transport_factory(std::function<std::shared_ptr<ChatTransport>()> f) {
    transport_factory_ = std::move(f);
  }

  /// Starts a fresh session from `sim` (its script runs too). Any running
  /// session is stopped first.
  std::uint64_t start(SimConfig sim) {
    stop();
    sim.realtime = true;
    sim.stop_on_convergence = false;
    sim.duration = config_.session_duration;
    sim.validate();
    spawn_layout(sim);  // fail here rather than on the loop thread
    auto planner = make_planner(sim);

    std::lock_guard lock(mu_);
    stop_flag_ = std::make_shared<std::atomic<bool>>(false);
    inbox_ = std::make_shared<CommandInbox>();
    ++session_id_;
    sim_ = sim;
    status_ = RunStatus::running;
    plan_source_ = PlanSource::hold;
    tick_ = 0;
    last_plan_.reset();

    RunHooks hooks;
    hooks.inbox = inbox_.get();
    hooks.stop = stop_flag_.get();
    hooks.retain = false;
    hooks.on_tick = [this](const SwarmSnapshot&, const WaypointPlan& plan, const TickRecord& row) {
      RunStatus st;
      {
        std::lock_guard l(mu_);
        tick_ = row.tick;
        plan_source_ = plan.source;
        status_ = plan.source == PlanSource::hold && last_plan_ ? RunStatus::holding
                                                                 : RunStatus::running;
        st = status_;
      }
      bus_.publish(row.tick, state_frame(row, plan, st));
    };
    hooks.on_plan = [this](const PlanEvent& e) {
      std::lock_guard l(mu_);
      if (e.status == "adopted") last_plan_ = e;
    };
    thread_ = std::thread([sim, hooks, planner = std::move(planner)]() mutable {
      try {
        run_scenario(sim, *planner, nullptr, hooks);
      } catch (const std::exception&) {
        // The loop only throws on programming errors; the session goes idle.
      }
    });
    return session_id_;
  }

  void stop() {
    std::thread t;
    {
      std::lock_guard lock(mu_);
      if (stop_flag_) stop_flag_->store(true);
      t = std::move(thread_);
      status_ = RunStatus::idle;
    }
    if (t.joinable()) t.join();
    std::lock_guard lock(mu_);
    status_ = RunStatus::idle;
  }

  /// Queues a command; the future resolves when the plan is adopted or
  /// superseded. Throws SessionIdle when no session is running.
  std::future<PlanEvent> submit(PlanCommand command) {
    std::lock_guard lock(mu_);
    if (status_ == RunStatus::idle || !inbox_) throw SessionIdle("no session is running");
    auto promise = std::make_shared<std::promise<PlanEvent>>();
    auto fut = promise->get_future();
    inbox_->push({std::move(command), std::move(promise)});
    return fut;
  }

  RunStatus status() const {
    std::lock_guard lock(mu_);
    return status_;
  }

  nlohmann::json describe() const {
    std::lock_guard lock(mu_);
    nlohmann::json j = {{"session_id", session_id_},
                        {"mode", to_string(config_.mode)},
                        {"run_status", to_string(status_)}};
    if (status_ != RunStatus::idle) {
      j["scenario"] = sim_.name;
      j["n_agents"] = sim_.n_agents;
      j["tick"] = tick_;
      j["tick_rate"] = sim_.params.tick_rate();
      j["plan_source"] = to_string(plan_source_);
    }
    j["last_plan"] = last_plan_ ? plan_summary(*last_plan_) : nlohmann::json(nullptr);
    return j;
  }

  std::uint64_t session_id() const {
    std::lock_guard lock(mu_);
    return session_id_;
  }

  double tick_rate() const {
    std::lock_guard lock(mu_);
    return sim_.params.tick_rate();
  }

  const GatewayConfig& config() const noexcept { return config_; }
  FrameBus& bus() noexcept { return bus_; }

private:
  GatewayConfig config_;
  std::function<std::shared_ptr<ChatTransport>()> transport_factory_;
  mutable std::mutex mu_;
  std::thread thread_;
  std::shared_ptr<std::atomic<bool>> stop_flag_;
  std::shared_ptr<CommandInbox> inbox_;
  std::uint64_t session_id_ = 0;
  SimConfig sim_;
  RunStatus status_ = RunStatus::idle;
  PlanSource plan_source_ = PlanSource::hold;
  std::uint64_t tick_ = 0;
  std::optional<PlanEvent> last_plan_;
  FrameBus bus_;
};

// ---------------------------------------------------------------------------
// Headless scenario runs

/// Background runs started through the API, addressed by handle.
class ScenarioRunner {
public:
  ~ScenarioRunner() {
    std::lock_guard lock(mu_);
    for (auto& [h, job] : jobs_)
      if (job.thread.joinable()) job.thread.join();
  }

  std::uint64_t start(SimConfig sim) {
    sim.realtime = false;
    sim.validate();
    std::lock_guard lock(mu_);
    const auto handle = ++next_;
    auto& job = jobs_[handle];
    job.state = std::make_shared<State>();
    job.thread = std::thread([sim, state = job.state] {
      try {
        OraclePlanner planner(sim.fence, sim.params.r_min);
        auto result = run_scenario(sim, planner);
        std::lock_guard l(state->mu);
        state->report = to_json_value(result.report);
      } catch (const Error& e) {
        std::lock_guard l(state->mu);
        state->error = nlohmann::json{{"error", e.code()}, {"message", e.what()}};
      } catch (const std::exception& e) {
        std::lock_guard l(state->mu);
        state->error = nlohmann::json{{"error", "InternalError"}, {"message", e.what()}};
      }
      state->done = true;
    });
    return handle;
  }

  /// nullopt for an unknown handle; {"status":"running"} while in progress.
  std::optional<nlohmann::json> get(std::uint64_t handle) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(handle);
    if (it == jobs_.end()) return std::nullopt;
    const auto& s = *it->second.state;
    using out = std::optional<nlohmann::json>;
    if (!s.done) return out(std::in_place, nlohmann::json{{"status", "running"}, {"handle", handle}});
    std::lock_guard l(s.mu);
    return out(std::in_place, s.report ? *s.report : *s.error);
  }

private:
  struct State {
    mutable std::mutex mu;
    std::atomic<bool> done{false};
    std::optional<nlohmann::json> report;
    std::optional<nlohmann::json> error;
  };
  struct Job {
    std::shared_ptr<State> state;
    std::thread thread;
  };
  mutable std::mutex mu_;
  std::map<std::uint64_t, Job> jobs_;
  std::uint64_t next_ = 0;
};

/// A registry name ({"name": ...}) or an inline scenario ({"scenario": {...}}).
inline SimConfig scenario_from_request(const nlohmann::json& body) {
  if (!body.is_object()) throw InvalidScenario("request body must be a JSON object");
  std::optional<std::size_t> agents;
  if (body.contains("n_agents")) agents = body.at("n_agents").get<std::size_t>();
  if (body.contains("name") && body.contains("scenario"))
    throw InvalidScenario("give either name or scenario, not both");
  if (body.contains("name")) return builtin_scenario(body.at("name").get<std::string>(), agents);
  if (body.contains("scenario")) return scenario_from_json(body.at("scenario"));
  throw InvalidScenario("request needs name or scenario");
}

}  // namespace swarmfield
