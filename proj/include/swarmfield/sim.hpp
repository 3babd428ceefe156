#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "swarmfield/apf.hpp"
#include "swarmfield/error.hpp"
#include "swarmfield/log.hpp"
#include "swarmfield/metrics.hpp"
#include "swarmfield/model.hpp"
#include "swarmfield/neighbors.hpp"
#include "swarmfield/planner.hpp"

namespace swarmfield {

enum class SpawnKind { grid, circle, explicit_list, random };

inline std::string_view to_string(SpawnKind k) noexcept {
  switch (k) {
    case SpawnKind::grid: return "grid";
    case SpawnKind::circle: return "circle";
    case SpawnKind::explicit_list: return "explicit";
    case SpawnKind::random: return "random";
  }
  return "grid";
}

inline SpawnKind spawn_kind_from_string(std::string_view s) {
  if (s == "grid") return SpawnKind::grid;
  if (s == "circle") return SpawnKind::circle;
  if (s == "explicit") return SpawnKind::explicit_list;
  if (s == "random") return SpawnKind::random;
  throw InvalidConfig("unknown spawn kind '" + std::string(s) + "'");
}

/// A command issued at the first tick boundary at or after at_time.
struct ScriptEntry {
  double at_time = 0.0;
  PlanCommand command;
};

struct SpawnSpec {
  SpawnKind kind = SpawnKind::grid;
  double spacing = 1.5;        // grid: lattice pitch; random: minimum separation
  double altitude = 1.0;       // z of the first layer
  double radius = 3.0;         // circle
  int layers = 1;              // circle: stacked rings
  double layer_gap = 1.0;      // circle: vertical distance between rings
  double extent = 4.0;         // random: half-width of the xy box
  double height = 2.0;         // random: z range above altitude
  std::vector<Vec3> positions; // explicit
};

struct SimConfig {
  std::string name = "custom";
  std::size_t n_agents = 1;
  std::uint64_t seed = 0;
  SpawnSpec spawn;
  double duration = 60.0;  // s
  bool realtime = false;
  bool stop_on_convergence = true;
  bool expect_converge = true;
  EscapeSide escape_side = EscapeSide::left;
  ControllerParams params;
  GeoFence fence;
  std::vector<ScriptEntry> script;

  void validate() const {
    params.validate();
    fence.validate();
    if (n_agents < 1) throw InvalidConfig("n_agents must be >= 1");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw InvalidConfig("duration must be > 0");
    if (spawn.kind == SpawnKind::explicit_list && spawn.positions.size() != n_agents)
      throw InvalidConfig("explicit spawn list has " + std::to_string(spawn.positions.size()) +
                          " entries for " + std::to_string(n_agents) + " agents");
    for (const auto& s : script)
      if (!(s.at_time >= 0.0) || !std::isfinite(s.at_time))
        throw InvalidConfig("script times must be finite and >= 0");
  }

  std::uint64_t max_ticks() const { return static_cast<std::uint64_t>(std::llround(duration / params.dt)); }

  RunHeader header() const {
    return {name, n_agents, seed, params, fence, expect_converge, realtime};
  }
};

namespace detail {

inline void check_spawn(const std::vector<Vec3>& p, const SimConfig& c) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!c.fence.contains(p[i]))
      throw InfeasibleSpawn("spawn position " + std::to_string(i) + " is outside the fence");
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      if (distance(p[i], p[j]) < c.params.r_min)
        throw InfeasibleSpawn("spawn positions " + std::to_string(i) + " and " +
                              std::to_string(j) + " are closer than r_min");
}

inline std::size_t lattice_count(double lo, double hi, double step) {
  if (hi < lo) return 0;
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

/// Square layers centred on the origin, row-major by id, stacked upward.
inline std::vector<Vec3> grid_spawn(const SimConfig& c) {
  const double s = c.spawn.spacing;
  const auto& f = c.fence;
  const std::size_t n = c.n_agents;
  std::size_t side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  // Largest centred side that fits in both horizontal axes.
  const std::size_t fit_x = lattice_count(0.0, 2.0 * std::min(-f.x_min, f.x_max), s);
  const std::size_t fit_y = lattice_count(0.0, 2.0 * std::min(-f.y_min, f.y_max), s);
  side = std::min({side, fit_x, fit_y});
  const std::size_t levels = lattice_count(c.spawn.altitude, f.z_max, s);
  if (side == 0 || side * side * levels < n)
    throw InfeasibleSpawn(std::to_string(n) + " agents do not fit in the fence at spacing " +
                          std::to_string(s));
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t layer = k / (side * side);
    const std::size_t in_layer = k % (side * side);
    const std::size_t count = std::min(side * side, n - layer * side * side);
    const std::size_t cols = std::min(side, count);
    const std::size_t rows = (count + cols - 1) / cols;
    const std::size_t r = in_layer / cols, col = in_layer % cols;
    out.push_back({(static_cast<double>(col) - (static_cast<double>(cols) - 1.0) / 2.0) * s,
                   (static_cast<double>(r) - (static_cast<double>(rows) - 1.0) / 2.0) * s,
                   c.spawn.altitude + static_cast<double>(layer) * s});
  }
  return out;
}

/// Rings about the z axis. Agent i sits in ring i / per_ring at angle
/// 2 pi (i mod per_ring) / per_ring, starting on +X.
inline std::vector<Vec3> circle_spawn(const SimConfig& c) {
  const std::size_t n = c.n_agents;
  const std::size_t layers = static_cast<std::size_t>(std::max(1, c.spawn.layers));
  const std::size_t per_ring = (n + layers - 1) / layers;
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i % per_ring) /
                     static_cast<double>(per_ring);
    out.push_back({c.spawn.radius * std::cos(a), c.spawn.radius * std::sin(a),
                   c.spawn.altitude + static_cast<double>(i / per_ring) * c.spawn.layer_gap});
  }
  return out;
}

inline double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Rejection sampling in a box. Uses raw engine output so the sequence is
/// the same on every standard library.
inline std::vector<Vec3> random_spawn(const SimConfig& c) {
  std::mt19937_64 rng(c.seed);
  const double e = c.spawn.extent;
  const double sep = std::max(c.spawn.spacing, c.params.r_min);
  std::vector<Vec3> out;
  out.reserve(c.n_agents);
  constexpr int kTries = 10000;
  for (std::size_t i = 0; i < c.n_agents; ++i) {
    bool placed = false;
    for (int t = 0; t < kTries && !placed; ++t) {
      const Vec3 q{-e + 2.0 * e * unit_double(rng), -e + 2.0 * e * unit_double(rng),
                   c.spawn.altitude + c.spawn.height * unit_double(rng)};
      placed = std::all_of(out.begin(), out.end(),
                           [&](const Vec3& o) { return distance(o, q) >= sep; });
      if (placed) out.push_back(q);
    }
    if (!placed)
      throw InfeasibleSpawn("could not place agent " + std::to_string(i) + " after " +
                            std::to_string(kTries) + " draws");
  }
  return out;
}

}  // namespace detail

/// Initial snapshot at tick 0, a pure function of the config.
inline SwarmSnapshot spawn_layout(const SimConfig& config) {
  config.validate();
  std::vector<Vec3> p;
  switch (config.spawn.kind) {
    case SpawnKind::grid: p = detail::grid_spawn(config); break;
    case SpawnKind::circle: p = detail::circle_spawn(config); break;
    case SpawnKind::explicit_list: p = config.spawn.positions; break;
    case SpawnKind::random: p = detail::random_spawn(config); break;
  }
  for (const auto& q : p)
    if (!is_finite(q)) throw NonFinite("spawn position is not finite");
  detail::check_spawn(p, config);
  return SwarmSnapshot::at_rest(0, 0.0, p);
}

/// Explicit Euler step: p' = p + v dt, velocity set to the command.
inline SwarmSnapshot integrate_tick(const SwarmSnapshot& snapshot,
                                    const VelocityCommandSet& commands, double dt) {
  if (commands.tick != snapshot.tick())
    throw InvalidConfig("command set is for tick " + std::to_string(commands.tick) +
                        ", snapshot is at " + std::to_string(snapshot.tick()));
  std::vector<AgentState> next;
  next.reserve(snapshot.size());
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    const auto& a = snapshot[i];
    next.push_back({a.id, a.position + commands.velocities[i] * dt, commands.velocities[i]});
  }
  const std::uint64_t tick = snapshot.tick() + 1;
  return {tick, static_cast<double>(tick) * dt, std::move(next)};
}

// ---------------------------------------------------------------------------
// Asynchronous planning

/// A command plus an optional channel back to whoever issued it.
struct CommandRequest {
  PlanCommand command;
  std::shared_ptr<std::promise<PlanEvent>> reply;
};

/// Thread-safe queue of commands waiting for the next tick boundary.
class CommandInbox {
public:
  void push(CommandRequest r) {
    std::lock_guard lock(mu_);
    q_.push_back(std::move(r));
  }

  std::vector<CommandRequest> drain() {
    std::lock_guard lock(mu_);
    std::vector<CommandRequest> out(std::make_move_iterator(q_.begin()),
                                    std::make_move_iterator(q_.end()));
    q_.clear();
    return out;
  }

private:
  std::mutex mu_;
  std::deque<CommandRequest> q_;
};

/// Runs planner calls on its own thread. At most one request is in flight;
/// a newer submit supersedes both a queued request and the in-flight one.
class PlannerWorker {
public:
  struct Delivery {
    PlannerResult result;
    bool superseded = false;
    std::shared_ptr<std::promise<PlanEvent>> reply;
  };

  explicit PlannerWorker(Planner& planner) : planner_(planner), thread_([this] { loop(); }) {}

  ~PlannerWorker() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

  PlannerWorker(const PlannerWorker&) = delete;
  PlannerWorker& operator=(const PlannerWorker&) = delete;

  void submit(CommandRequest request, SwarmSnapshot snapshot) {
    {
      std::lock_guard lock(mu_);
      ++generation_;
      if (queued_) {
        auto text = queued_->request.command.describe();
        done_.push_back({cancelled(queued_->snapshot, text), true, queued_->request.reply});
      }
      queued_ = Job{std::move(request), std::move(snapshot), generation_};
    }
    cv_.notify_all();
  }

  std::vector<Delivery> poll() {
    std::lock_guard lock(mu_);
    std::vector<Delivery> out(std::make_move_iterator(done_.begin()),
                              std::make_move_iterator(done_.end()));
    done_.clear();
    return out;
  }

  bool busy() const {
    std::lock_guard lock(mu_);
    return queued_.has_value() || running_ || !done_.empty();
  }

  static PlannerResult cancelled(const SwarmSnapshot& snapshot, const std::string& text) {
    auto r = hold_result(snapshot, text, PlanOutcome::timeout, "Superseded",
                         "cancelled by a newer command");
    r.plan.accepted = false;
    return r;
  }

private:
  struct Job {
    CommandRequest request;
    SwarmSnapshot snapshot;
    std::uint64_t generation = 0;
  };

  void loop() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return stop_ || queued_.has_value(); });
      if (stop_) return;
      Job job = std::move(*queued_);
      queued_.reset();
      running_ = true;
      lock.unlock();
      PlannerResult r = planner_.plan(job.request.command, job.snapshot);
      lock.lock();
      running_ = false;
      done_.push_back({std::move(r), job.generation != generation_, job.request.reply});
    }
  }

  Planner& planner_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Job> queued_;
  std::deque<Delivery> done_;
  std::uint64_t generation_ = 0;
  bool running_ = false;
  bool stop_ = false;
  std::thread thread_;
};

// ---------------------------------------------------------------------------
// The loop

/// Optional attachments for a run. All callbacks execute on the control
/// loop thread and must not block.
struct RunHooks {
  CommandInbox* inbox = nullptr;
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const SwarmSnapshot&, const WaypointPlan&, const TickRecord&)> on_tick;
  std::function<void(const PlanEvent&)> on_plan;
  bool retain = true;  // keep per-tick rows and series in memory
};

struct RunResult {
  RunReport report;
  std::vector<TickRecord> ticks;
  std::vector<PlanEvent> plans;
};

/// Sense, plan, act at 1/dt until the duration elapses or the swarm has
/// held its goals for two seconds with nothing left to plan. Planner
/// failures become hold plans; they never end the run.
///
/// Non-realtime runs call the planner inline at the tick boundary, so the
/// log is a pure function of (config, planner). Realtime runs plan on a
/// worker thread and adopt results at the first boundary after they land.
inline RunResult run_scenario(const SimConfig& config, Planner& planner,
                              std::ostream* log = nullptr, RunHooks hooks = {}) {
  config.validate();
  SwarmSnapshot snapshot = spawn_layout(config);
  WaypointPlan plan = WaypointPlan::hold(snapshot, "spawn");
  const auto& params = config.params;

  Recorder recorder(config.header());
  recorder.set_retain(hooks.retain);
  std::optional<LogWriter> writer;
  if (log) {
    writer.emplace(*log);
    recorder.set_sink(&*writer);
  }

  std::vector<ScriptEntry> script = config.script;
  std::stable_sort(script.begin(), script.end(),
                   [](const auto& a, const auto& b) { return a.at_time < b.at_time; });
  std::size_t next_entry = 0;
  auto due_tick = [&](double at_time) {
    return static_cast<std::uint64_t>(std::ceil(at_time / params.dt - 1e-9));
  };

  auto adopt = [&](const PlannerResult& r, bool superseded,
                   const std::shared_ptr<std::promise<PlanEvent>>& reply) {
    const auto e = PlanEvent::from_result(snapshot.tick(), r, superseded ? "superseded" : "adopted");
    recorder.record_plan(e);
    if (!superseded) plan = r.plan;
    if (hooks.on_plan) hooks.on_plan(e);
    if (reply) reply->set_value(e);
  };

  std::optional<PlannerWorker> worker;
  if (config.realtime) worker.emplace(planner);

  StallTracker stalls;
  stalls.reset(snapshot.size());
  TimingStats timing;
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(params.dt));
  const auto start = clock::now();

  const std::uint64_t last_tick = config.max_ticks();
  for (;;) {
    const std::uint64_t k = snapshot.tick();
    if (config.realtime) {
      const auto deadline = start + static_cast<clock::rep>(k) * period;
      std::this_thread::sleep_until(deadline);
      const double late = std::chrono::duration<double>(clock::now() - deadline).count();
      ++timing.ticks;
      if (late < params.dt) ++timing.on_time;
      timing.max_lateness = std::max(timing.max_lateness, late);
    }

    // Tick boundary: issue due commands, adopt finished plans.
    std::vector<CommandRequest> issued;
    while (next_entry < script.size() && due_tick(script[next_entry].at_time) <= k)
      issued.push_back({script[next_entry++].command, nullptr});
    if (hooks.inbox)
      for (auto& r : hooks.inbox->drain()) issued.push_back(std::move(r));
    for (auto& req : issued) {
      if (worker) {
        worker->submit(std::move(req), snapshot);
      } else {
        adopt(planner.plan(req.command, snapshot), false, req.reply);
      }
    }
    if (worker)
      for (auto& d : worker->poll()) adopt(d.result, d.superseded, d.reply);

    const auto commands = control_step(snapshot, plan, params, stalls, config.escape_side);
    const auto& row = recorder.record_tick(snapshot, commands, plan, params,
                                           stalls.stalled_count(params));
    if (hooks.on_tick) hooks.on_tick(snapshot, plan, row);

    if (k >= last_tick) break;
    if (hooks.stop && hooks.stop->load()) break;
    const bool idle = next_entry == script.size() && (!worker || !worker->busy());
    if (config.stop_on_convergence && idle && recorder.converged_now()) break;
    snapshot = integrate_tick(snapshot, commands, params.dt);
  }

  // Requests still in flight are left to the worker's destructor; their
  // callers learn of it through a broken promise.
  worker.reset();
  if (config.realtime) recorder.set_timing(timing);
  return {recorder.live_report(), recorder.ticks(), recorder.plans()};
}

}  // namespace swarmfield
