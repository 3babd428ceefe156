#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmfield/apf.hpp"
#include "swarmfield/error.hpp"
#include "swarmfield/log.hpp"
#include "swarmfield/model.hpp"
#include "swarmfield/neighbors.hpp"

namespace swarmfield {

/// d_min over all unique pairs; absent for a single agent.
inline std::optional<double> min_pairwise_distance(const SwarmSnapshot& snapshot) {
  const auto p = snapshot.positions();
  return min_pairwise_distance_sweep(p);
}

/// Ticks the swarm must stay within tolerance to count as converged (2 s).
inline std::uint64_t convergence_window_ticks(const ControllerParams& params) {
  return static_cast<std::uint64_t>(std::llround(2.0 / params.dt));
}

/// Log-spaced latency buckets between 0.1 s and 300 s. counts has one more
/// slot than edges: counts[k] holds latencies in [edges[k-1], edges[k]).
struct LatencyHistogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;

  static LatencyHistogram make() {
    constexpr int kBuckets = 12;
    LatencyHistogram h;
    for (int k = 0; k <= kBuckets; ++k)
      h.edges.push_back(0.1 * std::pow(3000.0, static_cast<double>(k) / kBuckets));
    h.counts.assign(h.edges.size() + 1, 0);
    return h;
  }

  void add(double latency) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), latency);
    ++counts[static_cast<std::size_t>(it - edges.begin())];
  }

  friend bool operator==(const LatencyHistogram&, const LatencyHistogram&) = default;
};

struct LatencySample {
  std::uint64_t tick = 0;
  std::string status;
  PlanSource source = PlanSource::hold;
  PlanOutcome outcome = PlanOutcome::ok;
  double latency = 0.0;

  friend bool operator==(const LatencySample&, const LatencySample&) = default;
};

struct RunReport {
  std::string scenario;
  std::size_t n_agents = 0;
  std::uint64_t ticks = 0;
  bool expect_converge = true;
  bool converged = false;
  std::optional<double> convergence_time;
  std::optional<double> d_min_global;
  std::vector<std::optional<double>> d_min_series;
  double speed_max_global = 0.0;
  std::vector<std::vector<double>> speed_series;
  std::uint64_t collisions = 0;       // ticks with a pair closer than collision_dist
  std::uint64_t apf_activations = 0;  // ticks with a pair closer than r_min
  std::uint64_t escape_events = 0;    // ticks with an escape nudge applied
  std::uint64_t stall_ticks = 0;      // ticks with any agent stalled
  std::uint32_t stalled_at_end = 0;
  double max_displacement = 0.0;      // largest single-tick move of any agent
  std::uint64_t fence_excursions = 0; // ticks with an agent outside the fence
  std::vector<LatencySample> planner_latencies;
  std::uint64_t planner_failures = 0;
  std::string first_failure_code;
  LatencyHistogram latency_histogram = LatencyHistogram::make();
  std::optional<TimingStats> timing;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

namespace detail {

inline double max_speed(const std::vector<double>& speeds) {
  double m = 0.0;
  for (double s : speeds) m = std::max(m, s);
  return m;
}

inline bool any_outside(const std::vector<Vec3>& positions, const GeoFence& fence) {
  for (const auto& p : positions)
    if (!fence.contains(p)) return true;
  return false;
}

inline double max_step(const std::vector<Vec3>& before, const std::vector<Vec3>& after) {
  double m = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) m = std::max(m, distance(before[i], after[i]));
  return m;
}

}  // namespace detail

/// Appends TickRecords and keeps the run aggregates up to date as it goes.
/// Single writer: the control loop.
class Recorder {
public:
  explicit Recorder(RunHeader header) : header_(std::move(header)) {
    report_.scenario = header_.scenario;
    report_.n_agents = header_.n_agents;
    report_.expect_converge = header_.expect_converge;
  }

  const RunHeader& header() const noexcept { return header_; }
  const std::vector<TickRecord>& ticks() const noexcept { return ticks_; }
  const std::vector<PlanEvent>& plans() const noexcept { return plans_; }

  void set_sink(LogWriter* sink) {
    sink_ = sink;
    if (sink_) sink_->header(header_);
  }

  void record_plan(const PlanEvent& e) {
    plans_.push_back(e);
    if (sink_) sink_->plan(e);
    add_plan(report_, e);
  }

  /// With retain off only the running aggregates are kept: no rows and no
  /// per-tick series. For long interactive sessions.
  void set_retain(bool retain) { retain_ = retain; }

  /// Builds the row for this tick and appends it.
  const TickRecord& record_tick(const SwarmSnapshot& snapshot, const VelocityCommandSet& commands,
                                const WaypointPlan& plan, const ControllerParams& params,
                                std::uint32_t stalled = 0) {
    if (snapshot.tick() != next_tick_)
      throw OutOfOrderTick("tick " + std::to_string(snapshot.tick()) + " recorded, expected " +
                           std::to_string(next_tick_));
    TickRecord r;
    r.tick = snapshot.tick();
    r.sim_time = snapshot.sim_time();
    r.positions = snapshot.positions();
    r.commanded_velocities = commands.velocities;
    r.d_min = min_pairwise_distance_sweep(r.positions);
    r.potential = composite_potential(r.positions, plan.goals, params);
    r.active_plan_source = plan.source;
    r.escape_active = !commands.escape_applied.empty();
    r.stalled = stalled;
    r.at_goal = convergence_check(r.positions, plan.goals, params.goal_tolerance);
    return append(std::move(r));
  }

  /// Appends a prebuilt row.
  const TickRecord& append(TickRecord r) {
    if (r.tick != next_tick_)
      throw OutOfOrderTick("tick " + std::to_string(r.tick) + " recorded, expected " +
                           std::to_string(next_tick_));
    add_tick(report_, header_, r, next_tick_ ? &last_.positions : nullptr, streak_, retain_);
    ++next_tick_;
    if (sink_) sink_->tick(r);
    if (retain_) ticks_.push_back(r);
    last_ = std::move(r);
    return last_;
  }

  void set_timing(const TimingStats& t) {
    report_.timing = t;
    if (sink_) sink_->timing(t);
  }

  const TickRecord& last() const noexcept { return last_; }

  /// Whether the last convergence_window_ticks rows were all at goal.
  bool converged_now() const noexcept {
    return streak_ >= convergence_window_ticks(header_.params);
  }

  /// Aggregates maintained tick by tick.
  RunReport live_report() const {
    if (next_tick_ == 0) throw EmptyRun("no ticks recorded");
    RunReport r = report_;
    finish(r, header_, last_.tick, streak_);
    return r;
  }

  static void add_plan(RunReport& r, const PlanEvent& e) {
    r.planner_latencies.push_back({e.tick, e.status, e.source, e.outcome, e.latency});
    r.latency_histogram.add(e.latency);
    if (e.status == "adopted" && e.outcome != PlanOutcome::ok) {
      if (r.planner_failures++ == 0) r.first_failure_code = e.error_code;
    }
  }

  static void add_tick(RunReport& r, const RunHeader& h, const TickRecord& t,
                       const std::vector<Vec3>* prev, std::uint64_t& streak, bool series = true) {
    ++r.ticks;
    if (series) r.d_min_series.push_back(t.d_min);
    if (t.d_min) {
      r.d_min_global = r.d_min_global ? std::min(*r.d_min_global, *t.d_min) : *t.d_min;
      if (*t.d_min < h.params.collision_dist) ++r.collisions;
      if (*t.d_min < h.params.r_min) ++r.apf_activations;
    }
    std::vector<double> speeds;
    speeds.reserve(t.commanded_velocities.size());
    for (const auto& v : t.commanded_velocities) speeds.push_back(norm(v));
    r.speed_max_global = std::max(r.speed_max_global, detail::max_speed(speeds));
    if (series) r.speed_series.push_back(std::move(speeds));
    if (t.escape_active) ++r.escape_events;
    if (t.stalled > 0) ++r.stall_ticks;
    r.stalled_at_end = t.stalled;
    if (prev) r.max_displacement = std::max(r.max_displacement, detail::max_step(*prev, t.positions));
    if (detail::any_outside(t.positions, h.fence)) ++r.fence_excursions;
    streak = t.at_goal ? streak + 1 : 0;
  }

  /// Convergence time is the start of the final at-goal streak.
  static void finish(RunReport& r, const RunHeader& h, std::uint64_t last_tick,
                     std::uint64_t streak) {
    r.converged = streak >= convergence_window_ticks(h.params);
    r.convergence_time.reset();
    if (r.converged) r.convergence_time = static_cast<double>(last_tick + 1 - streak) * h.params.dt;
  }

private:
  RunHeader header_;
  std::vector<TickRecord> ticks_;
  std::vector<PlanEvent> plans_;
  TickRecord last_;
  RunReport report_;
  std::uint64_t next_tick_ = 0;
  std::uint64_t streak_ = 0;
  bool retain_ = true;
  LogWriter* sink_ = nullptr;
};

/// Recomputes every aggregate from scratch.
inline RunReport summarize_run(const RunHeader& header, const std::vector<TickRecord>& ticks,
                               const std::vector<PlanEvent>& plans,
                               const std::optional<TimingStats>& timing = std::nullopt) {
  if (ticks.empty()) throw EmptyRun("no ticks recorded");
  RunReport r;
  r.scenario = header.scenario;
  r.n_agents = header.n_agents;
  r.expect_converge = header.expect_converge;
  for (const auto& e : plans) Recorder::add_plan(r, e);
  std::uint64_t streak = 0;
  for (std::size_t k = 0; k < ticks.size(); ++k)
    Recorder::add_tick(r, header, ticks[k], k ? &ticks[k - 1].positions : nullptr, streak);
  Recorder::finish(r, header, ticks.back().tick, streak);
  r.timing = timing;
  return r;
}

inline RunReport summarize_run(const RunLog& log) {
  return summarize_run(log.header, log.ticks, log.plans, log.timing);
}

/// Reads a JSONL log and recomputes its report.
inline RunReport replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open log " + path);
  return summarize_run(read_log(in));
}

// ---------------------------------------------------------------------------
// Exit status: a function of the report alone.

enum ExitCode : int {
  kExitOk = 0,
  kExitNotConverged = 1,
  kExitCollision = 2,
  kExitPlannerFailure = 3,
  kExitConfigError = 4,
};

inline int exit_code(const RunReport& r) {
  if (r.collisions > 0) return kExitCollision;
  if (r.planner_failures > 0) return kExitPlannerFailure;
  if (r.expect_converge && !r.converged) return kExitNotConverged;
  return kExitOk;
}

inline std::string exit_reason(const RunReport& r) {
  switch (exit_code(r)) {
    case kExitCollision: return "Collision";
    case kExitPlannerFailure: return r.first_failure_code.empty() ? "PlannerFailure" : r.first_failure_code;
    case kExitNotConverged: return "NotConverged";
    default: return "ok";
  }
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json_value(const RunReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["n_agents"] = r.n_agents;
  j["ticks"] = r.ticks;
  j["expect_converge"] = r.expect_converge;
  j["converged"] = r.converged;
  j["convergence_time"] = optional_json(r.convergence_time);
  j["d_min_global"] = optional_json(r.d_min_global);
  auto& dms = j["d_min_series"] = nlohmann::json::array();
  for (const auto& d : r.d_min_series) dms.push_back(optional_json(d));
  j["speed_max_global"] = r.speed_max_global;
  j["speed_series"] = r.speed_series;
  j["collisions"] = r.collisions;
  j["apf_activations"] = r.apf_activations;
  j["escape_events"] = r.escape_events;
  j["stall_ticks"] = r.stall_ticks;
  j["stalled_at_end"] = r.stalled_at_end;
  j["max_displacement"] = r.max_displacement;
  j["fence_excursions"] = r.fence_excursions;
  auto& lat = j["planner_latencies"] = nlohmann::json::array();
  for (const auto& s : r.planner_latencies)
    lat.push_back({{"tick", s.tick},
                   {"status", s.status},
                   {"source", to_string(s.source)},
                   {"outcome", to_string(s.outcome)},
                   {"latency", s.latency}});
  j["planner_failures"] = r.planner_failures;
  j["first_failure_code"] = r.first_failure_code;
  j["latency_histogram"] = {{"edges", r.latency_histogram.edges},
                            {"counts", r.latency_histogram.counts}};
  if (r.timing)
    j["timing"] = {{"ticks", r.timing->ticks},
                   {"on_time", r.timing->on_time},
                   {"on_time_fraction", r.timing->on_time_fraction()},
                   {"max_lateness", r.timing->max_lateness}};
  else
    j["timing"] = nullptr;
  j["exit_code"] = exit_code(r);
  j["exit_reason"] = exit_reason(r);
  return j;
}

inline std::string report_json(const RunReport& r) { return to_json_value(r).dump(2) + "\n"; }

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// tick,sim_time,d_min,speed_0..speed_{N-1}; d_min empty when absent.
inline void write_metrics_csv(std::ostream& out, const RunReport& r,
                              const std::vector<TickRecord>& ticks) {
  out << "tick,sim_time,d_min";
  for (std::size_t i = 0; i < r.n_agents; ++i) out << ",speed_" << i;
  out << '\n';
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    out << ticks[k].tick << ',' << detail::shortest(ticks[k].sim_time) << ',';
    if (r.d_min_series[k]) out << detail::shortest(*r.d_min_series[k]);
    for (double s : r.speed_series[k]) out << ',' << detail::shortest(s);
    out << '\n';
  }
}

}  // namespace swarmfield
