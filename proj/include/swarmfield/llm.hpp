#pragma once

// Language-model planning path over a generic chat-completion endpoint.
//
// Request body (keys sorted, as nlohmann::json dumps them):
//   {"messages":[{"content":<system>,"role":"system"},
//                {"content":<user>,"role":"user"}],
//    "model":<model>,"temperature":0.0}
// Response body: the usual {"choices":[{"message":{"content":<text>}}]}.

#include <chrono>
#include <cstdlib>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "swarmfield/error.hpp"
#include "swarmfield/model.hpp"
#include "swarmfield/planner.hpp"

namespace swarmfield {

struct LlmEndpoint {
  std::string url;  // full chat-completions URL
  std::string model;
  std::string api_key;
  double timeout_s = 120.0;

  /// Reads SWARMFIELD_LLM_ENDPOINT / _MODEL / _API_KEY / _TIMEOUT_S.
  /// Endpoint and model are required; returns nullopt when either is unset.
  static std::optional<LlmEndpoint> from_env() {
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    LlmEndpoint e;
    e.url = get("SWARMFIELD_LLM_ENDPOINT");
    e.model = get("SWARMFIELD_LLM_MODEL");
    e.api_key = get("SWARMFIELD_LLM_API_KEY");
    if (auto t = get("SWARMFIELD_LLM_TIMEOUT_S"); !t.empty()) {
      try {
        e.timeout_s = std::stod(t);
      } catch (const std::exception&) {
        throw InvalidConfig("SWARMFIELD_LLM_TIMEOUT_S is not a number: " + t);
      }
      if (!(e.timeout_s > 0.0)) throw InvalidConfig("SWARMFIELD_LLM_TIMEOUT_S must be > 0");
    }
    if (e.url.empty() || e.model.empty()) return std::nullopt;
    return e;
  }
};

/// Transport failure: no usable HTTP response (timeout, refused, non-2xx).
class TransportError : public Error {
public:
  explicit TransportError(const std::string& message) : Error("TransportError", message) {}
};

/// Sends one request body, returns the response body.
class ChatTransport {
public:
  virtual ~ChatTransport() = default;
  virtual std::string post(const LlmEndpoint& endpoint, const std::string& body) = 0;
};

inline std::string chat_request_body(const std::string& model, const PromptParts& prompt) {
  nlohmann::json body;
  body["model"] = model;
  body["temperature"] = 0.0;
  body["messages"] = nlohmann::json::array({
      {{"role", "system"}, {"content", prompt.system}},
      {{"role", "user"}, {"content", prompt.user}},
  });
  return body.dump();
}

/// Assistant text from a chat-completion response body.
inline std::string chat_response_content(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw MalformedOutput("response body is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedOutput("response body lacks choices[0].message.content");
  }
}

/// Parses and fence-checks one assistant reply. Never throws.
inline PlannerResult plan_from_reply(std::string reply, const SwarmSnapshot& snapshot,
                                     const GeoFence& fence, bool lenient, std::string command_text) {
  PlannerResult r;
  try {
    auto goals = parse_waypoint_matrix(reply, snapshot.size(), lenient);
    r.plan = validate_plan(std::move(goals), snapshot, fence, PlanSource::llm, command_text);
    if (r.plan.source == PlanSource::hold) {
      r.outcome = PlanOutcome::fence_rejected;
      r.error_code = "FenceViolation";
    }
  } catch (const Error& e) {
    r = hold_result(snapshot, std::move(command_text), PlanOutcome::malformed, e.code(), e.what());
  }
  r.raw_response = std::move(reply);
  return r;
}

/// Full round trip: send, parse, validate. Latency covers all of it. Every
/// failure path yields a hold plan.
inline PlannerResult request_plan(const LlmEndpoint& endpoint, const PromptParts& prompt,
                                  const SwarmSnapshot& snapshot, const GeoFence& fence,
                                  ChatTransport& transport, bool lenient,
                                  const std::string& command_text) {
  const auto start = std::chrono::steady_clock::now();
  PlannerResult r;
  std::string body;
  try {
    body = transport.post(endpoint, chat_request_body(endpoint.model, prompt));
  } catch (const TransportError& e) {
    r = hold_result(snapshot, command_text, PlanOutcome::timeout, e.code(), e.what());
  } catch (const std::exception& e) {
    r = hold_result(snapshot, command_text, PlanOutcome::timeout, "TransportError", e.what());
  }
  if (r.error_code.empty()) {
    try {
      r = plan_from_reply(chat_response_content(body), snapshot, fence, lenient, command_text);
    } catch (const Error& e) {
      r = hold_result(snapshot, command_text, PlanOutcome::malformed, e.code(), e.what());
      r.raw_response = body;
    }
  }
  r.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Free text goes to the model; structured commands fall through to the
/// oracle.
class LlmPlanner : public Planner {
public:
  LlmPlanner(LlmEndpoint endpoint, std::shared_ptr<ChatTransport> transport, GeoFence fence,
             double r_min, bool lenient, std::string system_template = std::string(kDefaultSystemTemplate))
      : endpoint_(std::move(endpoint)),
        transport_(std::move(transport)),
        fence_(fence),
        oracle_(fence, r_min),
        lenient_(lenient),
        system_template_(std::move(system_template)) {}

  PlannerResult plan(const PlanCommand& command, const SwarmSnapshot& snapshot) override {
    if (command.text.empty()) return oracle_.plan(command, snapshot);
    PromptConfig cfg;
    cfg.n_agents = snapshot.size();
    cfg.z_floor = fence_.prompt_z_floor;
    cfg.system_template = system_template_;
    PromptParts prompt;
    try {
      prompt = build_prompt_parts(cfg, snapshot, command.text);
    } catch (const Error& e) {
      return hold_result(snapshot, command.text, PlanOutcome::infeasible, e.code(), e.what());
    }
    return request_plan(endpoint_, prompt, snapshot, fence_, *transport_, lenient_, command.text);
  }

private:
  LlmEndpoint endpoint_;
  std::shared_ptr<ChatTransport> transport_;
  GeoFence fence_;
  OraclePlanner oracle_;
  bool lenient_;
  std::string system_template_;
};

/// One recorded model exchange, enough to reproduce the planner's answer.
struct TranscriptEntry {
  std::string command_text;
  PlanOutcome outcome = PlanOutcome::ok;
  std::string raw_response;
  double latency = 0.0;
  std::string error_code;
  std::string rejection_reason;
};

/// Answers text commands from a recorded transcript, in order. Replies are
/// re-parsed and re-validated; failures are replayed as recorded.
class TranscriptPlanner : public Planner {
public:
  TranscriptPlanner(std::deque<TranscriptEntry> entries, GeoFence fence, double r_min, bool lenient)
      : entries_(std::move(entries)), fence_(fence), oracle_(fence, r_min), lenient_(lenient) {}

  PlannerResult plan(const PlanCommand& command, const SwarmSnapshot& snapshot) override {
    if (command.text.empty()) return oracle_.plan(command, snapshot);
    std::lock_guard lock(mu_);
    if (entries_.empty())
      return hold_result(snapshot, command.text, PlanOutcome::timeout, "TransportError",
                         "transcript exhausted");
    TranscriptEntry e = std::move(entries_.front());
    entries_.pop_front();
    PlannerResult r;
    if (e.outcome == PlanOutcome::ok || e.outcome == PlanOutcome::fence_rejected) {
      r = plan_from_reply(e.raw_response, snapshot, fence_, lenient_, command.text);
    } else {
      r.plan = WaypointPlan::hold(snapshot, command.text, e.rejection_reason);
      r.outcome = e.outcome;
      r.error_code = e.error_code;
      r.raw_response = e.raw_response;
    }
    r.latency = e.latency;
    return r;
  }

private:
  std::mutex mu_;
  std::deque<TranscriptEntry> entries_;
  GeoFence fence_;
  OraclePlanner oracle_;
  bool lenient_;
};

/// Wraps a planner and keeps a transcript of its text-command exchanges.
class RecordingPlanner : public Planner {
public:
  explicit RecordingPlanner(Planner& inner) : inner_(inner) {}

  PlannerResult plan(const PlanCommand& command, const SwarmSnapshot& snapshot) override {
    PlannerResult r = inner_.plan(command, snapshot);
    if (!command.structured()) {
      std::lock_guard lock(mu_);
      entries_.push_back({command.text, r.outcome, r.raw_response, r.latency, r.error_code,
                          r.plan.rejection_reason.value_or("")});
    }
    return r;
  }

  std::deque<TranscriptEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

private:
  Planner& inner_;
  mutable std::mutex mu_;
  std::deque<TranscriptEntry> entries_;
};

inline nlohmann::json transcript_to_json(const std::deque<TranscriptEntry>& entries) {
  auto a = nlohmann::json::array();
  for (const auto& e : entries)
    a.push_back({{"command_text", e.command_text},
                 {"outcome", to_string(e.outcome)},
                 {"raw_response", e.raw_response},
                 {"latency", e.latency},
                 {"error_code", e.error_code},
                 {"rejection_reason", e.rejection_reason}});
  return a;
}

inline std::deque<TranscriptEntry> transcript_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaMismatch("transcript must be a JSON array");
  std::deque<TranscriptEntry> out;
  try {
    for (const auto& e : j)
      out.push_back({e.at("command_text").get<std::string>(),
                     plan_outcome_from_string(e.at("outcome").get<std::string>()),
                     e.at("raw_response").get<std::string>(), e.at("latency").get<double>(),
                     e.value("error_code", std::string()), e.value("rejection_reason", std::string())});
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaMismatch(std::string("transcript: ") + ex.what());
  }
  return out;
}

}  // namespace swarmfield
