#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace swarmfield {

// Every failure the library raises carries a stable machine-readable code
// (e.g. "InfeasibleSpawn") next to the human message. The CLI and the
// gateway forward the code verbatim.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define SWARMFIELD_DEFINE_ERROR(Name)                                          \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& message) : Error(#Name, message) {}       \
  }

SWARMFIELD_DEFINE_ERROR(InvalidConfig);
SWARMFIELD_DEFINE_ERROR(InfeasibleSpawn);
SWARMFIELD_DEFINE_ERROR(ShapeInfeasible);
SWARMFIELD_DEFINE_ERROR(FenceViolation);
SWARMFIELD_DEFINE_ERROR(NoValidMatching);
SWARMFIELD_DEFINE_ERROR(MalformedOutput);
SWARMFIELD_DEFINE_ERROR(CountMismatch);
SWARMFIELD_DEFINE_ERROR(NonFinite);
SWARMFIELD_DEFINE_ERROR(PromptTooLarge);
SWARMFIELD_DEFINE_ERROR(OutOfOrderTick);
SWARMFIELD_DEFINE_ERROR(EmptyRun);
SWARMFIELD_DEFINE_ERROR(SchemaMismatch);
SWARMFIELD_DEFINE_ERROR(SessionIdle);
SWARMFIELD_DEFINE_ERROR(UnknownScenario);
SWARMFIELD_DEFINE_ERROR(InvalidScenario);

#undef SWARMFIELD_DEFINE_ERROR

}  // namespace swarmfield
