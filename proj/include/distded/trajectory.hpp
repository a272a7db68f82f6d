#pragma once

#include <optional>
#include <string>
#include <vector>

#include "distded/errors.hpp"

namespace distded {

enum class Outcome { positive, negative, timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::positive: return "positive";
    case Outcome::negative: return "negative";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  if (s == "positive") return Outcome::positive;
  if (s == "negative") return Outcome::negative;
  if (s == "timeout") return Outcome::timeout;
  throw FormatError("unknown outcome '" + s + "'");
}

struct Transition {
  std::vector<double> state;
  int action = 0;
  std::vector<double> next_state;
  bool terminal = false;
  std::optional<Outcome> outcome;  // present iff terminal

  /// Whether the learning target bootstraps from next_state. Timeouts end
  /// the episode but are not a true outcome, so they still bootstrap.
  bool bootstraps() const { return !terminal || outcome == Outcome::timeout; }

  bool operator==(const Transition&) const = default;
};

struct TrajectoryRecord {
  std::vector<Transition> transitions;
  Outcome outcome = Outcome::timeout;
  std::optional<int> zone_entry_index;

  std::size_t size() const { return transitions.size(); }
  bool operator==(const TrajectoryRecord&) const = default;
};

inline void validate(const Transition& t, int action_count) {
  if (t.action < 0 || t.action >= action_count) throw DomainError("transition action out of range");
  if (t.terminal != t.outcome.has_value()) throw DomainError("terminal flag and outcome disagree");
}

inline void validate(const TrajectoryRecord& r, int action_count) {
  if (r.transitions.empty()) throw DomainError("empty trajectory");
  for (std::size_t i = 0; i < r.transitions.size(); ++i) {
    validate(r.transitions[i], action_count);
    const bool last = i + 1 == r.transitions.size();
    if (r.transitions[i].terminal != last) throw DomainError("only the last transition may be terminal");
  }
  if (r.transitions.back().outcome != r.outcome) throw DomainError("trajectory outcome differs from its last transition");
}

}  // namespace distded
