#pragma once

/**
 * LifeGate gridworld.
 *
 * The agent walks a grid around a barrier toward a goal region. A band of
 * dead-end cells to the right of the barrier ignores the chosen action and
 * pushes the agent one cell right with probability push_prob per step until
 * it reaches the negative terminal edge. Coordinates: x grows right, y grows
 * up, (0, 0) is the bottom-left cell.
 */

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distded/core/hash.hpp"
#include "distded/core/random.hpp"
#include "distded/trajectory.hpp"

namespace distded {

struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Action : int { up = 0, down = 1, left = 2, right = 3, stay = 4 };
inline constexpr int kActionCount = 5;

inline Cell moved(Cell c, Action a) {
  switch (a) {
    case Action::up: return {c.x, c.y + 1};
    case Action::down: return {c.x, c.y - 1};
    case Action::left: return {c.x - 1, c.y};
    case Action::right: return {c.x + 1, c.y};
    case Action::stay: return c;
  }
  return c;
}

enum class CellKind : std::uint8_t { open, barrier, deadend_zone, goal, negative_edge };

struct GridSpec {
  int width = 10;
  int height = 10;
  std::vector<Cell> barrier_cells;
  std::vector<Cell> deadend_zone_cells;
  std::vector<Cell> goal_cells;
  std::vector<Cell> negative_edge_cells;
  double push_prob = 0.4;
  int max_steps = 100;
  std::vector<Cell> start_cells;

  /// The default 10x10 layout: barrier along y=5 for x=1..5 (open gap at
  /// x=0), dead-end band x=6..8 for y=3..7, negative edge the whole column
  /// x=9, goal at (4,9) and (5,9) above the barrier's far end.
  static GridSpec lifegate() {
    GridSpec g;
    for (int x = 1; x <= 5; ++x) g.barrier_cells.push_back({x, 5});
    for (int x = 6; x <= 8; ++x)
      for (int y = 3; y <= 7; ++y) g.deadend_zone_cells.push_back({x, y});
    for (int y = 0; y < g.height; ++y) g.negative_edge_cells.push_back({9, y});
    g.goal_cells = {{4, 9}, {5, 9}};
    g.start_cells = {{3, 0}, {4, 0}, {3, 1}, {4, 1}};
    return g;
  }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; }

  std::vector<double> features(Cell c) const {
    return {width > 1 ? static_cast<double>(c.x) / (width - 1) : 0.0,
            height > 1 ? static_cast<double>(c.y) / (height - 1) : 0.0};
  }

  bool operator==(const GridSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const Cell& c) { j = nlohmann::json::array({c.x, c.y}); }
inline void from_json(const nlohmann::json& j, Cell& c) {
  if (!j.is_array() || j.size() != 2) throw FormatError("a cell is a [x, y] pair");
  c.x = j.at(0).get<int>();
  c.y = j.at(1).get<int>();
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = nlohmann::json{{"width", g.width},
                     {"height", g.height},
                     {"barrier_cells", g.barrier_cells},
                     {"deadend_zone_cells", g.deadend_zone_cells},
                     {"goal_cells", g.goal_cells},
                     {"negative_edge_cells", g.negative_edge_cells},
                     {"push_prob", g.push_prob},
                     {"max_steps", g.max_steps},
                     {"start_cells", g.start_cells}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
  try {
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.barrier_cells = j.at("barrier_cells").get<std::vector<Cell>>();
    g.deadend_zone_cells = j.at("deadend_zone_cells").get<std::vector<Cell>>();
    g.goal_cells = j.at("goal_cells").get<std::vector<Cell>>();
    g.negative_edge_cells = j.at("negative_edge_cells").get<std::vector<Cell>>();
    g.push_prob = j.at("push_prob").get<double>();
    g.max_steps = j.at("max_steps").get<int>();
    g.start_cells = j.at("start_cells").get<std::vector<Cell>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid grid spec: ") + e.what());
  }
}

inline std::string spec_hash(const GridSpec& g) { return content_hash(nlohmann::json(g).dump()); }

struct EnvState {
  int x = 0;
  int y = 0;
  int t = 0;
  Cell cell() const { return {x, y}; }
  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState next;
  bool terminal = false;
  std::optional<Outcome> outcome;
};

/// A validated spec plus its cell lookup table.
class LifeGate {
 public:
  explicit LifeGate(GridSpec spec) : spec_(std::move(spec)) {
    if (spec_.width <= 0 || spec_.height <= 0) throw ConfigError("grid dimensions must be positive");
    if (!(spec_.push_prob > 0.0 && spec_.push_prob < 1.0)) throw ConfigError("push_prob must lie in (0, 1)");
    if (spec_.max_steps <= 0) throw ConfigError("max_steps must be positive");
    kinds_.assign(static_cast<std::size_t>(spec_.width * spec_.height), CellKind::open);
    mark(spec_.barrier_cells, CellKind::barrier);
    mark(spec_.deadend_zone_cells, CellKind::deadend_zone);
    mark(spec_.goal_cells, CellKind::goal);
    mark(spec_.negative_edge_cells, CellKind::negative_edge);
    for (Cell c : spec_.deadend_zone_cells) {
      Cell cur = c;
      while (kind(cur) == CellKind::deadend_zone) cur = moved(cur, Action::right);
      if (!spec_.in_bounds(cur) || kind(cur) != CellKind::negative_edge)
        throw ConfigError("dead-end cell without a rightward zone path to the negative edge");
    }
    for (Cell c : spec_.start_cells)
      if (!spec_.in_bounds(c) || kind(c) != CellKind::open) throw ConfigError("start cell must be an open cell");
    for (int y = 0; y < spec_.height; ++y)
      for (int x = 0; x < spec_.width; ++x) {
        const CellKind k = kind({x, y});
        if (k == CellKind::open || k == CellKind::deadend_zone) nonterminal_.push_back({x, y});
      }
  }

  const GridSpec& spec() const { return spec_; }

  CellKind kind(Cell c) const {
    if (!spec_.in_bounds(c)) return CellKind::barrier;
    return kinds_[index(c)];
  }

  bool in_zone(Cell c) const { return kind(c) == CellKind::deadend_zone; }
  bool is_terminal_cell(Cell c) const {
    const CellKind k = kind(c);
    return k == CellKind::goal || k == CellKind::negative_edge;
  }

  /// Non-terminal, non-barrier cells: the data-collection start set.
  const std::vector<Cell>& nonterminal_cells() const { return nonterminal_; }

  EnvState reset(Rng& rng) const {
    if (spec_.start_cells.empty()) throw ConfigError("empty start distribution");
    const Cell c = spec_.start_cells[rng.below(spec_.start_cells.size())];
    return {c.x, c.y, 0};
  }

  /// Uniform over every non-terminal, non-barrier cell (zone included).
  EnvState reset_anywhere(Rng& rng) const {
    const Cell c = nonterminal_[rng.below(nonterminal_.size())];
    return {c.x, c.y, 0};
  }

  bool is_terminal(const EnvState& s) const { return is_terminal_cell(s.cell()) || s.t >= spec_.max_steps; }

  StepResult step(const EnvState& s, Action a, Rng& rng) const {
    if (is_terminal(s)) throw UsageError("cannot step a terminal state");
    if (kind(s.cell()) == CellKind::barrier) throw UsageError("state lies inside a barrier");
    Cell next = s.cell();
    if (in_zone(next)) {
      if (rng.uniform() < spec_.push_prob) next = moved(next, Action::right);
    } else {
      const Cell cand = moved(next, a);
      if (kind(cand) != CellKind::barrier) next = cand;
    }
    StepResult r;
    r.next = {next.x, next.y, s.t + 1};
    const CellKind k = kind(next);
    if (k == CellKind::goal) {
      r.terminal = true;
      r.outcome = Outcome::positive;
    } else if (k == CellKind::negative_edge) {
      r.terminal = true;
      r.outcome = Outcome::negative;
    } else if (r.next.t >= spec_.max_steps) {
      r.terminal = true;
      r.outcome = Outcome::timeout;
    }
    return r;
  }

 private:
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y * spec_.width + c.x); }

  void mark(const std::vector<Cell>& cells, CellKind k) {
    for (Cell c : cells) {
      if (!spec_.in_bounds(c)) throw ConfigError("cell outside the grid");
      auto& slot = kinds_[index(c)];
      if (slot != CellKind::open) throw ConfigError("barrier, zone, goal and negative-edge sets must be disjoint");
      slot = k;
    }
  }

  GridSpec spec_;
  std::vector<CellKind> kinds_;
  std::vector<Cell> nonterminal_;
};

/// Deterministic action map with epsilon-random execution.
struct FixedPolicy {
  std::string name;
  std::vector<Action> action_map;  // indexed y * width + x
  double stochasticity = 0.0;

  Action act(const LifeGate& env, Cell c, Rng& rng) const {
    if (stochasticity > 0.0 && rng.uniform() < stochasticity) return static_cast<Action>(rng.below(kActionCount));
    return action_map[static_cast<std::size_t>(c.y * env.spec().width + c.x)];
  }
};

/**
 * Shortest-path policy toward `targets`, never stepping through `forbidden`
 * cells other than the targets themselves. Ties between equally short moves
 * are broken by `preference` order. Cells with no route get `stay`.
 */
inline FixedPolicy shortest_path_policy(const LifeGate& env, std::string name, const std::vector<Cell>& targets,
                                        const std::set<Cell>& forbidden, std::array<Action, 4> preference) {
  const auto& g = env.spec();
  const int inf = 1 << 30;
  std::vector<int> dist(static_cast<std::size_t>(g.width * g.height), inf);
  auto at = [&](Cell c) -> int& { return dist[static_cast<std::size_t>(c.y * g.width + c.x)]; };
  std::deque<Cell> queue;
  for (Cell t : targets) {
    at(t) = 0;
    queue.push_back(t);
  }
  const std::set<Cell> target_set(targets.begin(), targets.end());
  auto passable = [&](Cell c) {
    if (!g.in_bounds(c) || env.kind(c) == CellKind::barrier) return false;
    if (target_set.contains(c)) return true;
    return !forbidden.contains(c) && !env.is_terminal_cell(c);
  };
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int a = 0; a < 4; ++a) {
      // Reverse search: a neighbour n reaches c when moving from n lands on c.
      const Cell n = moved(c, static_cast<Action>(a));
      if (!passable(n) || target_set.contains(n)) continue;
      if (at(n) == inf) {
        at(n) = at(c) + 1;
        queue.push_back(n);
      }
    }
  }
  FixedPolicy p;
  p.name = std::move(name);
  p.action_map.assign(dist.size(), Action::stay);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const Cell c{x, y};
      if (at(c) == inf || at(c) == 0) continue;
      for (Action a : preference) {
        const Cell n = moved(c, a);
        if (g.in_bounds(n) && env.kind(n) != CellKind::barrier && at(n) == at(c) - 1) {
          p.action_map[static_cast<std::size_t>(y * g.width + x)] = a;
          break;
        }
      }
    }
  return p;
}

struct HandDesignedPolicies {
  FixedPolicy safe;
  FixedPolicy through_zone_low;
  FixedPolicy through_zone_high;
};

/**
 * The three evaluation policies for the default layout. `safe` goes left
 * around the barrier to the goal. `through_zone_low` runs right along the
 * bottom and turns up into the band's bottom row; `through_zone_high` climbs
 * first and enters the band from the left just under the barrier.
 */
inline HandDesignedPolicies hand_designed_policies(const LifeGate& env, double stochasticity = 0.0) {
  const auto& g = env.spec();
  const std::set<Cell> zone(g.deadend_zone_cells.begin(), g.deadend_zone_cells.end());
  auto lowest_left = [&](bool by_column) {
    Cell best = g.deadend_zone_cells.front();
    for (Cell c : g.deadend_zone_cells) {
      if (by_column ? (c.y < best.y || (c.y == best.y && c.x > best.x)) : (c.x < best.x || (c.x == best.x && c.y < best.y)))
        best = c;
    }
    return best;
  };
  // Bottom row of the band, middle column; and left column, one above the bottom row.
  Cell low = lowest_left(true);
  low.x = std::max(low.x - 1, lowest_left(false).x);
  Cell high = lowest_left(false);
  if (zone.contains({high.x, high.y + 1})) high.y += 1;

  HandDesignedPolicies out{
      shortest_path_policy(env, "safe", g.goal_cells, zone, {Action::left, Action::up, Action::right, Action::down}),
      shortest_path_policy(env, "through_zone_low", {low}, zone,
                           {Action::right, Action::up, Action::left, Action::down}),
      shortest_path_policy(env, "through_zone_high", {high}, zone,
                           {Action::up, Action::right, Action::left, Action::down}),
  };
  out.safe.stochasticity = out.through_zone_low.stochasticity = out.through_zone_high.stochasticity = stochasticity;
  return out;
}

/// Runs one episode from env.reset(). States are recorded as features.
inline TrajectoryRecord rollout(const LifeGate& env, const FixedPolicy& policy, Rng& rng,
                                std::optional<EnvState> start = std::nullopt) {
  if (policy.action_map.size() != static_cast<std::size_t>(env.spec().width * env.spec().height))
    throw ConfigError("policy action map does not cover the grid");
  EnvState s = start ? *start : env.reset(rng);
  TrajectoryRecord rec;
  for (;;) {
    if (!rec.zone_entry_index && env.in_zone(s.cell())) rec.zone_entry_index = static_cast<int>(rec.transitions.size());
    const Action a = policy.act(env, s.cell(), rng);
    const StepResult r = env.step(s, a, rng);
    rec.transitions.push_back(Transition{env.spec().features(s.cell()), static_cast<int>(a),
                                         env.spec().features(r.next.cell()), r.terminal, r.outcome});
    s = r.next;
    if (r.terminal) {
      rec.outcome = *r.outcome;
      break;
    }
  }
  return rec;
}

}  // namespace distded
