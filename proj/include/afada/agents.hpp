#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "afada/message.hpp"
#include "afada/rng.hpp"
#include "afada/topology.hpp"

namespace afada {

enum class RobotMode : std::uint8_t { kAfada, kSelfNav };

inline const char* to_string(RobotMode m) { return m == RobotMode::kAfada ? "afada" : "selfnav"; }

enum class RobotPhase : std::uint8_t { kIdle, kAwaitingInstruction, kMoving, kWaiting, kDwelling, kDone, kLeft };

inline const char* to_string(RobotPhase p) {
  switch (p) {
    case RobotPhase::kIdle: return "idle";
    case RobotPhase::kAwaitingInstruction: return "awaiting";
    case RobotPhase::kMoving: return "moving";
    case RobotPhase::kWaiting: return "waiting";
    case RobotPhase::kDwelling: return "dwelling";
    case RobotPhase::kDone: return "done";
    case RobotPhase::kLeft: return "left";
  }
  return "?";
}

struct RobotConfig {
  Millis hop_duration = 1000;
  Millis wait_retry = 1000;
  Millis time_unit = 1;  // dwell draws are multiplied by this
};

/// Dwell after reaching a non-final destination, uniform in [min, max].
struct DwellRange {
  Millis min = 0;
  Millis max = 0;
  bool operator==(const DwellRange&) const = default;
};

enum class RobotTimer : std::uint8_t { kRetry, kDwellDone };

/// What a robot handler wants done.
struct RobotEffects {
  std::vector<Message> to_cell;          // to the cell under the robot
  std::optional<Direction> start_move;   // begin a hop in this direction
  std::vector<std::pair<Millis, RobotTimer>> timers;
  bool finished = false;                 // destination list exhausted
  bool leave = false;                    // leave the environment now
  std::optional<std::string> fatal;
};

/// Behaviour shared by both robot kinds: the destination list and counters.
struct RobotCommon {
  RobotId id;
  std::deque<Goal> destinations;
  std::optional<DwellRange> dwell;
  bool leave_at_end = false;
  RobotPhase phase = RobotPhase::kIdle;
  int steps = 0;

  /// Pop the reached destination; returns true if a dwell was scheduled.
  bool destination_reached(RobotEffects& fx, RandomStream& rng, Millis unit) {
    if (!destinations.empty()) destinations.pop_front();
    if (destinations.empty()) {
      phase = leave_at_end ? RobotPhase::kLeft : RobotPhase::kDone;
      fx.finished = true;
      fx.leave = leave_at_end;
      return false;
    }
    if (dwell) {
      phase = RobotPhase::kDwelling;
      fx.timers.emplace_back(rng.uniform_int(dwell->min, dwell->max) * unit, RobotTimer::kDwellDone);
      return true;
    }
    return false;
  }
};

/// A robot with neither map nor planner: it asks the cell under it and
/// obeys. Its state deliberately holds no grid or cell table.
class AfadaRobot {
 public:
  AfadaRobot(RobotId id, std::deque<Goal> destinations, std::optional<DwellRange> dwell, bool leave_at_end,
             RobotConfig config)
      : common_{id, std::move(destinations), dwell, leave_at_end}, config_(config) {}

  RobotId id() const { return common_.id; }
  const RobotCommon& state() const { return common_; }
  RobotPhase phase() const { return common_.phase; }
  int steps() const { return common_.steps; }
  const std::deque<Goal>& destinations() const { return common_.destinations; }

  void set_destinations(std::deque<Goal> d) { common_.destinations = std::move(d); }

  RobotEffects start() {
    RobotEffects fx;
    request(fx);
    return fx;
  }

  RobotEffects on_instruction(const Instruction& ins, RandomStream& rng) {
    RobotEffects fx;
    if (common_.phase != RobotPhase::kAwaitingInstruction) return fx;  // stale
    switch (ins.kind) {
      case InstructionKind::kAtGoal:
        if (!common_.destination_reached(fx, rng, config_.time_unit)) {
          if (fx.leave) fx.to_cell.push_back(Leave{common_.id});
          if (!fx.finished) request(fx);
        }
        break;
      case InstructionKind::kWait:
        common_.phase = RobotPhase::kWaiting;
        fx.timers.emplace_back(config_.wait_retry, RobotTimer::kRetry);
        break;
      case InstructionKind::kMove:
        common_.phase = RobotPhase::kMoving;
        fx.start_move = ins.dir;
        break;
    }
    return fx;
  }

  /// The hop finished: notify the new cell, then ask it for the next move.
  RobotEffects on_hop_complete() {
    RobotEffects fx;
    ++common_.steps;
    fx.to_cell.push_back(Arrived{common_.id});
    request(fx);
    return fx;
  }

  RobotEffects on_timer(RobotTimer t) {
    RobotEffects fx;
    if ((t == RobotTimer::kRetry && common_.phase == RobotPhase::kWaiting) ||
        (t == RobotTimer::kDwellDone && common_.phase == RobotPhase::kDwelling)) {
      request(fx);
    }
    return fx;
  }

  /// New destinations for an idle or finished robot.
  RobotEffects reassign(std::deque<Goal> goals) {
    common_.destinations = std::move(goals);
    RobotEffects fx;
    if (common_.phase == RobotPhase::kDone || common_.phase == RobotPhase::kIdle) request(fx);
    return fx;
  }

 private:
  void request(RobotEffects& fx) {
    if (common_.destinations.empty()) {
      common_.phase = common_.leave_at_end ? RobotPhase::kLeft : RobotPhase::kDone;
      fx.finished = true;
      fx.leave = common_.leave_at_end;
      if (fx.leave) fx.to_cell.push_back(Leave{common_.id});
      return;
    }
    common_.phase = RobotPhase::kAwaitingInstruction;
    fx.to_cell.push_back(RobotRequest{common_.id, common_.destinations.front()});
  }

  RobotCommon common_;
  RobotConfig config_;
};

/// What a self-navigating robot senses: the four cells around it, if any.
struct SensedNeighbors {
  std::array<std::optional<std::pair<CellId, CellStatus>>, 4> cells;
};

/// The baseline robot: it carries a static copy of the grid, plans shortest
/// paths over it minus the cells it knows to be failed, senses failures
/// only when adjacent, and replans when blocked.
class SelfNavRobot {
 public:
  SelfNavRobot(RobotId id, std::deque<Goal> destinations, std::optional<DwellRange> dwell, bool leave_at_end,
               Grid map, CellId position, RobotConfig config)
      : common_{id, std::move(destinations), dwell, leave_at_end},
        map_(std::move(map)),
        position_(position),
        config_(config) {}

  RobotId id() const { return common_.id; }
  const RobotCommon& state() const { return common_; }
  RobotPhase phase() const { return common_.phase; }
  int steps() const { return common_.steps; }
  CellId position() const { return position_; }
  const std::map<CellId, Millis>& known_failed() const { return known_failed_; }
  const std::vector<CellId>& path() const { return path_; }
  bool task_failed() const { return task_failed_; }

  /// Shortest path over the internal map minus known-failed cells; first
  /// element is the current position. Empty if none exists.
  std::vector<CellId> plan(CellId goal) const {
    if (!map_.contains(goal) || !map_.contains(position_)) return {};
    std::vector<int> parent(map_.id_bound(), -1);
    std::deque<CellId> frontier{position_};
    parent[position_.value] = static_cast<int>(position_.value);
    while (!frontier.empty()) {
      const CellId c = frontier.front();
      frontier.pop_front();
      if (c == goal) break;
      for (Direction d : kDirections) {
        auto n = map_.neighbor(c, d);
        if (!n || parent[n->value] >= 0 || known_failed_.contains(*n)) continue;
        parent[n->value] = static_cast<int>(c.value);
        frontier.push_back(*n);
      }
    }
    if (parent[goal.value] < 0) return {};
    std::vector<CellId> path{goal};
    while (path.back() != position_) path.push_back(CellId{static_cast<std::uint32_t>(parent[path.back().value])});
    return {path.rbegin(), path.rend()};
  }

  /// Update knowledge from the four adjacent cells. A cell the map expects
  /// but that is missing counts as failed.
  void sense(const SensedNeighbors& around, Millis now) {
    for (Direction d : kDirections) {
      auto expected = map_.neighbor(position_, d);
      if (!expected) continue;
      const auto& seen = around.cells[index_of(d)];
      const bool failed = !seen || seen->first != *expected || seen->second == CellStatus::kFailed;
      if (failed) {
        known_failed_.try_emplace(*expected, now);
      } else {
        known_failed_.erase(*expected);
      }
    }
  }

  /// Called whenever the robot stands on a cell with nothing to wait for.
  RobotEffects decide(const SensedNeighbors& around, Millis now, RandomStream& rng) {
    RobotEffects fx;
    sense(around, now);
    for (;;) {
      if (common_.destinations.empty()) {
        common_.phase = common_.leave_at_end ? RobotPhase::kLeft : RobotPhase::kDone;
        fx.finished = true;
        fx.leave = common_.leave_at_end;
        return fx;
      }
      const Goal goal = common_.destinations.front();
      if (goal.is_park() || !map_.contains(goal.cell)) {
        task_failed_ = true;
        common_.phase = RobotPhase::kDone;
        fx.finished = true;
        fx.fatal = "destination not in the internal map";
        return fx;
      }
      if (goal.cell != position_) break;
      path_.clear();
      if (common_.destination_reached(fx, rng, config_.time_unit)) return fx;
      if (fx.finished) return fx;
    }
    const CellId goal = common_.destinations.front().cell;
    if (path_.size() < 2 || path_.front() != position_ || path_.back() != goal || blocked()) {
      path_ = plan(goal);
    }
    if (path_.size() < 2) {
      common_.phase = RobotPhase::kWaiting;
      fx.timers.emplace_back(config_.wait_retry, RobotTimer::kRetry);
      return fx;
    }
    const Coord here = map_.coord_of(position_);
    const Coord next = map_.coord_of(path_[1]);
    for (Direction d : kDirections) {
      if (neighbor_coord(here, d) == next) fx.start_move = d;
    }
    common_.phase = RobotPhase::kMoving;
    return fx;
  }

  void on_hop_complete() {
    ++common_.steps;
    if (path_.size() >= 2) {
      position_ = path_[1];
      path_.erase(path_.begin());
    }
  }

  void reassign(std::deque<Goal> goals) {
    common_.destinations = std::move(goals);
    path_.clear();
  }

 private:
  bool blocked() const {
    for (CellId c : path_) {
      if (known_failed_.contains(c)) return true;
    }
    return false;
  }

  RobotCommon common_;
  Grid map_;
  CellId position_;
  std::map<CellId, Millis> known_failed_;
  std::vector<CellId> path_;
  RobotConfig config_;
  bool task_failed_ = false;
};

}  // namespace afada
