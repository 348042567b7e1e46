#pragma once

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "afada/message.hpp"
#include "afada/rng.hpp"
#include "afada/routing.hpp"

namespace afada {

enum class ReservationMode : std::uint8_t { kSingleStep, kMultiStep };

struct ReservationConfig {
  ReservationMode mode = ReservationMode::kSingleStep;
  int hop_cap = -1;  // max cells per multi-step chain; -1 = unlimited
  Millis backoff_min = 100;
  Millis backoff_max = 500;
  double preferred_prob = 0.7;  // retry the routing choice with this probability
  Millis time_unit = 1;         // random durations are drawn, then multiplied by this
  bool retry_filter = false;    // random retries skip neighbours farther from the goal when others exist
  bool avoid_uturn = true;      // prefer an equally short neighbour over the one the robot came from
};

/// Behavioural overlay of a cell (one-way aisles, parking spaces).
struct CellPolicy {
  std::optional<Direction> oneway;     // traffic leaves this cell toward oneway
  std::optional<Direction> park_side;  // oneway cell: adjacent parking space
  std::optional<Direction> parking;    // this is a parking space; its aisle side

  bool empty() const { return !oneway && !parking; }
  bool operator==(const CellPolicy&) const = default;
};

struct Occupancy {
  enum class State : std::uint8_t { kFree, kReserved, kOccupied };
  State state = State::kFree;
  RobotId robot{};
  RequestId request = 0;
  std::optional<Direction> from;  // where the robot comes from (reserved)

  bool free() const { return state == State::kFree; }
  bool held_by(RobotId r) const { return state != State::kFree && robot == r; }
};

inline const char* to_string(Occupancy::State s) {
  switch (s) {
    case Occupancy::State::kFree: return "free";
    case Occupancy::State::kReserved: return "reserved";
    case Occupancy::State::kOccupied: return "occupied";
  }
  return "?";
}

/// Timers a cell can ask the engine for.
struct CellTimer {
  enum class Kind : std::uint8_t { kLinkDeadline, kRetry };
  Kind kind = Kind::kRetry;
  Direction dir = Direction::kNorth;
  std::uint64_t generation = 0;
};

/// Everything a cell handler wants done: messages out, timers, notes.
struct CellEffects {
  std::vector<std::pair<Direction, Message>> to_cells;
  std::vector<std::pair<RobotId, Message>> to_robots;
  std::vector<std::pair<Millis, CellTimer>> timers;  // delay from now
  std::vector<std::string> notes;
  std::optional<std::string> fatal;
  bool table_changed = false;
  std::optional<std::size_t> reserved_path;  // set when an origin cell receives an Ack
};

/// Reservation bookkeeping of one cell.
struct ReservationState {
  Occupancy occ;

  struct Outstanding {  // request sent on behalf of the robot on this cell
    RequestId id = 0;
    RobotId robot;
    Goal goal;
    Direction dir = Direction::kNorth;
    bool park_attempt = false;
  };
  std::optional<Outstanding> outstanding;

  struct Forward {  // multi-step request passed further downstream
    RequestId id = 0;
    RobotId robot;
    Direction upstream = Direction::kNorth;
    Direction downstream = Direction::kNorth;
  };
  std::optional<Forward> forward;

  struct ChainNext {  // next cell of an already reserved chain
    RobotId robot;
    Direction dir = Direction::kNorth;
  };
  std::optional<ChainNext> chain_next;

  struct Retry {
    std::uint64_t generation = 0;
    RobotId robot;
    Goal goal;
  };
  std::optional<Retry> retry;
  std::uint64_t retry_generation = 0;

  bool park_tried = false;
  std::optional<Direction> arrived_from;  // side the robot on this cell came in by
  std::optional<Goal> arrived_for;        // goal it was heading for then
  std::uint32_t counter = 0;
  std::deque<std::pair<RequestId, Message>> replies;  // recent replies, for duplicates
};

/// Read-only context a reservation handler runs against.
struct ReservationView {
  CellId self;
  const CellPolicy& policy;
  const routing::RoutingTable& table;
  std::array<bool, 4> live;
  const ReservationConfig& config;
  RandomStream& backoff;
  RandomStream& retry;
  const routing::NeighborCache* cache = nullptr;  // neighbours' last advertised tables
};

namespace reservation {

inline constexpr std::size_t kReplyMemory = 16;

/// Which way the cell would send its robot; policy overlays take precedence
/// over the routing table.
inline routing::NextHop choose_direction(const ReservationView& v, const Goal& goal, bool park_tried) {
  using routing::NextHop;
  if (v.policy.parking) {
    if (goal.is_park() || goal.cell == v.self) return NextHop::at_self();
    return NextHop::toward(*v.policy.parking);
  }
  if (v.policy.oneway) {
    if (!goal.is_park() && goal.cell == v.self) return NextHop::at_self();
    if (goal.is_park() && v.policy.park_side && !park_tried && v.live[index_of(*v.policy.park_side)]) {
      return NextHop::toward(*v.policy.park_side);
    }
    return NextHop::toward(*v.policy.oneway);
  }
  if (goal.is_park()) return NextHop::unknown();
  return routing::lookup_next(v.table, goal.cell);
}

/// The routing choice, unless it sends the robot straight back where it came
/// from while another live neighbour is equally close to the goal. Callers
/// pass no `came_from` once the robot's goal has changed.
inline routing::NextHop avoid_uturn(const ReservationView& v, const Goal& goal, routing::NextHop hop,
                                    std::optional<Direction> came_from) {
  if (!v.config.avoid_uturn || !came_from || hop.kind != routing::NextHop::Kind::kDirection ||
      hop.dir != *came_from || goal.is_park() || !v.cache || !v.policy.empty()) {
    return hop;
  }
  const auto own = v.table.dist(goal.cell);
  if (!own) return hop;
  for (Direction d : kDirections) {
    if (d == *came_from || !v.live[index_of(d)]) continue;
    const auto& ad = (*v.cache)[index_of(d)];
    if (!ad) continue;
    for (const DistEntry& e : *ad) {
      if (e.dest == goal.cell && e.dist == *own - 1) return routing::NextHop::toward(d);
    }
  }
  return hop;
}

/// Whether the policy lets a request arriving from `from` through.
inline bool policy_accepts(const CellPolicy& p, Direction from) {
  if (p.oneway && from == *p.oneway) return false;  // against the traffic
  if (p.parking && from != *p.parking) return false;
  return true;
}

inline void remember_reply(ReservationState& s, RequestId id, const Message& m) {
  s.replies.emplace_back(id, m);
  if (s.replies.size() > kReplyMemory) s.replies.pop_front();
}

inline void reply(ReservationState& s, CellEffects& fx, Direction to, RequestId id, Message m) {
  remember_reply(s, id, m);
  fx.to_cells.emplace_back(to, std::move(m));
}

inline void instruct(CellEffects& fx, RobotId r, InstructionKind k, Direction d = Direction::kNorth) {
  fx.to_robots.emplace_back(r, Instruction{r, k, d});
}

inline RequestId next_request_id(ReservationState& s, CellId self) {
  return (static_cast<RequestId>(self.value) << 32) | ++s.counter;
}

inline int initial_hops(const ReservationConfig& c) {
  if (c.mode == ReservationMode::kSingleStep) return 0;
  return c.hop_cap < 0 ? -1 : std::max(0, c.hop_cap - 1);
}

inline void send_request(ReservationState& s, const ReservationView& v, CellEffects& fx, RobotId r, const Goal& g,
                         Direction d) {
  const RequestId id = next_request_id(s, v.self);
  s.outstanding = ReservationState::Outstanding{
      id, r, g, d, g.is_park() && v.policy.park_side && d == *v.policy.park_side};
  fx.to_cells.emplace_back(d, ReserveRequest{id, r, g, initial_hops(v.config), 0});
}

/// Act on a routing decision for robot r standing on this cell.
inline void dispatch(ReservationState& s, const ReservationView& v, CellEffects& fx, RobotId r, const Goal& g,
                     routing::NextHop hop) {
  using K = routing::NextHop::Kind;
  if (hop.kind == K::kSelf) {
    instruct(fx, r, InstructionKind::kAtGoal);
  } else if (hop.kind == K::kUnknown || !v.live[index_of(hop.dir)]) {
    instruct(fx, r, InstructionKind::kWait);
  } else {
    send_request(s, v, fx, r, g, hop.dir);
  }
}

inline void schedule_retry(ReservationState& s, const ReservationView& v, CellEffects& fx, RobotId r, const Goal& g) {
  const std::uint64_t gen = ++s.retry_generation;
  s.retry = ReservationState::Retry{gen, r, g};
  const Millis wait = v.backoff.uniform_int(v.config.backoff_min, v.config.backoff_max) * v.config.time_unit;
  fx.timers.emplace_back(wait, CellTimer{CellTimer::Kind::kRetry, Direction::kNorth, gen});
}

/// Step 1 -> 2: the robot on this cell asks how to reach `req.goal`.
inline void handle_robot_request(ReservationState& s, const ReservationView& v, const RobotRequest& req,
                                 CellEffects& fx) {
  const RobotId r = req.robot;
  if (!s.occ.held_by(r)) {
    fx.notes.push_back("request from robot not on cell ignored");
    return;
  }
  if (s.occ.state == Occupancy::State::kReserved) {
    // Arrival notice lost or still in flight; the robot is evidently here.
    s.occ.state = Occupancy::State::kOccupied;
    if (s.occ.from) fx.to_cells.emplace_back(*s.occ.from, Release{r});
    s.arrived_from = s.occ.from;
    s.occ.from.reset();
  }
  if (s.outstanding || s.retry) {
    fx.notes.push_back("duplicate robot request ignored");
    return;
  }
  const bool at_goal = !req.goal.is_park() && req.goal.cell == v.self;
  if (!at_goal && s.chain_next && s.chain_next->robot == r) {
    const Direction d = s.chain_next->dir;
    s.chain_next.reset();
    if (v.live[index_of(d)]) {
      instruct(fx, r, InstructionKind::kMove, d);
      return;
    }
  }
  dispatch(s, v, fx, r, req.goal, avoid_uturn(v, req.goal, choose_direction(v, req.goal, s.park_tried),
                                               s.arrived_for == req.goal ? s.arrived_from : std::nullopt));
}

/// Step 3 (and multi-step forwarding).
inline void handle_reserve_request(ReservationState& s, const ReservationView& v, Direction from,
                                   const ReserveRequest& req, CellEffects& fx) {
  for (const auto& [id, m] : s.replies) {
    if (id == req.id) {
      fx.notes.push_back("duplicate request, previous reply re-sent");
      fx.to_cells.emplace_back(from, m);
      return;
    }
  }
  bool grant = policy_accepts(v.policy, from);
  if (grant && !s.occ.free()) {
    // The robot's own stale hold can be re-granted to its direct request;
    // a chain stops at any held cell.
    grant = req.hop_index == 0 && s.occ.robot == req.robot && !s.outstanding;
    if (grant) fx.notes.push_back("stale hold of the same robot re-granted");
  }
  if (!grant) {
    reply(s, fx, from, req.id, ReserveReject{req.id});
    return;
  }
  s.occ = Occupancy{Occupancy::State::kReserved, req.robot, req.id, from};
  s.arrived_for = req.goal;
  s.chain_next.reset();
  s.forward.reset();

  const bool may_forward = v.config.mode == ReservationMode::kMultiStep && req.hops_remaining != 0;
  if (may_forward) {
    const routing::NextHop hop = choose_direction(v, req.goal, false);
    if (hop.kind == routing::NextHop::Kind::kDirection && hop.dir != from && v.live[index_of(hop.dir)]) {
      s.forward = ReservationState::Forward{req.id, req.robot, from, hop.dir};
      ReserveRequest next = req;
      next.hops_remaining = req.hops_remaining < 0 ? -1 : req.hops_remaining - 1;
      next.hop_index = req.hop_index + 1;
      fx.to_cells.emplace_back(hop.dir, next);
      return;
    }
  }
  reply(s, fx, from, req.id, ReserveAck{req.id, {v.self}});
}

/// Steps 4/6: availability confirmed.
inline void handle_ack(ReservationState& s, const ReservationView& v, Direction from, const ReserveAck& ack,
                       CellEffects& fx) {
  if (s.forward && s.forward->id == ack.id && s.forward->downstream == from) {
    const auto fwd = *s.forward;
    s.forward.reset();
    if (!ack.path.empty()) s.chain_next = ReservationState::ChainNext{fwd.robot, fwd.downstream};
    std::vector<CellId> path{v.self};
    path.insert(path.end(), ack.path.begin(), ack.path.end());
    reply(s, fx, fwd.upstream, ack.id, ReserveAck{ack.id, std::move(path)});
    return;
  }
  if (s.outstanding && s.outstanding->id == ack.id && s.outstanding->dir == from) {
    const auto out = *s.outstanding;
    s.outstanding.reset();
    s.park_tried = false;
    fx.reserved_path = ack.path.size();
    instruct(fx, out.robot, InstructionKind::kMove, out.dir);
    return;
  }
  fx.notes.push_back("unmatched ack ignored");
}

/// Step 5: go back to step 2 with another neighbour or the same one later.
inline void retry_after_rejection(ReservationState& s, const ReservationView& v, CellEffects& fx) {
  const auto out = *s.outstanding;
  s.outstanding.reset();
  if (!s.occ.held_by(out.robot)) return;
  if (out.park_attempt) {
    // Greedy parking: the space is taken, carry on with the traffic.
    s.park_tried = true;
    dispatch(s, v, fx, out.robot, out.goal, choose_direction(v, out.goal, true));
    return;
  }
  schedule_retry(s, v, fx, out.robot, out.goal);
}

inline void handle_reject(ReservationState& s, const ReservationView& v, Direction from, const ReserveReject& rej,
                          CellEffects& fx) {
  if (s.forward && s.forward->id == rej.id && s.forward->downstream == from) {
    // The chain ends here; acknowledge back upstream in reverse order.
    const auto fwd = *s.forward;
    s.forward.reset();
    reply(s, fx, fwd.upstream, rej.id, ReserveAck{rej.id, {v.self}});
    return;
  }
  if (s.outstanding && s.outstanding->id == rej.id && s.outstanding->dir == from) {
    retry_after_rejection(s, v, fx);
    return;
  }
  fx.notes.push_back("unmatched reject ignored");
}

/// Backoff expired: pick the routing choice with probability preferred_prob,
/// otherwise a uniformly random live neighbour.
inline void handle_retry_timer(ReservationState& s, const ReservationView& v, std::uint64_t generation,
                               CellEffects& fx) {
  if (!s.retry || s.retry->generation != generation) return;
  const auto rt = *s.retry;
  s.retry.reset();
  if (!s.occ.held_by(rt.robot) || s.outstanding) return;
  s.park_tried = false;

  if (!v.policy.empty()) {
    dispatch(s, v, fx, rt.robot, rt.goal, choose_direction(v, rt.goal, false));
    return;
  }
  const routing::NextHop preferred = choose_direction(v, rt.goal, false);
  if (preferred.kind != routing::NextHop::Kind::kDirection) {
    dispatch(s, v, fx, rt.robot, rt.goal, preferred);
    return;
  }
  std::vector<Direction> live;
  for (Direction d : kDirections) {
    if (v.live[index_of(d)]) live.push_back(d);
  }
  if (v.config.retry_filter && v.cache && !rt.goal.is_park()) {
    if (const auto own = v.table.dist(rt.goal.cell)) {
      std::vector<Direction> closer;
      for (Direction d : live) {
        const auto& ad = (*v.cache)[index_of(d)];
        if (!ad) continue;
        for (const DistEntry& e : *ad) {
          if (e.dest == rt.goal.cell && e.dist <= *own) closer.push_back(d);
        }
      }
      if (!closer.empty()) live = std::move(closer);
    }
  }
  if (live.empty()) {
    instruct(fx, rt.robot, InstructionKind::kWait);
    return;
  }
  Direction pick = preferred.dir;
  if (!v.retry.bernoulli(v.config.preferred_prob) || !v.live[index_of(pick)]) {
    pick = live[v.retry.pick(live.size())];
  }
  send_request(s, v, fx, rt.robot, rt.goal, pick);
}

/// Step 7: the robot reports arrival; the cell it came from is released.
inline void handle_arrival(ReservationState& s, RobotId r, CellEffects& fx) {
  if (s.occ.held_by(r)) {
    if (s.occ.state == Occupancy::State::kReserved) {
      s.occ.state = Occupancy::State::kOccupied;
      if (s.occ.from) fx.to_cells.emplace_back(*s.occ.from, Release{r});
      s.arrived_from = s.occ.from;
      s.occ.from.reset();
    }
    s.park_tried = false;
    return;
  }
  if (s.occ.free()) {
    fx.fatal = "robot " + to_string(r) + " arrived at an unreserved cell";
    s.occ = Occupancy{Occupancy::State::kOccupied, r, 0, std::nullopt};
    return;
  }
  fx.fatal = "robot " + to_string(r) + " arrived at a cell held by " + to_string(s.occ.robot);
}

inline void handle_release(ReservationState& s, const Release& rel, CellEffects& fx) {
  if (s.occ.state == Occupancy::State::kOccupied && s.occ.robot == rel.robot) {
    s.occ = Occupancy{};
    s.arrived_from.reset();
    s.arrived_for.reset();
    s.chain_next.reset();
    s.outstanding.reset();
    s.retry.reset();
    return;
  }
  fx.notes.push_back("stale release ignored");
}

inline void handle_leave(ReservationState& s, const Leave& lv, CellEffects& fx) {
  if (s.occ.held_by(lv.robot)) {
    s.occ = Occupancy{};
    s.arrived_from.reset();
    s.arrived_for.reset();
    s.outstanding.reset();
    s.retry.reset();
    s.chain_next.reset();
    return;
  }
  fx.notes.push_back("leave from robot not on cell ignored");
}

/// A link went down: anything waiting on it is settled as a rejection.
inline void on_link_down(ReservationState& s, const ReservationView& v, Direction d, CellEffects& fx) {
  if (s.chain_next && s.chain_next->dir == d) s.chain_next.reset();
  if (s.forward && s.forward->downstream == d) {
    const auto fwd = *s.forward;
    s.forward.reset();
    reply(s, fx, fwd.upstream, fwd.id, ReserveAck{fwd.id, {v.self}});
  }
  if (s.outstanding && s.outstanding->dir == d) {
    fx.notes.push_back("pending request lost with link");
    retry_after_rejection(s, v, fx);
  }
}

}  // namespace reservation
}  // namespace afada
