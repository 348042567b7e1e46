#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "afada/core.hpp"

namespace afada {

/// What a robot is heading for: a specific cell, or any vacant parking space.
struct Goal {
  enum class Kind : std::uint8_t { kCell, kPark };
  Kind kind = Kind::kCell;
  CellId cell{};

  static Goal to_cell(CellId c) { return {Kind::kCell, c}; }
  static Goal park() { return {Kind::kPark, {}}; }
  bool is_park() const { return kind == Kind::kPark; }
  bool operator==(const Goal&) const = default;
};

inline std::string to_string(const Goal& g) { return g.is_park() ? "park" : to_string(g.cell); }

struct DistEntry {
  CellId dest;
  int dist = 0;
  bool operator==(const DistEntry&) const = default;
};
using DistVector = std::vector<DistEntry>;

/// Unique per run: originating cell id in the high half, a counter in the low.
using RequestId = std::uint64_t;

struct DistBroadcast {
  std::shared_ptr<const DistVector> table;
};
struct Heartbeat {};
struct ReserveRequest {
  RequestId id = 0;
  RobotId robot;
  Goal goal;
  int hops_remaining = 0;  // < 0 means unlimited
  int hop_index = 0;       // 0 for the cell next to the robot, +1 per forward
};
struct ReserveAck {
  RequestId id = 0;
  std::vector<CellId> path;  // reserved prefix, nearest cell first
};
struct ReserveReject {
  RequestId id = 0;
};
struct Release {
  RobotId robot;
};

// Cell <-> robot.
struct RobotRequest {
  RobotId robot;
  Goal goal;
};
enum class InstructionKind : std::uint8_t { kMove, kWait, kAtGoal };
struct Instruction {
  RobotId robot;
  InstructionKind kind = InstructionKind::kWait;
  Direction dir = Direction::kNorth;
};
struct Arrived {
  RobotId robot;
};
struct Leave {
  RobotId robot;
};

using Message = std::variant<DistBroadcast, Heartbeat, ReserveRequest, ReserveAck, ReserveReject, Release,
                             RobotRequest, Instruction, Arrived, Leave>;

inline const char* message_kind(const Message& m) {
  static constexpr const char* names[] = {"dist",    "heartbeat", "reserve_req", "reserve_ack", "reserve_reject",
                                          "release", "robot_req", "instruction", "arrived",     "leave"};
  return names[m.index()];
}

inline const char* to_string(InstructionKind k) {
  switch (k) {
    case InstructionKind::kMove: return "move";
    case InstructionKind::kWait: return "wait";
    case InstructionKind::kAtGoal: return "at_goal";
  }
  return "?";
}

}  // namespace afada
