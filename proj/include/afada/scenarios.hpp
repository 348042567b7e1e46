#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "afada/scenario.hpp"

namespace afada::scenarios {

// Reconstructed layouts. The shortest S-G distances are 4, 6 and 8.

inline constexpr std::string_view kSimpleLoop =
    "# simple-loop: one ring; the short arc carries the only cell that may fail\n"
    "S.F.\n"
    ".##G\n"
    "....\n"
    "name=simple-loop\n"
    "p=0.01\n"
    "q=0.01\n"
    "trips=3\n";

inline constexpr std::string_view kTwoBridge =
    "# two-bridge: two halves joined by two bridge cells, either of which may fail\n"
    "..F..\n"
    "S.#.G\n"
    "..F..\n"
    "name=two-bridge\n"
    "p=0.01\n"
    "q=0.01\n"
    "trips=3\n";

inline constexpr std::string_view kTwoLoop =
    "# two-loop: two rings sharing a column; every arc has a cell that may fail\n"
    ".F...F.\n"
    "S##.##G\n"
    ".F...F.\n"
    "name=two-loop\n"
    "p=0.01\n"
    "q=0.01\n"
    "trips=2\n";

inline constexpr std::string_view kReconfig =
    "# reconfig: G starts isolated, so the robot waits; a cell added at 20 s\n"
    "# connects it, then at 45 s a second path is added and the first removed,\n"
    "# so the robot comes back a different way\n"
    "S..\n"
    ".##\n"
    ".#G\n"
    "name=reconfig\n"
    "robot 0 mode=afada goals=G,S dwell=30000-30000\n"
    "at 20000 add (2,1)\n"
    "at 45000 add (1,2)\n"
    "at 45000 remove (2,1)\n";

inline constexpr std::string_view kMapf =
    "# mapf-4x3: three robots cross from the left column to the right column\n"
    "# the start/goal assignment is representative\n"
    "0...\n"
    "1...\n"
    "2...\n"
    "name=mapf-4x3\n"
    "robot 0 mode=afada goals=(3,2)\n"
    "robot 1 mode=afada goals=(3,0)\n"
    "robot 2 mode=afada goals=(3,1)\n";

// Columns 0 and 3 are parking spaces, 1 and 2 the aisle. Traffic runs up
// column 1, across the top, and down column 2; robots enter at (1,3) and
// leave at (2,3).
inline constexpr std::string_view kParking =
    "# parking: 4x4 lot with a one-way aisle; enter bottom left, exit bottom right\n"
    "....\n"
    "....\n"
    "....\n"
    "....\n"
    "name=parking\n"
    "policy (0,0) parking E\n"
    "policy (0,1) parking E\n"
    "policy (0,2) parking E\n"
    "policy (0,3) parking E\n"
    "policy (1,0) oneway E park W\n"
    "policy (1,1) oneway N park W\n"
    "policy (1,2) oneway N park W\n"
    "policy (1,3) oneway N park W\n"
    "policy (2,0) oneway S park E\n"
    "policy (2,1) oneway S park E\n"
    "policy (2,2) oneway S park E\n"
    "policy (2,3) oneway W park E\n"
    "policy (3,0) parking W\n"
    "policy (3,1) parking W\n"
    "policy (3,2) parking W\n"
    "policy (3,3) parking W\n"
    "robot 0 mode=afada goals=park,(2,3) start=(1,3) at=0 dwell=5000-15000 leave=1\n"
    "robot 1 mode=afada goals=park,(2,3) start=(1,3) at=4000 dwell=5000-15000 leave=1\n"
    "robot 2 mode=afada goals=park,(2,3) start=(1,3) at=8000 dwell=5000-15000 leave=1\n"
    "robot 3 mode=afada goals=park,(2,3) start=(1,3) at=12000 dwell=5000-15000 leave=1\n";

struct Entry {
  std::string_view name;
  std::string_view text;
};

inline const std::vector<Entry>& all() {
  static const std::vector<Entry> list = {
      {"simple-loop", kSimpleLoop}, {"two-bridge", kTwoBridge}, {"two-loop", kTwoLoop},
      {"reconfig", kReconfig},      {"mapf-4x3", kMapf},        {"parking", kParking},
  };
  return list;
}

inline Scenario load(std::string_view name) {
  for (const auto& e : all()) {
    if (e.name == name) return parse_scenario(e.text);
  }
  throw Error("unknown scenario '" + std::string(name) + "'");
}

/// The evaluation fields, in report order.
inline const std::vector<std::string_view>& evaluation_fields() {
  static const std::vector<std::string_view> names = {"simple-loop", "two-bridge", "two-loop"};
  return names;
}

}  // namespace afada::scenarios
