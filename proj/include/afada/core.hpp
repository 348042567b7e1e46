#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace afada {

/// Simulated time in milliseconds.
using Millis = std::int64_t;

struct CellId {
  std::uint32_t value = 0;
  auto operator<=>(const CellId&) const = default;
};

struct RobotId {
  std::uint32_t value = 0;
  auto operator<=>(const RobotId&) const = default;
};

/// Grid coordinate; x grows east, y grows south (row 0 is the first text row).
struct Coord {
  int x = 0;
  int y = 0;
  auto operator<=>(const Coord&) const = default;
};

enum class Direction : std::uint8_t { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

/// Fixed iteration order used everywhere a tie has to be broken.
inline constexpr std::array<Direction, 4> kDirections{
    Direction::kNorth, Direction::kEast, Direction::kSouth, Direction::kWest};

constexpr std::size_t index_of(Direction d) { return static_cast<std::size_t>(d); }

constexpr Direction opposite(Direction d) {
  return static_cast<Direction>((static_cast<int>(d) + 2) % 4);
}

constexpr Coord neighbor_coord(Coord c, Direction d) {
  switch (d) {
    case Direction::kNorth: return {c.x, c.y - 1};
    case Direction::kEast: return {c.x + 1, c.y};
    case Direction::kSouth: return {c.x, c.y + 1};
    case Direction::kWest: return {c.x - 1, c.y};
  }
  return c;
}

constexpr char to_char(Direction d) {
  constexpr std::array<char, 4> names{'N', 'E', 'S', 'W'};
  return names[index_of(d)];
}

constexpr std::optional<Direction> direction_from_char(char c) {
  switch (c) {
    case 'N': return Direction::kNorth;
    case 'E': return Direction::kEast;
    case 'S': return Direction::kSouth;
    case 'W': return Direction::kWest;
    default: return std::nullopt;
  }
}

inline std::string to_string(Coord c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

inline std::string to_string(CellId id) { return "c" + std::to_string(id.value); }
inline std::string to_string(RobotId id) { return "r" + std::to_string(id.value); }

/// Base class for every error this library reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  int line_;
  int column_;
};

/// A topology operation violated its precondition.
class TopologyError : public Error {
 public:
  using Error::Error;
};

}  // namespace afada

template <>
struct std::hash<afada::CellId> {
  std::size_t operator()(const afada::CellId& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};

template <>
struct std::hash<afada::Coord> {
  std::size_t operator()(const afada::Coord& c) const noexcept {
    return std::hash<std::int64_t>{}((static_cast<std::int64_t>(c.x) << 32) ^
                                     static_cast<std::uint32_t>(c.y));
  }
};
