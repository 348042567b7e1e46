#pragma once

#include <string>

#include "afada/engine.hpp"

namespace afada {

/// One character per coordinate: `#` no cell, `x` failed, a digit for a
/// robot (id mod 10), `*` for the goal, otherwise the next-hop arrow toward
/// `goal`, or `?` without a route.
inline std::string render_ascii(const Engine& engine, CellId goal) {
  const Grid& grid = engine.grid();
  const auto b = grid.bounds();
  if (!b) return "";
  const Coord lo = b->min;
  const Coord hi = b->max;
  std::vector<std::string> rows(static_cast<std::size_t>(hi.y - lo.y + 1),
                                std::string(static_cast<std::size_t>(hi.x - lo.x + 1), '#'));
  auto put = [&](Coord c, char ch) {
    rows[static_cast<std::size_t>(c.y - lo.y)][static_cast<std::size_t>(c.x - lo.x)] = ch;
  };
  for (CellId id : grid.cell_ids()) {
    const Coord c = grid.coord_of(id);
    if (!grid.is_correct(id)) {
      put(c, 'x');
    } else if (id == goal) {
      put(c, '*');
    } else {
      const auto hop = routing::lookup_next(engine.cell(id).table(), goal);
      char ch = '?';
      if (hop.kind == routing::NextHop::Kind::kDirection) {
        constexpr std::array<char, 4> arrows{'^', '>', 'v', '<'};
        ch = arrows[index_of(hop.dir)];
      }
      put(c, ch);
    }
  }
  for (const auto& r : engine.robots()) {
    if (r.at && grid.contains(*r.at)) put(grid.coord_of(*r.at), static_cast<char>('0' + r.id % 10));
  }
  std::string out;
  for (const auto& row : rows) out += row + "\n";
  return out;
}

}  // namespace afada
