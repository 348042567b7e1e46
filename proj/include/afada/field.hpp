#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afada/topology.hpp"

namespace afada {

// Grid glyphs:
//   .  cell            #  no cell
//   F  cell that may fail under the stochastic failure model
//   S  start target    G  goal target
//   0-9  cell holding the start position of the robot with that digit
struct FieldAnnotations {
  int width = 0;
  int height = 0;
  std::optional<Coord> start;
  std::optional<Coord> goal;
  std::vector<Coord> fail_set;         // row-major order
  std::map<int, Coord> robot_starts;  // digit -> coordinate
};

struct ParsedField {
  Grid grid;
  FieldAnnotations annotations;
};

inline bool is_field_glyph(char c) {
  return c == '.' || c == '#' || c == 'F' || c == 'S' || c == 'G' || (c >= '0' && c <= '9');
}

/// Parse a block of grid rows. `first_line` is the 1-based line number of the
/// first row in the enclosing file, used for error positions.
inline ParsedField parse_field_rows(const std::vector<std::string>& rows, int first_line = 1) {
  ParsedField out;
  auto& ann = out.annotations;
  ann.height = static_cast<int>(rows.size());
  ann.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  for (int y = 0; y < ann.height; ++y) {
    const std::string& row = rows[y];
    const int line = first_line + y;
    if (static_cast<int>(row.size()) != ann.width) {
      throw ParseError("ragged grid row: expected width " + std::to_string(ann.width) + ", got " +
                           std::to_string(row.size()),
                       line, static_cast<int>(std::min(row.size(), static_cast<std::size_t>(ann.width))) + 1);
    }
    for (int x = 0; x < ann.width; ++x) {
      const char g = row[x];
      if (!is_field_glyph(g)) {
        throw ParseError(std::string("unknown glyph '") + g + "'", line, x + 1);
      }
      if (g == '#') continue;
      const Coord at{x, y};
      out.grid.add_cell(at);
      if (g == 'F') {
        ann.fail_set.push_back(at);
      } else if (g == 'S') {
        if (ann.start) throw ParseError("duplicate start target 'S'", line, x + 1);
        ann.start = at;
      } else if (g == 'G') {
        if (ann.goal) throw ParseError("duplicate goal target 'G'", line, x + 1);
        ann.goal = at;
      } else if (g >= '0' && g <= '9') {
        if (!ann.robot_starts.emplace(g - '0', at).second) {
          throw ParseError(std::string("duplicate robot digit '") + g + "'", line, x + 1);
        }
      }
    }
  }
  out.grid.take_events();
  return out;
}

/// Parse a bare grid block (rows separated by newlines).
inline ParsedField parse_field(std::string_view text) {
  std::vector<std::string> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string row(text.substr(pos, end - pos));
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (!row.empty()) rows.push_back(std::move(row));
    pos = end + 1;
  }
  return parse_field_rows(rows);
}

/// Render the grid back to rows over the annotated width x height.
/// Failed cells that belong to the fail-set still render as `F`.
inline std::vector<std::string> render_field_rows(const Grid& grid, const FieldAnnotations& ann) {
  std::vector<std::string> rows(ann.height, std::string(ann.width, '#'));
  for (CellId id : grid.cell_ids()) {
    const Coord c = grid.coord_of(id);
    if (c.x < 0 || c.y < 0 || c.x >= ann.width || c.y >= ann.height) continue;
    rows[c.y][c.x] = '.';
  }
  for (const Coord& c : ann.fail_set) rows[c.y][c.x] = 'F';
  if (ann.start) rows[ann.start->y][ann.start->x] = 'S';
  if (ann.goal) rows[ann.goal->y][ann.goal->x] = 'G';
  for (const auto& [digit, c] : ann.robot_starts) rows[c.y][c.x] = static_cast<char>('0' + digit);
  return rows;
}

inline std::string serialize_field(const Grid& grid, const FieldAnnotations& ann) {
  std::string out;
  for (const auto& row : render_field_rows(grid, ann)) {
    out += row;
    out += '\n';
  }
  return out;
}

}  // namespace afada
