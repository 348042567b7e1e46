#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "afada/core.hpp"

namespace afada {

enum class CellStatus : std::uint8_t { kCorrect, kFailed };

inline const char* to_string(CellStatus s) { return s == CellStatus::kCorrect ? "correct" : "failed"; }

/// A change of one link as seen from the topology. `physical` links change on
/// add/remove; status changes only kill or revive the link for communication.
struct LinkEvent {
  CellId a;
  Direction dir;  // direction from a towards b
  CellId b;
  bool up = false;
  bool physical = false;
};

/// The physical arrangement of cells (graph G) and their status.
class Grid {
 public:
  struct Cell {
    CellId id;
    Coord coord;
    CellStatus status = CellStatus::kCorrect;
  };

  CellId add_cell(Coord at) {
    if (by_coord_.contains(at)) {
      throw TopologyError("coordinate " + to_string(at) + " is already occupied");
    }
    const CellId id{next_id_++};
    cells_.resize(next_id_);
    cells_[id.value] = Cell{id, at, CellStatus::kCorrect};
    by_coord_.emplace(at, id);
    ++count_;
    for (Direction d : kDirections) {
      if (auto n = neighbor(id, d)) {
        events_.push_back({id, d, *n, true, true});
      }
    }
    return id;
  }

  void remove_cell(CellId id) {
    const Cell& c = require(id);
    for (Direction d : kDirections) {
      if (auto n = neighbor(id, d)) {
        events_.push_back({id, d, *n, false, true});
      }
    }
    by_coord_.erase(c.coord);
    cells_[id.value].reset();
    --count_;
  }

  void set_status(CellId id, CellStatus s) {
    Cell& c = require_mut(id);
    if (c.status == s) return;
    c.status = s;
    for (Direction d : kDirections) {
      if (auto n = neighbor(id, d)) {
        events_.push_back({id, d, *n, s == CellStatus::kCorrect, false});
      }
    }
  }

  /// Link events accumulated since the last call.
  std::vector<LinkEvent> take_events() {
    std::vector<LinkEvent> out;
    out.swap(events_);
    return out;
  }

  bool contains(CellId id) const { return id.value < cells_.size() && cells_[id.value].has_value(); }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  const Cell& cell(CellId id) const { return require(id); }
  Coord coord_of(CellId id) const { return require(id).coord; }
  CellStatus status(CellId id) const { return require(id).status; }
  bool is_correct(CellId id) const { return contains(id) && cells_[id.value]->status == CellStatus::kCorrect; }

  std::optional<CellId> cell_at(Coord c) const {
    auto it = by_coord_.find(c);
    if (it == by_coord_.end()) return std::nullopt;
    return it->second;
  }

  /// Physically adjacent cell in direction d, regardless of status.
  std::optional<CellId> neighbor(CellId id, Direction d) const {
    return cell_at(neighbor_coord(require(id).coord, d));
  }

  /// Ids of all present cells in ascending order.
  std::vector<CellId> cell_ids() const {
    std::vector<CellId> out;
    out.reserve(count_);
    for (const auto& c : cells_) {
      if (c) out.push_back(c->id);
    }
    return out;
  }

  /// One past the largest id ever issued; ids are never reused.
  std::uint32_t id_bound() const { return next_id_; }

  struct Bounds {
    Coord min;
    Coord max;
  };
  std::optional<Bounds> bounds() const {
    if (by_coord_.empty()) return std::nullopt;
    Bounds b{by_coord_.begin()->first, by_coord_.begin()->first};
    for (const auto& [c, id] : by_coord_) {
      b.min.x = std::min(b.min.x, c.x);
      b.min.y = std::min(b.min.y, c.y);
      b.max.x = std::max(b.max.x, c.x);
      b.max.y = std::max(b.max.y, c.y);
    }
    return b;
  }

 private:
  const Cell& require(CellId id) const {
    if (!contains(id)) throw TopologyError("unknown cell " + to_string(id));
    return *cells_[id.value];
  }
  Cell& require_mut(CellId id) {
    if (!contains(id)) throw TopologyError("unknown cell " + to_string(id));
    return *cells_[id.value];
  }

  std::vector<std::optional<Cell>> cells_;
  std::map<Coord, CellId> by_coord_;
  std::vector<LinkEvent> events_;
  std::uint32_t next_id_ = 0;
  std::size_t count_ = 0;
};

/// Hop distances from `source` to every reachable cell, over correct cells only.
/// Indexed by CellId value; -1 means unreachable.
inline std::vector<int> bfs_distances(const Grid& grid, CellId source) {
  std::vector<int> dist(grid.id_bound(), -1);
  if (!grid.is_correct(source)) return dist;
  std::deque<CellId> frontier{source};
  dist[source.value] = 0;
  while (!frontier.empty()) {
    const CellId c = frontier.front();
    frontier.pop_front();
    for (Direction d : kDirections) {
      auto n = grid.neighbor(c, d);
      if (!n || !grid.is_correct(*n) || dist[n->value] >= 0) continue;
      dist[n->value] = dist[c.value] + 1;
      frontier.push_back(*n);
    }
  }
  return dist;
}

/// Shortest hop count between a and b over correct cells, or nullopt.
inline std::optional<int> bfs_distance(const Grid& grid, CellId a, CellId b) {
  if (!grid.contains(a) || !grid.contains(b)) {
    throw TopologyError("bfs_distance on unknown cell");
  }
  if (a == b) return 0;
  const int d = bfs_distances(grid, a)[b.value];
  if (d < 0) return std::nullopt;
  return d;
}

/// Component label per cell id (-1 for absent cells, or failed ones when
/// `correct_only`). Returns the number of components.
inline int connected_components(const Grid& grid, std::vector<int>& label, bool correct_only = true) {
  label.assign(grid.id_bound(), -1);
  int count = 0;
  for (CellId id : grid.cell_ids()) {
    if (label[id.value] >= 0 || (correct_only && !grid.is_correct(id))) continue;
    std::deque<CellId> frontier{id};
    label[id.value] = count;
    while (!frontier.empty()) {
      const CellId c = frontier.front();
      frontier.pop_front();
      for (Direction d : kDirections) {
        auto n = grid.neighbor(c, d);
        if (!n || label[n->value] >= 0 || (correct_only && !grid.is_correct(*n))) continue;
        label[n->value] = count;
        frontier.push_back(*n);
      }
    }
    ++count;
  }
  return count;
}

}  // namespace afada
