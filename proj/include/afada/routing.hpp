#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <vector>

#include "afada/message.hpp"
#include "afada/topology.hpp"

namespace afada::routing {

inline constexpr int kDefaultDiameterBound = 64;

/// One row of the combined dist/next table.
struct Route {
  CellId dest;
  int dist = 0;
  Direction next = Direction::kNorth;  // meaningless for the self entry
  bool operator==(const Route&) const = default;
};

/// The estimated-distance table and next-cell table of one cell, kept as a
/// single vector sorted by destination so both share exactly one key set.
class RoutingTable {
 public:
  RoutingTable() = default;
  explicit RoutingTable(CellId self) : self_(self), routes_{Route{self, 0, Direction::kNorth}} {}

  /// Build from arbitrary rows. Used to install corrupted state in tests.
  static RoutingTable from_rows(CellId self, std::vector<Route> rows) {
    RoutingTable t;
    t.self_ = self;
    std::sort(rows.begin(), rows.end(), [](const Route& a, const Route& b) { return a.dest < b.dest; });
    rows.erase(std::unique(rows.begin(), rows.end(), [](const Route& a, const Route& b) { return a.dest == b.dest; }),
               rows.end());
    t.routes_ = std::move(rows);
    return t;
  }

  CellId self() const { return self_; }
  const std::vector<Route>& routes() const { return routes_; }
  std::size_t size() const { return routes_.size(); }

  const Route* find(CellId dest) const {
    auto it = std::lower_bound(routes_.begin(), routes_.end(), dest,
                               [](const Route& r, CellId d) { return r.dest < d; });
    if (it == routes_.end() || it->dest != dest) return nullptr;
    return &*it;
  }

  std::optional<int> dist(CellId dest) const {
    if (const Route* r = find(dest)) return r->dist;
    return std::nullopt;
  }

  /// The dist table as broadcast to neighbours.
  DistVector advertisement() const {
    DistVector out;
    out.reserve(routes_.size());
    for (const Route& r : routes_) out.push_back({r.dest, r.dist});
    return out;
  }

  bool operator==(const RoutingTable&) const = default;

 private:
  friend RoutingTable recompute(CellId, const std::array<std::shared_ptr<const DistVector>, 4>&, int);

  CellId self_{};
  std::vector<Route> routes_;
};

/// Last dist table received per direction; null when no live link or no
/// table received yet.
using NeighborCache = std::array<std::shared_ptr<const DistVector>, 4>;

/// Clear the tables, install the self entry, then relax over every cached
/// neighbour table in N, E, S, W order. An advertisement is dropped when
/// adopting it would store a distance >= D; ties keep the first direction.
inline RoutingTable recompute(CellId self, const NeighborCache& cache, int diameter_bound) {
  struct Candidate {
    CellId dest;
    int dist;
    Direction dir;
  };
  std::vector<Candidate> cands;
  std::size_t total = 0;
  for (const auto& t : cache) total += t ? t->size() : 0;
  cands.reserve(total);
  for (Direction d : kDirections) {
    const auto& table = cache[index_of(d)];
    if (!table) continue;
    for (const DistEntry& e : *table) {
      if (e.dist + 1 >= diameter_bound || e.dist < 0 || e.dest == self) continue;
      cands.push_back({e.dest, e.dist + 1, d});
    }
  }
  // Stable: equal (dest, dist) keep N,E,S,W order, so the first survives.
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.dest < b.dest || (a.dest == b.dest && a.dist < b.dist);
  });

  RoutingTable out;
  out.self_ = self;
  out.routes_.reserve(cands.size() + 1);
  bool self_placed = false;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (i > 0 && cands[i].dest == cands[i - 1].dest) continue;
    if (!self_placed && self < cands[i].dest) {
      out.routes_.push_back({self, 0, Direction::kNorth});
      self_placed = true;
    }
    out.routes_.push_back({cands[i].dest, cands[i].dist, cands[i].dir});
  }
  if (!self_placed) out.routes_.push_back({self, 0, Direction::kNorth});
  return out;
}

/// Result of consulting next_i[goal].
struct NextHop {
  enum class Kind : std::uint8_t { kSelf, kDirection, kUnknown };
  Kind kind = Kind::kUnknown;
  Direction dir = Direction::kNorth;

  bool operator==(const NextHop&) const = default;
  static NextHop at_self() { return {Kind::kSelf, Direction::kNorth}; }
  static NextHop toward(Direction d) { return {Kind::kDirection, d}; }
  static NextHop unknown() { return {Kind::kUnknown, Direction::kNorth}; }
};

inline NextHop lookup_next(const RoutingTable& table, CellId goal) {
  if (goal == table.self()) return NextHop::at_self();
  if (const Route* r = table.find(goal)) return NextHop::toward(r->next);
  return NextHop::unknown();
}

/// Lock-step driver over a static grid: in every round each correct cell
/// broadcasts its dist table to its correct neighbours, then every cell
/// recomputes. Useful to count convergence rounds exactly.
class RoundSimulator {
 public:
  struct Node {
    RoutingTable table;
    NeighborCache cache;
  };

  RoundSimulator(const Grid& grid, int diameter_bound) : grid_(&grid), bound_(diameter_bound) {
    nodes_.resize(grid.id_bound());
    for (CellId id : grid.cell_ids()) nodes_[id.value].table = RoutingTable(id);
  }

  Node& node(CellId id) { return nodes_[id.value]; }
  const Node& node(CellId id) const { return nodes_[id.value]; }
  const RoutingTable& table(CellId id) const { return nodes_[id.value].table; }

  /// Drop cached tables on directions whose link no longer exists (what a
  /// link-down notification does in the message-passing version).
  void sync_links() {
    for (CellId id : grid_->cell_ids()) {
      for (Direction d : kDirections) {
        auto n = grid_->neighbor(id, d);
        if (!n || !grid_->is_correct(*n) || !grid_->is_correct(id)) {
          nodes_[id.value].cache[index_of(d)].reset();
        }
      }
    }
  }

  void round() {
    sync_links();
    std::vector<std::shared_ptr<const DistVector>> ads(nodes_.size());
    for (CellId id : grid_->cell_ids()) {
      if (grid_->is_correct(id)) ads[id.value] = std::make_shared<const DistVector>(nodes_[id.value].table.advertisement());
    }
    for (CellId id : grid_->cell_ids()) {
      if (!grid_->is_correct(id)) continue;
      for (Direction d : kDirections) {
        auto n = grid_->neighbor(id, d);
        if (n && grid_->is_correct(*n)) nodes_[id.value].cache[index_of(d)] = ads[n->value];
      }
    }
    for (CellId id : grid_->cell_ids()) {
      if (!grid_->is_correct(id)) continue;
      nodes_[id.value].table = recompute(id, nodes_[id.value].cache, bound_);
    }
  }

 private:
  const Grid* grid_;
  int bound_;
  std::vector<Node> nodes_;
};

}  // namespace afada::routing
