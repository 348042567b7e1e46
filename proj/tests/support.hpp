#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "afada/engine.hpp"
#include "afada/field.hpp"
#include "afada/rng.hpp"

namespace afada::testkit {

inline std::string join_rows(const std::vector<std::string>& rows) {
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

/// Random w x h grid with each coordinate a cell with probability 1 - holes,
/// reduced to its largest connected component. At least `min_cells` cells.
inline std::vector<std::string> random_rows(RandomStream& rng, int min_dim, int max_dim, double holes,
                                            std::size_t min_cells = 2) {
  for (;;) {
    const int w = static_cast<int>(rng.uniform_int(min_dim, max_dim));
    const int h = static_cast<int>(rng.uniform_int(min_dim, max_dim));
    std::vector<std::string> rows(h, std::string(w, '#'));
    for (auto& row : rows) {
      for (char& c : row) c = rng.bernoulli(holes) ? '#' : '.';
    }
    Grid g = parse_field_rows(rows).grid;
    std::vector<int> label;
    const int n = connected_components(g, label);
    if (n == 0) continue;
    std::vector<std::size_t> size(n, 0);
    for (CellId id : g.cell_ids()) ++size[label[id.value]];
    const int best = static_cast<int>(std::max_element(size.begin(), size.end()) - size.begin());
    if (size[best] < min_cells) continue;
    for (CellId id : g.cell_ids()) {
      if (label[id.value] != best) {
        const Coord c = g.coord_of(id);
        rows[c.y][c.x] = '#';
      }
    }
    return rows;
  }
}

inline std::vector<Coord> cells_of(const std::vector<std::string>& rows) {
  std::vector<Coord> out;
  for (int y = 0; y < static_cast<int>(rows.size()); ++y) {
    for (int x = 0; x < static_cast<int>(rows[y].size()); ++x) {
      if (rows[y][x] != '#') out.push_back({x, y});
    }
  }
  return out;
}

/// Multi-robot scenario on a random grid with a fail-set, used by the
/// safety and determinism checks.
inline std::string random_traffic_scenario(std::uint64_t seed, int robots, bool multi, double loss, double p,
                                           double q) {
  RandomStream rng(derive_seed(seed, "traffic"));
  auto rows = random_rows(rng, 3, 7, 0.2, static_cast<std::size_t>(2 * robots + 3));
  auto cells = cells_of(rows);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.pick(i)]);
  std::string body;
  for (int r = 0; r < robots; ++r) {
    rows[cells[r].y][cells[r].x] = static_cast<char>('0' + r);
    const int goals = static_cast<int>(rng.uniform_int(1, 2));
    body += "robot " + std::to_string(r) + " goals=";
    for (int k = 0; k < goals; ++k) {
      if (k) body += ",";
      body += to_string(cells[robots + rng.pick(cells.size() - robots)]);
    }
    body += "\n";
  }
  for (std::size_t i = robots; i < cells.size(); ++i) {
    if (rng.bernoulli(0.15)) rows[cells[i].y][cells[i].x] = 'F';
  }
  std::string text = join_rows(rows);
  text += "name=traffic-" + std::to_string(seed) + "\n";
  text += "seed=" + std::to_string(seed) + "\n";
  text += "p=" + detail::format_double(p) + "\nq=" + detail::format_double(q) + "\n";
  text += "loss=" + detail::format_double(loss) + "\n";
  text += std::string("reservation=") + (multi ? "multi" : "single") + "\n";
  return text + body;
}

/// Every (i, goal) with a next hop: the neighbour in that direction is one
/// closer. Returns the number of violations.
inline int descent_violations(const Engine& e) {
  const Grid& g = e.grid();
  int bad = 0;
  for (CellId i : g.cell_ids()) {
    if (!g.is_correct(i)) continue;
    for (const auto& r : e.cell(i).table().routes()) {
      if (r.dest == i) continue;
      const auto k = g.neighbor(i, r.next);
      if (!k || !g.is_correct(*k)) {
        ++bad;
        continue;
      }
      const auto dk = e.cell(*k).table().dist(r.dest);
      if (!dk || *dk != r.dist - 1) ++bad;
    }
  }
  return bad;
}

/// Coordinates of every hop destination in a kept trace, in order.
inline std::vector<Coord> hop_targets(const std::vector<std::string>& trace, const std::string& robot = "r0") {
  std::vector<Coord> out;
  for (const auto& line : trace) {
    const Json j = Json::parse(line);
    if (j["kind"] == "hop" && j["src"] == robot) {
      out.push_back({j["payload"]["to"][0].get<int>(), j["payload"]["to"][1].get<int>()});
    }
  }
  return out;
}

/// Run a scenario that never stops on its own up to simulated time `until`
/// and return its trace as parsed records.
inline std::vector<Json> run_live(const std::string& text, Millis until, std::uint64_t seed = 1) {
  EngineOptions opt;
  opt.keep_trace = true;
  opt.live = true;
  opt.seed = seed;
  Engine e(parse_scenario(text), opt);
  e.run_until(until);
  std::vector<Json> out;
  for (const auto& line : e.trace_lines()) out.push_back(Json::parse(line));
  return out;
}

/// Fail and recover trials and outcomes seen over `ticks` failure ticks of a
/// scenario without a task end. A trial is a fail-set cell at a tick: correct
/// and unoccupied (may fail) or failed (may recover).
struct FailureCounts {
  long fail_trials = 0;
  long fails = 0;
  long recover_trials = 0;
  long recovers = 0;
  long fails_under_robot = 0;
};

inline FailureCounts failure_counts(const std::string& text, long ticks, std::uint64_t seed) {
  EngineOptions opt;
  opt.live = true;
  opt.seed = seed;
  Engine e(parse_scenario(text + "start=0\n"), opt);
  std::vector<CellId> fail_set;
  for (const Coord& c : e.scenario().annotations().fail_set) fail_set.push_back(*e.grid().cell_at(c));
  FailureCounts n;
  auto occupied = [&](CellId id) {
    for (const auto& r : e.robots()) {
      if (r.at == id || r.to == id) return true;
    }
    return !e.cell(id).occupancy().free();
  };
  e.set_listener([&](const TraceRecord& r) {
    if (r.kind == "failure_tick") {
      for (CellId id : fail_set) {
        if (!e.grid().is_correct(id)) {
          ++n.recover_trials;
        } else if (!occupied(id)) {
          ++n.fail_trials;
        }
      }
    } else if (r.kind == "topology" && r.src == "failure") {
      if (r.payload["op"] == "fail") {
        ++n.fails;
        const Coord c{r.payload["coord"][0].get<int>(), r.payload["coord"][1].get<int>()};
        if (occupied(*e.grid().cell_at(c))) ++n.fails_under_robot;
      } else {
        ++n.recovers;
      }
    }
  });
  e.run_until(ticks * e.params().fail_period_ms + e.params().fail_period_ms / 2);
  return n;
}

/// Whether `k` successes in `n` trials lie within three binomial standard
/// deviations of n * p.
inline bool within_three_sigma(long k, long n, double p) {
  const double mean = static_cast<double>(n) * p;
  const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
  return std::abs(static_cast<double>(k) - mean) <= 3 * sigma;
}

}  // namespace afada::testkit
