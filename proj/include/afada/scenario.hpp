#pragma once

#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "afada/agents.hpp"
#include "afada/field.hpp"
#include "afada/reservation.hpp"

namespace afada {

/// A destination as written in a scenario: a target letter, a coordinate,
/// or any vacant parking space.
struct GoalSpec {
  enum class Kind : std::uint8_t { kStart, kGoal, kCoord, kPark };
  Kind kind = Kind::kCoord;
  Coord coord;
  bool operator==(const GoalSpec&) const = default;
};

struct RobotSpec {
  std::uint32_t id = 0;
  std::optional<RobotMode> mode;  // unset: the scenario's `mode` parameter
  std::vector<GoalSpec> goals;
  int trips = 1;                  // the goal list is repeated this many times
  std::optional<Coord> start;     // unset: digit marker, else S
  std::optional<Millis> at;       // enter through the spawn gate at this time
  std::optional<DwellRange> dwell;
  bool leave = false;
  bool operator==(const RobotSpec&) const = default;
};

struct ScriptOp {
  enum class Kind : std::uint8_t { kAdd, kRemove, kFail, kRecover, kSpawn };
  Millis at = 0;
  Kind kind = Kind::kAdd;
  Coord coord;
  RobotSpec robot;  // kSpawn only
  bool operator==(const ScriptOp&) const = default;
};

inline const char* to_string(ScriptOp::Kind k) {
  switch (k) {
    case ScriptOp::Kind::kAdd: return "add";
    case ScriptOp::Kind::kRemove: return "remove";
    case ScriptOp::Kind::kFail: return "fail";
    case ScriptOp::Kind::kRecover: return "recover";
    case ScriptOp::Kind::kSpawn: return "spawn";
  }
  return "?";
}

/// Every run parameter, with defaults. Durations are in ms.
struct SimParams {
  std::string name;
  std::uint64_t seed = 1;
  double p = 0.0;
  double q = 0.0;
  double loss = 0.0;
  int trips = 1;
  RobotMode mode = RobotMode::kAfada;
  ReservationMode reservation = ReservationMode::kSingleStep;
  int hop_cap = -1;
  int diameter = routing::kDefaultDiameterBound;
  Millis delay_ms = 20;
  Millis broadcast_ms = 2000;
  Millis heartbeat_ms = 3000;
  Millis timeout_ms = 10000;
  Millis hop_ms = 1000;
  Millis wait_ms = 1000;
  Millis backoff_min_ms = 100;
  Millis backoff_max_ms = 500;
  double preferred = 0.7;
  int retry_filter = 0;  // 1: random retries skip neighbours farther from the goal
  int avoid_uturn = 1;   // 0: a robot may be sent straight back while an equal route exists
  Millis fail_period_ms = 1000;
  std::optional<Millis> start;  // unset: start once every table is correct
  int budget_factor = 10;
  Millis max_time_ms = 600000;
  int time_scale = 1;

  bool operator==(const SimParams&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t end = s.find(sep, pos);
    out.emplace_back(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// from_chars for double is unavailable on some standard libraries.
inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream out;
    out.precision(prec);
    out << v;
    if (std::stod(out.str()) == v) return out.str();
  }
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

inline std::optional<Coord> parse_coord(std::string_view s) {
  if (s.size() < 5 || s.front() != '(' || s.back() != ')') return std::nullopt;
  const auto parts = split(s.substr(1, s.size() - 2), ',');
  if (parts.size() != 2) return std::nullopt;
  auto x = parse_number<int>(parts[0]);
  auto y = parse_number<int>(parts[1]);
  if (!x || !y) return std::nullopt;
  return Coord{*x, *y};
}

}  // namespace detail

inline std::string format_coord(Coord c) { return to_string(c); }

inline std::string format_goal(const GoalSpec& g) {
  switch (g.kind) {
    case GoalSpec::Kind::kStart: return "S";
    case GoalSpec::Kind::kGoal: return "G";
    case GoalSpec::Kind::kPark: return "park";
    case GoalSpec::Kind::kCoord: return format_coord(g.coord);
  }
  return "?";
}

inline std::optional<GoalSpec> parse_goal(std::string_view s) {
  if (s == "S") return GoalSpec{GoalSpec::Kind::kStart, {}};
  if (s == "G") return GoalSpec{GoalSpec::Kind::kGoal, {}};
  if (s == "park") return GoalSpec{GoalSpec::Kind::kPark, {}};
  if (auto c = detail::parse_coord(s)) return GoalSpec{GoalSpec::Kind::kCoord, *c};
  return std::nullopt;
}

/// A parsed scenario: field, parameters, policy overlays, robots and script.
/// Immutable once built; the engine copies what it mutates.
struct Scenario {
  std::vector<std::string> comments;  // verbatim, without the leading "# "
  std::vector<std::string> rows;
  ParsedField field;
  SimParams params;
  std::set<std::string> explicit_params;  // keys present in the text, kept on output
  std::map<Coord, CellPolicy> policies;
  std::vector<RobotSpec> robots;  // as written; see effective_robots()
  std::vector<ScriptOp> script;

  const FieldAnnotations& annotations() const { return field.annotations; }

  /// The robots that will run: the written ones, or the implicit robot 0
  /// doing `trips` round trips S -> G -> S when none is written.
  std::vector<RobotSpec> effective_robots() const {
    if (!robots.empty()) return robots;
    const auto& ann = field.annotations;
    if (!ann.start || !ann.goal) return {};
    RobotSpec r;
    r.id = 0;
    r.goals = {GoalSpec{GoalSpec::Kind::kGoal, {}}, GoalSpec{GoalSpec::Kind::kStart, {}}};
    r.trips = params.trips;
    return {r};
  }

  RobotMode mode_of(const RobotSpec& r) const { return r.mode.value_or(params.mode); }

  std::optional<Coord> resolve(const GoalSpec& g) const {
    switch (g.kind) {
      case GoalSpec::Kind::kStart: return field.annotations.start;
      case GoalSpec::Kind::kGoal: return field.annotations.goal;
      case GoalSpec::Kind::kCoord: return g.coord;
      case GoalSpec::Kind::kPark: return std::nullopt;
    }
    return std::nullopt;
  }

  Coord start_of(const RobotSpec& r) const {
    if (r.start) return *r.start;
    auto it = field.annotations.robot_starts.find(static_cast<int>(r.id));
    if (it != field.annotations.robot_starts.end()) return it->second;
    if (field.annotations.start) return *field.annotations.start;
    throw Error("robot " + std::to_string(r.id) + " has no start position");
  }

  /// Set a parameter as if it had been written in the file.
  void set_param(const std::string& key, const std::string& value);
};

namespace scenario_detail {

struct ParamDef {
  const char* key;
  void (*set)(SimParams&, const std::string&);
  std::string (*get)(const SimParams&);
};

[[noreturn]] inline void bad_value(const std::string& key, const std::string& v) {
  throw Error("invalid value '" + v + "' for " + key);
}

template <class T>
T int_value(const std::string& key, const std::string& v, long long lo) {
  auto n = detail::parse_number<long long>(v);
  if (!n || *n < lo) bad_value(key, v);
  return static_cast<T>(*n);
}

inline double prob_value(const std::string& key, const std::string& v) {
  auto d = detail::parse_double(v);
  if (!d || !(*d >= 0.0 && *d <= 1.0)) bad_value(key, v);
  return *d;
}

#define AFADA_INT_PARAM(name, field, lo)                                                                  \
  ParamDef {                                                                                              \
    name, [](SimParams& s, const std::string& v) { s.field = int_value<decltype(s.field)>(name, v, lo); }, \
        [](const SimParams& s) { return std::to_string(s.field); }                                        \
  }
#define AFADA_PROB_PARAM(name, field)                                                        \
  ParamDef {                                                                                 \
    name, [](SimParams& s, const std::string& v) { s.field = prob_value(name, v); },         \
        [](const SimParams& s) { return detail::format_double(s.field); }                    \
  }

inline const std::vector<ParamDef>& param_table() {
  static const std::vector<ParamDef> table = {
      ParamDef{"name", [](SimParams& s, const std::string& v) { s.name = v; },
               [](const SimParams& s) { return s.name; }},
      AFADA_INT_PARAM("seed", seed, 0),
      AFADA_PROB_PARAM("p", p),
      AFADA_PROB_PARAM("q", q),
      AFADA_PROB_PARAM("loss", loss),
      AFADA_INT_PARAM("trips", trips, 1),
      ParamDef{"mode",
               [](SimParams& s, const std::string& v) {
                 if (v == "afada") {
                   s.mode = RobotMode::kAfada;
                 } else if (v == "selfnav") {
                   s.mode = RobotMode::kSelfNav;
                 } else {
                   bad_value("mode", v);
                 }
               },
               [](const SimParams& s) { return std::string(to_string(s.mode)); }},
      ParamDef{"reservation",
               [](SimParams& s, const std::string& v) {
                 if (v == "single") {
                   s.reservation = ReservationMode::kSingleStep;
                 } else if (v == "multi") {
                   s.reservation = ReservationMode::kMultiStep;
                 } else {
                   bad_value("reservation", v);
                 }
               },
               [](const SimParams& s) {
                 return std::string(s.reservation == ReservationMode::kSingleStep ? "single" : "multi");
               }},
      AFADA_INT_PARAM("hop_cap", hop_cap, -1),
      AFADA_INT_PARAM("D", diameter, 1),
      AFADA_INT_PARAM("delay_ms", delay_ms, 0),
      AFADA_INT_PARAM("broadcast_ms", broadcast_ms, 1),
      AFADA_INT_PARAM("heartbeat_ms", heartbeat_ms, 1),
      AFADA_INT_PARAM("timeout_ms", timeout_ms, 1),
      AFADA_INT_PARAM("hop_ms", hop_ms, 1),
      AFADA_INT_PARAM("wait_ms", wait_ms, 1),
      AFADA_INT_PARAM("backoff_min_ms", backoff_min_ms, 0),
      AFADA_INT_PARAM("backoff_max_ms", backoff_max_ms, 0),
      AFADA_PROB_PARAM("preferred", preferred),
      AFADA_INT_PARAM("retry_filter", retry_filter, 0),
      AFADA_INT_PARAM("avoid_uturn", avoid_uturn, 0),
      AFADA_INT_PARAM("fail_period_ms", fail_period_ms, 1),
      ParamDef{"start",
               [](SimParams& s, const std::string& v) {
                 if (v == "auto") {
                   s.start.reset();
                 } else {
                   s.start = int_value<Millis>("start", v, 0);
                 }
               },
               [](const SimParams& s) { return s.start ? std::to_string(*s.start) : std::string("auto"); }},
      AFADA_INT_PARAM("budget_factor", budget_factor, 1),
      AFADA_INT_PARAM("max_time_ms", max_time_ms, 1),
      AFADA_INT_PARAM("time_scale", time_scale, 1),
  };
  return table;
}

#undef AFADA_INT_PARAM
#undef AFADA_PROB_PARAM

inline const ParamDef* find_param(std::string_view key) {
  for (const auto& d : param_table()) {
    if (key == d.key) return &d;
  }
  return nullptr;
}

inline std::optional<Direction> parse_dir(std::string_view s) {
  if (s.size() != 1) return std::nullopt;
  return direction_from_char(s[0]);
}

/// Parse `robot ...` tokens after the keyword. Throws Error with a message
/// that the caller decorates with the line number.
inline RobotSpec parse_robot_tokens(const std::vector<std::string>& tok, std::size_t first) {
  if (first >= tok.size()) throw Error("robot needs an id");
  RobotSpec r;
  auto id = detail::parse_number<std::uint32_t>(tok[first]);
  if (!id) throw Error("invalid robot id '" + tok[first] + "'");
  r.id = *id;
  for (std::size_t i = first + 1; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string::npos) throw Error("expected key=value, got '" + tok[i] + "'");
    const std::string key = tok[i].substr(0, eq);
    const std::string val = tok[i].substr(eq + 1);
    if (key == "mode") {
      if (val == "afada") {
        r.mode = RobotMode::kAfada;
      } else if (val == "selfnav") {
        r.mode = RobotMode::kSelfNav;
      } else {
        throw Error("unknown robot mode '" + val + "'");
      }
    } else if (key == "goals") {
      r.goals.clear();
      // Coordinates contain commas, so split on commas outside parentheses.
      std::string cur;
      int depth = 0;
      auto flush = [&] {
        auto g = parse_goal(cur);
        if (!g) throw Error("invalid goal '" + cur + "'");
        r.goals.push_back(*g);
        cur.clear();
      };
      for (char c : val) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
          flush();
        } else {
          cur += c;
        }
      }
      flush();
    } else if (key == "trips") {
      r.trips = int_value<int>("trips", val, 1);
    } else if (key == "start") {
      auto c = detail::parse_coord(val);
      if (!c) throw Error("invalid start '" + val + "'");
      r.start = *c;
    } else if (key == "at") {
      r.at = int_value<Millis>("at", val, 0);
    } else if (key == "dwell") {
      const auto dash = val.find('-');
      if (dash == std::string::npos) throw Error("dwell must be min-max");
      DwellRange d{int_value<Millis>("dwell", val.substr(0, dash), 0),
                   int_value<Millis>("dwell", val.substr(dash + 1), 0)};
      if (d.max < d.min) throw Error("dwell max below min");
      r.dwell = d;
    } else if (key == "leave") {
      if (val != "0" && val != "1") throw Error("leave must be 0 or 1");
      r.leave = val == "1";
    } else {
      throw Error("unknown robot key '" + key + "'");
    }
  }
  if (r.goals.empty()) throw Error("robot " + std::to_string(r.id) + " has no goals");
  return r;
}

inline std::string format_robot_tokens(const RobotSpec& r) {
  std::string out = std::to_string(r.id);
  if (r.mode) out += std::string(" mode=") + to_string(*r.mode);
  out += " goals=";
  for (std::size_t i = 0; i < r.goals.size(); ++i) {
    if (i) out += ',';
    out += format_goal(r.goals[i]);
  }
  if (r.trips != 1) out += " trips=" + std::to_string(r.trips);
  if (r.start) out += " start=" + format_coord(*r.start);
  if (r.at) out += " at=" + std::to_string(*r.at);
  if (r.dwell) out += " dwell=" + std::to_string(r.dwell->min) + "-" + std::to_string(r.dwell->max);
  if (r.leave) out += " leave=1";
  return out;
}

inline bool is_grid_row(const std::string& line) {
  if (line.empty()) return false;
  for (char c : line) {
    if (!is_field_glyph(c)) return false;
  }
  return true;
}

}  // namespace scenario_detail

inline void Scenario::set_param(const std::string& key, const std::string& value) {
  const auto* def = scenario_detail::find_param(key);
  if (!def) throw Error("unknown parameter '" + key + "'");
  def->set(params, value);
  explicit_params.insert(key);
}

/// Check cross-references: policies and script directives against the field,
/// robot ids, and parameter consistency.
inline void validate(const Scenario& s) {
  const Grid& g = s.field.grid;
  if (s.params.backoff_max_ms < s.params.backoff_min_ms) throw Error("backoff_max_ms below backoff_min_ms");
  if (s.params.timeout_ms <= s.params.heartbeat_ms) throw Error("timeout_ms must exceed heartbeat_ms");
  for (const auto& [c, pol] : s.policies) {
    if (!g.cell_at(c)) throw Error("policy on " + format_coord(c) + ", which is not a cell");
  }
  std::set<std::uint32_t> ids;
  auto check_robot = [&](const RobotSpec& r) {
    if (!ids.insert(r.id).second) throw Error("duplicate robot id " + std::to_string(r.id));
    for (const auto& goal : r.goals) {
      if (goal.kind == GoalSpec::Kind::kStart && !s.annotations().start) throw Error("goal S but no S in the field");
      if (goal.kind == GoalSpec::Kind::kGoal && !s.annotations().goal) throw Error("goal G but no G in the field");
    }
  };
  for (const auto& r : s.robots) check_robot(r);
  std::set<Coord> present;
  for (CellId id : g.cell_ids()) present.insert(g.coord_of(id));
  Millis last = 0;
  for (const auto& op : s.script) {
    if (op.at < last) throw Error("script times must be non-decreasing");
    last = op.at;
    switch (op.kind) {
      case ScriptOp::Kind::kAdd:
        if (!present.insert(op.coord).second) throw Error("script adds a cell at occupied " + format_coord(op.coord));
        break;
      case ScriptOp::Kind::kRemove:
        if (!present.erase(op.coord)) throw Error("script removes missing cell " + format_coord(op.coord));
        break;
      case ScriptOp::Kind::kFail:
      case ScriptOp::Kind::kRecover:
        if (!present.contains(op.coord)) throw Error("script changes status of missing cell " + format_coord(op.coord));
        break;
      case ScriptOp::Kind::kSpawn:
        check_robot(op.robot);
        break;
    }
  }
}

/// Parse a scenario file. Errors carry 1-based line (and column for grid
/// glyph errors).
inline Scenario parse_scenario(std::string_view text) {
  using namespace scenario_detail;
  Scenario s;
  std::vector<std::string> lines = detail::split(text, '\n');
  int grid_first = 0;
  bool grid_done = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    std::string raw = lines[i];
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = detail::trim(raw);
    if (line.empty()) {
      if (!s.rows.empty()) grid_done = true;
      continue;
    }
    const bool comment = line == "#" || line.rfind("# ", 0) == 0;
    if (!comment && is_grid_row(line)) {
      if (grid_done) throw ParseError("second grid block", lineno, 1);
      if (s.rows.empty()) grid_first = lineno;
      s.rows.push_back(line);
      continue;
    }
    if (!s.rows.empty()) grid_done = true;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      s.comments.push_back(body);
      continue;
    }
    try {
      const auto tok = detail::split_ws(line);
      if (tok[0] == "robot") {
        s.robots.push_back(parse_robot_tokens(tok, 1));
      } else if (tok[0] == "policy") {
        if (tok.size() < 3) throw Error("policy needs a coordinate and a kind");
        auto c = detail::parse_coord(tok[1]);
        if (!c) throw Error("invalid coordinate '" + tok[1] + "'");
        CellPolicy& pol = s.policies[*c];
        std::size_t k = 2;
        while (k < tok.size()) {
          if (k + 1 >= tok.size()) throw Error("policy '" + tok[k] + "' needs a direction");
          auto d = parse_dir(tok[k + 1]);
          if (!d) throw Error("invalid direction '" + tok[k + 1] + "'");
          if (tok[k] == "oneway") {
            pol.oneway = *d;
          } else if (tok[k] == "park") {
            pol.park_side = *d;
          } else if (tok[k] == "parking") {
            pol.parking = *d;
          } else {
            throw Error("unknown policy '" + tok[k] + "'");
          }
          k += 2;
        }
        if (pol.oneway && pol.parking) throw Error("a cell cannot be both oneway and parking");
        if (pol.park_side && !pol.oneway) throw Error("park side requires oneway");
      } else if (tok[0] == "at") {
        if (tok.size() < 3) throw Error("script directive needs a time and an operation");
        ScriptOp op;
        op.at = int_value<Millis>("at", tok[1], 0);
        const std::string& verb = tok[2];
        if (verb == "spawn") {
          if (tok.size() < 4 || tok[3] != "robot") throw Error("expected 'spawn robot'");
          op.kind = ScriptOp::Kind::kSpawn;
          op.robot = parse_robot_tokens(tok, 4);
          if (op.robot.at) throw Error("spawned robots take their time from the directive");
        } else {
          if (verb == "add") {
            op.kind = ScriptOp::Kind::kAdd;
          } else if (verb == "remove") {
            op.kind = ScriptOp::Kind::kRemove;
          } else if (verb == "fail") {
            op.kind = ScriptOp::Kind::kFail;
          } else if (verb == "recover") {
            op.kind = ScriptOp::Kind::kRecover;
          } else {
            throw Error("unknown script operation '" + verb + "'");
          }
          if (tok.size() != 4) throw Error("'" + verb + "' takes one coordinate");
          auto c = detail::parse_coord(tok[3]);
          if (!c) throw Error("invalid coordinate '" + tok[3] + "'");
          op.coord = *c;
        }
        s.script.push_back(std::move(op));
      } else if (tok.size() == 1 && tok[0].find('=') != std::string::npos) {
        const auto eq = tok[0].find('=');
        s.set_param(tok[0].substr(0, eq), tok[0].substr(eq + 1));
      } else {
        throw Error("unrecognized line '" + line + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (s.rows.empty()) {
    const int last = static_cast<int>(lines.size()) - (!text.empty() && text.back() == '\n' ? 1 : 0);
    throw ParseError("no grid block", std::max(last, 1));
  }
  s.field = parse_field_rows(s.rows, grid_first);
  try {
    validate(s);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), 0);
  }
  return s;
}

/// Canonical text: comments, grid, explicit parameters in table order,
/// policies by coordinate, robots, script.
inline std::string to_text(const Scenario& s) {
  using namespace scenario_detail;
  std::string out;
  for (const auto& c : s.comments) out += c.empty() ? "#\n" : "# " + c + "\n";
  for (const auto& row : render_field_rows(s.field.grid, s.field.annotations)) out += row + "\n";
  for (const auto& def : param_table()) {
    if (s.explicit_params.contains(def.key)) out += std::string(def.key) + "=" + def.get(s.params) + "\n";
  }
  for (const auto& [c, pol] : s.policies) {
    out += "policy " + format_coord(c);
    if (pol.oneway) out += std::string(" oneway ") + to_char(*pol.oneway);
    if (pol.park_side) out += std::string(" park ") + to_char(*pol.park_side);
    if (pol.parking) out += std::string(" parking ") + to_char(*pol.parking);
    out += "\n";
  }
  for (const auto& r : s.robots) out += "robot " + format_robot_tokens(r) + "\n";
  for (const auto& op : s.script) {
    out += "at " + std::to_string(op.at) + " " + to_string(op.kind) + " ";
    out += op.kind == ScriptOp::Kind::kSpawn ? "robot " + format_robot_tokens(op.robot) : format_coord(op.coord);
    out += "\n";
  }
  return out;
}

}  // namespace afada
