#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "afada/agents.hpp"
#include "afada/cell.hpp"
#include "afada/rng.hpp"
#include "afada/scenario.hpp"
#include "afada/trace.hpp"

namespace afada {

struct EngineOptions {
  bool keep_trace = false;
  std::optional<std::uint64_t> seed;  // overrides the scenario's seed
  std::optional<int> time_scale;      // overrides the scenario's time_scale
  std::optional<double> loss;         // overrides the scenario's loss
  bool live = false;                  // never stop on its own (serve)
};

struct RobotResult {
  std::uint32_t id = 0;
  RobotMode mode = RobotMode::kAfada;
  int steps = 0;
  std::optional<int> optimal;  // BFS step sum over the destination list
  bool finished = false;
  Millis finish_time = 0;
  int reservations = 0;        // acknowledged reservations
  long reserved_cells = 0;     // cells over all acknowledged reservations
};

struct RunResult {
  bool completed = false;
  std::string stop_reason;
  Millis start_time = 0;  // task start (end of warm-up)
  Millis end_time = 0;
  Millis sim_time = 0;    // end_time - start_time
  int total_steps = 0;
  std::vector<RobotResult> robots;
  int violations = 0;
  std::vector<std::string> violation_messages;  // first few
  Fabric::Counters messages;
  int failures = 0;
  int recoveries = 0;
  std::uint64_t records = 0;
  bool converged_at_start = false;
};

/// Outcome of a live command (gateway or replayed trace).
struct CommandResult {
  bool ok = false;
  std::string error;
  Json result = Json::object();
};

/// The deterministic discrete-event core. Owns the topology, every cell and
/// robot, the event queue, the random substreams and the trace.
class Engine {
 public:
  static constexpr Millis kProbePeriod = 500;
  static constexpr Millis kWarmupLimit = 120000;
  static constexpr Millis kSpawnRetry = 500;
  static constexpr std::size_t kMaxViolationMessages = 8;

  explicit Engine(Scenario scenario, EngineOptions options = {})
      : scenario_(std::move(scenario)), options_(options), rng_(0) {
    if (options_.seed) scenario_.set_param("seed", std::to_string(*options_.seed));
    if (options_.time_scale) scenario_.set_param("time_scale", std::to_string(*options_.time_scale));
    if (options_.loss) scenario_.set_param("loss", detail::format_double(*options_.loss));
    validate(scenario_);
    const SimParams& p = scenario_.params;
    scale_ = p.time_scale;
    rng_ = RandomStreams(p.seed);

    cell_config_.fabric.delay = p.delay_ms * scale_;
    cell_config_.fabric.loss_prob = p.loss;
    cell_config_.fabric.heartbeat_period = p.heartbeat_ms * scale_;
    cell_config_.fabric.heartbeat_timeout = p.timeout_ms * scale_;
    cell_config_.broadcast_period = p.broadcast_ms * scale_;
    cell_config_.diameter_bound = p.diameter;
    cell_config_.reservation.mode = p.reservation;
    cell_config_.reservation.hop_cap = p.hop_cap;
    cell_config_.reservation.backoff_min = p.backoff_min_ms;
    cell_config_.reservation.backoff_max = p.backoff_max_ms;
    cell_config_.reservation.preferred_prob = p.preferred;
    cell_config_.reservation.retry_filter = p.retry_filter != 0;
    cell_config_.reservation.avoid_uturn = p.avoid_uturn != 0;
    cell_config_.reservation.time_unit = scale_;
    robot_config_.hop_duration = p.hop_ms * scale_;
    robot_config_.wait_retry = p.wait_ms * scale_;
    robot_config_.time_unit = scale_;
    fabric_.emplace(cell_config_.fabric, rng_.loss);

    grid_ = scenario_.field.grid;
    grid_.take_events();
    for (const Coord& c : scenario_.annotations().fail_set) fail_set_.push_back(*grid_.cell_at(c));
    std::sort(fail_set_.begin(), fail_set_.end());
    cells_.resize(grid_.id_bound());
    for (CellId id : grid_.cell_ids()) boot_cell(id);

    for (const RobotSpec& spec : scenario_.effective_robots()) {
      RobotSlot& slot = create_robot(spec);
      if (!spec.at) place_robot(slot, *grid_.cell_at(scenario_.start_of(spec)));
    }
    if (p.start) {
      schedule(make(p.start.value() * scale_, Event::Kind::kStart));
    } else {
      schedule(make(kProbePeriod * scale_, Event::Kind::kProbe));
    }
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // ---- observation ----------------------------------------------------
  const Scenario& scenario() const { return scenario_; }
  const SimParams& params() const { return scenario_.params; }
  const Grid& grid() const { return grid_; }
  const CellConfig& cell_config() const { return cell_config_; }
  Millis now() const { return now_; }
  bool finished() const { return stopped_; }
  bool started() const { return started_; }
  Millis start_time() const { return start_time_; }
  std::uint64_t record_count() const { return records_; }
  std::uint64_t events_processed() const { return events_; }
  const std::vector<std::string>& trace_lines() const { return trace_; }
  std::optional<Millis> next_event_time() const {
    if (queue_.empty() || stopped_) return std::nullopt;
    return queue_.top().t;
  }
  Millis last_table_change() const { return last_table_change_; }

  const CellNode& cell(CellId id) const { return cells_.at(id.value).node; }

  TraceHeader header() const {
    return TraceHeader{to_text(scenario_), scenario_.params.seed, scale_, options_.live};
  }

  /// Called for every record as it is produced (gateway event stream).
  void set_listener(std::function<void(const TraceRecord&)> f) { listener_ = std::move(f); }

  struct RobotView {
    std::uint32_t id;
    RobotMode mode;
    RobotPhase phase;
    std::string where;  // pending, cell, moving, gone
    std::optional<CellId> at;
    std::optional<CellId> to;
    int steps;
    std::vector<Goal> destinations;
  };
  std::vector<RobotView> robots() const {
    std::vector<RobotView> out;
    for (const auto& [id, r] : robots_) out.push_back(view(r));
    return out;
  }

  /// Every correct cell's table equals the BFS distances over the correct
  /// cells of its component, with exactly the reachable cells as keys.
  bool tables_match_oracle() const {
    for (CellId i : grid_.cell_ids()) {
      if (!grid_.is_correct(i)) continue;
      if (!table_matches_oracle(i)) return false;
    }
    return true;
  }

  bool table_matches_oracle(CellId i) const {
    const auto dist = bfs_distances(grid_, i);
    const auto& table = cells_[i.value].node.table();
    std::size_t reachable = 0;
    for (CellId j : grid_.cell_ids()) {
      if (dist[j.value] < 0) continue;
      ++reachable;
      if (table.dist(j) != dist[j.value]) return false;
    }
    return table.size() == reachable;
  }

  // ---- execution ------------------------------------------------------

  /// Process one event. Returns false when the run is over.
  bool step() {
    if (stopped_) return false;
    if (queue_.empty()) {
      stop(task_complete(), "no events");
      return false;
    }
    Event e = queue_.top();
    queue_.pop();
    ++events_;
    now_ = e.t;
    current_cause_ = e.cause;
    dispatch(e);
    check_safety();
    if (!stopped_ && started_ && !options_.live && !robots_.empty() && all_robots_done() &&
        !scripted_spawns_pending()) {
      stop(task_complete(), "completed");
    }
    if (!stopped_ && started_ && !options_.live && robots_.empty() && script_done()) stop(true, "idle");
    return !stopped_;
  }

  /// Process every event with time <= t, then move the clock to t.
  void run_until(Millis t) {
    while (!stopped_ && !queue_.empty() && queue_.top().t <= t) step();
    advance_to(t);
  }

  /// Move the clock forward without processing events; never past the next
  /// pending event.
  void advance_to(Millis t) {
    if (stopped_ || t <= now_) return;
    if (!queue_.empty() && queue_.top().t < t) t = queue_.top().t;
    now_ = t;
  }

  /// Run to completion or budget. A scenario without robots ends once its
  /// script has been applied.
  RunResult run() {
    while (step()) {
    }
    return result();
  }

  /// Run until no table has changed for two broadcast periods (and the task
  /// has started), or until `limit` of simulated time.
  bool run_until_quiescent(Millis limit) {
    const Millis quiet = 2 * cell_config_.broadcast_period;
    while (!stopped_ && !queue_.empty() && queue_.top().t <= limit) {
      step();
      if (started_ && now_ - last_table_change_ >= quiet) return true;
    }
    return started_ && now_ - last_table_change_ >= quiet;
  }

  RunResult result() const {
    RunResult r;
    r.completed = completed_;
    r.stop_reason = stop_reason_;
    r.start_time = start_time_;
    r.end_time = now_;
    r.sim_time = started_ ? now_ - start_time_ : 0;
    for (const auto& [id, slot] : robots_) {
      RobotResult rr;
      rr.id = id;
      rr.mode = slot.mode;
      rr.steps = steps_of(slot);
      rr.optimal = slot.optimal;
      rr.finished = slot.finished && !slot.failed;
      rr.finish_time = slot.finish_time;
      rr.reservations = slot.reservations;
      rr.reserved_cells = slot.reserved_cells;
      r.total_steps += rr.steps;
      r.robots.push_back(rr);
    }
    r.violations = violations_;
    r.violation_messages = violation_messages_;
    r.messages = fabric_->counters();
    r.failures = failures_;
    r.recoveries = recoveries_;
    r.records = records_;
    r.converged_at_start = converged_at_start_;
    return r;
  }

  // ---- live commands --------------------------------------------------

  /// Apply a state-changing command between events. Read-only commands
  /// (inspect_cell) are answered without a trace record.
  CommandResult command(const std::string& op, const Json& args) {
    CommandResult res;
    try {
      if (op == "inspect_cell") {
        const CellId id = require_cell(coord_arg(args));
        res.result = inspect(id);
        res.ok = true;
        return res;
      }
      if (stopped_) throw Error("simulation has ended");
      std::function<void()> apply;
      if (op == "add_cell") {
        const Coord c = coord_arg(args);
        if (grid_.cell_at(c)) throw Error("coordinate " + to_string(c) + " is already occupied");
        apply = [this, c] { add_cell(c, "cmd"); };
      } else if (op == "remove_cell") {
        const CellId id = require_cell(coord_arg(args));
        if (presence(id)) throw Error("a robot is on or holds " + to_string(grid_.coord_of(id)));
        apply = [this, id] { remove_cell(id, "cmd"); };
      } else if (op == "fail_cell") {
        const CellId id = require_cell(coord_arg(args));
        if (presence(id)) throw Error("a robot is on or holds " + to_string(grid_.coord_of(id)));
        apply = [this, id] { fail_cell(id, "cmd"); };
      } else if (op == "recover_cell") {
        const CellId id = require_cell(coord_arg(args));
        apply = [this, id] { recover_cell(id, "cmd"); };
      } else if (op == "spawn_robot") {
        RobotSpec spec = robot_arg(args);
        if (robots_.contains(spec.id)) throw Error("robot " + std::to_string(spec.id) + " already exists");
        resolve_goals(spec);
        const Coord at = scenario_.start_of(spec);
        if (!grid_.cell_at(at)) throw Error("start " + to_string(at) + " is not a cell");
        apply = [this, spec] {
          RobotSlot& slot = create_robot(spec);
          if (started_) {
            spawn_attempt(slot.spec.id);
          }
        };
      } else if (op == "set_goals") {
        const auto id = args.at("robot").get<std::uint32_t>();
        auto it = robots_.find(id);
        if (it == robots_.end()) throw Error("no robot " + std::to_string(id));
        RobotSpec spec = it->second.spec;
        spec.goals = goals_arg(args.at("goals"));
        spec.trips = 1;
        auto goals = resolve_goals(spec);
        apply = [this, id, goals] { set_goals(robots_.at(id), goals); };
      } else {
        throw Error("unknown command '" + op + "'");
      }
      Json payload{{"op", op}, {"args", args}, {"events", events_}};
      const auto seq = emit("cmd", "env", "env", [&] { return payload; }, current_cause_);
      const auto saved = current_cause_;
      current_cause_ = seq;
      apply();
      check_safety();
      current_cause_ = saved;
      res.ok = true;
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
    return res;
  }

  /// Full observable state as JSON (gateway snapshots, replay).
  Json snapshot(std::optional<CellId> preview_goal = std::nullopt) const {
    if (!preview_goal && scenario_.annotations().goal) preview_goal = grid_.cell_at(*scenario_.annotations().goal);
    Json j;
    j["type"] = "snapshot";
    j["t"] = now_;
    j["started"] = started_;
    Json cells = Json::array();
    for (CellId id : grid_.cell_ids()) {
      const CellNode& n = cells_[id.value].node;
      const Coord c = grid_.coord_of(id);
      Json cell;
      cell["id"] = id.value;
      cell["coord"] = Json::array({c.x, c.y});
      cell["status"] = to_string(grid_.status(id));
      const Occupancy& occ = n.occupancy();
      cell["occupancy"] = {{"state", to_string(occ.state)},
                           {"robot", occ.free() ? Json(nullptr) : Json(occ.robot.value)}};
      Json preview = Json::object();
      if (preview_goal && grid_.contains(*preview_goal)) {
        preview["goal"] = preview_goal->value;
        auto d = n.table().dist(*preview_goal);
        preview["dist"] = d ? Json(*d) : Json(nullptr);
        const auto hop = routing::lookup_next(n.table(), *preview_goal);
        preview["next"] = hop.kind == routing::NextHop::Kind::kDirection ? Json(std::string(1, to_char(hop.dir)))
                                                                         : Json(nullptr);
      }
      cell["dist_preview"] = preview;
      cell["table_size"] = n.table().size();
      cells.push_back(cell);
    }
    j["grid"] = cells;
    Json rs = Json::array();
    for (const auto& [id, slot] : robots_) {
      const RobotView v = view(slot);
      Json r;
      r["id"] = id;
      r["mode"] = to_string(v.mode);
      r["phase"] = to_string(v.phase);
      r["where"] = v.where;
      r["at"] = v.at ? coord_json(*v.at) : Json(nullptr);
      r["to"] = v.to ? coord_json(*v.to) : Json(nullptr);
      r["steps"] = v.steps;
      Json goals = Json::array();
      for (const Goal& g : v.destinations) goals.push_back(goal_json(g));
      r["destinations"] = goals;
      rs.push_back(r);
    }
    j["robots"] = rs;
    return j;
  }

  Json inspect(CellId id) const {
    const CellNode& n = cells_.at(id.value).node;
    Json j;
    j["id"] = id.value;
    const Coord c = grid_.coord_of(id);
    j["coord"] = Json::array({c.x, c.y});
    j["status"] = to_string(grid_.status(id));
    Json table = Json::array();
    for (const auto& r : n.table().routes()) {
      Json row;
      row["dest"] = r.dest.value;
      row["coord"] = grid_.contains(r.dest) ? coord_json(r.dest) : Json(nullptr);
      row["dist"] = r.dist;
      row["next"] = r.dest == id ? Json("self") : Json(std::string(1, to_char(r.next)));
      table.push_back(row);
    }
    j["table"] = table;
    Json links = Json::object();
    for (Direction d : kDirections) {
      const LinkState& l = n.links()[d];
      links[std::string(1, to_char(d))] = {
          {"physical", l.physical},
          {"alive", l.alive},
          {"heartbeat_age", l.physical && grid_.is_correct(id) ? Json(now_ - l.last_heartbeat) : Json(nullptr)}};
    }
    j["links"] = links;
    const Occupancy& occ = n.occupancy();
    j["occupancy"] = {{"state", to_string(occ.state)}, {"robot", occ.free() ? Json(nullptr) : Json(occ.robot.value)}};
    return j;
  }

  /// Coordinate argument: {"coord":[x,y]}, {"coord":"(x,y)"} or {"x":..,"y":..}.
  static Coord coord_arg(const Json& args) {
    if (args.contains("coord")) {
      const Json& c = args.at("coord");
      if (c.is_array() && c.size() == 2) return Coord{c[0].get<int>(), c[1].get<int>()};
      if (c.is_string()) {
        if (auto parsed = detail::parse_coord(c.get<std::string>())) return *parsed;
      }
      throw Error("invalid coord");
    }
    if (args.contains("x") && args.contains("y")) return Coord{args.at("x").get<int>(), args.at("y").get<int>()};
    throw Error("missing coord");
  }

  /// Test hook: overwrite a cell's routing state.
  void corrupt_cell(CellId id, routing::RoutingTable table, routing::NeighborCache cache) {
    cells_.at(id.value).node.corrupt(std::move(table), std::move(cache));
    last_table_change_ = now_;
  }

 private:
  struct Event {
    enum class Kind : std::uint8_t {
      kCellDeliver,   // cell -> neighbouring cell
      kRobotDeliver,  // cell -> robot on it
      kCellFromRobot, // robot -> cell under it
      kCellTimer,
      kBroadcast,
      kHeartbeat,
      kFailureTick,
      kHopDone,
      kRobotTimer,
      kScript,
      kProbe,
      kStart,
      kSpawnGate,
      kTimeBudget,
    };
    Millis t = 0;
    std::uint64_t seq = 0;
    Kind kind = Kind::kProbe;
    std::uint32_t a = 0;      // cell or robot
    std::uint32_t b = 0;      // peer cell or robot
    Direction dir = Direction::kNorth;
    std::uint64_t epoch = 0;  // target incarnation / timer generation
    std::optional<Message> msg;
    CellTimer ctimer;
    RobotTimer rtimer = RobotTimer::kRetry;
    std::optional<std::uint64_t> cause;
  };
  struct Later {
    bool operator()(const Event& x, const Event& y) const {
      return x.t > y.t || (x.t == y.t && x.seq > y.seq);
    }
  };

  struct CellSlot {
    CellNode node;
    std::uint64_t epoch = 0;
  };

  struct RobotSlot {
    RobotSpec spec;
    RobotMode mode = RobotMode::kAfada;
    std::deque<Goal> goals;
    std::optional<AfadaRobot> afada;
    std::optional<SelfNavRobot> selfnav;
    enum class Where : std::uint8_t { kPending, kOnCell, kMoving, kGone } where = Where::kPending;
    CellId at;
    CellId to;
    std::uint64_t timer_gen = 0;
    std::optional<int> optimal;
    bool finished = false;
    bool failed = false;  // task failure (self-nav: destination not in its map)
    Millis finish_time = 0;
    int reservations = 0;
    long reserved_cells = 0;
  };

  // ---- plumbing -------------------------------------------------------

  void schedule(Event e) {
    e.seq = next_seq_++;
    if (!e.cause) e.cause = current_cause_;
    queue_.push(std::move(e));
  }

  Event make(Millis at, Event::Kind kind) {
    Event e;
    e.t = at;
    e.kind = kind;
    e.cause = current_cause_;
    return e;
  }

  bool tracing() const { return options_.keep_trace || static_cast<bool>(listener_); }

  template <class F>
  std::uint64_t emit(const char* kind, const std::string& src, const std::string& dst, F&& payload,
                     std::optional<std::uint64_t> cause) {
    const std::uint64_t seq = records_++;
    if (tracing()) {
      TraceRecord r;
      r.t = now_;
      r.seq = seq;
      r.kind = kind;
      r.src = src;
      r.dst = dst;
      r.payload = payload();
      r.cause = cause;
      if (options_.keep_trace) trace_.push_back(r.to_line());
      if (listener_) listener_(r);
    }
    return seq;
  }

  std::uint64_t emit(const char* kind, const std::string& src, const std::string& dst) {
    return emit(kind, src, dst, [] { return Json::object(); }, current_cause_);
  }

  template <class F>
  std::uint64_t emit(const char* kind, const std::string& src, const std::string& dst, F&& payload) {
    return emit(kind, src, dst, std::forward<F>(payload), current_cause_);
  }

  /// Emit the record for the event being handled; it becomes the cause of
  /// everything the handler produces.
  template <class F>
  void begin(const char* kind, const std::string& src, const std::string& dst, F&& payload) {
    current_cause_ = emit(kind, src, dst, std::forward<F>(payload), current_cause_);
  }
  void begin(const char* kind, const std::string& src, const std::string& dst) {
    begin(kind, src, dst, [] { return Json::object(); });
  }

  static std::string cell_name(CellId id) { return to_string(id); }
  static std::string robot_name(std::uint32_t id) { return "r" + std::to_string(id); }

  Json coord_json(CellId id) const {
    const Coord c = grid_.coord_of(id);
    return Json::array({c.x, c.y});
  }

  Json goal_json(const Goal& g) const {
    if (g.is_park()) return "park";
    if (grid_.contains(g.cell)) return coord_json(g.cell);
    return to_string(g.cell);
  }

  Json message_json(const Message& m) const {
    Json j;
    j["msg"] = message_kind(m);
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, DistBroadcast>) {
            j["entries"] = x.table ? x.table->size() : 0;
          } else if constexpr (std::is_same_v<T, ReserveRequest>) {
            j["id"] = x.id;
            j["robot"] = x.robot.value;
            j["goal"] = goal_json(x.goal);
            j["hops"] = x.hops_remaining;
            j["hop"] = x.hop_index;
          } else if constexpr (std::is_same_v<T, ReserveAck>) {
            j["id"] = x.id;
            Json path = Json::array();
            for (CellId c : x.path) path.push_back(c.value);
            j["path"] = path;
          } else if constexpr (std::is_same_v<T, ReserveReject>) {
            j["id"] = x.id;
          } else if constexpr (std::is_same_v<T, Release> || std::is_same_v<T, Arrived> ||
                               std::is_same_v<T, Leave>) {
            j["robot"] = x.robot.value;
          } else if constexpr (std::is_same_v<T, RobotRequest>) {
            j["robot"] = x.robot.value;
            j["goal"] = goal_json(x.goal);
          } else if constexpr (std::is_same_v<T, Instruction>) {
            j["robot"] = x.robot.value;
            j["kind"] = to_string(x.kind);
            if (x.kind == InstructionKind::kMove) j["dir"] = std::string(1, to_char(x.dir));
          }
        },
        m);
    return j;
  }

  CellContext context() { return CellContext{now_, cell_config_, rng_.backoff, rng_.retry}; }

  // ---- cells ----------------------------------------------------------

  CellPolicy policy_at(Coord c) const {
    auto it = scenario_.policies.find(c);
    return it == scenario_.policies.end() ? CellPolicy{} : it->second;
  }

  /// Power on a cell with fresh state: connectors detect their neighbours,
  /// heartbeats go out at once, periodic ticks start at random phases.
  void boot_cell(CellId id) {
    if (cells_.size() < grid_.id_bound()) cells_.resize(grid_.id_bound());
    CellSlot& slot = cells_[id.value];
    const std::uint64_t epoch = slot.epoch + 1;
    slot = CellSlot{CellNode(id, policy_at(grid_.coord_of(id))), epoch};
    auto ctx = context();
    for (Direction d : kDirections) {
      if (grid_.neighbor(id, d)) apply_cell_effects(id, slot.node.on_physical(d, true, ctx));
    }
    const Millis bphase = rng_.phase.uniform_int(0, scenario_.params.broadcast_ms - 1) * scale_;
    const Millis hphase = rng_.phase.uniform_int(0, scenario_.params.heartbeat_ms - 1) * scale_;
    Event b = make(now_ + bphase, Event::Kind::kBroadcast);
    b.a = id.value;
    b.epoch = epoch;
    schedule(b);
    Event h = make(now_ + hphase, Event::Kind::kHeartbeat);
    h.a = id.value;
    h.epoch = epoch;
    schedule(h);
  }

  void add_cell(Coord c, const char* origin) {
    const CellId id = grid_.add_cell(c);
    emit("topology", origin, cell_name(id), [&] { return Json{{"op", "add"}, {"coord", Json::array({c.x, c.y})}}; });
    cells_.resize(grid_.id_bound());
    boot_cell(id);
    // The new cell's own connectors were handled at boot; only neighbours
    // still need their side of each new link.
    for (const LinkEvent& ev : grid_.take_events()) {
      if (!ev.physical || !grid_.is_correct(ev.b)) continue;
      auto ctx = context();
      apply_cell_effects(ev.b, cells_[ev.b.value].node.on_physical(opposite(ev.dir), true, ctx));
    }
  }

  void remove_cell(CellId id, const char* origin) {
    const Coord c = grid_.coord_of(id);
    emit("topology", origin, cell_name(id),
         [&] { return Json{{"op", "remove"}, {"coord", Json::array({c.x, c.y})}}; });
    grid_.remove_cell(id);
    cells_[id.value] = CellSlot{CellNode{}, cells_[id.value].epoch + 1};
    fail_set_.erase(std::remove(fail_set_.begin(), fail_set_.end(), id), fail_set_.end());
    for (const LinkEvent& ev : grid_.take_events()) {
      if (!ev.physical || !grid_.is_correct(ev.b)) continue;
      auto ctx = context();
      const auto before = cells_[ev.b.value].node.links().alive_mask();
      apply_cell_effects(ev.b, cells_[ev.b.value].node.on_physical(opposite(ev.dir), false, ctx));
      note_link_changes(ev.b, before);
    }
  }

  void fail_cell(CellId id, const char* origin) {
    if (!grid_.is_correct(id)) return;
    emit("topology", origin, cell_name(id), [&] { return Json{{"op", "fail"}, {"coord", coord_json(id)}}; });
    grid_.set_status(id, CellStatus::kFailed);
    grid_.take_events();  // neighbours learn by heartbeat timeout only
    cells_[id.value] = CellSlot{CellNode(id, policy_at(grid_.coord_of(id))), cells_[id.value].epoch + 1};
    ++failures_;
  }

  void recover_cell(CellId id, const char* origin) {
    if (grid_.is_correct(id)) return;
    emit("topology", origin, cell_name(id), [&] { return Json{{"op", "recover"}, {"coord", coord_json(id)}}; });
    grid_.set_status(id, CellStatus::kCorrect);
    grid_.take_events();
    boot_cell(id);
    ++recoveries_;
  }

  /// A robot is on the cell, moving onto it, or the cell holds a reservation.
  bool presence(CellId id) const {
    if (!cells_[id.value].node.occupancy().free()) return true;
    for (const auto& [rid, r] : robots_) {
      if (r.where == RobotSlot::Where::kOnCell && r.at == id) return true;
      if (r.where == RobotSlot::Where::kMoving && (r.at == id || r.to == id)) return true;
    }
    return false;
  }

  void apply_cell_effects(CellId id, CellEffects fx) {
    for (auto& note : fx.notes) {
      emit("note", cell_name(id), cell_name(id), [&] { return Json{{"text", note}}; });
    }
    if (fx.table_changed) {
      last_table_change_ = now_;
      emit("table", cell_name(id), cell_name(id),
           [&] { return Json{{"size", cells_[id.value].node.table().size()}}; });
    }
    if (fx.reserved_path && !fx.to_robots.empty()) {
      auto it = robots_.find(fx.to_robots.front().first.value);
      if (it != robots_.end()) {
        ++it->second.reservations;
        it->second.reserved_cells += static_cast<long>(*fx.reserved_path);
      }
      emit("reserved", cell_name(id), robot_name(fx.to_robots.front().first.value),
           [&] { return Json{{"cells", *fx.reserved_path}}; });
    }
    if (fx.fatal) violation(*fx.fatal, cell_name(id));
    for (auto& [dir, msg] : fx.to_cells) send_to_cell(id, dir, std::move(msg));
    for (auto& [robot, msg] : fx.to_robots) send_to_robot(id, robot.value, std::move(msg));
    for (auto& [delay, timer] : fx.timers) {
      Event e = make(now_ + delay, Event::Kind::kCellTimer);
      e.a = id.value;
      e.epoch = cells_[id.value].epoch;
      e.ctimer = timer;
      schedule(e);
    }
  }

  void drop(const std::string& src, const std::string& dst, const Message& m, DropCause cause) {
    emit("drop", src, dst, [&] {
      Json j = message_json(m);
      j["cause"] = to_string(cause);
      return j;
    });
  }

  void send_to_cell(CellId from, Direction dir, Message msg) {
    std::optional<DropCause> problem;
    auto to = grid_.neighbor(from, dir);
    if (!grid_.is_correct(from)) {
      problem = DropCause::kSrcFailed;
    } else if (!to) {
      problem = DropCause::kNoLink;
    } else if (!grid_.is_correct(*to)) {
      problem = DropCause::kDstFailed;
    }
    const auto v = fabric_->send(problem, now_);
    const std::string dst = to ? cell_name(*to) : "none";
    if (!v.delivered) {
      drop(cell_name(from), dst, msg, v.cause);
      return;
    }
    Event e = make(v.deliver_at, Event::Kind::kCellDeliver);
    e.a = to->value;
    e.b = from.value;
    e.dir = opposite(dir);
    e.msg = std::move(msg);
    schedule(std::move(e));
  }

  void send_to_robot(CellId from, std::uint32_t robot, Message msg) {
    std::optional<DropCause> problem;
    if (!grid_.is_correct(from)) problem = DropCause::kSrcFailed;
    const auto v = fabric_->send(problem, now_);
    if (!v.delivered) {
      drop(cell_name(from), robot_name(robot), msg, v.cause);
      return;
    }
    Event e = make(v.deliver_at, Event::Kind::kRobotDeliver);
    e.a = robot;
    e.b = from.value;
    e.msg = std::move(msg);
    schedule(std::move(e));
  }

  void send_from_robot(RobotSlot& r, Message msg) {
    std::optional<DropCause> problem;
    const CellId cell = r.at;
    if (!grid_.contains(cell)) {
      problem = DropCause::kNoLink;
    } else if (!grid_.is_correct(cell)) {
      problem = DropCause::kDstFailed;
    }
    const auto v = fabric_->send(problem, now_);
    if (!v.delivered) {
      drop(robot_name(r.spec.id), cell_name(cell), msg, v.cause);
      return;
    }
    Event e = make(v.deliver_at, Event::Kind::kCellFromRobot);
    e.a = cell.value;
    e.b = r.spec.id;
    e.epoch = cells_[cell.value].epoch;
    e.msg = std::move(msg);
    schedule(std::move(e));
  }

  // ---- robots ---------------------------------------------------------

  std::deque<Goal> resolve_goals(const RobotSpec& spec) const {
    std::deque<Goal> out;
    for (int t = 0; t < spec.trips; ++t) {
      for (const GoalSpec& g : spec.goals) {
        if (g.kind == GoalSpec::Kind::kPark) {
          out.push_back(Goal::park());
          continue;
        }
        const auto c = scenario_.resolve(g);
        if (!c) throw Error("robot " + std::to_string(spec.id) + ": unresolvable goal " + format_goal(g));
        auto id = grid_.cell_at(*c);
        if (!id) throw Error("robot " + std::to_string(spec.id) + ": goal " + to_string(*c) + " is not a cell");
        out.push_back(Goal::to_cell(*id));
      }
    }
    return out;
  }

  RobotSlot& create_robot(const RobotSpec& spec) {
    if (robots_.contains(spec.id)) throw Error("duplicate robot id " + std::to_string(spec.id));
    RobotSlot slot;
    slot.spec = spec;
    slot.mode = scenario_.mode_of(spec);
    slot.goals = resolve_goals(spec);
    return robots_.emplace(spec.id, std::move(slot)).first->second;
  }

  void place_robot(RobotSlot& r, CellId cell) {
    for (const auto& [id, other] : robots_) {
      if (&other != &r && other.where != RobotSlot::Where::kGone && other.where != RobotSlot::Where::kPending &&
          (other.at == cell || (other.where == RobotSlot::Where::kMoving && other.to == cell))) {
        throw Error("robots " + std::to_string(id) + " and " + std::to_string(r.spec.id) + " share a start cell");
      }
    }
    r.where = RobotSlot::Where::kOnCell;
    r.at = cell;
    if (r.mode == RobotMode::kAfada) cells_[cell.value].node.place_robot(RobotId{r.spec.id});
    emit("place", "env", robot_name(r.spec.id), [&] { return Json{{"cell", coord_json(cell)}}; });
  }

  std::optional<int> optimal_steps(CellId from, const std::deque<Goal>& goals) const {
    int total = 0;
    CellId at = from;
    for (const Goal& g : goals) {
      if (g.is_park()) return std::nullopt;
      auto d = bfs_distance(grid_, at, g.cell);
      if (!d) return std::nullopt;
      total += *d;
      at = g.cell;
    }
    return total;
  }

  /// Give the robot its brain and let it act for the first time.
  void activate(RobotSlot& r) {
    r.optimal = optimal_steps(r.at, r.goals);
    emit("activate", "env", robot_name(r.spec.id), [&] {
      return Json{{"mode", to_string(r.mode)}, {"optimal", r.optimal ? Json(*r.optimal) : Json(nullptr)}};
    });
    if (r.mode == RobotMode::kAfada) {
      r.afada.emplace(RobotId{r.spec.id}, r.goals, r.spec.dwell, r.spec.leave, robot_config_);
      apply_robot_effects(r, r.afada->start());
    } else {
      r.selfnav.emplace(RobotId{r.spec.id}, r.goals, r.spec.dwell, r.spec.leave, grid_, r.at, robot_config_);
      selfnav_decide(r);
    }
  }

  SensedNeighbors sense(CellId at) const {
    SensedNeighbors s;
    for (Direction d : kDirections) {
      if (auto n = grid_.neighbor(at, d)) s.cells[index_of(d)] = std::pair{*n, grid_.status(*n)};
    }
    return s;
  }

  void selfnav_decide(RobotSlot& r) {
    apply_robot_effects(r, r.selfnav->decide(sense(r.at), now_, rng_.robot(r.spec.id)));
  }

  void apply_robot_effects(RobotSlot& r, RobotEffects fx) {
    for (auto& m : fx.to_cell) send_from_robot(r, std::move(m));
    for (auto& [delay, timer] : fx.timers) {
      Event e = make(now_ + delay, Event::Kind::kRobotTimer);
      e.a = r.spec.id;
      e.epoch = r.timer_gen;
      e.rtimer = timer;
      schedule(e);
    }
    if (fx.fatal) {
      r.failed = true;
      emit("task_failure", robot_name(r.spec.id), "env", [&] { return Json{{"what", *fx.fatal}}; });
    }
    if (fx.start_move) start_move(r, *fx.start_move);
    if (fx.finished && !r.finished) {
      r.finished = true;
      r.finish_time = now_;
      emit("done", robot_name(r.spec.id), "env", [&] { return Json{{"steps", steps_of(r)}}; });
    }
    if (fx.leave && r.where == RobotSlot::Where::kOnCell) {
      r.where = RobotSlot::Where::kGone;
      emit("leave", robot_name(r.spec.id), cell_name(r.at));
    }
  }

  void start_move(RobotSlot& r, Direction d) {
    auto to = grid_.neighbor(r.at, d);
    if (!to || !grid_.is_correct(*to)) {
      violation("instruction for robot " + std::to_string(r.spec.id) + " references a non-adjacent cell",
                robot_name(r.spec.id));
      return;
    }
    r.where = RobotSlot::Where::kMoving;
    r.to = *to;
    emit("move", robot_name(r.spec.id), cell_name(*to),
         [&] { return Json{{"from", coord_json(r.at)}, {"to", coord_json(*to)}, {"dir", std::string(1, to_char(d))}}; });
    Event e = make(now_ + robot_config_.hop_duration, Event::Kind::kHopDone);
    e.a = r.spec.id;
    schedule(e);
  }

  static int steps_of(const RobotSlot& r) {
    if (r.afada) return r.afada->steps();
    if (r.selfnav) return r.selfnav->steps();
    return 0;
  }

  RobotView view(const RobotSlot& r) const {
    RobotView v{r.spec.id, r.mode, RobotPhase::kIdle, "pending", std::nullopt, std::nullopt, steps_of(r), {}};
    switch (r.where) {
      case RobotSlot::Where::kPending: v.where = "pending"; break;
      case RobotSlot::Where::kOnCell: v.where = "cell"; v.at = r.at; break;
      case RobotSlot::Where::kMoving: v.where = "moving"; v.at = r.at; v.to = r.to; break;
      case RobotSlot::Where::kGone: v.where = "gone"; break;
    }
    const std::deque<Goal>* goals = &r.goals;
    if (r.afada) {
      v.phase = r.afada->phase();
      goals = &r.afada->destinations();
    } else if (r.selfnav) {
      v.phase = r.selfnav->phase();
      goals = &r.selfnav->state().destinations;
    }
    v.destinations.assign(goals->begin(), goals->end());
    return v;
  }

  void set_goals(RobotSlot& r, const std::deque<Goal>& goals) {
    r.goals = goals;
    r.finished = false;
    if (r.afada) {
      apply_robot_effects(r, r.afada->reassign(goals));
    } else if (r.selfnav) {
      ++r.timer_gen;
      r.selfnav->reassign(goals);
      if (r.where == RobotSlot::Where::kOnCell) selfnav_decide(r);
    }
  }

  void spawn_attempt(std::uint32_t id) {
    RobotSlot& r = robots_.at(id);
    if (r.where != RobotSlot::Where::kPending) return;
    const auto cell = grid_.cell_at(scenario_.start_of(r.spec));
    if (cell && grid_.is_correct(*cell) && !presence(*cell)) {
      place_robot(r, *cell);
      activate(r);
      return;
    }
    Event e = make(now_ + kSpawnRetry * scale_, Event::Kind::kSpawnGate);
    e.a = id;
    schedule(e);
  }

  bool task_complete() const {
    if (robots_.empty()) return true;
    for (const auto& [id, r] : robots_) {
      if (!r.finished || r.failed) return false;
    }
    return true;
  }

  bool all_robots_done() const {
    for (const auto& [id, r] : robots_) {
      if (!r.finished) return false;
    }
    return true;
  }

  bool script_done() const { return script_next_ >= scenario_.script.size(); }

  bool scripted_spawns_pending() const {
    for (std::size_t i = script_next_; i < scenario_.script.size(); ++i) {
      if (scenario_.script[i].kind == ScriptOp::Kind::kSpawn) return true;
    }
    return false;
  }

  // ---- safety ---------------------------------------------------------

  void violation(const std::string& what, const std::string& src) {
    ++violations_;
    if (violation_messages_.size() < kMaxViolationMessages) violation_messages_.push_back(what);
    emit("violation", src, "env", [&] { return Json{{"what", what}}; });
  }

  /// No two robot footprints intersect, and every AFADA robot's footprint is
  /// held by that robot.
  void check_safety() {
    footprint_.clear();
    for (const auto& [id, r] : robots_) {
      if (r.where != RobotSlot::Where::kOnCell && r.where != RobotSlot::Where::kMoving) continue;
      auto claim = [&](CellId c) {
        auto [it, fresh] = footprint_.emplace(c.value, id);
        if (!fresh) {
          violation("collision: robots " + std::to_string(it->second) + " and " + std::to_string(id) + " on " +
                        to_string(grid_.coord_of(c)),
                    robot_name(id));
        }
        if (r.mode == RobotMode::kAfada && grid_.contains(c) &&
            !cells_[c.value].node.occupancy().held_by(RobotId{id})) {
          const auto key = std::pair{id, c.value};
          if (!reported_holds_.contains(key)) {
            reported_holds_.insert(key);
            violation("robot " + std::to_string(id) + " on " + to_string(grid_.coord_of(c)) +
                          " without holding it",
                      robot_name(id));
          }
        }
      };
      claim(r.at);
      if (r.where == RobotSlot::Where::kMoving) claim(r.to);
    }
  }

  // ---- event dispatch -------------------------------------------------

  bool cell_alive(std::uint32_t id, std::uint64_t epoch) const {
    return grid_.is_correct(CellId{id}) && cells_[id].epoch == epoch;
  }

  void dispatch(const Event& e) {
    using K = Event::Kind;
    switch (e.kind) {
      case K::kCellDeliver: {
        const CellId to{e.a};
        const CellId from{e.b};
        std::optional<DropCause> problem;
        if (!grid_.contains(to) || !grid_.contains(from) || grid_.neighbor(to, e.dir) != from) {
          problem = DropCause::kNoLink;
        } else if (!grid_.is_correct(to)) {
          problem = DropCause::kDstFailed;
        }
        const auto v = fabric_->arrive(problem, now_);
        if (!v.delivered) {
          drop(cell_name(from), cell_name(to), *e.msg, v.cause);
          return;
        }
        begin("deliver", cell_name(from), cell_name(to), [&] { return message_json(*e.msg); });
        CellNode& node = cells_[to.value].node;
        const auto before = node.links().alive_mask();
        auto ctx = context();
        CellEffects fx = node.on_cell_message(e.dir, *e.msg, ctx);
        note_link_changes(to, before);
        apply_cell_effects(to, std::move(fx));
        return;
      }
      case K::kCellFromRobot: {
        const CellId to{e.a};
        std::optional<DropCause> problem;
        if (!grid_.contains(to)) {
          problem = DropCause::kNoLink;
        } else if (!grid_.is_correct(to) || cells_[to.value].epoch != e.epoch) {
          problem = DropCause::kDstFailed;
        }
        const auto v = fabric_->arrive(problem, now_);
        if (!v.delivered) {
          drop(robot_name(e.b), cell_name(to), *e.msg, v.cause);
          return;
        }
        begin("deliver", robot_name(e.b), cell_name(to), [&] { return message_json(*e.msg); });
        auto ctx = context();
        apply_cell_effects(to, cells_[to.value].node.on_robot_message(*e.msg, ctx));
        return;
      }
      case K::kRobotDeliver: {
        auto it = robots_.find(e.a);
        std::optional<DropCause> problem;
        if (it == robots_.end() || it->second.where != RobotSlot::Where::kOnCell || it->second.at.value != e.b) {
          problem = DropCause::kRobotAbsent;
        }
        const auto v = fabric_->arrive(problem, now_);
        if (!v.delivered) {
          drop(cell_name(CellId{e.b}), robot_name(e.a), *e.msg, v.cause);
          return;
        }
        begin("deliver", cell_name(CellId{e.b}), robot_name(e.a), [&] { return message_json(*e.msg); });
        RobotSlot& r = it->second;
        if (const auto* ins = std::get_if<Instruction>(&*e.msg); ins && r.afada) {
          if (r.finished) return;
          apply_robot_effects(r, r.afada->on_instruction(*ins, rng_.robot(r.spec.id)));
        }
        return;
      }
      case K::kCellTimer: {
        if (!cell_alive(e.a, e.epoch)) return;
        CellNode& node = cells_[e.a].node;
        const auto before = node.links().alive_mask();
        auto ctx = context();
        CellEffects fx = node.on_timer(e.ctimer, ctx);
        const bool quiet = e.ctimer.kind == CellTimer::Kind::kLinkDeadline && node.links().alive_mask() == before &&
                           fx.to_cells.empty() && fx.to_robots.empty() && !fx.table_changed;
        if (quiet) return;
        begin("timer", cell_name(CellId{e.a}), cell_name(CellId{e.a}), [&] {
          return Json{{"timer", e.ctimer.kind == CellTimer::Kind::kRetry ? "retry" : "link_deadline"}};
        });
        note_link_changes(CellId{e.a}, before);
        apply_cell_effects(CellId{e.a}, std::move(fx));
        return;
      }
      case K::kBroadcast: {
        if (!cell_alive(e.a, e.epoch)) return;
        begin("broadcast", cell_name(CellId{e.a}), cell_name(CellId{e.a}));
        auto ctx = context();
        apply_cell_effects(CellId{e.a}, cells_[e.a].node.on_broadcast_tick(ctx));
        Event next = e;
        next.t = now_ + cell_config_.broadcast_period;
        next.cause = current_cause_;
        schedule(next);
        return;
      }
      case K::kHeartbeat: {
        if (!cell_alive(e.a, e.epoch)) return;
        begin("heartbeat_tick", cell_name(CellId{e.a}), cell_name(CellId{e.a}));
        apply_cell_effects(CellId{e.a}, cells_[e.a].node.on_heartbeat_tick());
        Event next = e;
        next.t = now_ + cell_config_.fabric.heartbeat_period;
        next.cause = current_cause_;
        schedule(next);
        return;
      }
      case K::kFailureTick: {
        begin("failure_tick", "env", "env");
        const double p = scenario_.params.p;
        const double q = scenario_.params.q;
        for (CellId id : std::vector<CellId>(fail_set_)) {
          const double u = rng_.failure.uniform01();
          if (!grid_.contains(id)) continue;
          if (grid_.is_correct(id)) {
            if (u < p && !presence(id)) fail_cell(id, "failure");
          } else if (u < q) {
            recover_cell(id, "failure");
          }
        }
        Event next = make(now_ + scenario_.params.fail_period_ms * scale_, K::kFailureTick);
        schedule(next);
        return;
      }
      case K::kHopDone: {
        RobotSlot& r = robots_.at(e.a);
        if (r.where != RobotSlot::Where::kMoving) return;
        r.where = RobotSlot::Where::kOnCell;
        const CellId from = r.at;
        r.at = r.to;
        begin("hop", robot_name(e.a), cell_name(r.at),
              [&] { return Json{{"from", coord_json(from)}, {"to", coord_json(r.at)}}; });
        if (r.afada) {
          apply_robot_effects(r, r.afada->on_hop_complete());
        } else {
          r.selfnav->on_hop_complete();
        }
        if (!options_.live && r.optimal && *r.optimal > 0 &&
            steps_of(r) > scenario_.params.budget_factor * *r.optimal) {
          stop(false, "step budget");
          return;
        }
        if (r.selfnav) selfnav_decide(r);
        return;
      }
      case K::kRobotTimer: {
        RobotSlot& r = robots_.at(e.a);
        if (e.epoch != r.timer_gen || r.where != RobotSlot::Where::kOnCell) return;
        begin("robot_timer", robot_name(e.a), robot_name(e.a),
              [&] { return Json{{"timer", e.rtimer == RobotTimer::kRetry ? "retry" : "dwell"}}; });
        if (r.afada) {
          apply_robot_effects(r, r.afada->on_timer(e.rtimer));
        } else if (r.selfnav) {
          selfnav_decide(r);
        }
        return;
      }
      case K::kScript: {
        const ScriptOp& op = scenario_.script[script_next_++];
        begin("script", "env", "env", [&] { return Json{{"op", to_string(op.kind)}}; });
        run_script_op(op);
        return;
      }
      case K::kProbe: {
        if (started_) return;
        const bool ok = tables_match_oracle();
        if (ok || now_ >= kWarmupLimit * scale_) {
          converged_at_start_ = ok;
          start_task();
        } else {
          schedule(make(now_ + kProbePeriod * scale_, K::kProbe));
        }
        return;
      }
      case K::kStart:
        if (!started_) {
          converged_at_start_ = tables_match_oracle();
          start_task();
        }
        return;
      case K::kSpawnGate:
        spawn_attempt(e.a);
        return;
      case K::kTimeBudget:
        if (!options_.live) stop(false, "time budget");
        return;
    }
  }

  void note_link_changes(CellId id, const std::array<bool, 4>& before) {
    const auto after = cells_[id.value].node.links().alive_mask();
    for (Direction d : kDirections) {
      if (before[index_of(d)] == after[index_of(d)]) continue;
      emit("link", cell_name(id), cell_name(id), [&] {
        return Json{{"dir", std::string(1, to_char(d))}, {"alive", after[index_of(d)]}};
      });
    }
  }

  void run_script_op(const ScriptOp& op) {
    switch (op.kind) {
      case ScriptOp::Kind::kAdd:
        if (grid_.cell_at(op.coord)) {
          emit("script_rejected", "env", "env", [] { return Json{{"why", "occupied"}}; });
        } else {
          add_cell(op.coord, "script");
        }
        return;
      case ScriptOp::Kind::kRemove:
      case ScriptOp::Kind::kFail: {
        auto id = grid_.cell_at(op.coord);
        if (!id || presence(*id)) {
          emit("script_rejected", "env", "env", [] { return Json{{"why", "robot present or no cell"}}; });
          return;
        }
        if (op.kind == ScriptOp::Kind::kRemove) {
          remove_cell(*id, "script");
        } else {
          fail_cell(*id, "script");
        }
        return;
      }
      case ScriptOp::Kind::kRecover:
        if (auto id = grid_.cell_at(op.coord)) recover_cell(*id, "script");
        return;
      case ScriptOp::Kind::kSpawn: {
        create_robot(op.robot);
        spawn_attempt(op.robot.id);
        return;
      }
    }
  }

  void start_task() {
    started_ = true;
    start_time_ = now_;
    begin("start", "env", "env", [&] { return Json{{"converged", converged_at_start_}}; });
    for (auto& [id, r] : robots_) {
      if (r.where == RobotSlot::Where::kOnCell) {
        activate(r);
      } else if (r.spec.at) {
        Event e = make(now_ + *r.spec.at * scale_, Event::Kind::kSpawnGate);
        e.a = id;
        schedule(e);
      } else {
        spawn_attempt(id);
      }
    }
    for (const ScriptOp& op : scenario_.script) schedule(make(now_ + op.at * scale_, Event::Kind::kScript));
    if (!fail_set_.empty() && (scenario_.params.p > 0 || scenario_.params.q > 0)) {
      schedule(make(now_ + scenario_.params.fail_period_ms * scale_, Event::Kind::kFailureTick));
    }
    schedule(make(now_ + scenario_.params.max_time_ms * scale_, Event::Kind::kTimeBudget));
  }

  void stop(bool completed, const std::string& reason) {
    if (stopped_) return;
    stopped_ = true;
    completed_ = completed;
    stop_reason_ = reason;
    emit("stop", "env", "env", [&] { return Json{{"completed", completed}, {"reason", reason}}; });
  }

  // ---- command argument parsing ---------------------------------------

  CellId require_cell(Coord c) const {
    auto id = grid_.cell_at(c);
    if (!id) throw Error("no cell at " + to_string(c));
    return *id;
  }

  static std::vector<GoalSpec> goals_arg(const Json& g) {
    std::vector<std::string> tokens;
    if (g.is_string()) {
      RobotSpec probe = scenario_detail::parse_robot_tokens({"0", "goals=" + g.get<std::string>()}, 0);
      return probe.goals;
    }
    std::vector<GoalSpec> out;
    for (const Json& item : g) {
      if (item.is_array() && item.size() == 2) {
        out.push_back(GoalSpec{GoalSpec::Kind::kCoord, Coord{item[0].get<int>(), item[1].get<int>()}});
      } else if (item.is_string()) {
        auto parsed = parse_goal(item.get<std::string>());
        if (!parsed) throw Error("invalid goal " + item.dump());
        out.push_back(*parsed);
      } else {
        throw Error("invalid goal " + item.dump());
      }
    }
    if (out.empty()) throw Error("empty goal list");
    return out;
  }

  RobotSpec robot_arg(const Json& args) const {
    RobotSpec spec;
    if (args.contains("id")) {
      spec.id = args.at("id").get<std::uint32_t>();
    } else {
      spec.id = robots_.empty() ? 0 : robots_.rbegin()->first + 1;
    }
    if (args.contains("mode")) {
      const auto m = args.at("mode").get<std::string>();
      if (m == "afada") {
        spec.mode = RobotMode::kAfada;
      } else if (m == "selfnav") {
        spec.mode = RobotMode::kSelfNav;
      } else {
        throw Error("unknown mode '" + m + "'");
      }
    }
    spec.goals = goals_arg(args.at("goals"));
    if (args.contains("start")) spec.start = coord_arg(Json{{"coord", args.at("start")}});
    if (args.contains("trips")) spec.trips = args.at("trips").get<int>();
    if (args.contains("leave")) spec.leave = args.at("leave").get<bool>();
    return spec;
  }

  // ---- state ----------------------------------------------------------

  Scenario scenario_;
  EngineOptions options_;
  RandomStreams rng_;
  int scale_ = 1;
  CellConfig cell_config_;
  RobotConfig robot_config_;
  std::optional<Fabric> fabric_;
  Grid grid_;
  std::vector<CellId> fail_set_;
  std::vector<CellSlot> cells_;
  std::map<std::uint32_t, RobotSlot> robots_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t next_seq_ = 0;
  Millis now_ = 0;
  std::optional<std::uint64_t> current_cause_;
  std::uint64_t records_ = 0;
  std::uint64_t events_ = 0;
  std::vector<std::string> trace_;
  std::function<void(const TraceRecord&)> listener_;

  bool started_ = false;
  bool stopped_ = false;
  bool completed_ = false;
  bool converged_at_start_ = false;
  std::string stop_reason_;
  Millis start_time_ = 0;
  Millis last_table_change_ = 0;
  std::size_t script_next_ = 0;
  int violations_ = 0;
  std::vector<std::string> violation_messages_;
  int failures_ = 0;
  int recoveries_ = 0;
  std::map<std::uint32_t, std::uint32_t> footprint_;
  std::set<std::pair<std::uint32_t, std::uint32_t>> reported_holds_;
};

/// Convenience: parse, run, return the result.
inline RunResult run_scenario(const Scenario& s, EngineOptions options = {}) {
  Engine e(s, options);
  return e.run();
}

}  // namespace afada
