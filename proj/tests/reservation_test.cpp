#include <gtest/gtest.h>

#include "afada/engine.hpp"
#include "afada/reservation.hpp"
#include "support.hpp"

using namespace afada;
using namespace afada::reservation;

namespace {

// A hand-built cell: its table, live links and streams.
struct Bench {
  CellId self{1};
  CellPolicy policy;
  routing::RoutingTable table;
  std::array<bool, 4> live{true, true, true, true};
  ReservationConfig config;
  RandomStream backoff{1};
  RandomStream retry{2};
  routing::NeighborCache cache;
  ReservationState state;

  Bench() : table(routing::RoutingTable::from_rows(
                CellId{1}, {{CellId{1}, 0, Direction::kNorth}, {CellId{2}, 1, Direction::kEast}})) {}

  ReservationView view() { return ReservationView{self, policy, table, live, config, backoff, retry, &cache}; }
};

const ReserveRequest* request_in(const CellEffects& fx) {
  for (const auto& [d, m] : fx.to_cells) {
    if (auto r = std::get_if<ReserveRequest>(&m)) return r;
  }
  return nullptr;
}

std::optional<Instruction> instruction_in(const CellEffects& fx) {
  for (const auto& [r, m] : fx.to_robots) {
    if (auto i = std::get_if<Instruction>(&m)) return *i;
  }
  return std::nullopt;
}

std::string occ(const Engine& e, int x, int y) {
  return to_string(e.cell(*e.grid().cell_at({x, y})).occupancy().state);
}

}  // namespace

TEST(RobotRequest, GoalIsCurrentCellMeansAtGoal) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  CellEffects fx;
  auto v = b.view();
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{1})}, fx);
  EXPECT_TRUE(fx.to_cells.empty());
  ASSERT_TRUE(instruction_in(fx));
  EXPECT_EQ(instruction_in(fx)->kind, InstructionKind::kAtGoal);
}

TEST(RobotRequest, FreeNeighbourGivesOneRequestThenMove) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  CellEffects fx;
  auto v = b.view();
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  ASSERT_EQ(fx.to_cells.size(), 1u);
  EXPECT_EQ(fx.to_cells[0].first, Direction::kEast);
  const ReserveRequest* req = request_in(fx);
  ASSERT_NE(req, nullptr);
  EXPECT_TRUE(fx.to_robots.empty());

  CellEffects fx2;
  handle_ack(b.state, v, Direction::kEast, ReserveAck{req->id, {CellId{2}}}, fx2);
  ASSERT_TRUE(instruction_in(fx2));
  EXPECT_EQ(instruction_in(fx2)->kind, InstructionKind::kMove);
  EXPECT_EQ(instruction_in(fx2)->dir, Direction::kEast);
  EXPECT_EQ(fx2.reserved_path, 1u);
}

TEST(RobotRequest, UnknownRouteMeansWait) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  CellEffects fx;
  auto v = b.view();
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{9})}, fx);
  EXPECT_TRUE(fx.to_cells.empty());
  EXPECT_EQ(instruction_in(fx)->kind, InstructionKind::kWait);
}

TEST(RobotRequest, RobotNotOnCellIsIgnored) {
  Bench b;
  CellEffects fx;
  auto v = b.view();
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  EXPECT_TRUE(fx.to_cells.empty());
  EXPECT_TRUE(fx.to_robots.empty());
}

namespace {

// c2 is two away, equally close through N and E; the table prefers N.
Bench uturn_bench() {
  Bench b;
  b.table = routing::RoutingTable::from_rows(CellId{1}, {{CellId{1}, 0, Direction::kNorth},
                                                         {CellId{2}, 2, Direction::kNorth}});
  b.cache[index_of(Direction::kNorth)] = std::make_shared<const DistVector>(DistVector{{CellId{2}, 1}});
  b.cache[index_of(Direction::kEast)] = std::make_shared<const DistVector>(DistVector{{CellId{2}, 1}});
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  b.state.arrived_from = Direction::kNorth;
  b.state.arrived_for = Goal::to_cell(CellId{2});
  return b;
}

Direction first_request_dir(Bench& b, Goal goal) {
  CellEffects fx;
  auto v = b.view();
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, goal}, fx);
  EXPECT_EQ(fx.to_cells.size(), 1u);
  return fx.to_cells.at(0).first;
}

}  // namespace

TEST(RobotRequest, EqualAlternativeBeatsGoingBack) {
  Bench b = uturn_bench();
  EXPECT_EQ(first_request_dir(b, Goal::to_cell(CellId{2})), Direction::kEast);
}

TEST(RobotRequest, GoingBackAllowedAfterGoalChange) {
  Bench b = uturn_bench();
  b.state.arrived_for = Goal::to_cell(CellId{7});
  EXPECT_EQ(first_request_dir(b, Goal::to_cell(CellId{2})), Direction::kNorth);
}

TEST(RobotRequest, GoingBackAllowedWithoutEqualAlternative) {
  Bench b = uturn_bench();
  b.cache[index_of(Direction::kEast)] = std::make_shared<const DistVector>(DistVector{{CellId{2}, 3}});
  EXPECT_EQ(first_request_dir(b, Goal::to_cell(CellId{2})), Direction::kNorth);
  Bench off = uturn_bench();
  off.config.avoid_uturn = false;
  EXPECT_EQ(first_request_dir(off, Goal::to_cell(CellId{2})), Direction::kNorth);
}

TEST(ReserveRequestHandling, FreeCellIsReservedAndAcked) {
  Bench b;
  CellEffects fx;
  auto v = b.view();
  handle_reserve_request(b.state, v, Direction::kWest, ReserveRequest{7, RobotId{3}, Goal::to_cell(CellId{2}), 0, 0},
                         fx);
  EXPECT_EQ(b.state.occ.state, Occupancy::State::kReserved);
  EXPECT_EQ(b.state.occ.robot, RobotId{3});
  ASSERT_EQ(fx.to_cells.size(), 1u);
  EXPECT_EQ(fx.to_cells[0].first, Direction::kWest);
  EXPECT_TRUE(std::holds_alternative<ReserveAck>(fx.to_cells[0].second));
}

TEST(ReserveRequestHandling, OccupiedCellRejectsWithoutChange) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{5}};
  CellEffects fx;
  auto v = b.view();
  handle_reserve_request(b.state, v, Direction::kWest, ReserveRequest{7, RobotId{3}, Goal::to_cell(CellId{2}), 0, 0},
                         fx);
  EXPECT_EQ(b.state.occ.state, Occupancy::State::kOccupied);
  EXPECT_EQ(b.state.occ.robot, RobotId{5});
  ASSERT_EQ(fx.to_cells.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ReserveReject>(fx.to_cells[0].second));
}

TEST(ReserveRequestHandling, DuplicateRequestGetsSameReply) {
  Bench b;
  auto v = b.view();
  const ReserveRequest req{7, RobotId{3}, Goal::to_cell(CellId{2}), 0, 0};
  CellEffects fx1, fx2;
  handle_reserve_request(b.state, v, Direction::kWest, req, fx1);
  handle_reserve_request(b.state, v, Direction::kWest, req, fx2);
  ASSERT_EQ(fx2.to_cells.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ReserveAck>(fx2.to_cells[0].second));
}

TEST(ReserveRequestHandling, OneWayRejectsAgainstTraffic) {
  Bench b;
  b.policy.oneway = Direction::kEast;
  auto v = b.view();
  CellEffects fx;
  handle_reserve_request(b.state, v, Direction::kEast, ReserveRequest{7, RobotId{3}, Goal::to_cell(CellId{2}), 0, 0},
                         fx);
  EXPECT_TRUE(b.state.occ.free());
  EXPECT_TRUE(std::holds_alternative<ReserveReject>(fx.to_cells[0].second));
}

TEST(Reject, SingleNeighbourRetriesSameDirectionAfterBackoff) {
  Bench b;
  b.live = {false, true, false, false};
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  auto v = b.view();
  CellEffects fx;
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  const RequestId id = request_in(fx)->id;
  CellEffects fx2;
  handle_reject(b.state, v, Direction::kEast, ReserveReject{id}, fx2);
  EXPECT_TRUE(fx2.to_cells.empty());
  ASSERT_EQ(fx2.timers.size(), 1u);
  EXPECT_GE(fx2.timers[0].first, 100);
  EXPECT_LE(fx2.timers[0].first, 500);
  for (int k = 0; k < 20; ++k) {
    CellEffects fx3;
    handle_retry_timer(b.state, v, fx2.timers[0].second.generation, fx3);
    ASSERT_NE(request_in(fx3), nullptr);
    EXPECT_EQ(fx3.to_cells[0].first, Direction::kEast);
    CellEffects again;
    handle_reject(b.state, v, Direction::kEast, ReserveReject{request_in(fx3)->id}, again);
    fx2 = again;
  }
}

TEST(Reject, ZeroLiveNeighboursMeansWait) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  auto v = b.view();
  CellEffects fx;
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  CellEffects fx2;
  handle_reject(b.state, v, Direction::kEast, ReserveReject{request_in(fx)->id}, fx2);
  b.live = {false, false, false, false};
  auto v2 = b.view();
  CellEffects fx3;
  handle_retry_timer(b.state, v2, fx2.timers[0].second.generation, fx3);
  EXPECT_TRUE(fx3.to_cells.empty());
  EXPECT_EQ(instruction_in(fx3)->kind, InstructionKind::kWait);
}

TEST(Reject, RandomRetryCoversEveryLiveNeighbour) {
  Bench b;
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  auto v = b.view();
  std::array<int, 4> seen{};
  CellEffects fx;
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  RequestId id = request_in(fx)->id;
  Direction dir = Direction::kEast;
  for (int k = 0; k < 400; ++k) {
    CellEffects rej;
    handle_reject(b.state, v, dir, ReserveReject{id}, rej);
    CellEffects again;
    handle_retry_timer(b.state, v, rej.timers.at(0).second.generation, again);
    dir = again.to_cells.at(0).first;
    id = request_in(again)->id;
    ++seen[index_of(dir)];
  }
  for (int n : seen) EXPECT_GT(n, 0);
  // Preferred with 0.7, else uniform over four: east expected 0.775.
  EXPECT_NEAR(seen[index_of(Direction::kEast)] / 400.0, 0.775, 0.07);
}

TEST(Reject, FilterSkipsNeighboursFartherFromGoal) {
  Bench b;
  b.config.retry_filter = true;
  b.config.preferred_prob = 0;
  b.table = routing::RoutingTable::from_rows(CellId{1}, {{CellId{1}, 0, Direction::kNorth},
                                                         {CellId{2}, 2, Direction::kEast}});
  auto adv = [](int d) { return std::make_shared<const DistVector>(DistVector{{CellId{2}, d}}); };
  b.cache = {adv(3), adv(1), adv(2), adv(3)};
  b.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  auto v = b.view();
  CellEffects fx;
  handle_robot_request(b.state, v, RobotRequest{RobotId{0}, Goal::to_cell(CellId{2})}, fx);
  RequestId id = request_in(fx)->id;
  Direction dir = Direction::kEast;
  for (int k = 0; k < 100; ++k) {
    CellEffects rej;
    handle_reject(b.state, v, dir, ReserveReject{id}, rej);
    CellEffects again;
    handle_retry_timer(b.state, v, rej.timers.at(0).second.generation, again);
    dir = again.to_cells.at(0).first;
    id = request_in(again)->id;
    EXPECT_TRUE(dir == Direction::kEast || dir == Direction::kSouth);
  }
}

TEST(Arrival, NormalHopFreesPriorCell) {
  Bench from, to;
  from.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  auto vt = to.view();
  CellEffects fx;
  handle_reserve_request(to.state, vt, Direction::kWest, ReserveRequest{1, RobotId{0}, Goal::to_cell(CellId{2}), 0, 0},
                         fx);
  CellEffects arr;
  handle_arrival(to.state, RobotId{0}, arr);
  EXPECT_EQ(to.state.occ.state, Occupancy::State::kOccupied);
  ASSERT_EQ(arr.to_cells.size(), 1u);
  EXPECT_EQ(arr.to_cells[0].first, Direction::kWest);
  CellEffects rel;
  handle_release(from.state, std::get<Release>(arr.to_cells[0].second), rel);
  EXPECT_TRUE(from.state.occ.free());
}

TEST(Arrival, LostReleaseLeavesPriorCellHeld) {
  Bench from;
  from.state.occ = Occupancy{Occupancy::State::kOccupied, RobotId{0}};
  // The Release never arrives; a later request from another robot is refused.
  auto v = from.view();
  CellEffects fx;
  handle_reserve_request(from.state, v, Direction::kEast, ReserveRequest{9, RobotId{1}, Goal::to_cell(CellId{2}), 0, 0},
                         fx);
  EXPECT_TRUE(std::holds_alternative<ReserveReject>(fx.to_cells[0].second));
  EXPECT_EQ(from.state.occ.robot, RobotId{0});
}

TEST(Arrival, UnreservedArrivalIsFatal) {
  ReservationState s;
  CellEffects fx;
  handle_arrival(s, RobotId{0}, fx);
  EXPECT_TRUE(fx.fatal.has_value());
}

TEST(MultiStep, CorridorReservesThreeCellsWithAcksInReverse) {
  Scenario s = parse_scenario("0...\nreservation=multi\nrobot 0 goals=(3,0)\n");
  EngineOptions opt;
  opt.keep_trace = true;
  Engine e(s, opt);
  const RunResult r = e.run();
  ASSERT_TRUE(r.completed);
  EXPECT_EQ(r.total_steps, 3);
  ASSERT_EQ(r.robots[0].reservations, 1);
  EXPECT_EQ(r.robots[0].reserved_cells, 3);
  std::vector<std::pair<std::string, std::string>> acks;
  for (const auto& line : e.trace_lines()) {
    const Json j = Json::parse(line);
    if (j["kind"] == "deliver" && j["payload"]["msg"] == "reserve_ack") acks.emplace_back(j["src"], j["dst"]);
  }
  const std::vector<std::pair<std::string, std::string>> expected{{"c3", "c2"}, {"c2", "c1"}, {"c1", "c0"}};
  EXPECT_EQ(acks, expected);
}

TEST(MultiStep, FirstHopReleasesOnlyTheDepartedCell) {
  Scenario s = parse_scenario("0...\nreservation=multi\nrobot 0 goals=(3,0)\n");
  EngineOptions opt;
  opt.keep_trace = true;
  Engine e(s, opt);
  std::optional<Millis> hop;
  while (!hop && e.step()) {
    const Json j = Json::parse(e.trace_lines().back());
    if (j["kind"] == "hop") hop = j["t"].get<Millis>();
  }
  ASSERT_TRUE(hop);
  e.run_until(*hop + 100);
  EXPECT_EQ(occ(e, 0, 0), "free");
  EXPECT_EQ(occ(e, 1, 0), "occupied");
  EXPECT_EQ(occ(e, 2, 0), "reserved");
  EXPECT_EQ(occ(e, 3, 0), "reserved");
}

TEST(MultiStep, HopCapLimitsChainLength) {
  Scenario s = parse_scenario("0....\nreservation=multi\nhop_cap=2\nrobot 0 goals=(4,0)\n");
  const RunResult r = run_scenario(s);
  ASSERT_TRUE(r.completed);
  EXPECT_EQ(r.robots[0].reservations, 2);
  EXPECT_EQ(r.robots[0].reserved_cells, 4);
}

TEST(MultiStep, ChainStopsAtHeldCell) {
  Scenario s = parse_scenario("0..1\nreservation=multi\nrobot 0 goals=(2,0)\nrobot 1 goals=(3,0)\n");
  const RunResult r = run_scenario(s);
  ASSERT_TRUE(r.completed);
  EXPECT_EQ(r.robots[0].steps, 2);
  EXPECT_EQ(r.violations, 0);
}

TEST(Liveness, TwoByTwoSwapSucceedsInMostSeeds) {
  for (const char* text : {"01\n..\nrobot 0 goals=(1,0)\nrobot 1 goals=(0,0)\n",
                           "0.\n.1\nrobot 0 goals=(1,1)\nrobot 1 goals=(0,0)\n"}) {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      EngineOptions opt;
      opt.seed = seed;
      const RunResult r = run_scenario(parse_scenario(text), opt);
      EXPECT_EQ(r.violations, 0);
      ok += r.completed;
    }
    EXPECT_GE(ok, 95) << text;
  }
}

TEST(Safety, HeavyLossNeverBreaksExclusion) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    for (bool multi : {false, true}) {
      EngineOptions opt;
      opt.seed = seed;
      const RunResult r = run_scenario(parse_scenario(testkit::random_traffic_scenario(seed, 4, multi, 0.3, 0, 0)), opt);
      EXPECT_EQ(r.violations, 0) << "seed " << seed << (r.violation_messages.empty() ? "" : r.violation_messages[0]);
    }
  }
}
