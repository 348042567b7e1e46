#include <gtest/gtest.h>

#include "afada/agents.hpp"
#include "afada/engine.hpp"
#include "afada/scenarios.hpp"
#include "support.hpp"

using namespace afada;

namespace {

CellId at(const Grid& g, int x, int y) { return *g.cell_at({x, y}); }

const RobotRequest* request_in(const RobotEffects& fx) {
  for (const auto& m : fx.to_cell) {
    if (auto* r = std::get_if<RobotRequest>(&m)) return r;
  }
  return nullptr;
}

bool has_leave(const RobotEffects& fx) {
  for (const auto& m : fx.to_cell) {
    if (std::holds_alternative<Leave>(m)) return true;
  }
  return false;
}

Instruction ins(InstructionKind k, Direction d = Direction::kNorth) { return Instruction{RobotId{0}, k, d}; }

SensedNeighbors sensed_from(const Grid& truth, CellId here) {
  SensedNeighbors s;
  for (Direction d : kDirections) {
    if (auto n = truth.neighbor(here, d)) s.cells[index_of(d)] = std::make_pair(*n, truth.status(*n));
  }
  return s;
}

RunResult run_text(const std::string& text, std::uint64_t seed = 1) {
  EngineOptions o;
  o.seed = seed;
  return run_scenario(parse_scenario(text), o);
}

}  // namespace

TEST(AfadaRobot, StartAsksForFirstDestination) {
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{5})}, std::nullopt, false, {});
  const auto fx = r.start();
  ASSERT_NE(request_in(fx), nullptr);
  EXPECT_EQ(request_in(fx)->goal, Goal::to_cell(CellId{5}));
  EXPECT_EQ(r.phase(), RobotPhase::kAwaitingInstruction);
}

TEST(AfadaRobot, MoveThenArriveCountsOneStep) {
  RandomStream rng(1);
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{5})}, std::nullopt, false, {});
  r.start();
  const auto fx = r.on_instruction(ins(InstructionKind::kMove, Direction::kSouth), rng);
  EXPECT_EQ(fx.start_move, Direction::kSouth);
  EXPECT_EQ(r.phase(), RobotPhase::kMoving);
  const auto after = r.on_hop_complete();
  EXPECT_EQ(r.steps(), 1);
  ASSERT_EQ(after.to_cell.size(), 2u);
  EXPECT_TRUE(std::holds_alternative<Arrived>(after.to_cell[0]));
  EXPECT_NE(request_in(after), nullptr);
}

TEST(AfadaRobot, WaitSchedulesRetry) {
  RandomStream rng(1);
  RobotConfig c;
  c.wait_retry = 700;
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{5})}, std::nullopt, false, c);
  r.start();
  const auto fx = r.on_instruction(ins(InstructionKind::kWait), rng);
  ASSERT_EQ(fx.timers.size(), 1u);
  EXPECT_EQ(fx.timers[0], std::make_pair(Millis{700}, RobotTimer::kRetry));
  EXPECT_EQ(r.phase(), RobotPhase::kWaiting);
  EXPECT_NE(request_in(r.on_timer(RobotTimer::kRetry)), nullptr);
}

TEST(AfadaRobot, StaleInstructionIgnored) {
  RandomStream rng(1);
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{5})}, std::nullopt, false, {});
  r.start();
  r.on_instruction(ins(InstructionKind::kMove, Direction::kEast), rng);
  const auto fx = r.on_instruction(ins(InstructionKind::kMove, Direction::kWest), rng);
  EXPECT_FALSE(fx.start_move.has_value());
  EXPECT_FALSE(request_in(r.on_timer(RobotTimer::kRetry)));
}

TEST(AfadaRobot, LastGoalFinishesAndLeaves) {
  RandomStream rng(1);
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{5})}, std::nullopt, true, {});
  r.start();
  const auto fx = r.on_instruction(ins(InstructionKind::kAtGoal), rng);
  EXPECT_TRUE(fx.finished);
  EXPECT_TRUE(fx.leave);
  EXPECT_TRUE(has_leave(fx));
  EXPECT_EQ(r.phase(), RobotPhase::kLeft);
}

TEST(AfadaRobot, DwellBetweenDestinations) {
  RandomStream rng(4);
  RobotConfig c;
  c.time_unit = 3;
  AfadaRobot r(RobotId{0}, {Goal::to_cell(CellId{1}), Goal::to_cell(CellId{2})}, DwellRange{100, 200}, false, c);
  r.start();
  const auto fx = r.on_instruction(ins(InstructionKind::kAtGoal), rng);
  ASSERT_EQ(fx.timers.size(), 1u);
  EXPECT_GE(fx.timers[0].first, 300);
  EXPECT_LE(fx.timers[0].first, 600);
  EXPECT_EQ(r.phase(), RobotPhase::kDwelling);
  EXPECT_EQ(request_in(fx), nullptr);
  const auto next = r.on_timer(RobotTimer::kDwellDone);
  ASSERT_NE(request_in(next), nullptr);
  EXPECT_EQ(request_in(next)->goal, Goal::to_cell(CellId{2}));
}

TEST(SelfNav, PlanIsAShortestPath) {
  RandomStream rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Grid g = parse_field_rows(testkit::random_rows(rng, 2, 9, 0.3)).grid;
    const auto ids = g.cell_ids();
    const CellId from = ids[rng.pick(ids.size())];
    const CellId to = ids[rng.pick(ids.size())];
    SelfNavRobot r(RobotId{0}, {Goal::to_cell(to)}, std::nullopt, false, g, from, {});
    const auto path = r.plan(to);
    ASSERT_EQ(static_cast<int>(path.size()) - 1, *bfs_distance(g, from, to)) << "trial " << trial;
    EXPECT_EQ(path.front(), from);
    EXPECT_EQ(path.back(), to);
    for (std::size_t k = 1; k < path.size(); ++k) {
      const Coord a = g.coord_of(path[k - 1]);
      const Coord b = g.coord_of(path[k]);
      EXPECT_EQ(std::abs(a.x - b.x) + std::abs(a.y - b.y), 1);
    }
  }
}

TEST(SelfNav, KnownFailedBridgeUsesTheOther) {
  const Scenario s = scenarios::load("two-bridge");
  Grid truth = s.field.grid;
  const CellId top = at(truth, 2, 0);
  truth.set_status(top, CellStatus::kFailed);
  // Standing next to the top bridge, the robot sees it is down.
  const CellId here = at(truth, 1, 0);
  SelfNavRobot r(RobotId{0}, {Goal::to_cell(*truth.cell_at(*s.annotations().goal))}, std::nullopt, false,
                 s.field.grid, here, {});
  RandomStream rng(1);
  const auto fx = r.decide(sensed_from(truth, here), 0, rng);
  EXPECT_TRUE(r.known_failed().contains(top));
  EXPECT_EQ(fx.start_move, Direction::kSouth);
  for (CellId c : r.path()) EXPECT_NE(c, top);
  EXPECT_NE(std::find(r.path().begin(), r.path().end(), at(truth, 2, 2)), r.path().end());
}

TEST(SelfNav, BothBridgesKnownFailedMeansWait) {
  const Scenario s = scenarios::load("two-bridge");
  Grid truth = s.field.grid;
  const CellId goal = *truth.cell_at(*s.annotations().goal);
  truth.set_status(at(truth, 2, 0), CellStatus::kFailed);
  truth.set_status(at(truth, 2, 2), CellStatus::kFailed);
  SelfNavRobot r(RobotId{0}, {Goal::to_cell(goal)}, std::nullopt, false, s.field.grid, at(truth, 1, 0), {});
  RandomStream rng(1);
  // Sees the top bridge down, walks to the bottom one, sees it down too.
  for (int hop = 0; hop < 4 && r.known_failed().size() < 2; ++hop) {
    const auto fx = r.decide(sensed_from(truth, r.position()), hop * 1000, rng);
    if (!fx.start_move) break;
    r.on_hop_complete();
  }
  ASSERT_EQ(r.known_failed().size(), 2u);
  const int steps = r.steps();
  EXPECT_TRUE(r.plan(goal).empty());
  for (int k = 0; k < 3; ++k) {
    const auto fx = r.decide(sensed_from(truth, r.position()), 10000 + k * 1000, rng);
    EXPECT_FALSE(fx.start_move.has_value());
    EXPECT_EQ(r.phase(), RobotPhase::kWaiting);
  }
  EXPECT_EQ(r.steps(), steps);
}

TEST(SelfNav, RecoveredCellLeavesKnownFailed) {
  Grid truth = parse_field("...").grid;
  const CellId mid = at(truth, 1, 0);
  SelfNavRobot r(RobotId{0}, {Goal::to_cell(at(truth, 2, 0))}, std::nullopt, false, truth, at(truth, 0, 0), {});
  truth.set_status(mid, CellStatus::kFailed);
  RandomStream rng(1);
  auto fx = r.decide(sensed_from(truth, at(truth, 0, 0)), 0, rng);
  EXPECT_TRUE(r.known_failed().contains(mid));
  EXPECT_FALSE(fx.start_move.has_value());
  EXPECT_EQ(r.phase(), RobotPhase::kWaiting);
  truth.set_status(mid, CellStatus::kCorrect);
  fx = r.decide(sensed_from(truth, at(truth, 0, 0)), 1000, rng);
  EXPECT_FALSE(r.known_failed().contains(mid));
  EXPECT_EQ(fx.start_move, Direction::kEast);
}

TEST(SelfNav, FailureOutOfRangeIsUnknownUntilAdjacent) {
  // 2x4 ring; the robot at (0,0) heads for (3,0) along the top. (2,0) is
  // failed but two cells away, so the first move is still east.
  Grid truth = parse_field("....\n....\n").grid;
  const CellId goal = at(truth, 3, 0);
  SelfNavRobot r(RobotId{0}, {Goal::to_cell(goal)}, std::nullopt, false, truth, at(truth, 0, 0), {});
  truth.set_status(at(truth, 2, 0), CellStatus::kFailed);
  RandomStream rng(1);
  auto fx = r.decide(sensed_from(truth, at(truth, 0, 0)), 0, rng);
  EXPECT_TRUE(r.known_failed().empty());
  EXPECT_EQ(fx.start_move, Direction::kEast);
  r.on_hop_complete();
  EXPECT_EQ(r.position(), at(truth, 1, 0));
  fx = r.decide(sensed_from(truth, at(truth, 1, 0)), 1000, rng);
  EXPECT_TRUE(r.known_failed().contains(at(truth, 2, 0)));
  EXPECT_EQ(fx.start_move, Direction::kSouth);
}

TEST(SelfNav, ParkGoalIsATaskFailure) {
  const Grid g = parse_field("..").grid;
  SelfNavRobot r(RobotId{0}, {Goal::park()}, std::nullopt, false, g, at(g, 0, 0), {});
  RandomStream rng(1);
  const auto fx = r.decide(sensed_from(g, at(g, 0, 0)), 0, rng);
  EXPECT_TRUE(r.task_failed());
  EXPECT_TRUE(fx.fatal.has_value());
}

class BothModes : public ::testing::TestWithParam<const char*> {};

TEST_P(BothModes, CorridorTakesExactlyItsLength) {
  for (int len = 1; len <= 7; ++len) {
    const std::string text = "0" + std::string(len, '.') + "\nmode=" + GetParam() + "\nrobot 0 goals=(" +
                             std::to_string(len) + ",0)\n";
    const RunResult r = run_text(text);
    EXPECT_TRUE(r.completed) << len;
    EXPECT_EQ(r.total_steps, len);
  }
}

TEST_P(BothModes, SimpleLoopWithoutFailuresIsOptimal) {
  Scenario s = scenarios::load("simple-loop");
  s.set_param("p", "0");
  s.set_param("mode", GetParam());
  const Grid& g = s.field.grid;
  const int d = *bfs_distance(g, *g.cell_at(*s.annotations().start), *g.cell_at(*s.annotations().goal));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EngineOptions o;
    o.seed = seed;
    const RunResult r = run_scenario(s, o);
    EXPECT_TRUE(r.completed);
    EXPECT_EQ(r.total_steps, 3 * 2 * d);
    EXPECT_EQ(r.total_steps, 24);
  }
}

TEST_P(BothModes, DisconnectedGoalMeansNoSteps) {
  const std::string text = std::string("..#..\nS.#.G\n..#..\n") + "mode=" + GetParam() + "\nmax_time_ms=60000\n";
  const RunResult r = run_text(text);
  EXPECT_FALSE(r.completed);
  EXPECT_EQ(r.stop_reason, "time budget");
  EXPECT_EQ(r.total_steps, 0);
}

TEST_P(BothModes, OneBridgeDownDetoursThroughTheOther) {
  const std::string text = std::string(scenarios::kTwoBridge) + "p=0\ntrips=1\nmode=" + GetParam() +
                           "\nat 0 fail (2,0)\n";
  EngineOptions o;
  o.keep_trace = true;
  Engine e(parse_scenario(text), o);
  const RunResult r = e.run();
  EXPECT_TRUE(r.completed);
  const auto hops = testkit::hop_targets(e.trace_lines());
  EXPECT_EQ(std::count(hops.begin(), hops.end(), Coord{2, 0}), 0);
  EXPECT_EQ(std::count(hops.begin(), hops.end(), Coord{2, 2}), 2);
  // The failure is learned on approach, so the first leg may start up
  // the top side before turning.
  EXPECT_GE(r.total_steps, 12);
  EXPECT_LE(r.total_steps, 16);
}

INSTANTIATE_TEST_SUITE_P(Robots, BothModes, ::testing::Values("afada", "selfnav"));
