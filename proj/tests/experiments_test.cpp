#include <gtest/gtest.h>

#include "afada/experiments.hpp"
#include "afada/scenarios.hpp"

using namespace afada;

namespace {

Scenario resolve(const std::string& name) { return scenarios::load(name); }

int plan_error_line(const std::string& text) {
  try {
    parse_plan(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

bool same_rows(const std::vector<RunRow>& a, const std::vector<RunRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (to_csv_line(a[i]) != to_csv_line(b[i])) return false;
  }
  return true;
}

}  // namespace

TEST(Plan, ParsesEveryKey) {
  const auto plan = parse_plan(
      "# evaluation\n"
      "fields = simple-loop, two-loop\n"
      "modes = afada\n"
      "p = 0.02\n"
      "q = 0.01,0.05,0.1\n"
      "loss = 0.05\n"
      "repetitions = 7\n"
      "seed = 100\n"
      "pairing = unpaired\n"
      "reservation = multi\n"
      "trips = 2\n"
      "jobs = 3\n");
  EXPECT_EQ(plan.fields, (std::vector<std::string>{"simple-loop", "two-loop"}));
  EXPECT_EQ(plan.modes, std::vector<RobotMode>{RobotMode::kAfada});
  EXPECT_DOUBLE_EQ(plan.p, 0.02);
  EXPECT_EQ(plan.q.size(), 3u);
  EXPECT_DOUBLE_EQ(plan.loss, 0.05);
  EXPECT_EQ(plan.repetitions, 7);
  EXPECT_FALSE(plan.paired);
  EXPECT_EQ(plan.reservation, "multi");
  EXPECT_EQ(plan.trips, 2);
  EXPECT_EQ(plan.jobs, 3);
  EXPECT_EQ(plan.run_count(), 2u * 3u * 1u * 7u);
}

TEST(Plan, ErrorsCarryLineNumbers) {
  EXPECT_EQ(plan_error_line("fields=a\nq=2\n"), 2);
  EXPECT_EQ(plan_error_line("fields=a\n\nmodes=walk\n"), 3);
  EXPECT_EQ(plan_error_line("fields=a\nrepetitions=0\n"), 2);
  EXPECT_EQ(plan_error_line("fields=a\nspeed=3\n"), 2);
  EXPECT_EQ(plan_error_line("fields=a\njust words\n"), 2);
  EXPECT_NE(plan_error_line("repetitions=3\n"), -1);
}

TEST(Plan, SeedsArePairedOrDisjoint) {
  ExperimentPlan plan;
  plan.seed = 10;
  plan.repetitions = 30;
  EXPECT_EQ(plan.seed_for(0, 4), plan.seed_for(1, 4));
  EXPECT_EQ(plan.seed_for(0, 0), 10u);
  plan.paired = false;
  std::set<std::uint64_t> seen;
  for (std::size_t m = 0; m < 2; ++m) {
    for (int r = 0; r < 30; ++r) EXPECT_TRUE(seen.insert(plan.seed_for(m, r)).second);
  }
}

TEST(Csv, RoundTrips) {
  std::vector<RunRow> rows;
  rows.push_back({"simple-loop", 3, RobotMode::kAfada, 0.01, 0.05, 26, true, 123456, 0.0});
  rows.push_back({"two-loop", 4, RobotMode::kSelfNav, 0.01, 0.01, 0, false, 600000, 0.05});
  const std::string text = to_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kResultsHeader);
  EXPECT_TRUE(same_rows(parse_csv(text), rows));
  EXPECT_EQ(to_csv(parse_csv(text)), text);
}

TEST(Csv, MalformedRowsRejected) {
  EXPECT_THROW(parse_csv("wrong header\n"), ParseError);
  try {
    parse_csv(std::string(kResultsHeader) + "\nsimple-loop,1,afada,0.01,0.01,24,1,100,0\nx,y\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_csv(std::string(kResultsHeader) + "\ns,1,walk,0,0,1,1,1,0\n"), ParseError);
}

TEST(RunPlan, JobCountDoesNotChangeRows) {
  auto plan = parse_plan("fields=simple-loop,two-bridge\nrepetitions=4\nseed=7\n");
  const auto serial = run_plan(plan, resolve);
  plan.jobs = 3;
  const auto parallel = run_plan(plan, resolve);
  EXPECT_EQ(serial.size(), plan.run_count());
  EXPECT_TRUE(same_rows(serial, parallel));
}

TEST(RunPlan, NoFailuresGivesTheOptimum) {
  const auto plan = parse_plan("fields=simple-loop,two-bridge,two-loop\np=0\nq=0.01\nrepetitions=5\n");
  const auto table = summarize(run_plan(plan, resolve));
  const std::map<std::string, double> optimum = {{"simple-loop", 6 * 4}, {"two-bridge", 6 * 6}, {"two-loop", 4 * 8}};
  ASSERT_EQ(table.conditions.size(), 6u);
  for (const auto& c : table.conditions) {
    EXPECT_EQ(c.failed, 0);
    ASSERT_TRUE(c.median);
    EXPECT_DOUBLE_EQ(*c.median, optimum.at(c.scenario)) << c.scenario;
    for (double s : c.steps) EXPECT_DOUBLE_EQ(s, optimum.at(c.scenario));
  }
  ASSERT_EQ(table.comparisons.size(), 3u);
  for (const auto& cmp : table.comparisons) {
    EXPECT_DOUBLE_EQ(cmp.test.u, 25.0 / 2);
    EXPECT_DOUBLE_EQ(cmp.test.p, 1.0);
  }
}

TEST(RunPlan, UnknownFieldThrowsBeforeRunning) {
  const auto plan = parse_plan("fields=simple-loop,nowhere\nrepetitions=1\n");
  EXPECT_THROW(run_plan(plan, resolve), Error);
}

TEST(Report, FailedRunsExcludedFromMedians) {
  std::vector<RunRow> rows = {
      {"f", 1, RobotMode::kAfada, 0.01, 0.01, 10, true, 1, 0},
      {"f", 2, RobotMode::kAfada, 0.01, 0.01, 99, false, 1, 0},
      {"f", 3, RobotMode::kAfada, 0.01, 0.01, 20, true, 1, 0},
  };
  const auto t = summarize(rows);
  ASSERT_EQ(t.conditions.size(), 1u);
  EXPECT_EQ(t.conditions[0].failed, 1);
  EXPECT_DOUBLE_EQ(*t.conditions[0].median, 15.0);
}

TEST(Report, SingleRepetitionHasNoStatistics) {
  const auto plan = parse_plan("fields=simple-loop\nrepetitions=1\n");
  const std::string report = render_report(run_plan(plan, resolve));
  EXPECT_NE(report.find("## simple-loop"), std::string::npos);
  EXPECT_EQ(report.find("Statistics"), std::string::npos);
}

TEST(Report, RegeneratesIdenticallyFromCsv) {
  const auto plan = parse_plan("fields=two-bridge\nrepetitions=3\nq=0.05\n");
  const auto rows = run_plan(plan, resolve);
  const std::string direct = render_report(rows);
  EXPECT_EQ(render_report(parse_csv(to_csv(rows))), direct);
  EXPECT_NE(direct.find("Statistics"), std::string::npos);
  EXPECT_NE(direct.find("| two-bridge | 0.05 |"), std::string::npos);
}
