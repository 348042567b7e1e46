#include <gtest/gtest.h>

#include <cmath>

#include "afada/cell.hpp"
#include "afada/netfabric.hpp"
#include "support.hpp"

using namespace afada;
using testkit::run_live;

namespace {

std::vector<Json> of_kind(const std::vector<Json>& trace, const std::string& kind) {
  std::vector<Json> out;
  for (const auto& r : trace) {
    if (r["kind"] == kind) out.push_back(r);
  }
  return out;
}

Millis time_of_topology(const std::vector<Json>& trace, const std::string& op) {
  for (const auto& r : trace) {
    if (r["kind"] == "topology" && r["payload"]["op"] == op) return r["t"].get<Millis>();
  }
  return -1;
}

}  // namespace

TEST(Fabric, NoLossDeliversEverything) {
  RandomStream loss(1);
  Fabric f(FabricConfig{}, loss);
  for (int i = 0; i < 1000; ++i) {
    const auto v = f.send(std::nullopt, 100);
    EXPECT_TRUE(v.delivered);
    EXPECT_EQ(v.deliver_at, 120);
  }
  EXPECT_EQ(f.counters().sent, 1000u);
}

TEST(Fabric, TotalLossDeliversNothing) {
  RandomStream loss(1);
  FabricConfig c;
  c.loss_prob = 1.0;
  Fabric f(c, loss);
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(f.send(std::nullopt, 0).delivered);
  EXPECT_EQ(f.counters().dropped[static_cast<std::size_t>(DropCause::kLoss)], 1000u);
}

TEST(Fabric, LossRateWithinThreeSigma) {
  const int n = 10000;
  const double p = 0.05;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomStream loss(seed);
    FabricConfig c;
    c.loss_prob = p;
    Fabric f(c, loss);
    int delivered = 0;
    for (int i = 0; i < n; ++i) delivered += f.send(std::nullopt, 0).delivered;
    const double mean = n * (1 - p);
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_LE(std::abs(delivered - mean), 3 * sigma) << "seed " << seed;
  }
}

TEST(Fabric, LinkProblemWinsButStillDrawsLoss) {
  RandomStream a(9), b(9);
  FabricConfig c;
  c.loss_prob = 0.5;
  Fabric f(c, a);
  const auto v = f.send(DropCause::kNoLink, 0);
  EXPECT_FALSE(v.delivered);
  EXPECT_EQ(v.cause, DropCause::kNoLink);
  b.next_u64();
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Fabric, InvalidConfigRejected) {
  RandomStream loss(1);
  FabricConfig c;
  c.loss_prob = 1.5;
  EXPECT_THROW(Fabric(c, loss), Error);
  c = FabricConfig{};
  c.heartbeat_timeout = c.heartbeat_period;
  EXPECT_THROW(Fabric(c, loss), Error);
}

TEST(LinkTable, FreshHeartbeatDoesNotExpire) {
  LinkTable t;
  t.on_physical(Direction::kNorth, true);
  EXPECT_TRUE(t.on_heartbeat(Direction::kNorth, 1000));
  EXPECT_TRUE(t.check_timeouts(5000, 10000).empty());
  EXPECT_TRUE(t.alive(Direction::kNorth));
}

TEST(LinkTable, StaleByExactlyTimeoutExpires) {
  LinkTable t;
  t.on_physical(Direction::kWest, true);
  t.on_heartbeat(Direction::kWest, 1000);
  EXPECT_TRUE(t.check_timeouts(10999, 10000).empty());
  const auto dead = t.check_timeouts(11000, 10000);
  ASSERT_EQ(dead.size(), 1u);
  EXPECT_EQ(dead[0], Direction::kWest);
  EXPECT_FALSE(t.alive(Direction::kWest));
}

TEST(LinkTable, VirtualImpliesPhysical) {
  LinkTable t;
  EXPECT_FALSE(t.on_heartbeat(Direction::kEast, 0));
  EXPECT_FALSE(t.alive(Direction::kEast));
  t.on_physical(Direction::kEast, true);
  t.on_heartbeat(Direction::kEast, 0);
  EXPECT_TRUE(t.on_physical(Direction::kEast, false));
  EXPECT_FALSE(t.alive(Direction::kEast));
}

TEST(LinkTable, IsolatedCellSendsNoHeartbeats) {
  const CellNode node(CellId{0}, {});
  EXPECT_TRUE(node.on_heartbeat_tick().to_cells.empty());
}

TEST(Heartbeat, TwoCellsExchangeAtLeastThreeEachWayInTenSeconds) {
  const auto trace = run_live("..\nstart=0\n", 10000);
  int ab = 0, ba = 0;
  for (const auto& r : of_kind(trace, "deliver")) {
    if (r["payload"]["msg"] != "heartbeat") continue;
    if (r["src"] == "c0" && r["dst"] == "c1") ++ab;
    if (r["src"] == "c1" && r["dst"] == "c0") ++ba;
  }
  EXPECT_GE(ab, 3);
  EXPECT_GE(ba, 3);
}

TEST(Heartbeat, FailedNeighbourDeclaredDeadWithinTimeout) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto trace = run_live("...\nstart=0\nat 20000 fail (2,0)\n", 40000, seed);
    const Millis t_fail = time_of_topology(trace, "fail");
    ASSERT_EQ(t_fail, 20000);
    Millis dead = -1;
    for (const auto& r : of_kind(trace, "link")) {
      if (r["src"] == "c1" && r["payload"]["dir"] == "E" && r["payload"]["alive"] == false) {
        dead = r["t"].get<Millis>();
      }
    }
    ASSERT_GE(dead, t_fail) << "seed " << seed;
    EXPECT_LE(dead, t_fail + 10000) << "seed " << seed;
  }
}

TEST(Heartbeat, RecoveredNeighbourAliveWithinPeriodPlusDelay) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto trace = run_live("...\nstart=0\nat 20000 fail (2,0)\nat 40000 recover (2,0)\n", 60000, seed);
    const Millis t_rec = time_of_topology(trace, "recover");
    ASSERT_EQ(t_rec, 40000);
    Millis up = -1;
    for (const auto& r : of_kind(trace, "link")) {
      if (r["src"] == "c1" && r["payload"]["dir"] == "E" && r["payload"]["alive"] == true &&
          r["t"].get<Millis>() >= t_rec) {
        up = r["t"].get<Millis>();
        break;
      }
    }
    ASSERT_GE(up, t_rec) << "seed " << seed;
    EXPECT_LE(up, t_rec + 3000 + 20) << "seed " << seed;
  }
}

TEST(Physical, AddedCellLinksUpOnBothSides) {
  const auto trace = run_live(".#\nstart=0\nat 5000 add (1,0)\n", 8000);
  bool a = false, b = false;
  for (const auto& r : of_kind(trace, "link")) {
    if (r["payload"]["alive"] != true || r["t"].get<Millis>() < 5000) continue;
    if (r["src"] == "c0" && r["payload"]["dir"] == "E") a = true;
    if (r["src"] == "c1" && r["payload"]["dir"] == "W") b = true;
  }
  EXPECT_TRUE(a);
  EXPECT_TRUE(b);
}

TEST(Physical, RemovingCellWithThreeNeighboursGivesThreeLinkDowns) {
  const auto trace = run_live("...\n...\nstart=0\nat 20000 remove (1,1)\n", 21000);
  int downs = 0;
  for (const auto& r : of_kind(trace, "link")) {
    if (r["payload"]["alive"] == false && r["t"].get<Millis>() == 20000) ++downs;
  }
  EXPECT_EQ(downs, 3);
}

TEST(Physical, AddThenRemoveWithinOneDelayKeepsCausalOrder) {
  const auto trace = run_live(".#\nstart=0\nat 5000 add (1,0)\nat 5010 remove (1,0)\n", 6000);
  std::uint64_t add_seq = 0, remove_seq = 0;
  Millis last_t = 0;
  std::uint64_t last_seq = 0;
  bool first = true;
  for (const auto& r : trace) {
    const auto t = r["t"].get<Millis>();
    const auto seq = r["seq"].get<std::uint64_t>();
    EXPECT_GE(t, last_t);
    if (!first) EXPECT_GT(seq, last_seq);
    if (r.contains("cause") && !r["cause"].is_null()) EXPECT_LT(r["cause"].get<std::uint64_t>(), seq);
    first = false;
    last_t = t;
    last_seq = seq;
    if (r["kind"] == "topology" && r["payload"]["op"] == "add") add_seq = seq;
    if (r["kind"] == "topology" && r["payload"]["op"] == "remove") remove_seq = seq;
  }
  ASSERT_GT(add_seq, 0u);
  EXPECT_GT(remove_seq, add_seq);
  // The heartbeats exchanged at connection arrive after the removal.
  int late = 0;
  for (const auto& r : of_kind(trace, "drop")) {
    if (r["seq"].get<std::uint64_t>() > remove_seq && r["payload"]["cause"] == "no_link") ++late;
  }
  EXPECT_GE(late, 1);
  for (const auto& r : of_kind(trace, "link")) {
    if (r["src"] == "c0") EXPECT_FALSE(r["payload"]["alive"] == true && r["t"].get<Millis>() >= 5000);
  }
}
