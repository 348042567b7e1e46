#pragma once

#include <memory>

#include "afada/netfabric.hpp"
#include "afada/reservation.hpp"
#include "afada/routing.hpp"

namespace afada {

struct CellConfig {
  FabricConfig fabric;
  Millis broadcast_period = 2000;
  int diameter_bound = routing::kDefaultDiameterBound;
  ReservationConfig reservation;
};

/// Streams and clock a cell handler may draw on.
struct CellContext {
  Millis now = 0;
  const CellConfig& config;
  RandomStream& backoff;
  RandomStream& retry;
};

/// Full local state of one cell and its event handlers. Handlers never see
/// the grid: everything arrives as link notifications and messages, and
/// everything leaves as CellEffects.
class CellNode {
 public:
  CellNode() = default;
  CellNode(CellId id, CellPolicy policy) : id_(id), policy_(policy), table_(id) {}

  CellId id() const { return id_; }
  const CellPolicy& policy() const { return policy_; }
  void set_policy(const CellPolicy& p) { policy_ = p; }
  const LinkTable& links() const { return links_; }
  const routing::RoutingTable& table() const { return table_; }
  const routing::NeighborCache& cache() const { return cache_; }
  const ReservationState& reservation() const { return res_; }
  const Occupancy& occupancy() const { return res_.occ; }

  /// Crash-recovery: everything but the physical connector state is lost.
  void reset() {
    LinkTable fresh;
    for (Direction d : kDirections) {
      if (links_.physical(d)) fresh.on_physical(d, true);
    }
    links_ = fresh;
    table_ = routing::RoutingTable(id_);
    cache_ = {};
    res_ = ReservationState{};
  }

  /// Engine-side placement of a robot (initial position or spawn gate).
  void place_robot(RobotId r) { res_.occ = Occupancy{Occupancy::State::kOccupied, r, 0, std::nullopt}; }

  /// Broadcast dist on every live direction, then rebuild the tables.
  CellEffects on_broadcast_tick(const CellContext& ctx) {
    CellEffects fx;
    auto ad = std::make_shared<const DistVector>(table_.advertisement());
    for (Direction d : links_.alive_directions()) fx.to_cells.emplace_back(d, DistBroadcast{ad});
    rebuild(ctx, fx);
    return fx;
  }

  CellEffects on_heartbeat_tick() const {
    CellEffects fx;
    for (Direction d : links_.physical_directions()) fx.to_cells.emplace_back(d, Heartbeat{});
    return fx;
  }

  /// Voltage-switch detection on a connector.
  CellEffects on_physical(Direction d, bool connected, const CellContext& ctx) {
    CellEffects fx;
    if (links_.on_physical(d, connected)) {
      link_lost(d, ctx, fx);
    } else if (!connected) {
      cache_[index_of(d)].reset();
    }
    if (connected) fx.to_cells.emplace_back(d, Heartbeat{});
    return fx;
  }

  CellEffects on_link_deadline(Direction d, const CellContext& ctx) {
    CellEffects fx;
    if (links_.expire(d, ctx.now, ctx.config.fabric.heartbeat_timeout)) link_lost(d, ctx, fx);
    return fx;
  }

  /// Scan all directions for stale heartbeats.
  CellEffects check_timeouts(const CellContext& ctx) {
    CellEffects fx;
    for (Direction d : links_.check_timeouts(ctx.now, ctx.config.fabric.heartbeat_timeout)) link_lost(d, ctx, fx);
    return fx;
  }

  CellEffects on_cell_message(Direction from, const Message& msg, const CellContext& ctx) {
    CellEffects fx;
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Heartbeat>) {
            links_.on_heartbeat(from, ctx.now);
            fx.timers.emplace_back(ctx.config.fabric.heartbeat_timeout,
                                   CellTimer{CellTimer::Kind::kLinkDeadline, from, 0});
          } else if constexpr (std::is_same_v<T, DistBroadcast>) {
            if (!links_.alive(from)) {
              fx.notes.push_back("table from a direction without a live link ignored");
              return;
            }
            cache_[index_of(from)] = m.table;
            rebuild(ctx, fx);
          } else if constexpr (std::is_same_v<T, ReserveRequest>) {
            auto v = view(ctx);
            reservation::handle_reserve_request(res_, v, from, m, fx);
          } else if constexpr (std::is_same_v<T, ReserveAck>) {
            auto v = view(ctx);
            reservation::handle_ack(res_, v, from, m, fx);
          } else if constexpr (std::is_same_v<T, ReserveReject>) {
            auto v = view(ctx);
            reservation::handle_reject(res_, v, from, m, fx);
          } else if constexpr (std::is_same_v<T, Release>) {
            reservation::handle_release(res_, m, fx);
          } else {
            fx.notes.push_back(std::string("unexpected ") + message_kind(msg) + " from a cell");
          }
        },
        msg);
    return fx;
  }

  CellEffects on_robot_message(const Message& msg, const CellContext& ctx) {
    CellEffects fx;
    if (const auto* req = std::get_if<RobotRequest>(&msg)) {
      auto v = view(ctx);
      reservation::handle_robot_request(res_, v, *req, fx);
    } else if (const auto* arr = std::get_if<Arrived>(&msg)) {
      reservation::handle_arrival(res_, arr->robot, fx);
    } else if (const auto* lv = std::get_if<Leave>(&msg)) {
      reservation::handle_leave(res_, *lv, fx);
    } else {
      fx.notes.push_back(std::string("unexpected ") + message_kind(msg) + " from a robot");
    }
    return fx;
  }

  CellEffects on_timer(const CellTimer& t, const CellContext& ctx) {
    if (t.kind == CellTimer::Kind::kLinkDeadline) return on_link_deadline(t.dir, ctx);
    CellEffects fx;
    auto v = view(ctx);
    reservation::handle_retry_timer(res_, v, t.generation, fx);
    return fx;
  }

  /// Test hook: overwrite routing state with arbitrary content.
  void corrupt(routing::RoutingTable table, routing::NeighborCache cache) {
    table_ = std::move(table);
    cache_ = std::move(cache);
  }

 private:
  ReservationView view(const CellContext& ctx) {
    return ReservationView{id_,        policy_,   table_,   links_.alive_mask(), ctx.config.reservation,
                           ctx.backoff, ctx.retry, &cache_};
  }

  void rebuild(const CellContext& ctx, CellEffects& fx) {
    for (Direction d : kDirections) {
      if (!links_.alive(d)) cache_[index_of(d)].reset();
    }
    routing::RoutingTable next = routing::recompute(id_, cache_, ctx.config.diameter_bound);
    if (!(next == table_)) {
      table_ = std::move(next);
      fx.table_changed = true;
    }
  }

  void link_lost(Direction d, const CellContext& ctx, CellEffects& fx) {
    cache_[index_of(d)].reset();
    rebuild(ctx, fx);
    auto v = view(ctx);
    reservation::on_link_down(res_, v, d, fx);
  }

  CellId id_{};
  CellPolicy policy_;
  LinkTable links_;
  routing::RoutingTable table_;
  routing::NeighborCache cache_;
  ReservationState res_;
};

}  // namespace afada
