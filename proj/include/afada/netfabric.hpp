#pragma once

#include <array>
#include <vector>

#include "afada/core.hpp"
#include "afada/rng.hpp"

namespace afada {

struct FabricConfig {
  Millis delay = 20;               // fixed per-hop latency
  double loss_prob = 0.0;          // per-message drop probability
  Millis heartbeat_period = 3000;
  Millis heartbeat_timeout = 10000;

  void validate() const {
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) throw Error("loss_prob must lie in [0,1]");
    if (delay < 0) throw Error("delay must be non-negative");
    if (heartbeat_period <= 0) throw Error("heartbeat period must be positive");
    if (heartbeat_timeout <= heartbeat_period) throw Error("heartbeat timeout must exceed the period");
  }
};

/// One side of a cell-to-cell channel. `physical` follows the connector
/// (add/remove); `alive` is the heartbeat-derived virtual state.
struct LinkState {
  bool physical = false;
  bool alive = false;
  Millis last_heartbeat = 0;
};

/// The two-stage connection detector of one cell.
class LinkTable {
 public:
  const LinkState& operator[](Direction d) const { return links_[index_of(d)]; }

  bool alive(Direction d) const { return links_[index_of(d)].alive; }
  bool physical(Direction d) const { return links_[index_of(d)].physical; }

  std::array<bool, 4> alive_mask() const {
    return {links_[0].alive, links_[1].alive, links_[2].alive, links_[3].alive};
  }

  /// Physical connect/disconnect. Returns true when a live link went down.
  bool on_physical(Direction d, bool connected) {
    LinkState& l = links_[index_of(d)];
    l.physical = connected;
    if (!connected && l.alive) {
      l.alive = false;
      return true;
    }
    return false;
  }

  /// Heartbeat received. Returns true when the link just became alive.
  bool on_heartbeat(Direction d, Millis now) {
    LinkState& l = links_[index_of(d)];
    l.last_heartbeat = now;
    if (!l.physical) return false;
    const bool was_alive = l.alive;
    l.alive = true;
    return !was_alive;
  }

  /// Directions whose last heartbeat is at least `timeout` old (inclusive);
  /// those transition to not alive.
  std::vector<Direction> check_timeouts(Millis now, Millis timeout) {
    std::vector<Direction> dead;
    for (Direction d : kDirections) {
      LinkState& l = links_[index_of(d)];
      if (l.alive && now - l.last_heartbeat >= timeout) {
        l.alive = false;
        dead.push_back(d);
      }
    }
    return dead;
  }

  /// Deadline of one direction: true when it just transitioned to not alive.
  bool expire(Direction d, Millis now, Millis timeout) {
    LinkState& l = links_[index_of(d)];
    if (l.alive && now - l.last_heartbeat >= timeout) {
      l.alive = false;
      return true;
    }
    return false;
  }

  /// Directions a heartbeat is sent on.
  std::vector<Direction> physical_directions() const {
    std::vector<Direction> out;
    for (Direction d : kDirections) {
      if (links_[index_of(d)].physical) out.push_back(d);
    }
    return out;
  }

  std::vector<Direction> alive_directions() const {
    std::vector<Direction> out;
    for (Direction d : kDirections) {
      if (links_[index_of(d)].alive) out.push_back(d);
    }
    return out;
  }

  void clear_virtual() {
    for (auto& l : links_) l.alive = false;
  }

 private:
  std::array<LinkState, 4> links_{};
};

enum class DropCause : std::uint8_t {
  kLoss,         // random loss
  kNoLink,       // endpoints are not physically connected
  kSrcFailed,    // sender is failed
  kDstFailed,    // receiver is failed (cell failure mid-flight)
  kRobotAbsent,  // robot no longer on the cell
};

inline const char* to_string(DropCause c) {
  switch (c) {
    case DropCause::kLoss: return "loss";
    case DropCause::kNoLink: return "no_link";
    case DropCause::kSrcFailed: return "src_failed";
    case DropCause::kDstFailed: return "dst_failed";
    case DropCause::kRobotAbsent: return "robot_absent";
  }
  return "?";
}

/// Per-message fate decisions. Link checks are supplied by the engine (which
/// owns the topology); the fabric adds the loss draw and fixed delay.
class Fabric {
 public:
  struct Verdict {
    bool delivered = false;
    DropCause cause = DropCause::kLoss;
    Millis deliver_at = 0;
  };

  struct Counters {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::array<std::uint64_t, 5> dropped{};
  };

  Fabric(FabricConfig config, RandomStream& loss) : config_(config), loss_(&loss) { config_.validate(); }

  const FabricConfig& config() const { return config_; }

  /// Decide a send at `now`. One loss draw per call whatever the link state,
  /// so the loss stream does not depend on topology.
  Verdict send(std::optional<DropCause> link_problem, Millis now) {
    ++counters_.sent;
    const bool lost = loss_->bernoulli(config_.loss_prob);
    if (link_problem) return drop(*link_problem);
    if (lost) return drop(DropCause::kLoss);
    return Verdict{true, DropCause::kLoss, now + config_.delay};
  }

  /// Re-check the link when a message arrives.
  Verdict arrive(std::optional<DropCause> link_problem, Millis now) {
    if (link_problem) {
      ++counters_.dropped[static_cast<std::size_t>(*link_problem)];
      return Verdict{false, *link_problem, now};
    }
    ++counters_.delivered;
    return Verdict{true, DropCause::kLoss, now};
  }

  const Counters& counters() const { return counters_; }

 private:
  Verdict drop(DropCause c) {
    ++counters_.dropped[static_cast<std::size_t>(c)];
    return Verdict{false, c, 0};
  }

  FabricConfig config_;
  RandomStream* loss_;
  Counters counters_;
};

}  // namespace afada
