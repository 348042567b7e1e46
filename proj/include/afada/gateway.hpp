#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "afada/engine.hpp"

namespace afada {

inline constexpr const char* kGatewayProtocol = "afada-gateway/1";

struct GatewayConfig {
  double snapshot_interval_ms = 500;  // wall clock
  double speed = 1.0;                 // simulated ms per wall ms; 0 pauses
};

/// The gateway protocol without a transport. One engine, any number of
/// clients; every client sees the same event stream. Not thread-safe: the
/// owner calls everything from one thread.
class Gateway {
 public:
  using ClientId = std::uint64_t;
  using Send = std::function<void(const std::string&)>;

  Gateway(Scenario scenario, EngineOptions options, GatewayConfig config)
      : engine_(std::move(scenario), live(options)), config_(config) {
    if (config_.speed < 0) throw Error("speed must be >= 0");
    paused_ = config_.speed == 0;
    engine_.set_listener([this](const TraceRecord& r) {
      Json j = r.to_json();
      Json msg{{"type", "event"}};
      for (auto it = j.begin(); it != j.end(); ++it) msg[it.key()] = it.value();
      broadcast(msg);
    });
  }

  Engine& engine() { return engine_; }
  const Engine& engine() const { return engine_; }
  bool paused() const { return paused_; }
  double speed() const { return config_.speed; }
  std::size_t client_count() const { return clients_.size(); }

  ClientId connect(Send send) {
    const ClientId id = next_client_++;
    clients_.emplace(id, std::move(send));
    send_to(id, Json{{"type", "hello"},
                     {"protocol", kGatewayProtocol},
                     {"scenario", engine_.params().name},
                     {"paused", paused_},
                     {"speed", config_.speed}});
    send_to(id, snapshot());
    return id;
  }

  void disconnect(ClientId id) { clients_.erase(id); }

  /// One text frame from a client.
  void receive(ClientId from, const std::string& text) {
    Json msg;
    try {
      msg = Json::parse(text);
    } catch (const std::exception& e) {
      send_to(from, Json{{"type", "err"}, {"ref", nullptr}, {"error", std::string("invalid JSON: ") + e.what()}});
      return;
    }
    const Json ref = msg.contains("id") ? msg["id"] : Json(nullptr);
    if (!msg.is_object() || msg.value("type", "") != "cmd" || !msg.contains("op") || !msg["op"].is_string()) {
      send_to(from, Json{{"type", "err"}, {"ref", ref}, {"error", "expected {\"type\":\"cmd\", \"op\":...}"}});
      return;
    }
    const std::string op = msg["op"].get<std::string>();
    const Json args = msg.contains("args") ? msg["args"] : Json::object();
    try {
      Json result = apply(from, op, args);
      send_to(from, Json{{"type", "ack"}, {"ref", ref}, {"op", op}, {"result", result}});
    } catch (const std::exception& e) {
      send_to(from, Json{{"type", "err"}, {"ref", ref}, {"op", op}, {"error", e.what()}});
    }
  }

  /// Let `wall_ms` of real time pass: run the simulation at the current
  /// speed and send the periodic snapshot when it is due.
  void advance(double wall_ms) {
    if (!paused_) {
      sim_debt_ += wall_ms * config_.speed;
      const auto whole = static_cast<Millis>(std::floor(sim_debt_));
      if (whole > 0) {
        sim_debt_ -= static_cast<double>(whole);
        engine_.run_until(engine_.now() + whole);
      }
    }
    since_snapshot_ += wall_ms;
    if (since_snapshot_ >= config_.snapshot_interval_ms) {
      since_snapshot_ = 0;
      broadcast(snapshot());
    }
  }

  Json snapshot() const {
    Json s = engine_.snapshot(preview_);
    s["paused"] = paused_;
    s["speed"] = config_.speed;
    return s;
  }

 private:
  static EngineOptions live(EngineOptions o) {
    o.live = true;
    return o;
  }

  Json apply(ClientId from, const std::string& op, const Json& args) {
    if (op == "pause") {
      paused_ = true;
      return Json{{"paused", true}};
    }
    if (op == "resume") {
      if (config_.speed == 0) config_.speed = 1;
      paused_ = false;
      return Json{{"paused", false}, {"speed", config_.speed}};
    }
    if (op == "set_speed") {
      const double v = args.at("speed").get<double>();
      if (!(v >= 0)) throw Error("speed must be >= 0");
      config_.speed = v;
      paused_ = v == 0;
      return Json{{"paused", paused_}, {"speed", v}};
    }
    if (op == "step") {
      const int n = args.value("count", 1);
      if (n < 1) throw Error("count must be >= 1");
      int done = 0;
      while (done < n && engine_.step()) ++done;
      return Json{{"events", done}, {"t", engine_.now()}};
    }
    if (op == "snapshot") {
      send_to(from, snapshot());
      return Json::object();
    }
    if (op == "set_preview") {
      if (args.is_null() || args.empty()) {
        preview_.reset();
      } else {
        const Coord c = Engine::coord_arg(args);
        auto id = engine_.grid().cell_at(c);
        if (!id) throw Error("no cell at " + to_string(c));
        preview_ = *id;
      }
      return Json::object();
    }
    const CommandResult r = engine_.command(op, args);
    if (!r.ok) throw Error(r.error);
    return r.result;
  }

  void send_to(ClientId id, const Json& msg) {
    auto it = clients_.find(id);
    if (it != clients_.end()) it->second(msg.dump());
  }

  void broadcast(const Json& msg) {
    if (clients_.empty()) return;
    const std::string text = msg.dump();
    for (auto& [id, send] : clients_) send(text);
  }

  Engine engine_;
  GatewayConfig config_;
  bool paused_ = false;
  double sim_debt_ = 0;
  double since_snapshot_ = 0;
  std::optional<CellId> preview_;
  std::map<ClientId, Send> clients_;
  ClientId next_client_ = 1;
};

}  // namespace afada
