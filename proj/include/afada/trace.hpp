#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "afada/core.hpp"

namespace afada {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTraceSchema = "afada-trace/1";

/// One line of a trace. `seq` is the record's index; `cause` is the index
/// of the record during whose handling this one was produced.
struct TraceRecord {
  Millis t = 0;
  std::uint64_t seq = 0;
  std::string kind;
  std::string src;
  std::string dst;
  Json payload = Json::object();
  std::optional<std::uint64_t> cause;

  Json to_json() const {
    Json j;
    j["t"] = t;
    j["seq"] = seq;
    j["kind"] = kind;
    j["src"] = src;
    j["dst"] = dst;
    j["payload"] = payload;
    j["cause"] = cause ? Json(*cause) : Json(nullptr);
    return j;
  }

  std::string to_line() const { return to_json().dump(); }

  static TraceRecord from_json(const Json& j) {
    TraceRecord r;
    r.t = j.at("t").get<Millis>();
    r.seq = j.at("seq").get<std::uint64_t>();
    r.kind = j.at("kind").get<std::string>();
    r.src = j.at("src").get<std::string>();
    r.dst = j.at("dst").get<std::string>();
    r.payload = j.at("payload");
    if (!j.at("cause").is_null()) r.cause = j.at("cause").get<std::uint64_t>();
    return r;
  }
};

/// First line of a trace file: everything needed to re-execute the run.
struct TraceHeader {
  std::string scenario;  // canonical scenario text with overrides applied
  std::uint64_t seed = 0;
  int time_scale = 1;
  bool live = false;

  std::string to_line() const {
    Json j;
    j["schema"] = kTraceSchema;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["time_scale"] = time_scale;
    j["live"] = live;
    return j.dump();
  }

  static TraceHeader parse(const std::string& line) {
    Json j = Json::parse(line);
    if (j.value("schema", "") != kTraceSchema) throw Error("unsupported trace schema");
    TraceHeader h;
    h.scenario = j.at("scenario").get<std::string>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.time_scale = j.at("time_scale").get<int>();
    h.live = j.value("live", false);
    return h;
  }
};

}  // namespace afada
