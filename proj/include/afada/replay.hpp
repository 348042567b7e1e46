#pragma once

#include <istream>
#include <ostream>
#include <string>

#include "afada/engine.hpp"

namespace afada {

inline void write_trace(std::ostream& out, const Engine& engine) {
  out << engine.header().to_line() << '\n';
  for (const auto& line : engine.trace_lines()) out << line << '\n';
}

struct ReplayOutcome {
  bool ok = true;
  std::size_t records = 0;          // records compared
  std::optional<std::size_t> line;  // 1-based file line of the first problem
  std::string message;
  std::optional<Json> snapshot;
};

inline EngineOptions options_from_header(const TraceHeader& h, bool keep_trace) {
  EngineOptions opt;
  opt.keep_trace = keep_trace;
  opt.seed = h.seed;
  opt.time_scale = h.time_scale;
  opt.live = h.live;
  return opt;
}

/// Re-execute a trace from its header and compare every record. Commands
/// are re-applied at the event count and time they were issued. With
/// `snapshot_at`, stops once that record has been reproduced and returns the
/// state at that point.
inline ReplayOutcome replay_trace(std::istream& in, std::optional<std::uint64_t> snapshot_at = std::nullopt) {
  ReplayOutcome out;
  std::string line;
  if (!std::getline(in, line)) {
    out.ok = false;
    out.line = 1;
    out.message = "empty trace";
    return out;
  }
  std::optional<Engine> engine;
  try {
    const TraceHeader h = TraceHeader::parse(line);
    engine.emplace(parse_scenario(h.scenario), options_from_header(h, true));
  } catch (const std::exception& e) {
    out.ok = false;
    out.line = 1;
    out.message = std::string("bad header: ") + e.what();
    return out;
  }
  Engine& eng = *engine;
  std::size_t file_line = 1;
  std::uint64_t i = 0;
  while (std::getline(in, line)) {
    ++file_line;
    if (line.empty()) continue;
    TraceRecord rec;
    try {
      rec = TraceRecord::from_json(Json::parse(line));
    } catch (const std::exception& e) {
      out.ok = false;
      out.line = file_line;
      out.message = std::string("unparseable record: ") + e.what();
      return out;
    }
    if (rec.kind == "cmd" && eng.record_count() == i) {
      const auto events = rec.payload.value("events", std::uint64_t{0});
      while (eng.events_processed() < events && eng.record_count() == i && eng.step()) {
      }
      if (eng.record_count() == i) {
        eng.advance_to(rec.t);
        const auto res = eng.command(rec.payload.at("op").get<std::string>(), rec.payload.at("args"));
        if (!res.ok) {
          out.ok = false;
          out.line = file_line;
          out.message = "command rejected on replay: " + res.error;
          return out;
        }
      }
    }
    while (eng.record_count() <= i && eng.step()) {
    }
    if (eng.record_count() <= i) {
      out.ok = false;
      out.line = file_line;
      out.message = "trace continues after the simulation ended";
      return out;
    }
    if (eng.trace_lines()[i] != line) {
      out.ok = false;
      out.line = file_line;
      out.message = "mismatch: expected " + line + " got " + eng.trace_lines()[i];
      return out;
    }
    ++i;
    out.records = i;
    if (snapshot_at && i > *snapshot_at) {
      out.snapshot = eng.snapshot();
      return out;
    }
  }
  if (snapshot_at) {
    out.ok = false;
    out.message = "trace has only " + std::to_string(i) + " records";
  }
  return out;
}

}  // namespace afada
