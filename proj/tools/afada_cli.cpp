#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "afada/ascii.hpp"
#include "afada/experiments.hpp"
#include "afada/replay.hpp"
#include "afada/scenarios.hpp"
#include "afada/ws_server.hpp"

namespace fs = std::filesystem;
using namespace afada;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

bool is_library_name(const std::string& s) {
  for (const auto& e : scenarios::all()) {
    if (e.name == s) return true;
  }
  return false;
}

/// A path to a scenario file, or the name of a built-in scenario.
Scenario load_scenario(const std::string& arg) {
  if (!fs::exists(arg) && is_library_name(arg)) return scenarios::load(arg);
  const std::string text = read_file(arg);
  try {
    return parse_scenario(text);
  } catch (const ParseError& e) {
    throw UsageError(arg + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " + e.what());
  } catch (const Error& e) {
    throw UsageError(arg + ": " + e.what());
  }
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<double> loss;
  bool reliable = false;
  std::optional<std::string> mode;
  std::optional<std::string> reservation;
  std::optional<int> time_scale;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "Root seed");
    app->add_option("--loss", loss, "Message loss probability")->check(CLI::Range(0.0, 1.0));
    app->add_flag("--reliable-links", reliable, "Disable message loss");
    app->add_option("--mode", mode, "Default robot mode")->check(CLI::IsMember({"afada", "selfnav"}));
    app->add_option("--reservation", reservation, "Reservation mode")->check(CLI::IsMember({"single", "multi"}));
    app->add_option("--time-scale", time_scale, "Multiply every duration")->check(CLI::PositiveNumber);
  }

  Scenario apply(Scenario s) const {
    if (seed) s.set_param("seed", std::to_string(*seed));
    if (loss) s.set_param("loss", detail::format_double(*loss));
    if (reliable) s.set_param("loss", "0");
    if (mode) s.set_param("mode", *mode);
    if (reservation) s.set_param("reservation", *reservation);
    if (time_scale) s.set_param("time_scale", std::to_string(*time_scale));
    return s;
  }
};

std::string file_stem(const Scenario& s, const std::string& arg) {
  std::string name = s.params.name.empty() ? fs::path(arg).stem().string() : s.params.name;
  return name + "-s" + std::to_string(s.params.seed);
}

Json metrics_json(const Scenario& s, const RunResult& r) {
  Json j;
  j["scenario"] = s.params.name;
  j["seed"] = s.params.seed;
  j["mode"] = to_string(s.params.mode);
  j["p"] = s.params.p;
  j["q"] = s.params.q;
  j["loss"] = s.params.loss;
  j["steps"] = r.total_steps;
  j["completed"] = r.completed;
  j["stop_reason"] = r.stop_reason;
  j["sim_time_ms"] = r.sim_time;
  j["start_time_ms"] = r.start_time;
  j["violations"] = r.violations;
  j["failures"] = r.failures;
  j["recoveries"] = r.recoveries;
  std::uint64_t dropped = 0;
  for (auto d : r.messages.dropped) dropped += d;
  j["messages"] = {{"sent", r.messages.sent}, {"delivered", r.messages.delivered}, {"dropped", dropped}};
  Json robots = Json::array();
  for (const auto& rr : r.robots) {
    robots.push_back({{"id", rr.id},
                      {"mode", to_string(rr.mode)},
                      {"steps", rr.steps},
                      {"optimal", rr.optimal ? Json(*rr.optimal) : Json(nullptr)},
                      {"finished", rr.finished}});
  }
  j["robots"] = robots;
  return j;
}

std::string metrics_csv(const Scenario& s, const RunResult& r) {
  RunRow row;
  row.scenario = s.params.name;
  row.seed = s.params.seed;
  row.mode = r.robots.empty() ? s.params.mode : r.robots.front().mode;
  row.p = s.params.p;
  row.q = s.params.q;
  row.steps = r.total_steps;
  row.completed = r.completed;
  row.sim_time_ms = r.sim_time;
  row.loss = s.params.loss;
  return to_csv({row});
}

int cmd_run(const std::string& path, const Common& common, const std::string& out_dir, const std::string& format) {
  const Scenario s = common.apply(load_scenario(path));
  EngineOptions opt;
  opt.keep_trace = true;
  Engine engine(s, opt);
  const RunResult r = engine.run();
  const std::string stem = file_stem(s, path);
  std::ostringstream trace;
  write_trace(trace, engine);
  write_file(fs::path(out_dir) / (stem + ".trace.jsonl"), trace.str());
  const std::string metrics = format == "json" ? metrics_json(s, r).dump(2) + "\n" : metrics_csv(s, r);
  write_file(fs::path(out_dir) / (stem + ".metrics." + format), metrics);
  std::cout << metrics;
  if (!r.completed) std::cerr << "task not completed: " << r.stop_reason << "\n";
  return r.completed ? 0 : 2;
}

int cmd_plan(const std::optional<std::string>& plan_path, const std::optional<std::string>& from_csv,
             const std::string& out_dir, std::optional<int> jobs, const std::string& format) {
  std::vector<RunRow> rows;
  if (from_csv) {
    try {
      rows = parse_csv(read_file(*from_csv));
    } catch (const ParseError& e) {
      throw UsageError(*from_csv + ":" + std::to_string(e.line()) + ": " + e.what());
    }
  } else {
    if (!plan_path) throw UsageError("plan: a plan file or --from-csv is required");
    ExperimentPlan plan;
    try {
      plan = parse_plan(read_file(*plan_path));
    } catch (const ParseError& e) {
      throw UsageError(*plan_path + ":" + std::to_string(e.line()) + ": " + e.what());
    }
    if (jobs) plan.jobs = *jobs;
    const fs::path base = fs::path(*plan_path).parent_path();
    rows = run_plan(plan, [&](const std::string& field) {
      if (!fs::exists(base / field) && is_library_name(field)) return scenarios::load(field);
      return load_scenario((base / field).string());
    });
    for (const auto& r : rows) {
      if (!r.error.empty()) std::cerr << "run " << r.scenario << " seed " << r.seed << " crashed: " << r.error << "\n";
    }
    write_file(fs::path(out_dir) / "results.csv", to_csv(rows));
  }
  const std::string report = render_report(rows);
  write_file(fs::path(out_dir) / "report.md", report);
  if (format == "csv") {
    std::cout << to_csv(rows);
  } else if (format == "json") {
    const ResultTable t = summarize(rows);
    Json j;
    Json conds = Json::array();
    for (const auto& c : t.conditions) {
      conds.push_back({{"scenario", c.scenario},
                       {"q", c.q},
                       {"mode", to_string(c.mode)},
                       {"runs", c.runs},
                       {"failed", c.failed},
                       {"median", c.median ? Json(*c.median) : Json(nullptr)},
                       {"steps", c.steps}});
    }
    j["conditions"] = conds;
    Json comps = Json::array();
    for (const auto& c : t.comparisons) {
      comps.push_back({{"scenario", c.scenario}, {"q", c.q}, {"U", c.test.u}, {"n1", c.test.n1}, {"n2", c.test.n2}, {"P", c.test.p}});
    }
    j["comparisons"] = comps;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << report;
  }
  return 0;
}

int cmd_replay(const std::string& path, std::optional<std::uint64_t> snapshot_at) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  const ReplayOutcome r = replay_trace(in, snapshot_at);
  if (!r.ok) {
    std::cerr << path << ":" << (r.line ? std::to_string(*r.line) : std::string("?")) << ": " << r.message << "\n";
    return 2;
  }
  if (r.snapshot) {
    std::cout << r.snapshot->dump(2) << "\n";
  } else {
    std::cout << "replay ok: " << r.records << " records\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path, const Common& common, std::optional<Millis> at,
                const std::optional<std::string>& cell, const std::optional<std::string>& goal,
                const std::string& format) {
  const Scenario s = common.apply(load_scenario(path));
  Engine engine(s);
  if (at) {
    engine.run_until(*at);
  } else {
    while (!engine.started() && engine.step()) {
    }
  }
  auto coord = [&](const std::string& text) {
    auto c = detail::parse_coord(text);
    if (!c) throw UsageError("invalid coordinate '" + text + "'");
    auto id = engine.grid().cell_at(*c);
    if (!id) throw UsageError("no cell at " + text);
    return *id;
  };
  if (cell) {
    std::cout << engine.inspect(coord(*cell)).dump(2) << "\n";
    return 0;
  }
  std::optional<CellId> target;
  if (goal) {
    target = coord(*goal);
  } else if (s.annotations().goal) {
    target = engine.grid().cell_at(*s.annotations().goal);
  }
  if (format == "json") {
    std::cout << engine.snapshot(target).dump(2) << "\n";
    return 0;
  }
  std::cout << "t=" << engine.now() << " ms\n";
  if (target) {
    std::cout << render_ascii(engine, *target);
  } else {
    std::cout << "(no goal: pass --goal to draw next hops)\n";
  }
  return 0;
}

int cmd_serve(const std::string& path, const Common& common, const std::string& host, unsigned short port,
              double speed, double snapshot_ms, const std::optional<std::string>& trace_out) {
  const Scenario s = common.apply(load_scenario(path));
  EngineOptions opt;
  opt.keep_trace = trace_out.has_value();
  Gateway gateway(s, opt, GatewayConfig{snapshot_ms, speed});
  boost::asio::io_context io;
  std::optional<WsServer> server;
  try {
    server.emplace(io, gateway, host, port);
  } catch (const std::exception& e) {
    std::cerr << "cannot listen on " << host << ":" << port << ": " << e.what() << "\n";
    return 1;
  }
  boost::asio::signal_set signals(io, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code&, int) {
    server->stop();
    io.stop();
  });
  server->start();
  std::cout << "listening on ws://" << host << ":" << server->port() << std::endl;
  io.run();
  if (trace_out) {
    std::ostringstream trace;
    write_trace(trace, gateway.engine());
    write_file(*trace_out, trace.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"afada: active-environment grid simulator"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir = ".";
  std::string format = "csv";
  std::string path;

  auto* run = app.add_subcommand("run", "Run one scenario; write trace and metrics");
  run->add_option("scenario", path, "Scenario file or built-in name")->required();
  common.add(run);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--format", format, "Metrics format")->check(CLI::IsMember({"json", "csv"}));

  std::optional<std::string> plan_path;
  std::optional<std::string> from_csv;
  std::optional<int> jobs;
  std::string plan_format = "md";
  auto* plan = app.add_subcommand("plan", "Run an experiment plan; write results.csv and report.md");
  plan->add_option("plan", plan_path, "Plan file");
  plan->add_option("--from-csv", from_csv, "Regenerate the report from saved results");
  plan->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  plan->add_option("--out", out_dir, "Output directory");
  plan->add_option("--format", plan_format, "Console output")->check(CLI::IsMember({"md", "json", "csv"}));

  std::optional<std::uint64_t> snapshot_at;
  auto* replay = app.add_subcommand("replay", "Re-execute a trace and compare it record by record");
  replay->add_option("trace", path, "Trace file")->required();
  replay->add_option("--snapshot-at", snapshot_at, "Print the state after this record");

  std::optional<Millis> at;
  std::optional<std::string> cell;
  std::optional<std::string> goal;
  std::string inspect_format = "ascii";
  auto* inspect = app.add_subcommand("inspect", "Print a grid snapshot");
  inspect->add_option("scenario", path, "Scenario file or built-in name")->required();
  common.add(inspect);
  inspect->add_option("--at", at, "Simulated time in ms (default: task start)");
  inspect->add_option("--cell", cell, "Print one cell's table and links, e.g. (2,1)");
  inspect->add_option("--goal", goal, "Draw next hops toward this cell");
  inspect->add_option("--format", inspect_format, "Output")->check(CLI::IsMember({"ascii", "json"}));

  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  double speed = 1.0;
  double snapshot_ms = 500;
  std::optional<std::string> trace_out;
  auto* serve = app.add_subcommand("serve", "Serve the gateway protocol over WebSocket");
  serve->add_option("scenario", path, "Scenario file or built-in name")->required();
  common.add(serve);
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--speed", speed, "Simulated ms per wall ms; 0 starts paused")->check(CLI::NonNegativeNumber);
  serve->add_option("--snapshot-ms", snapshot_ms, "Snapshot interval")->check(CLI::PositiveNumber);
  serve->add_option("--out", trace_out, "Write the trace here on shutdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(path, common, out_dir, format);
    if (*plan) return cmd_plan(plan_path, from_csv, out_dir, jobs, plan_format);
    if (*replay) return cmd_replay(path, snapshot_at);
    if (*inspect) return cmd_inspect(path, common, at, cell, goal, inspect_format);
    if (*serve) return cmd_serve(path, common, host, port, speed, snapshot_ms, trace_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
