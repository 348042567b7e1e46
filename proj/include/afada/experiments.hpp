#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "afada/engine.hpp"
#include "afada/stats.hpp"

namespace afada {

/// A batch of runs: every field x q x mode x repetition.
struct ExperimentPlan {
  std::vector<std::string> fields;
  std::vector<RobotMode> modes{RobotMode::kAfada, RobotMode::kSelfNav};
  double p = 0.01;
  std::vector<double> q{0.01, 0.05};
  double loss = 0.0;
  int repetitions = 30;
  std::uint64_t seed = 1;
  bool paired = true;
  std::optional<std::string> reservation;
  std::optional<int> trips;
  int jobs = 1;

  /// Seed for one run. Paired plans give both modes the same seed.
  std::uint64_t seed_for(std::size_t mode_index, int repetition) const {
    const std::uint64_t offset = paired ? 0 : mode_index * static_cast<std::uint64_t>(repetitions);
    return seed + offset + static_cast<std::uint64_t>(repetition);
  }

  std::size_t run_count() const { return fields.size() * q.size() * modes.size() * static_cast<std::size_t>(repetitions); }
};

namespace plan_detail {

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v, const std::function<std::optional<T>(const std::string&)>& one) {
  std::vector<T> out;
  for (const auto& part : detail::split(v, ',')) {
    auto x = one(detail::trim(part));
    if (!x) throw Error("invalid value '" + v + "' for " + key);
    out.push_back(*x);
  }
  if (out.empty()) throw Error("empty list for " + key);
  return out;
}

inline std::optional<double> prob(const std::string& s) {
  auto d = detail::parse_double(s);
  if (!d || *d < 0.0 || *d > 1.0) return std::nullopt;
  return d;
}

inline std::optional<RobotMode> mode(const std::string& s) {
  if (s == "afada") return RobotMode::kAfada;
  if (s == "selfnav") return RobotMode::kSelfNav;
  return std::nullopt;
}

}  // namespace plan_detail

inline ExperimentPlan parse_plan(std::string_view text) {
  ExperimentPlan plan;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line == "#" || line.rfind("# ", 0) == 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no, 1);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "fields") {
        plan.fields = plan_detail::parse_list<std::string>(key, value, [](const std::string& s) -> std::optional<std::string> {
          if (s.empty()) return std::nullopt;
          return s;
        });
      } else if (key == "modes") {
        plan.modes = plan_detail::parse_list<RobotMode>(key, value, plan_detail::mode);
      } else if (key == "p") {
        auto d = plan_detail::prob(value);
        if (!d) throw Error("invalid value '" + value + "' for p");
        plan.p = *d;
      } else if (key == "q") {
        plan.q = plan_detail::parse_list<double>(key, value, plan_detail::prob);
      } else if (key == "loss") {
        auto d = plan_detail::prob(value);
        if (!d) throw Error("invalid value '" + value + "' for loss");
        plan.loss = *d;
      } else if (key == "repetitions") {
        auto n = detail::parse_number<int>(value);
        if (!n || *n < 1) throw Error("repetitions must be a positive integer");
        plan.repetitions = *n;
      } else if (key == "seed") {
        auto n = detail::parse_number<std::uint64_t>(value);
        if (!n) throw Error("invalid seed '" + value + "'");
        plan.seed = *n;
      } else if (key == "pairing") {
        if (value != "paired" && value != "unpaired") throw Error("pairing must be paired or unpaired");
        plan.paired = value == "paired";
      } else if (key == "reservation") {
        if (value != "single" && value != "multi") throw Error("reservation must be single or multi");
        plan.reservation = value;
      } else if (key == "trips") {
        auto n = detail::parse_number<int>(value);
        if (!n || *n < 1) throw Error("trips must be a positive integer");
        plan.trips = *n;
      } else if (key == "jobs") {
        auto n = detail::parse_number<int>(value);
        if (!n || *n < 1) throw Error("jobs must be a positive integer");
        plan.jobs = *n;
      } else {
        throw Error("unknown plan key '" + key + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no, 1);
    }
  }
  if (plan.fields.empty()) throw ParseError("plan names no fields", line_no, 0);
  return plan;
}

/// One row of the results CSV.
struct RunRow {
  std::string scenario;
  std::uint64_t seed = 0;
  RobotMode mode = RobotMode::kAfada;
  double p = 0;
  double q = 0;
  int steps = 0;
  bool completed = false;
  Millis sim_time_ms = 0;
  double loss = 0;
  std::string error;  // set when the run threw; not persisted
};

inline const char* kResultsHeader = "scenario,seed,mode,p,q,steps,completed,sim_time_ms,loss";

inline std::string to_csv_line(const RunRow& r) {
  std::ostringstream out;
  out << r.scenario << ',' << r.seed << ',' << to_string(r.mode) << ',' << detail::format_double(r.p) << ','
      << detail::format_double(r.q) << ',' << r.steps << ',' << (r.completed ? 1 : 0) << ',' << r.sim_time_ms << ','
      << detail::format_double(r.loss);
  return out.str();
}

inline std::string to_csv(const std::vector<RunRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) out += to_csv_line(r) + "\n";
  return out;
}

inline std::vector<RunRow> parse_csv(std::string_view text) {
  std::vector<RunRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kResultsHeader) throw ParseError("unexpected results header", 1, 1);
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 9) throw ParseError("expected 9 columns, got " + std::to_string(f.size()), line_no, 1);
    RunRow r;
    r.scenario = f[0];
    auto seed = detail::parse_number<std::uint64_t>(f[1]);
    auto mode = plan_detail::mode(f[2]);
    auto p = detail::parse_double(f[3]);
    auto q = detail::parse_double(f[4]);
    auto steps = detail::parse_number<int>(f[5]);
    auto done = detail::parse_number<int>(f[6]);
    auto sim = detail::parse_number<Millis>(f[7]);
    auto loss = detail::parse_double(f[8]);
    if (!seed || !mode || !p || !q || !steps || !done || !sim || !loss) throw ParseError("malformed row", line_no, 1);
    r.seed = *seed;
    r.mode = *mode;
    r.p = *p;
    r.q = *q;
    r.steps = *steps;
    r.completed = *done != 0;
    r.sim_time_ms = *sim;
    r.loss = *loss;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Resolves a plan's field entry to a scenario.
using FieldResolver = std::function<Scenario(const std::string&)>;

inline Scenario configure_run(Scenario s, const ExperimentPlan& plan, RobotMode mode, double q) {
  s.set_param("p", detail::format_double(plan.p));
  s.set_param("q", detail::format_double(q));
  s.set_param("loss", detail::format_double(plan.loss));
  s.set_param("mode", to_string(mode));
  if (plan.reservation) s.set_param("reservation", *plan.reservation);
  if (plan.trips) s.set_param("trips", std::to_string(*plan.trips));
  return s;
}

/// Executes every run of the plan. A run that throws is recorded as not
/// completed and the plan continues. Rows come back in plan order whatever
/// the job count.
inline std::vector<RunRow> run_plan(const ExperimentPlan& plan, const FieldResolver& resolve) {
  struct Job {
    const Scenario* field;
    std::string name;
    double q;
    std::size_t mode_index;
    int rep;
  };
  std::vector<Scenario> scenarios;
  std::vector<std::string> names;
  for (const auto& f : plan.fields) {
    scenarios.push_back(resolve(f));
    names.push_back(scenarios.back().params.name.empty() ? f : scenarios.back().params.name);
  }
  std::vector<Job> jobs;
  for (std::size_t fi = 0; fi < scenarios.size(); ++fi) {
    for (double q : plan.q) {
      for (std::size_t mi = 0; mi < plan.modes.size(); ++mi) {
        for (int rep = 0; rep < plan.repetitions; ++rep) jobs.push_back({&scenarios[fi], names[fi], q, mi, rep});
      }
    }
  }
  std::vector<RunRow> rows(jobs.size());
  auto execute = [&](std::size_t i) {
    const Job& j = jobs[i];
    RunRow& r = rows[i];
    r.scenario = j.name;
    r.seed = plan.seed_for(j.mode_index, j.rep);
    r.mode = plan.modes[j.mode_index];
    r.p = plan.p;
    r.q = j.q;
    r.loss = plan.loss;
    try {
      EngineOptions opt;
      opt.seed = r.seed;
      const RunResult res = run_scenario(configure_run(*j.field, plan, r.mode, j.q), opt);
      r.steps = res.total_steps;
      r.completed = res.completed;
      r.sim_time_ms = res.sim_time;
    } catch (const std::exception& e) {
      r.completed = false;
      r.error = e.what();
    }
  };
  const int workers = std::max(1, std::min<int>(plan.jobs, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) execute(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) execute(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return rows;
}

/// Per-condition aggregate.
struct ConditionSummary {
  std::string scenario;
  double q = 0;
  RobotMode mode = RobotMode::kAfada;
  int runs = 0;
  int failed = 0;
  std::vector<double> steps;  // completed runs only
  std::optional<double> median;
};

struct Comparison {
  std::string scenario;
  double q = 0;
  MannWhitney test;
};

struct ResultTable {
  std::vector<ConditionSummary> conditions;
  std::vector<Comparison> comparisons;
  int max_repetitions = 0;
};

/// Aggregates rows in order of first appearance. Failed runs are excluded
/// from medians and tests.
inline ResultTable summarize(const std::vector<RunRow>& rows) {
  ResultTable t;
  std::map<std::tuple<std::string, double, int>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.scenario, r.q, static_cast<int>(r.mode));
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, t.conditions.size()).first;
      t.conditions.push_back({r.scenario, r.q, r.mode});
    }
    auto& c = t.conditions[it->second];
    ++c.runs;
    if (r.completed) {
      c.steps.push_back(r.steps);
    } else {
      ++c.failed;
    }
  }
  for (auto& c : t.conditions) {
    if (!c.steps.empty()) c.median = median(c.steps);
    t.max_repetitions = std::max(t.max_repetitions, c.runs);
  }
  for (std::size_t i = 0; i < t.conditions.size(); ++i) {
    const auto& a = t.conditions[i];
    if (a.mode != RobotMode::kAfada || a.steps.empty()) continue;
    for (const auto& b : t.conditions) {
      if (b.mode == RobotMode::kSelfNav && b.scenario == a.scenario && b.q == a.q && !b.steps.empty()) {
        t.comparisons.push_back({a.scenario, a.q, mann_whitney_u(a.steps, b.steps)});
      }
    }
  }
  return t;
}

namespace report_detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

}  // namespace report_detail

/// Markdown report, one panel per field. A function of the rows only, so
/// it regenerates byte-identically from a saved CSV.
inline std::string render_report(const std::vector<RunRow>& rows) {
  const ResultTable t = summarize(rows);
  std::ostringstream out;
  out << "# Navigation steps by field\n\n";
  out << "Runs: " << rows.size() << ". Failed runs are excluded from medians and tests.\n";
  std::vector<std::string> fields;
  for (const auto& c : t.conditions) {
    if (std::find(fields.begin(), fields.end(), c.scenario) == fields.end()) fields.push_back(c.scenario);
  }
  for (const auto& f : fields) {
    out << "\n## " << f << "\n\n";
    out << "| q | mode | runs | completed | failed | median | min | max |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : t.conditions) {
      if (c.scenario != f) continue;
      out << "| " << detail::format_double(c.q) << " | " << to_string(c.mode) << " | " << c.runs << " | "
          << c.steps.size() << " | " << c.failed << " | ";
      if (c.median) {
        const auto [lo, hi] = std::minmax_element(c.steps.begin(), c.steps.end());
        out << detail::format_double(*c.median) << " | " << *lo << " | " << *hi << " |\n";
      } else {
        out << "- | - | - |\n";
      }
    }
    for (const auto& c : t.conditions) {
      if (c.scenario != f || c.steps.empty()) continue;
      out << "\n" << detail::format_double(c.q) << " " << to_string(c.mode) << " steps:";
      for (double s : c.steps) out << ' ' << s;
      out << "\n";
    }
  }
  if (t.max_repetitions > 1 && !t.comparisons.empty()) {
    out << "\n## Statistics\n\n";
    out << "Mann-Whitney U, afada against selfnav, two-tailed normal approximation.\n\n";
    out << "| field | q | U | n1 | n2 | P |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& c : t.comparisons) {
      out << "| " << c.scenario << " | " << detail::format_double(c.q) << " | " << detail::format_double(c.test.u)
          << " | " << c.test.n1 << " | " << c.test.n2 << " | " << report_detail::fixed(c.test.p, 3) << " |\n";
    }
  }
  return out.str();
}

}  // namespace afada
