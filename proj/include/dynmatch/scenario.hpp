#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "dynmatch/compat.hpp"
#include "dynmatch/errors.hpp"
#include "dynmatch/sim.hpp"
#include "dynmatch/stats.hpp"
#include "dynmatch/theory.hpp"

namespace dynmatch {

// ---------------------------------------------------------------------------
// Key-value config files: [section] headers and `key = value` lines
// ---------------------------------------------------------------------------

struct ConfigValue {
  std::variant<double, bool, std::string, std::vector<double>> data;
  std::size_t line = 0;
};

using ConfigSection = std::map<std::string, ConfigValue>;
using ConfigDocument = std::map<std::string, ConfigSection>;

namespace detail {

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::string cleaned;
  for (char c : text)
    if (c != '_') cleaned += c;
  char* end = nullptr;
  const double v = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline ConfigValue parse_value(const std::string& text, std::size_t line) {
  ConfigValue v;
  v.line = line;
  if (text.empty()) throw ParseError(line, "missing value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ParseError(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        ++i;
        if (text[i] != '"' && text[i] != '\\') throw ParseError(line, "unsupported escape sequence");
      } else if (text[i] == '"') {
        throw ParseError(line, "unexpected quote inside string");
      }
      out += text[i];
    }
    v.data = out;
    return v;
  }
  if (text == "true" || text == "false") {
    v.data = text == "true";
    return v;
  }
  if (text.front() == '[') {
    if (text.back() != ']') throw ParseError(line, "array must close on the same line");
    std::vector<double> values;
    const std::string inner = trim(text.substr(1, text.size() - 2));
    if (!inner.empty()) {
      for (const auto& item : split(inner, ',')) {
        const auto num = parse_number(item);
        if (!num) throw ParseError(line, "array items must be numbers, got '" + item + "'");
        values.push_back(*num);
      }
    }
    v.data = values;
    return v;
  }
  const auto num = parse_number(text);
  if (!num) throw ParseError(line, "cannot parse value '" + text + "'");
  v.data = *num;
  return v;
}

}  // namespace detail

inline ConfigDocument parse_config(std::istream& in) {
  ConfigDocument doc;
  std::string section;
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(lineno, "malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::is_identifier(section)) throw ParseError(lineno, "invalid section name '" + section + "'");
      if (doc.count(section)) throw ParseError(lineno, "duplicate section [" + section + "]");
      doc[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!detail::is_identifier(key)) throw ParseError(lineno, "invalid key '" + key + "'");
    if (section.empty()) throw ParseError(lineno, "key '" + key + "' appears before any [section]");
    auto& sec = doc[section];
    if (sec.count(key)) throw ParseError(lineno, "duplicate key '" + key + "'");
    sec[key] = detail::parse_value(detail::trim(line.substr(eq + 1)), lineno);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

enum class SweepParameter { M, Lambda, T };

inline std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::M: return "m";
    case SweepParameter::Lambda: return "lambda";
    default: return "T";
  }
}

struct Sweep {
  SweepParameter parameter = SweepParameter::Lambda;
  std::vector<double> values;
};

struct Scenario {
  std::string name = "scenario";
  SimConfig base;
  std::optional<Sweep> sweep;
  std::size_t replications = 1;
  std::string output;
  bool write_traces = false;
  std::string pool_file;  // matrix model source, if any

  Scenario() {
    base.m = 1.0;
    base.lambda = 0.5;
    base.d = 200.0;
    base.model = TwoTypeModel{0.1, 0.04};
    base.horizon_arrivals = 70000;
    base.warmup_agents = 5000;
    base.seed = 1;
  }
};

inline void check_sweep_value(SweepParameter p, double v, const Policy& policy, std::size_t line) {
  const auto fail = [&](const std::string& msg) {
    if (line > 0) throw ParseError(line, msg);
    throw InvalidConfig(msg);
  };
  switch (p) {
    case SweepParameter::M:
      if (!(v > 0.0)) fail("sweep values for m must be positive");
      break;
    case SweepParameter::Lambda:
      if (!(v >= -1.0)) fail("sweep values for lambda must be at least -1");
      break;
    case SweepParameter::T:
      if (policy.kind != Policy::Kind::Batching) fail("a T sweep needs the batching policy");
      if (!(v > 0.0)) fail("sweep values for T must be positive");
      break;
  }
}

namespace detail {

class SectionReader {
 public:
  SectionReader(const ConfigDocument& doc, const std::string& name) : name_(name) {
    if (auto it = doc.find(name); it != doc.end()) section_ = &it->second;
  }

  bool present() const { return section_ != nullptr; }

  const ConfigValue* find(const std::string& key) {
    if (section_ == nullptr) return nullptr;
    auto it = section_->find(key);
    if (it == section_->end()) return nullptr;
    used_.push_back(key);
    return &it->second;
  }

  std::optional<double> number(const std::string& key) {
    const auto* v = find(key);
    if (v == nullptr) return std::nullopt;
    if (const auto* d = std::get_if<double>(&v->data)) return *d;
    throw ParseError(v->line, name_ + "." + key + " must be a number");
  }

  std::optional<std::uint64_t> count(const std::string& key) {
    const auto* v = find(key);
    if (v == nullptr) return std::nullopt;
    const auto* d = std::get_if<double>(&v->data);
    if (d == nullptr || *d < 0.0 || std::floor(*d) != *d || *d > 9.0e15)
      throw ParseError(v->line, name_ + "." + key + " must be a non-negative integer");
    return static_cast<std::uint64_t>(*d);
  }

  std::optional<std::string> text(const std::string& key) {
    const auto* v = find(key);
    if (v == nullptr) return std::nullopt;
    if (const auto* s = std::get_if<std::string>(&v->data)) return *s;
    throw ParseError(v->line, name_ + "." + key + " must be a quoted string");
  }

  std::optional<bool> flag(const std::string& key) {
    const auto* v = find(key);
    if (v == nullptr) return std::nullopt;
    if (const auto* b = std::get_if<bool>(&v->data)) return *b;
    throw ParseError(v->line, name_ + "." + key + " must be true or false");
  }

  std::size_t line_of(const std::string& key) const {
    if (section_ == nullptr) return 0;
    auto it = section_->find(key);
    return it == section_->end() ? 0 : it->second.line;
  }

  void reject_unknown() const {
    if (section_ == nullptr) return;
    for (const auto& [key, value] : *section_)
      if (std::find(used_.begin(), used_.end(), key) == used_.end())
        throw ParseError(value.line, "unknown key '" + key + "' in [" + name_ + "]");
  }

 private:
  std::string name_;
  const ConfigSection* section_ = nullptr;
  std::vector<std::string> used_;
};

}  // namespace detail

/// Builds a scenario from a parsed document. Relative pool-file paths are
/// resolved against `base_dir`.
inline Scenario scenario_from_document(const ConfigDocument& doc, const std::filesystem::path& base_dir = {}) {
  for (const auto& [name, section] : doc) {
    if (name != "scenario" && name != "market" && name != "compatibility" && name != "policy" && name != "sweep") {
      const std::size_t line = section.empty() ? 0 : section.begin()->second.line;
      throw ParseError(line, "unknown section [" + name + "]");
    }
  }
  Scenario sc;
  detail::SectionReader scenario(doc, "scenario");
  if (auto v = scenario.text("name")) sc.name = *v;
  if (auto v = scenario.count("seed")) sc.base.seed = *v;
  if (auto v = scenario.count("replications")) {
    if (*v < 1) throw ParseError(scenario.line_of("replications"), "replications must be at least 1");
    sc.replications = *v;
  }
  if (auto v = scenario.text("output")) sc.output = *v;
  if (auto v = scenario.flag("traces")) sc.write_traces = *v;
  scenario.reject_unknown();

  detail::SectionReader market(doc, "market");
  if (auto v = market.number("m")) sc.base.m = *v;
  if (auto v = market.number("lambda")) sc.base.lambda = *v;
  if (auto v = market.number("d")) sc.base.d = *v;
  if (auto v = market.count("arrivals")) sc.base.horizon_arrivals = *v;
  if (auto v = market.count("warmup")) sc.base.warmup_agents = *v;
  if (auto v = market.number("capacity_kappa")) sc.base.capacity_kappa = *v;
  if (auto v = market.count("capacity")) sc.base.capacity = *v;
  if (auto v = market.flag("verify_invariants")) sc.base.verify_invariants = *v;
  market.reject_unknown();

  detail::SectionReader compat(doc, "compatibility");
  const std::string model = compat.text("model").value_or("two_type");
  const auto p = compat.number("p");
  const auto q = compat.number("q");
  const auto file = compat.text("file");
  if (model == "two_type") {
    sc.base.model = TwoTypeModel{p.value_or(0.1), q.value_or(0.04)};
  } else if (model == "homogeneous") {
    if (q) throw ParseError(compat.line_of("q"), "q is not used by the homogeneous model");
    sc.base.model = HomogeneousModel{p.value_or(0.1)};
  } else if (model == "matrix") {
    if (!file) throw ParseError(compat.line_of("model"), "the matrix model needs compatibility.file");
    std::filesystem::path path(*file);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    sc.pool_file = path.string();
    try {
      sc.base.model = load_pool_matrix(sc.pool_file);
    } catch (const ParseError& e) {
      throw ParseError(compat.line_of("file"), "pool file '" + sc.pool_file + "': " + e.what());
    }
  } else {
    throw ParseError(compat.line_of("model"), "model must be two_type, homogeneous or matrix");
  }
  compat.reject_unknown();

  detail::SectionReader policy(doc, "policy");
  const std::string policy_name = policy.text("name").value_or("greedy");
  const double period = policy.number("T").value_or(0.0);
  try {
    sc.base.policy = parse_policy(policy_name, period);
  } catch (const InvalidConfig& e) {
    throw ParseError(policy.line_of("name"), e.what());
  }
  policy.reject_unknown();

  detail::SectionReader sweep(doc, "sweep");
  if (sweep.present()) {
    const auto param = sweep.text("parameter");
    if (!param) throw ParseError(0, "[sweep] needs a parameter");
    Sweep s;
    if (*param == "m")
      s.parameter = SweepParameter::M;
    else if (*param == "lambda")
      s.parameter = SweepParameter::Lambda;
    else if (*param == "T")
      s.parameter = SweepParameter::T;
    else
      throw ParseError(sweep.line_of("parameter"), "sweep parameter must be m, lambda or T");
    const auto* values = sweep.find("values");
    if (values == nullptr) throw ParseError(sweep.line_of("parameter"), "[sweep] needs a values list");
    const auto* list = std::get_if<std::vector<double>>(&values->data);
    if (list == nullptr) throw ParseError(values->line, "sweep.values must be a list of numbers");
    if (list->empty()) throw ParseError(values->line, "sweep.values is empty");
    for (double v : *list) check_sweep_value(s.parameter, v, sc.base.policy, values->line);
    s.values = *list;
    sc.sweep = s;
    sweep.reject_unknown();
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file '" + path + "'");
  return scenario_from_document(parse_config(in), std::filesystem::path(path).parent_path());
}

inline SimConfig apply_sweep_value(SimConfig c, SweepParameter p, double v) {
  switch (p) {
    case SweepParameter::M: c.m = v; break;
    case SweepParameter::Lambda: c.lambda = v; break;
    case SweepParameter::T: c.policy.period = v; break;
  }
  return c;
}

/// Final checks once file values and command-line overrides are merged.
inline void validate(const Scenario& sc) {
  if (sc.replications < 1) throw InvalidConfig("replications must be at least 1");
  if (sc.output.empty()) throw InvalidConfig("an output prefix is required");
  if (!sc.sweep) {
    validate(sc.base);
    return;
  }
  if (sc.sweep->values.empty()) throw InvalidConfig("sweep values are empty");
  for (double v : sc.sweep->values) {
    check_sweep_value(sc.sweep->parameter, v, sc.base.policy, 0);
    validate(apply_sweep_value(sc.base, sc.sweep->parameter, v));
  }
}


/// Limits (greedy, patient) or bounds (batching) matching a configuration.
inline Predictions theory_for(const SimConfig& c) {
  if (c.lambda < 0.0) return small_lambda_limits(c.lambda, c.d);
  switch (c.policy.kind) {
    case Policy::Kind::Greedy: return greedy_limits(c.lambda, c.d);
    case Policy::Kind::Patient: return patient_limits(c.lambda, c.d);
    default: return batching_bounds(c.lambda, c.d, c.policy.period);
  }
}

// ---------------------------------------------------------------------------
// Replications
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, count) on `jobs` threads. If several calls throw,
/// the exception of the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::exception_ptr> errors(count);
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

struct RunRow {
  std::size_t value_index = 0;
  double value = kNaN;
  std::size_t replication = 0;
  SimConfig config;
  Report report;
  Predictions theory;
  Predictions universal;  // policy-free bounds, NaN when lambda < 0
  UnmatchedHardWaiting unmatched{kNaN, kNaN};
};

struct ScenarioResult {
  std::vector<RunRow> rows;
};

inline std::string trace_path(const Scenario& sc, std::size_t value_index, std::size_t rep) {
  return fmt::format("{}_trace_v{}_r{}.csv", sc.output, value_index, rep);
}

inline ScenarioResult run_scenario(const Scenario& sc, std::size_t jobs) {
  validate(sc);
  const std::filesystem::path prefix(sc.output);
  if (sc.write_traces && prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  const std::vector<double> values = sc.sweep ? sc.sweep->values : std::vector<double>{kNaN};
  ScenarioResult result;
  result.rows.resize(values.size() * sc.replications);
  parallel_for(result.rows.size(), jobs, [&](std::size_t i) {
    RunRow& row = result.rows[i];
    row.value_index = i / sc.replications;
    row.replication = i % sc.replications;
    row.value = values[row.value_index];
    row.config = sc.sweep ? apply_sweep_value(sc.base, sc.sweep->parameter, row.value) : sc.base;
    row.config.seed = sc.base.seed + row.replication;
    const SimTrace trace = run_simulation(row.config);
    if (sc.write_traces) {
      const std::string path = trace_path(sc, row.value_index, row.replication);
      std::ofstream out(path);
      if (!out) throw Error("cannot write '" + path + "'");
      write_trace_csv(trace, out);
    }
    row.report = summarize(trace, row.config.warmup_agents);
    row.theory = theory_for(row.config);
    if (row.config.lambda >= 0.0) {
      row.universal = any_policy_upper_bound(row.config.lambda, row.config.d);
    } else {
      row.universal = {kNaN, kNaN, kNaN, kNaN, kNaN};
    }
    if (row.config.lambda > 0.0) row.unmatched = unmatched_hard_waiting_candidates(row.config.lambda, row.config.d);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& theory_csv_columns() {
  static const std::vector<std::string> columns = {
      "theory_q_H",   "theory_q_E",    "theory_w_H", "theory_w_E", "theory_dist_rate_H",
      "bound_q_H_any", "bound_w_H_any", "unmatched_w_H_memoryless", "unmatched_w_H_stated"};
  return columns;
}

inline std::vector<double> theory_values(const RunRow& r) {
  return {r.theory.q_H,  r.theory.q_E,     r.theory.w_H,         r.theory.w_E,     r.theory.dist_rate_H,
          r.universal.q_H, r.universal.w_H, r.unmatched.memoryless, r.unmatched.stated};
}

inline void write_rows_csv(const Scenario& sc, const ScenarioResult& res, std::ostream& out) {
  out << "value_index,parameter,value,replication,seed,policy,m,lambda,d,T";
  for (const auto& c : report_csv_columns()) out << ',' << c;
  for (const auto& c : theory_csv_columns()) out << ',' << c;
  out << '\n';
  const std::string param = sc.sweep ? to_string(sc.sweep->parameter) : "";
  for (const auto& r : res.rows) {
    const auto& c = r.config;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},", r.value_index, param, format_number(r.value),
                       r.replication, c.seed, c.policy.name(), c.m, c.lambda, c.d,
                       c.policy.kind == Policy::Kind::Batching ? format_number(c.policy.period) : "");
    out << report_csv_row(r.report);
    for (double v : theory_values(r)) out << ',' << format_number(v);
    out << '\n';
  }
}

inline nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

inline nlohmann::ordered_json summary_json(const Scenario& sc, const ScenarioResult& res) {
  nlohmann::ordered_json j;
  j["scenario"] = sc.name;
  j["policy"] = sc.base.policy.name();
  j["replications"] = sc.replications;
  j["sweep_parameter"] = sc.sweep ? nlohmann::ordered_json(to_string(sc.sweep->parameter)) : nullptr;
  j["groups"] = nlohmann::ordered_json::array();
  const std::size_t groups = res.rows.size() / sc.replications;
  const auto& report_names = report_csv_columns();
  const auto& theory_names = theory_csv_columns();
  for (std::size_t g = 0; g < groups; ++g) {
    nlohmann::ordered_json group;
    const RunRow& first = res.rows[g * sc.replications];
    group["value"] = number_or_null(first.value);
    group["seeds"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < sc.replications; ++r) group["seeds"].push_back(res.rows[g * sc.replications + r].config.seed);
    nlohmann::ordered_json metrics;
    for (std::size_t k = 0; k < report_names.size(); ++k) {
      std::vector<double> xs;
      for (std::size_t r = 0; r < sc.replications; ++r)
        xs.push_back(report_values(res.rows[g * sc.replications + r].report)[k]);
      const MeanSe s = mean_and_se(xs);
      metrics[report_names[k]] = {{"mean", number_or_null(s.mean)}, {"se", number_or_null(s.se)}};
    }
    group["metrics"] = metrics;
    nlohmann::ordered_json theory;
    const auto tv = theory_values(first);
    for (std::size_t k = 0; k < theory_names.size(); ++k) theory[theory_names[k]] = number_or_null(tv[k]);
    group["theory"] = theory;
    j["groups"].push_back(group);
  }
  return j;
}

inline nlohmann::ordered_json config_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["m"] = c.m;
  j["lambda"] = c.lambda;
  j["d"] = c.d;
  j["policy"] = c.policy.name();
  if (c.policy.kind == Policy::Kind::Batching) j["T"] = c.policy.period;
  j["arrivals"] = c.horizon_arrivals;
  j["warmup"] = c.warmup_agents;
  j["capacity_kappa"] = c.capacity_kappa ? nlohmann::ordered_json(*c.capacity_kappa) : nullptr;
  j["capacity"] = c.capacity ? nlohmann::ordered_json(*c.capacity) : nullptr;
  j["seed"] = c.seed;
  j["model"] = model_name(c.model);
  if (const auto* t = std::get_if<TwoTypeModel>(&c.model)) {
    j["p"] = t->p;
    j["q"] = t->q;
  } else if (const auto* h = std::get_if<HomogeneousModel>(&c.model)) {
    j["p"] = h->p;
  } else {
    j["matrix_rows"] = std::get<MatrixModel>(c.model).n;
  }
  return j;
}

inline nlohmann::ordered_json scenario_json(const Scenario& sc) {
  nlohmann::ordered_json j;
  j["name"] = sc.name;
  j["replications"] = sc.replications;
  j["output"] = sc.output;
  j["traces"] = sc.write_traces;
  if (!sc.pool_file.empty()) j["pool_file"] = sc.pool_file;
  j["base"] = config_json(sc.base);
  if (sc.sweep) {
    j["sweep"] = {{"parameter", to_string(sc.sweep->parameter)}, {"values", sc.sweep->values}};
  } else {
    j["sweep"] = nullptr;
  }
  return j;
}

/// Writes <prefix>.csv and <prefix>_summary.json. The metadata file with a
/// timestamp is written separately so these stay reproducible.
inline void write_scenario_outputs(const Scenario& sc, const ScenarioResult& res) {
  const std::filesystem::path prefix(sc.output);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  {
    std::ofstream out(sc.output + ".csv");
    if (!out) throw Error("cannot write '" + sc.output + ".csv'");
    write_rows_csv(sc, res, out);
  }
  {
    std::ofstream out(sc.output + "_summary.json");
    if (!out) throw Error("cannot write '" + sc.output + "_summary.json'");
    out << summary_json(sc, res).dump(2) << '\n';
  }
}

inline void write_metadata(const Scenario& sc, const std::string& timestamp, std::size_t jobs) {
  nlohmann::ordered_json j;
  j["generated_at"] = timestamp;
  j["jobs"] = jobs;
  j["scenario"] = scenario_json(sc);
  const std::filesystem::path prefix(sc.output);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::ofstream out(sc.output + "_meta.json");
  if (!out) throw Error("cannot write '" + sc.output + "_meta.json'");
  out << j.dump(2) << '\n';
}

}  // namespace dynmatch
