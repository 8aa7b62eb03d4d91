#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "dynmatch/scenario.hpp"

using namespace dynmatch;

namespace {

ConfigDocument parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

Scenario scenario(const std::string& text) { return scenario_from_document(parse(text)); }

std::size_t parse_error_line(const std::string& text) {
  try {
    scenario(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dynmatch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Scenario quick_scenario(const std::string& output) {
  Scenario sc;
  sc.name = "quick";
  sc.base.horizon_arrivals = 4000;
  sc.base.warmup_agents = 500;
  sc.base.d = 20.0;
  sc.replications = 3;
  sc.output = output;
  return sc;
}

}  // namespace

TEST(ConfigParser, ValuesAndComments) {
  const auto doc = parse(R"(
# leading comment
[market]
m = 2.5        # trailing comment
arrivals = 70_000
verify_invariants = true

[scenario]
name = "a # not a comment"
[sweep]
values = [0.5, 1, 2e0]
)");
  EXPECT_EQ(std::get<double>(doc.at("market").at("m").data), 2.5);
  EXPECT_EQ(std::get<double>(doc.at("market").at("arrivals").data), 70000.0);
  EXPECT_EQ(std::get<bool>(doc.at("market").at("verify_invariants").data), true);
  EXPECT_EQ(std::get<std::string>(doc.at("scenario").at("name").data), "a # not a comment");
  EXPECT_EQ(std::get<std::vector<double>>(doc.at("sweep").at("values").data), (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_EQ(doc.at("market").at("m").line, 4u);
}

TEST(ConfigParser, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("[market]\nm 2\n"), 2u);
  EXPECT_EQ(line_of("[market\n"), 1u);
  EXPECT_EQ(line_of("[a]\nx = 1\n[a]\n"), 3u);
  EXPECT_EQ(line_of("[a]\nx = 1\nx = 2\n"), 3u);
  EXPECT_EQ(line_of("[a]\n\nx = \"open\n"), 3u);
  EXPECT_EQ(line_of("[a]\nx = [1, b]\n"), 2u);
  EXPECT_EQ(line_of("[a]\nx = abc\n"), 2u);
}

TEST(ScenarioFromDocument, DefaultsAreTheStylizedMarket) {
  const auto sc = scenario("");
  EXPECT_EQ(sc.base.m, 1.0);
  EXPECT_EQ(sc.base.lambda, 0.5);
  EXPECT_EQ(sc.base.d, 200.0);
  EXPECT_EQ(sc.base.horizon_arrivals, 70000u);
  EXPECT_EQ(sc.base.warmup_agents, 5000u);
  const auto& t = std::get<TwoTypeModel>(sc.base.model);
  EXPECT_EQ(t.p, 0.1);
  EXPECT_EQ(t.q, 0.04);
  EXPECT_EQ(sc.base.policy, Policy::greedy());
  EXPECT_FALSE(sc.sweep.has_value());
}

TEST(ScenarioFromDocument, ReadsEverySection) {
  const auto sc = scenario(R"([scenario]
name = "x"
seed = 9
replications = 4
output = "out/x"
traces = true
[market]
m = 3
lambda = 1
d = 50
arrivals = 1000
warmup = 100
capacity_kappa = 4
[compatibility]
model = "homogeneous"
p = 0.2
[policy]
name = "batching"
T = 7
[sweep]
parameter = "T"
values = [1, 2]
)");
  EXPECT_EQ(sc.name, "x");
  EXPECT_EQ(sc.base.seed, 9u);
  EXPECT_EQ(sc.replications, 4u);
  EXPECT_TRUE(sc.write_traces);
  EXPECT_EQ(sc.base.m, 3.0);
  EXPECT_EQ(sc.base.capacity_kappa, 4.0);
  EXPECT_EQ(std::get<HomogeneousModel>(sc.base.model).p, 0.2);
  EXPECT_EQ(sc.base.policy, Policy::batching(7.0));
  ASSERT_TRUE(sc.sweep.has_value());
  EXPECT_EQ(sc.sweep->parameter, SweepParameter::T);
}

TEST(ScenarioFromDocument, RejectsBadInput) {
  EXPECT_EQ(parse_error_line("[market]\nm = 1\nspeed = 3\n"), 3u);
  EXPECT_EQ(parse_error_line("[bogus]\nx = 1\n"), 2u);
  EXPECT_EQ(parse_error_line("[market]\narrivals = 1.5\n"), 2u);
  EXPECT_EQ(parse_error_line("[policy]\nname = \"fifo\"\n"), 2u);
  EXPECT_EQ(parse_error_line("[sweep]\nparameter = \"lambda\"\nvalues = []\n"), 3u);
  EXPECT_EQ(parse_error_line("[sweep]\nparameter = \"d\"\nvalues = [1]\n"), 2u);
  EXPECT_EQ(parse_error_line("[sweep]\nparameter = \"T\"\nvalues = [1]\n"), 3u);
  EXPECT_EQ(parse_error_line("[scenario]\nreplications = 0\n"), 2u);
  EXPECT_EQ(parse_error_line("[compatibility]\nmodel = \"homogeneous\"\nq = 0.1\n"), 3u);
  EXPECT_EQ(parse_error_line("[compatibility]\nmodel = \"matrix\"\n"), 2u);
}

TEST(ScenarioFromDocument, BundledFilesLoad) {
  const std::filesystem::path dir(DYNMATCH_SCENARIO_DIR);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".toml") continue;
    const auto sc = load_scenario(entry.path().string());
    EXPECT_NO_THROW(validate(sc)) << entry.path();
  }
  const auto matrix = load_scenario((dir / "matrix_pool.toml").string());
  EXPECT_EQ(std::get<MatrixModel>(matrix.base.model).n, 6u);
  const auto sweep = load_scenario((dir / "sweep_lambda.toml").string());
  EXPECT_EQ(sweep.sweep->values, (std::vector<double>{0.222, 0.857, 2.0}));
  EXPECT_THROW(load_scenario((dir / "missing.toml").string()), InvalidConfig);
}

TEST(Scenario, ValidationNeedsOutput) {
  Scenario sc;
  EXPECT_THROW(validate(sc), InvalidConfig);
  sc.output = "x";
  EXPECT_NO_THROW(validate(sc));
  sc.sweep = Sweep{SweepParameter::T, {5.0}};
  EXPECT_THROW(validate(sc), InvalidConfig);
}

TEST(Scenario, SweepValuesApply) {
  SimConfig c;
  c.policy = Policy::batching(1.0);
  EXPECT_EQ(apply_sweep_value(c, SweepParameter::M, 4.0).m, 4.0);
  EXPECT_EQ(apply_sweep_value(c, SweepParameter::Lambda, 2.0).lambda, 2.0);
  EXPECT_EQ(apply_sweep_value(c, SweepParameter::T, 9.0).policy.period, 9.0);
}

TEST(Scenario, TheoryMatchesPolicy) {
  SimConfig c;
  c.lambda = 1.0;
  c.d = 10.0;
  c.policy = Policy::greedy();
  EXPECT_EQ(theory_for(c).w_H, 5.0);
  c.policy = Policy::patient();
  EXPECT_EQ(theory_for(c).w_H, 10.0);
  c.policy = Policy::batching(2.0);
  EXPECT_EQ(theory_for(c).q_H, batching_bounds(1.0, 10.0, 2.0).q_H);
  c.lambda = -0.5;
  EXPECT_EQ(theory_for(c).q_H, 1.0);
}

TEST(ParallelFor, RunsEveryIndexAndRethrowsLowest) {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 50);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7 || i == 4) throw InvalidConfig(std::to_string(i));
    });
    FAIL();
  } catch (const InvalidConfig& e) {
    EXPECT_STREQ(e.what(), "4");
  }
}

TEST(RunScenario, SeedsAndRowsFollowReplicationIndex) {
  auto sc = quick_scenario("unused");
  sc.sweep = Sweep{SweepParameter::Lambda, {0.5, 1.0}};
  sc.base.seed = 40;
  const auto res = run_scenario(sc, 2);
  ASSERT_EQ(res.rows.size(), 6u);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    EXPECT_EQ(res.rows[i].value_index, i / 3);
    EXPECT_EQ(res.rows[i].replication, i % 3);
    EXPECT_EQ(res.rows[i].config.seed, 40 + i % 3);
    EXPECT_EQ(res.rows[i].config.lambda, i < 3 ? 0.5 : 1.0);
  }
  // Each row can be re-derived by a single run with its seed.
  const auto single = summarize(run_simulation(res.rows[4].config), sc.base.warmup_agents);
  EXPECT_EQ(report_csv_row(single), report_csv_row(res.rows[4].report));
}

TEST(RunScenario, OutputsAreIndependentOfJobs) {
  const auto dir = temp_dir("jobs");
  auto a = quick_scenario((dir / "a").string());
  a.write_traces = true;
  auto b = a;
  b.output = (dir / "b").string();
  const auto ra = run_scenario(a, 1);
  const auto rb = run_scenario(b, 4);
  std::ostringstream ca, cb;
  write_rows_csv(a, ra, ca);
  write_rows_csv(b, rb, cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(summary_json(a, ra).dump(), summary_json(b, rb).dump());
  EXPECT_TRUE(std::filesystem::exists(trace_path(a, 0, 2)));
}

TEST(RunScenario, WritesFiles) {
  const auto dir = temp_dir("files");
  auto sc = quick_scenario((dir / "nested" / "run").string());
  sc.write_traces = true;
  const auto res = run_scenario(sc, 1);
  write_scenario_outputs(sc, res);
  write_metadata(sc, "2026-01-01T00:00:00Z", 1);
  for (const char* suffix : {".csv", "_summary.json", "_meta.json"})
    EXPECT_TRUE(std::filesystem::exists(sc.output + suffix)) << suffix;
  EXPECT_TRUE(std::filesystem::exists(trace_path(sc, 0, 2)));
  std::ifstream csv(sc.output + ".csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("value_index,parameter,value,replication,seed,policy,m,lambda,d,T,match_rate_E", 0), 0u);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 3u);
  const auto summary = summary_json(sc, res);
  EXPECT_EQ(summary["groups"].size(), 1u);
  EXPECT_EQ(summary["groups"][0]["seeds"].size(), 3u);
  EXPECT_TRUE(summary["groups"][0]["metrics"]["match_rate_H"].contains("se"));
}
