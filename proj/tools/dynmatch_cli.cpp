// Command-line front end: simulate, sweep, bounds, static, chain.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "dynmatch/dynmatch.hpp"

namespace {

using namespace dynmatch;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunFlags {
  std::string config;
  std::string name;
  std::uint64_t seed = 0;
  std::string policy;
  double period = 0.0;
  std::size_t reps = 1;
  std::string out;
  double m = 0, lambda = 0, d = 0, p = 0, q = 0, kappa = 0;
  std::string model;
  std::string pool_file;
  std::uint64_t arrivals = 0, warmup = 0, capacity = 0;
  bool traces = false;
  std::size_t jobs = 0;
  std::string sweep_param;
  std::vector<double> sweep_values;

  std::map<std::string, CLI::Option*> opt;
  bool given(const std::string& flag) const {
    auto it = opt.find(flag);
    return it != opt.end() && it->second->count() > 0;
  }
};

void add_run_flags(CLI::App* sub, RunFlags& f, bool sweep) {
  sub->add_option("config", f.config, "Scenario file (key = value with [sections])");
  f.opt["name"] = sub->add_option("--name", f.name, "Scenario name");
  f.opt["seed"] = sub->add_option("--seed", f.seed, "Base seed; replication r uses seed + r");
  f.opt["policy"] = sub->add_option("--policy", f.policy, "greedy | patient | batching");
  f.opt["T"] = sub->add_option("--T", f.period, "Batching period in days");
  f.opt["reps"] = sub->add_option("--reps", f.reps, "Replications per sweep value");
  f.opt["out"] = sub->add_option("--out", f.out, "Output path prefix");
  f.opt["m"] = sub->add_option("--m", f.m, "E arrivals per day");
  f.opt["lambda"] = sub->add_option("--lambda", f.lambda, "Imbalance; H arrive at (1+lambda) m");
  f.opt["d"] = sub->add_option("--d", f.d, "Mean days until an agent becomes critical");
  f.opt["model"] = sub->add_option("--model", f.model, "two_type | homogeneous | matrix");
  f.opt["p"] = sub->add_option("--p", f.p, "E-H compatibility probability (all pairs if homogeneous)");
  f.opt["q"] = sub->add_option("--q", f.q, "E-E compatibility probability");
  f.opt["pool-file"] = sub->add_option("--pool-file", f.pool_file, "Matrix pool file");
  f.opt["arrivals"] = sub->add_option("--arrivals", f.arrivals, "Arrivals per run");
  f.opt["warmup"] = sub->add_option("--warmup", f.warmup, "Agents excluded from statistics");
  f.opt["kappa"] = sub->add_option("--kappa", f.kappa, "Capacity C = kappa x total arrival rate");
  f.opt["capacity"] = sub->add_option("--capacity", f.capacity, "Absolute capacity C");
  f.opt["traces"] = sub->add_flag("--traces", f.traces, "Write a per-replication trace CSV");
  f.opt["jobs"] = sub->add_option("--jobs", f.jobs, "Worker threads (default: logical cores)");
  if (sweep) {
    f.opt["sweep-param"] = sub->add_option("--sweep-param", f.sweep_param, "m | lambda | T");
    f.opt["values"] = sub->add_option("--values", f.sweep_values, "Sweep values")->delimiter(',');
  }
}

Scenario resolve(const RunFlags& f, bool sweep_command) {
  Scenario sc;
  if (!f.config.empty()) {
    sc = load_scenario(f.config);
  } else {
    for (const char* flag : {"seed", "policy", "reps", "out"})
      if (!f.given(flag)) throw InvalidConfig(fmt::format("--{} is required when no config file is given", flag));
  }
  if (f.given("name")) sc.name = f.name;
  if (f.given("seed")) sc.base.seed = f.seed;
  if (f.given("policy") || f.given("T")) {
    const std::string name = f.given("policy") ? f.policy : sc.base.policy.name();
    const double period = f.given("T") ? f.period : sc.base.policy.period;
    sc.base.policy = parse_policy(name, period);
  }
  if (f.given("reps")) sc.replications = f.reps;
  if (f.given("out")) sc.output = f.out;
  if (f.given("m")) sc.base.m = f.m;
  if (f.given("lambda")) sc.base.lambda = f.lambda;
  if (f.given("d")) sc.base.d = f.d;
  if (f.given("arrivals")) sc.base.horizon_arrivals = f.arrivals;
  if (f.given("warmup")) sc.base.warmup_agents = f.warmup;
  if (f.given("kappa")) sc.base.capacity_kappa = f.kappa;
  if (f.given("capacity")) sc.base.capacity = f.capacity;
  if (f.given("traces")) sc.write_traces = f.traces;

  if (f.given("model") || f.given("p") || f.given("q") || f.given("pool-file")) {
    const std::string model = f.given("model") ? f.model : model_name(sc.base.model);
    if (model == "two_type") {
      TwoTypeModel t = std::holds_alternative<TwoTypeModel>(sc.base.model) ? std::get<TwoTypeModel>(sc.base.model)
                                                                            : TwoTypeModel{0.1, 0.04};
      if (f.given("p")) t.p = f.p;
      if (f.given("q")) t.q = f.q;
      sc.base.model = t;
    } else if (model == "homogeneous") {
      HomogeneousModel h = std::holds_alternative<HomogeneousModel>(sc.base.model)
                               ? std::get<HomogeneousModel>(sc.base.model)
                               : HomogeneousModel{0.1};
      if (f.given("p")) h.p = f.p;
      sc.base.model = h;
    } else if (model == "matrix") {
      if (f.given("pool-file")) {
        sc.pool_file = f.pool_file;
        sc.base.model = load_pool_matrix(f.pool_file);
      } else if (!std::holds_alternative<MatrixModel>(sc.base.model)) {
        throw InvalidConfig("--model matrix needs --pool-file");
      }
    } else {
      throw InvalidConfig("--model must be two_type, homogeneous or matrix");
    }
  }

  if (f.given("sweep-param") || f.given("values")) {
    Sweep s = sc.sweep.value_or(Sweep{});
    if (f.given("sweep-param")) {
      if (f.sweep_param == "m")
        s.parameter = SweepParameter::M;
      else if (f.sweep_param == "lambda")
        s.parameter = SweepParameter::Lambda;
      else if (f.sweep_param == "T")
        s.parameter = SweepParameter::T;
      else
        throw InvalidConfig("--sweep-param must be m, lambda or T");
    }
    if (f.given("values")) s.values = f.sweep_values;
    sc.sweep = s;
  }
  if (sweep_command && !sc.sweep) throw InvalidConfig("sweep needs a [sweep] section or --sweep-param/--values");
  if (!sweep_command && sc.sweep) throw InvalidConfig("the scenario defines a sweep; run it with the sweep command");
  validate(sc);
  return sc;
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(t));
}

std::string mean_se_text(const std::vector<double>& xs) {
  const MeanSe s = mean_and_se(xs);
  if (std::isnan(s.se)) return fmt::format("{:.4g}", s.mean);
  return fmt::format("{:.4g} +/- {:.2g}", s.mean, s.se);
}

int run_command(const RunFlags& f, bool sweep_command) {
  const Scenario sc = resolve(f, sweep_command);
  const std::size_t jobs = f.given("jobs") ? std::max<std::size_t>(1, f.jobs) : default_jobs();
  const ScenarioResult res = run_scenario(sc, jobs);
  write_scenario_outputs(sc, res);
  write_metadata(sc, now_utc(), jobs);

  const std::size_t groups = res.rows.size() / sc.replications;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<double> mh, mth, we, wh;
    for (std::size_t r = 0; r < sc.replications; ++r) {
      const auto& rep = res.rows[g * sc.replications + r].report;
      mh.push_back(rep.hard().match_rate);
      mth.push_back(rep.hard().mean_matching_time);
      wh.push_back(rep.hard().mean_waiting);
      we.push_back(rep.easy().match_rate);
    }
    const RunRow& first = res.rows[g * sc.replications];
    std::string label = sc.sweep ? fmt::format("{}={} ", to_string(sc.sweep->parameter), first.value) : "";
    std::cout << fmt::format("{}{}: M(H) {} [theory {:.4g}]  M(E) {}  W(H) {} [theory {:.4g}]  MT(H) {}\n", label,
                             sc.base.policy.name(), mean_se_text(mh), first.theory.q_H, mean_se_text(we),
                             mean_se_text(wh), first.theory.w_H, mean_se_text(mth));
  }
  std::cout << fmt::format("wrote {}.csv, {}_summary.json, {}_meta.json\n", sc.output, sc.output, sc.output);
  return 0;
}

std::ostream& open_output(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) throw Error("cannot write '" + path + "'");
  return *holder;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and analysis toolkit for dynamic two-type matching markets"};
  app.require_subcommand(1);

  RunFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Run replications of one market configuration");
  add_run_flags(simulate, sim_flags, false);

  RunFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Run replications across a parameter sweep");
  add_run_flags(sweep, sweep_flags, true);

  double b_lambda = 1.0, b_d = 1.0, b_tmin = 0.01, b_tmax = 1.0;
  std::size_t b_steps = 100;
  std::vector<double> b_periods;
  std::string b_out;
  auto* bounds = app.add_subcommand("bounds", "Batching bounds with greedy and patient reference lines");
  bounds->add_option("--lambda", b_lambda, "Imbalance")->required();
  bounds->add_option("--d", b_d, "Mean sojourn");
  auto* b_list = bounds->add_option("--T", b_periods, "Explicit periods")->delimiter(',');
  bounds->add_option("--T-min", b_tmin, "Smallest period of the grid");
  bounds->add_option("--T-max", b_tmax, "Largest period of the grid");
  bounds->add_option("--steps", b_steps, "Grid points");
  bounds->add_option("--out", b_out, "CSV path (stdout when omitted)");

  std::size_t s_m = 500, s_seeds = 10;
  double s_lambda = 1.0, s_p = 0.1, s_q = 0.1;
  std::uint64_t s_seed = 1;
  std::string s_model = "two_type", s_pool, s_out;
  auto* stat = app.add_subcommand("static", "SMM, FWP and sequential-greedy coverage of sampled static pools");
  stat->add_option("--m", s_m, "E agents in the pool");
  stat->add_option("--lambda", s_lambda, "H agents = round((1+lambda) m)");
  stat->add_option("--model", s_model, "two_type | homogeneous | matrix");
  stat->add_option("--p", s_p, "E-H probability (all pairs if homogeneous)");
  stat->add_option("--q", s_q, "E-E probability");
  stat->add_option("--pool-file", s_pool, "Matrix pool file");
  stat->add_option("--seeds", s_seeds, "Number of sampled pools");
  stat->add_option("--seed", s_seed, "First seed");
  stat->add_option("--out", s_out, "Per-pool CSV (stdout summary only when omitted)");

  std::string c_kind = "ml", c_out;
  double c_m = 100, c_lambda = 0.5, c_p = 0.1, c_q = 0.1;
  int c_capacity = 20;
  bool c_as_written = false;
  auto* chain = app.add_subcommand("chain", "Stationary distributions of the bounding and greedy chains");
  chain->add_option("--kind", c_kind, "ml | mu | ctmc")->check(CLI::IsMember({"ml", "mu", "ctmc"}));
  chain->add_option("--m", c_m, "Arrival rate of E agents per unit sojourn");
  chain->add_option("--lambda", c_lambda, "Imbalance");
  chain->add_option("--p", c_p, "E-H probability");
  chain->add_option("--q", c_q, "E-E probability (ctmc)");
  chain->add_option("--capacity", c_capacity, "Capacity C (ctmc)");
  chain->add_flag("--as-written", c_as_written, "ctmc: H arrivals miss E agents with (1-q)^y");
  chain->add_option("--out", c_out, "CSV of the distribution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return run_command(sim_flags, false);
    if (*sweep) return run_command(sweep_flags, true);

    if (*bounds) {
      std::vector<double> periods = b_periods;
      if (b_list->count() == 0) {
        if (!(b_tmin > 0.0) || !(b_tmax >= b_tmin) || b_steps < 1) throw InvalidConfig("invalid T grid");
        for (std::size_t i = 0; i < b_steps; ++i)
          periods.push_back(b_steps == 1 ? b_tmin
                                         : b_tmin + (b_tmax - b_tmin) * static_cast<double>(i) /
                                                        static_cast<double>(b_steps - 1));
      }
      std::unique_ptr<std::ofstream> holder;
      write_bound_curves_csv(emit_bound_curves(b_lambda, b_d, periods), open_output(b_out, holder));
      return 0;
    }

    if (*stat) {
      CompatModel model;
      if (s_model == "two_type")
        model = TwoTypeModel{s_p, s_q};
      else if (s_model == "homogeneous")
        model = HomogeneousModel{s_p};
      else if (s_model == "matrix")
        model = load_pool_matrix(s_pool);
      else
        throw InvalidConfig("--model must be two_type, homogeneous or matrix");
      std::unique_ptr<std::ofstream> holder;
      std::ostream* csv = s_out.empty() ? nullptr : &open_output(s_out, holder);
      if (csv) *csv << "seed,n_E,n_H,edges,smm,fwp,greedy_matched_fraction\n";
      std::vector<double> smms, fwps, greedy;
      for (std::size_t i = 0; i < s_seeds; ++i) {
        const Seed seed = s_seed + i;
        const CompatibilityGraph g = sample_static_pool(s_m, s_lambda, model, seed);
        std::vector<Vertex> order(g.size());
        std::iota(order.begin(), order.end(), Vertex{0});
        Rng rng(derive_seed(seed, 3));
        rng.shuffle(std::span(order));
        const double frac =
            2.0 * static_cast<double>(sequential_greedy_match(g, order).size()) / static_cast<double>(g.size());
        smms.push_back(smm(g));
        fwps.push_back(fwp(g));
        greedy.push_back(frac);
        if (csv)
          *csv << fmt::format("{},{},{},{},{},{},{}\n", seed, s_m, g.size() - s_m, g.edge_count(), smms.back(),
                              fwps.back(), frac);
      }
      std::cout << fmt::format("SMM {}  FWP {}  sequential greedy {}\n", mean_se_text(smms), mean_se_text(fwps),
                               mean_se_text(greedy));
      return 0;
    }

    if (*chain) {
      std::unique_ptr<std::ofstream> holder;
      std::ostream* csv = c_out.empty() ? nullptr : &open_output(c_out, holder);
      if (c_kind == "ctmc") {
        const Ctmc2D ctmc = greedy_ctmc(c_m, c_lambda, c_p, c_q, c_capacity, c_as_written);
        const Stationary2D s = ctmc_stationary_2d(ctmc);
        std::cout << fmt::format("mean H pool {}  mean E pool {}  residual {:.3g}\n", s.mean_x, s.mean_y,
                                 s.residual);
        if (csv) {
          *csv << "x,y,probability\n";
          for (int x = 0; x <= c_capacity; ++x)
            for (int y = 0; x + y <= c_capacity; ++y)
              *csv << fmt::format("{},{},{}\n", x, y, s.pi[ctmc.index(x, y)]);
        }
        return 0;
      }
      const auto make = [&](std::int64_t w) {
        return c_kind == "ml" ? ml_chain(c_m, c_lambda, w) : mu_chain(c_m, c_lambda, c_p, w);
      };
      const BdStationary s = bd_stationary_widening(make, default_half_width(c_m));
      std::cout << fmt::format("states [{}, {}]  mean {}  boundary mass {:.3g}\n", s.lo, s.hi(), s.mean(),
                               s.boundary_mass);
      if (csv) {
        *csv << "x,probability\n";
        for (std::int64_t x = s.lo; x <= s.hi(); ++x) *csv << fmt::format("{},{}\n", x, s.prob(x));
      }
      return 0;
    }
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidParameter& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
