// Runs the stylized market under each policy and prints simulated
// statistics next to the large-market predictions.

#include <iostream>

#include <fmt/format.h>

#include "dynmatch/dynmatch.hpp"

int main() {
  using namespace dynmatch;

  SimConfig config;
  config.m = 1.0;
  config.lambda = 0.5;
  config.d = 200.0;
  config.model = TwoTypeModel{0.1, 0.04};
  config.horizon_arrivals = 70000;
  config.warmup_agents = 5000;
  config.seed = 1;

  std::cout << fmt::format("{:<14}{:>10}{:>10}{:>12}{:>12}\n", "policy", "M(H)", "theory", "MT(H)", "theory");
  for (const Policy& policy : {Policy::greedy(), Policy::patient(), Policy::batching(30.0)}) {
    config.policy = policy;
    const Report report = summarize(run_simulation(config), config.warmup_agents);
    const Predictions theory = theory_for(config);
    const std::string label = policy.kind == Policy::Kind::Batching ? "batching T=30" : policy.name();
    std::cout << fmt::format("{:<14}{:>10.3f}{:>10.3f}{:>12.1f}{:>12.1f}\n", label, report.hard().match_rate,
                             theory.q_H, report.hard().mean_matching_time, theory.w_H);
  }
  std::cout << "(batching theory columns are bounds: q at most, w at least)\n";
  return 0;
}
