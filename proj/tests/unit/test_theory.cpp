#include <gtest/gtest.h>

#include <sstream>

#include "dynmatch/stats.hpp"
#include "dynmatch/theory.hpp"

using namespace dynmatch;

TEST(GreedyLimits, StylizedValues) {
  const auto g = greedy_limits(1.33, 360.0);
  EXPECT_NEAR(g.q_H, 0.4292, 1e-4);
  EXPECT_NEAR(g.w_H, 205.5, 0.1);
  EXPECT_EQ(g.q_E, 1.0);
  EXPECT_EQ(g.w_E, 0.0);
  EXPECT_NEAR(g.dist_rate_H, 2.33 / (1.33 * 360.0), 1e-12);
  EXPECT_NEAR(greedy_limits(0.5, 200.0).w_H, 66.67, 0.01);
  const auto big = greedy_limits(1e9, 10.0);
  EXPECT_LT(big.q_H, 1e-8);
  EXPECT_NEAR(big.w_H, 10.0, 1e-6);
  EXPECT_THROW(greedy_limits(-0.1, 1.0), InvalidParameter);
  EXPECT_THROW(greedy_limits(1.0, 0.0), InvalidParameter);
}

TEST(PatientLimits, StylizedValues) {
  const auto p = patient_limits(1.33, 360.0);
  EXPECT_EQ(p.w_H, 360.0);
  EXPECT_NEAR(p.w_H - greedy_limits(1.33, 360.0).w_H, 155.0, 0.5);
  EXPECT_EQ(patient_limits(0.5, 200.0).w_H, 200.0);
  EXPECT_DOUBLE_EQ(p.dist_rate_H, 1.0 / 360.0);
  for (double lambda : {0.1, 0.5, 1.0, 3.0}) EXPECT_EQ(patient_limits(lambda, 7.0).q_H, greedy_limits(lambda, 7.0).q_H);
}

TEST(BatchingBounds, StylizedValues) {
  const auto b = batching_bounds(1.33, 360.0, 30.0);
  const auto g = greedy_limits(1.33, 360.0);
  EXPECT_NEAR(b.q_H, 0.4118, 1e-4);
  EXPECT_NEAR(b.q_E, 0.9596, 2e-4);
  EXPECT_NEAR(g.q_H - b.q_H, 0.017, 0.001);
  EXPECT_NEAR(g.q_E - b.q_E, 0.04, 0.001);
  EXPECT_NEAR(b.w_H - g.w_H, 6.0, 0.5);
  EXPECT_NEAR(b.w_E - g.w_E, 15.0, 0.5);
  EXPECT_NEAR(1.0 - b.q_E, 1.0 / 24.0, 0.002);
}

TEST(BatchingBounds, SmallPeriodRecoversGreedy) {
  for (double lambda : {0.2, 1.0, 3.0}) {
    const auto b = batching_bounds(lambda, 200.0, 1e-6);
    const auto g = greedy_limits(lambda, 200.0);
    EXPECT_NEAR(b.q_H, g.q_H, 1e-5);
    EXPECT_NEAR(b.q_E, g.q_E, 1e-5);
    EXPECT_NEAR(b.w_H, g.w_H, 1e-5 * 200.0);
    EXPECT_NEAR(b.w_E, g.w_E, 1e-5 * 200.0);
  }
  EXPECT_THROW(batching_bounds(1.0, 1.0, 0.0), InvalidParameter);
}

TEST(BatchingBounds, IntegralFormAgrees) {
  for (double lambda = 0.1; lambda <= 4.0; lambda += 0.3)
    for (double T = 1.0; T <= 120.0; T += 7.0)
      for (double d = 30.0; d <= 720.0; d += 69.0) {
        const double closed = batching_bounds(lambda, d, T).w_H;
        const double integral = batching_waiting_lower_bound_integral_form(lambda, d, T);
        EXPECT_NEAR(integral, closed, 1e-12 * d) << lambda << ' ' << T << ' ' << d;
      }
}

TEST(BatchingBounds, MonotoneInPeriod) {
  for (double lambda : {0.1, 1.0, 4.0})
    for (double d : {30.0, 360.0}) {
      auto prev = batching_bounds(lambda, d, 0.5);
      for (double T = 1.0; T <= 240.0; T += 1.0) {
        const auto cur = batching_bounds(lambda, d, T);
        EXPECT_LT(cur.q_H, prev.q_H);
        EXPECT_LT(cur.q_E, prev.q_E);
        EXPECT_GT(cur.w_H, prev.w_H);
        EXPECT_GT(cur.w_E, prev.w_E);
        EXPECT_LT(cur.q_H, greedy_limits(lambda, d).q_H);
        prev = cur;
      }
    }
}

TEST(BatchingBounds, GapTermPositive) {
  for (double gamma : {1.0 / 720.0, 1.0 / 30.0, 1.0})
    for (double T = 0.01; T <= 120.0; T *= 1.5) EXPECT_GT(batching_gap_term(gamma, T), 0.0);
}

TEST(AnyPolicyBound, Values) {
  EXPECT_EQ(any_policy_upper_bound(1.0, 5.0).q_H, 0.5);
  EXPECT_EQ(any_policy_upper_bound(0.0, 5.0).q_H, 1.0);
  EXPECT_NEAR(any_policy_upper_bound(1.0, 200.0).w_H, 100.0, 1e-12);
}

TEST(SmallLambda, Limits) {
  const auto s = small_lambda_limits(-0.5, 10.0);
  EXPECT_EQ(s.q_H, 1.0);
  EXPECT_EQ(s.q_E, 1.0);
  EXPECT_EQ(s.w_H, 0.0);
  EXPECT_EQ(small_lambda_limits(-1e-9, 1.0).q_H, greedy_limits(0.0, 1.0).q_H);
  EXPECT_THROW(small_lambda_limits(0.0, 1.0), InvalidParameter);
  EXPECT_THROW(small_lambda_limits(-1.5, 1.0), InvalidParameter);
}

TEST(SmallLambda, SimulatedMarketsMatchAlmostEveryone) {
  for (const auto& policy : {Policy::greedy(), Policy::patient()}) {
    SimConfig c;
    c.m = 50.0;
    c.lambda = -0.5;
    c.d = 200.0;
    c.model = TwoTypeModel{0.1, 0.04};
    c.policy = policy;
    c.horizon_arrivals = 150000;
    c.warmup_agents = 50000;
    c.seed = 2;
    const auto rep = summarize(run_simulation(c), c.warmup_agents);
    EXPECT_GT(rep.hard().match_rate, 0.95) << policy.name();
    EXPECT_LT(rep.hard().mean_waiting, 0.01 * c.d) << policy.name();
    if (policy == Policy::greedy()) {
      EXPECT_GT(rep.easy().match_rate, 0.95);
      EXPECT_LT(rep.easy().mean_waiting, 0.01 * c.d);
    } else {
      // Patient E agents wait for their own clock or a critical partner.
      EXPECT_NEAR(rep.easy().mean_waiting, c.d / (1.0 - c.lambda), 0.05 * c.d / (1.0 - c.lambda));
    }
  }
}

TEST(LossRatio, Values) {
  EXPECT_NEAR(greedy_loss_ratio_bound(0.1, 2.0, 100.0), std::exp(-10.0) + std::exp(-200.0), 1e-15);
  EXPECT_NEAR(greedy_loss_ratio_bound(0.1, 2.0, 100.0), 4.54e-5, 1e-7);
  EXPECT_NEAR(greedy_loss_ratio_bound(0.1, 2.0, 1e-9), 2.0, 1e-6);
  EXPECT_THROW(greedy_loss_ratio_bound(0.0, 1.0, 1.0), InvalidParameter);
}

TEST(LossRatio, SimulatedGreedyWithinBound) {
  // Loss measured as the unmatched share of E agents, who are the scarce side.
  SimConfig c;
  c.m = 0.25;
  c.lambda = 4.0;
  c.d = 200.0;
  c.model = TwoTypeModel{0.1, 0.04};
  c.policy = Policy::greedy();
  c.horizon_arrivals = 60000;
  c.warmup_agents = 5000;
  c.seed = 12;
  const auto rep = summarize(run_simulation(c), c.warmup_agents);
  const double bound = std::min(1.0, greedy_loss_ratio_bound(0.1, c.lambda, c.m * c.d));
  EXPECT_LE(1.0 - rep.easy().match_rate, bound);
}

TEST(UnmatchedHardWaiting, Candidates) {
  const auto c = unmatched_hard_waiting_candidates(1.0, 200.0);
  EXPECT_DOUBLE_EQ(c.memoryless, 100.0);
  EXPECT_DOUBLE_EQ(c.stated, 1.5 * 200.0);
}

TEST(BoundCurves, CsvLayout) {
  const auto rows = emit_bound_curves(1.33, 360.0, {7.0, 30.0});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[1].q_H_ub, 0.4118, 1e-4);
  EXPECT_EQ(rows[1].w_patient, 360.0);
  std::ostringstream out;
  write_bound_curves_csv(rows, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "T,q_H_ub,q_E_ub,w_H_lb,w_E_lb,q_greedy,w_greedy,w_patient");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 2u);
}

TEST(BirthDeath, TwoStateChain) {
  BirthDeathChain c;
  c.lo = 0;
  c.hi = 1;
  c.left = [](std::int64_t) { return 3.0; };
  c.right = [](std::int64_t) { return 3.0; };
  const auto s = bd_stationary(c);
  EXPECT_DOUBLE_EQ(s.prob(0), 0.5);
  EXPECT_DOUBLE_EQ(s.prob(1), 0.5);
  EXPECT_EQ(s.prob(2), 0.0);
  EXPECT_EQ(s.boundary_mass, 0.0);
}

TEST(BirthDeath, MatchesPoissonForInfiniteServer) {
  // l_x = x, r_x = a gives Poisson(a).
  BirthDeathChain c;
  c.lo = 0;
  c.hi = 200;
  c.left = [](std::int64_t x) { return static_cast<double>(x); };
  c.right = [](std::int64_t) { return 20.0; };
  c.hi_closed = false;
  const auto s = bd_stationary(c);
  EXPECT_NEAR(s.mean(), 20.0, 1e-9);
  EXPECT_NEAR(s.prob(20), std::exp(20.0 * std::log(20.0) - 20.0 - std::lgamma(21.0)), 1e-12);
}

TEST(BirthDeath, RateFamilies) {
  const double m = 100.0, lambda = 0.5, p = 0.1;
  const auto mu = mu_chain(m, lambda, p);
  const auto ml = ml_chain(m, lambda);
  EXPECT_EQ(mu.lo, 0);
  EXPECT_TRUE(mu.lo_closed);
  EXPECT_LT(ml.lo, 0);
  EXPECT_NEAR(mu.left(1000), m + 1000.0, 1e-6);
  EXPECT_NEAR(mu.left(3), m * (1.0 - std::pow(0.9, 3)) + 3.0, 1e-9);
  EXPECT_EQ(mu.right(7), (1.0 + lambda) * m);
  for (std::int64_t x = ml.lo; x < 0; ++x) EXPECT_EQ(ml.left(x), m);
  EXPECT_EQ(ml.left(10), m + 10.0);
  for (std::int64_t x = ml.lo; x <= ml.hi; ++x) {
    EXPECT_GE(ml.left(x), 0.0);
    EXPECT_GE(ml.right(x), 0.0);
  }
  for (std::int64_t x = mu.lo; x <= mu.hi; ++x) EXPECT_GE(mu.left(x), 0.0);
  EXPECT_THROW(mu_chain(0.0, 0.5, 0.1), InvalidParameter);
  EXPECT_THROW(mu_chain(10.0, 0.5, 0.0), InvalidParameter);
}

TEST(BirthDeath, LargeMarketConcentration) {
  const double m = 1e4, lambda = 0.5;
  const double window = 10.0 * std::sqrt(m);
  const double tail_radius = 20.0 * std::sqrt(m) * std::log(m);
  const auto ml_chain_at = [&](std::int64_t hw) { return ml_chain(m, lambda, hw); };
  const auto mu_chain_at = [&](std::int64_t hw) { return mu_chain(m, lambda, 0.1, hw); };
  for (const auto& make : {std::function<BirthDeathChain(std::int64_t)>(ml_chain_at),
                           std::function<BirthDeathChain(std::int64_t)>(mu_chain_at)}) {
    const auto s = bd_stationary_widening(make, default_half_width(m));
    double total = 0.0;
    for (double v : s.pi) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(s.mean(), lambda * m, window);
    EXPECT_LT(s.tail_mass(lambda * m, tail_radius), 1e-6);
    EXPECT_LT(s.boundary_mass, 1e-9);
    EXPECT_LT(detailed_balance_residual(make(default_half_width(m)), s), 1e-10);
  }
}

TEST(BirthDeath, TooTightTruncationIsReported) {
  EXPECT_THROW(bd_stationary(ml_chain(1e4, 0.5, 5)), TruncationTooTight);
  const auto widened = bd_stationary_widening([](std::int64_t hw) { return ml_chain(1e4, 0.5, hw); }, 5);
  EXPECT_LT(widened.boundary_mass, 1e-9);
}

TEST(Ctmc2D, RatesFollowDefinitions) {
  const auto c = greedy_ctmc(2.0, 1.0, 0.3, 0.2, 10);
  EXPECT_EQ(c.state_count(), 66u);
  EXPECT_EQ(c.index(0, 0), 0u);
  EXPECT_EQ(c.index(0, 10), 10u);
  EXPECT_EQ(c.index(1, 0), 11u);
  EXPECT_EQ(c.index(10, 0), 65u);
  const int x = 3, y = 2;
  const double M = std::pow(0.7, x), N = std::pow(0.8, y), Mh = std::pow(0.7, y);
  EXPECT_DOUBLE_EQ(c.up(x, y), 2.0 * M * N);
  EXPECT_DOUBLE_EQ(c.right(x, y), 4.0 * Mh);
  EXPECT_DOUBLE_EQ(c.down(x, y), 2.0 * M * (1.0 - N) + 4.0 * (1.0 - Mh) + y);
  EXPECT_DOUBLE_EQ(c.left(x, y), 2.0 * (1.0 - M) + x);
  EXPECT_EQ(c.up(4, 6), 0.0);
  EXPECT_EQ(c.right(4, 6), 0.0);
  EXPECT_EQ(c.down(4, 0), 0.0);
  EXPECT_EQ(c.left(0, 4), 0.0);
  const auto literal = greedy_ctmc(2.0, 1.0, 0.3, 0.2, 10, true);
  EXPECT_DOUBLE_EQ(literal.right(x, y), 4.0 * N);
  EXPECT_DOUBLE_EQ(literal.down(x, y), 2.0 * M * (1.0 - N) + 4.0 * (1.0 - N) + y);
  EXPECT_THROW(greedy_ctmc(2.0, 1.0, 0.3, 0.2, 0), InvalidParameter);
}

TEST(Ctmc2D, NoMatchingGivesIndependentPoissonPools) {
  // With p = q = 0 each type is an M/M/inf queue truncated jointly at C.
  const auto s = ctmc_stationary_2d(greedy_ctmc(2.0, 1.0, 0.0, 0.0, 60));
  EXPECT_NEAR(s.mean_y, 2.0, 1e-8);
  EXPECT_NEAR(s.mean_x, 4.0, 1e-8);
  EXPECT_LT(s.residual, 1e-10);
}

TEST(Ctmc2D, StationaryIsNormalizedAndBalanced) {
  const auto s = ctmc_stationary_2d(greedy_ctmc(2.0, 1.0, 0.5, 0.5, 20));
  double total = 0.0;
  for (double v : s.pi) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_LT(s.residual, 1e-10);
  EXPECT_GT(s.mean_x, s.mean_y);
}

TEST(Ctmc2D, MatchesShortSimulation) {
  SimConfig c;
  c.m = 2.0;
  c.lambda = 1.0;
  c.d = 1.0;
  c.model = TwoTypeModel{0.3, 0.2};
  c.policy = Policy::greedy();
  c.capacity = 12;
  c.horizon_arrivals = 200000;
  c.warmup_agents = 1000;
  c.seed = 5;
  const auto trace = run_simulation(c);
  const double t0 = warmup_end_time(trace, c.warmup_agents);
  const auto batches = pool_batch_means(trace, t0, trace.end_time, 40);
  std::vector<double> e, h;
  for (const auto& b : batches) {
    e.push_back(b[0]);
    h.push_back(b[1]);
  }
  const auto s = ctmc_stationary_2d(greedy_ctmc(2.0, 1.0, 0.3, 0.2, 12));
  const auto me = mean_and_se(e), mh = mean_and_se(h);
  EXPECT_NEAR(me.mean, s.mean_y, 4.0 * me.se + 1e-3);
  EXPECT_NEAR(mh.mean, s.mean_x, 4.0 * mh.se + 1e-3);
}
