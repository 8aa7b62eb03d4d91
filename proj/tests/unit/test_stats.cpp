#include <gtest/gtest.h>

#include "dynmatch/stats.hpp"
#include "dynmatch/theory.hpp"

using namespace dynmatch;

namespace {

AgentRecord make_record(std::uint64_t id, AgentType type, double arrival, double exit, Outcome outcome,
                        double criticality = -1.0) {
  AgentRecord r;
  r.id = id;
  r.type = type;
  r.arrival = arrival;
  r.criticality = criticality < 0.0 ? exit : criticality;
  r.exit = exit;
  r.outcome = outcome;
  return r;
}

std::vector<double> exp_draws(double rate, std::size_t n, Seed seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = rng.exponential(1.0 / rate);
  return out;
}

SimConfig stylized(Policy policy, double lambda, std::uint64_t arrivals, Seed seed) {
  SimConfig c;
  c.m = 1.0;
  c.lambda = lambda;
  c.d = 200.0;
  c.model = TwoTypeModel{0.1, 0.04};
  c.policy = policy;
  c.horizon_arrivals = arrivals;
  c.warmup_agents = 5000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Summarize, MatchedOnArrivalPair) {
  SimTrace t;
  auto e = make_record(0, AgentType::Easy, 1.0, 1.0, Outcome::Matched, 5.0);
  auto h = make_record(1, AgentType::Hard, 1.0, 1.0, Outcome::Matched, 9.0);
  e.partner_id = 1;
  h.partner_id = 0;
  t.records = {e, h};
  t.end_time = 2.0;
  const auto rep = summarize(t, 0);
  EXPECT_EQ(rep.easy().match_rate, 1.0);
  EXPECT_EQ(rep.hard().match_rate, 1.0);
  EXPECT_EQ(rep.easy().mean_waiting, 0.0);
  EXPECT_EQ(rep.hard().mean_matching_time, 0.0);
  EXPECT_TRUE(std::isnan(rep.hard().mean_waiting_unmatched));
}

TEST(Summarize, AllDepartUnmatched) {
  SimTrace t;
  const double draws[] = {3.0, 5.0, 7.0, 1.0};
  for (std::uint64_t i = 0; i < 4; ++i)
    t.records.push_back(make_record(i, i % 2 ? AgentType::Hard : AgentType::Easy, 0.0, draws[i], Outcome::Departed));
  t.end_time = 10.0;
  const auto rep = summarize(t, 0);
  EXPECT_EQ(rep.easy().match_rate, 0.0);
  EXPECT_EQ(rep.hard().match_rate, 0.0);
  EXPECT_DOUBLE_EQ(rep.easy().mean_waiting, 5.0);
  EXPECT_DOUBLE_EQ(rep.hard().mean_waiting, 3.0);
  EXPECT_TRUE(std::isnan(rep.easy().mean_matching_time));
}

TEST(Summarize, ExcludesWarmupRejectedAndCensored) {
  SimTrace t;
  t.records = {make_record(0, AgentType::Easy, 0.0, 100.0, Outcome::Departed),
               make_record(1, AgentType::Easy, 1.0, 3.0, Outcome::Departed),
               make_record(2, AgentType::Easy, 2.0, 2.0, Outcome::Rejected),
               make_record(3, AgentType::Easy, 3.0, 9.0, Outcome::CensoredAtEnd),
               make_record(4, AgentType::Hard, 4.0, 5.0, Outcome::Departed)};
  t.end_time = 9.0;
  const auto rep = summarize(t, 1);
  EXPECT_EQ(rep.easy().n_total, 1u);
  EXPECT_EQ(rep.easy().n_rejected, 1u);
  EXPECT_EQ(rep.easy().n_censored, 1u);
  EXPECT_DOUBLE_EQ(rep.easy().mean_waiting, 2.0);
  EXPECT_DOUBLE_EQ(rep.easy().rejection_rate(), 0.5);
}

TEST(Summarize, NoSamplesWhenATypeNeverCompletes) {
  SimTrace t;
  t.records = {make_record(0, AgentType::Easy, 0.0, 1.0, Outcome::Departed)};
  t.end_time = 1.0;
  EXPECT_THROW(summarize(t, 0), NoSamples);
}

TEST(Summarize, CountIdentityAndHistogramMass) {
  const auto c = stylized(Policy::greedy(), 0.5, 20000, 4);
  const auto trace = run_simulation(c);
  const auto rep = summarize(trace, c.warmup_agents);
  for (const auto& s : rep.types) {
    EXPECT_EQ(static_cast<std::uint64_t>(std::llround(s.match_rate * static_cast<double>(s.n_total))), s.n_matched);
    EXPECT_LE(s.match_rate, 1.0);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(rep.waiting_hist[k].total(), rep.types[k].n_total);
    EXPECT_EQ(rep.matching_hist[k].total(), rep.types[k].n_matched);
    EXPECT_EQ(rep.waiting_hist[k].counts.size(), 100u);
  }
}

TEST(Summarize, StylizedGreedyAtLambdaTwo) {
  std::vector<double> rate, time;
  for (Seed s = 1; s <= 3; ++s) {
    const auto c = stylized(Policy::greedy(), 2.0, 70000, s);
    const auto rep = summarize(run_simulation(c), c.warmup_agents);
    rate.push_back(rep.hard().match_rate);
    time.push_back(rep.hard().mean_matching_time);
  }
  EXPECT_NEAR(mean(rate), 0.33, 0.02);
  EXPECT_NEAR(mean(time), 133.3, 0.05 * 133.3);
}

TEST(Summarize, HardMatchingTimeTracksWaitingTime) {
  for (const auto& policy : {Policy::greedy(), Policy::patient()}) {
    const auto c = stylized(policy, 0.5, 70000, 2);
    const auto rep = summarize(run_simulation(c), c.warmup_agents);
    const double gap = std::abs(rep.hard().mean_matching_time - rep.hard().mean_waiting) / rep.hard().mean_waiting;
    EXPECT_LT(gap, 0.05) << policy.name();
    EXPECT_LE(rep.hard().mean_waiting, c.d * 1.05);
    EXPECT_LE(rep.easy().mean_waiting, c.d * 1.05);
  }
}

TEST(Histogram, EqualWidthBins) {
  const auto h = make_histogram({0.0, 0.5, 1.0, 1.0}, 4);
  EXPECT_EQ(h.max, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{1, 0, 1, 2}));
  const auto zeros = make_histogram({0.0, 0.0});
  EXPECT_EQ(zeros.counts[0], 2u);
  EXPECT_EQ(make_histogram({}).total(), 0u);
}

TEST(MeanSe, KnownValues) {
  const auto r = mean_and_se({1.0, 2.0, 3.0, kNaN});
  EXPECT_EQ(r.n, 3u);
  EXPECT_DOUBLE_EQ(r.mean, 2.0);
  EXPECT_DOUBLE_EQ(r.se, std::sqrt(1.0 / 3.0));
  EXPECT_TRUE(std::isnan(mean_and_se({}).mean));
  EXPECT_TRUE(std::isnan(mean({})));
}

TEST(LittlesLaw, SyntheticUnitLoad) {
  SimTrace t;
  for (std::uint64_t i = 0; i < 10; ++i)
    t.records.push_back(make_record(i, AgentType::Easy, static_cast<double>(i), static_cast<double>(i + 1),
                                    Outcome::Departed));
  t.pool_series = {{0.0, 1, 0}};
  t.end_time = 10.0;
  const auto ll = littles_law_check(t, AgentType::Easy);
  EXPECT_DOUBLE_EQ(ll.arrival_rate, 1.0);
  EXPECT_DOUBLE_EQ(ll.mean_waiting, 1.0);
  EXPECT_DOUBLE_EQ(ll.mean_pool, 1.0);
  EXPECT_DOUBLE_EQ(ll.relative_error, 0.0);
  EXPECT_THROW(littles_law_check(t, AgentType::Hard), NoSamples);
}

TEST(LittlesLaw, HoldsOnLongRuns) {
  for (const auto& policy : {Policy::greedy(), Policy::patient()}) {
    const auto c = stylized(policy, 0.5, 200000, 8);
    const auto ll = littles_law_check(run_simulation(c), AgentType::Hard, c.warmup_agents, c.warmup_agents);
    EXPECT_LT(ll.relative_error, 0.02) << policy.name();
  }
}

TEST(LittlesLaw, CooldownDropsTrailingAgents) {
  SimTrace t;
  for (std::uint64_t i = 0; i < 10; ++i)
    t.records.push_back(make_record(i, AgentType::Easy, static_cast<double>(i), static_cast<double>(i + 1),
                                    Outcome::Departed));
  t.records.back().exit = 30.0;
  t.pool_series = {{0.0, 1, 0}};
  t.end_time = 30.0;
  const auto ll = littles_law_check(t, AgentType::Easy, 2, 3);
  EXPECT_DOUBLE_EQ(ll.arrival_rate, 1.0);
  EXPECT_DOUBLE_EQ(ll.mean_waiting, 1.0);
  EXPECT_DOUBLE_EQ(ll.relative_error, 0.0);
  EXPECT_THROW(littles_law_check(t, AgentType::Easy, 5, 5), NoSamples);
}

TEST(PoolAverage, TimeWeighted) {
  SimTrace t;
  t.pool_series = {{0.0, 2, 0}, {1.0, 0, 4}, {3.0, 1, 1}};
  t.end_time = 4.0;
  const auto avg = pool_time_average(t, 0.0, 4.0);
  EXPECT_DOUBLE_EQ(avg[0], (2.0 + 1.0) / 4.0);
  EXPECT_DOUBLE_EQ(avg[1], (8.0 + 1.0) / 4.0);
  const auto window = pool_time_average(t, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(window[0], 1.0 / 1.5);
  const auto batches = pool_batch_means(t, 0.0, 4.0, 2);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_DOUBLE_EQ(batches[0][1], 2.0);
  EXPECT_THROW(pool_time_average(t, 2.0, 2.0), NoSamples);
}

TEST(KolmogorovSmirnov, DegenerateAtZero) {
  const auto r = ks_exponential(std::vector<double>(50, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(r.statistic, 1.0);
  EXPECT_EQ(r.n, 50u);
  EXPECT_THROW(ks_exponential({}), NoSamples);
  EXPECT_THROW(ks_exponential({-1.0}), InvalidParameter);
}

TEST(KolmogorovSmirnov, ExponentialDrawsPass) {
  const auto draws = exp_draws(1.0, 100000, 17);
  const auto r = ks_exponential(draws, 1.0);
  EXPECT_LT(r.statistic, 1.36 / std::sqrt(100000.0));
  EXPECT_NEAR(r.mle_rate, 1.0, 0.02);
  EXPECT_GT(ks_exponential(draws, 2.0).statistic, 0.2);
}

TEST(Dominance, IdenticalSamples) {
  const std::vector<double> a = {1.0, 2.0, 2.0, 5.0};
  EXPECT_EQ(dominance_check(a, a), 0.0);
  EXPECT_THROW(dominance_check({}, a), NoSamples);
}

TEST(Dominance, FasterExponentialIsSmaller) {
  const auto fast = exp_draws(2.0, 100000, 1);
  const auto slow = exp_draws(1.0, 100000, 2);
  EXPECT_LT(dominance_check(fast, slow), 0.01);
  EXPECT_GT(dominance_check(slow, fast), 0.2);
}

TEST(Dominance, GreedyHardWaitsLessThanPatient) {
  auto g = stylized(Policy::greedy(), 1.0, 60000, 6);
  auto p = g;
  p.policy = Policy::patient();
  const auto gw = waiting_samples(run_simulation(g), g.warmup_agents, AgentType::Hard, false);
  const auto pw = waiting_samples(run_simulation(p), p.warmup_agents, AgentType::Hard, false);
  EXPECT_LT(dominance_check(gw, pw), 0.02);
}

TEST(Serialization, CsvRowAndJson) {
  const auto c = stylized(Policy::greedy(), 0.5, 8000, 1);
  const auto rep = summarize(run_simulation(c), c.warmup_agents);
  const auto row = report_csv_row(rep);
  EXPECT_EQ(static_cast<std::size_t>(std::count(row.begin(), row.end(), ',')), report_csv_columns().size() - 1);
  const auto j = to_json(rep);
  for (const auto& name : report_csv_columns()) EXPECT_TRUE(j.contains(name)) << name;
  EXPECT_EQ(j["n_total_H"].get<std::uint64_t>(), rep.hard().n_total);
  EXPECT_EQ(format_number(kNaN), "");
  EXPECT_EQ(format_number(0.5), "0.5");
}
