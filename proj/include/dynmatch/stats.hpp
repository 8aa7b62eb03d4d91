#pragma once

#include <algorithm>
#include <iterator>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "dynmatch/errors.hpp"
#include "dynmatch/graph.hpp"
#include "dynmatch/sim.hpp"

namespace dynmatch {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TypeStats {
  double match_rate = 0.0;
  double mean_waiting = 0.0;          // matched and departed agents
  double mean_matching_time = kNaN;   // matched agents only
  double mean_waiting_unmatched = kNaN;
  std::uint64_t n_matched = 0;
  std::uint64_t n_departed = 0;
  std::uint64_t n_total = 0;  // matched + departed
  std::uint64_t n_rejected = 0;
  std::uint64_t n_censored = 0;

  double rejection_rate() const {
    const auto admitted_or_not = n_total + n_rejected;
    return admitted_or_not == 0 ? 0.0 : static_cast<double>(n_rejected) / static_cast<double>(admitted_or_not);
  }
};

struct Histogram {
  double max = 0.0;  // bins cover [0, max]
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline Histogram make_histogram(const std::vector<double>& samples, std::size_t bins = 100) {
  Histogram h;
  h.counts.assign(bins, 0);
  for (double x : samples) h.max = std::max(h.max, x);
  for (double x : samples) {
    std::size_t i = 0;
    if (h.max > 0.0) i = std::min(bins - 1, static_cast<std::size_t>(x / h.max * static_cast<double>(bins)));
    ++h.counts[i];
  }
  return h;
}

struct LittlesLaw {
  double arrival_rate = 0.0;
  double mean_waiting = 0.0;
  double mean_pool = 0.0;
  double relative_error = 0.0;
};

struct Report {
  std::uint64_t warmup_agents = 0;
  std::array<TypeStats, 2> types;        // indexed by AgentType
  std::array<Histogram, 2> waiting_hist;
  std::array<Histogram, 2> matching_hist;
  std::array<double, 2> littles_law_error{kNaN, kNaN};
  std::array<double, 2> pool_mean{kNaN, kNaN};

  const TypeStats& operator[](AgentType t) const { return types[static_cast<std::size_t>(t)]; }
  const TypeStats& easy() const { return types[0]; }
  const TypeStats& hard() const { return types[1]; }
};

/// Durations of post-warmup agents of type `t`. With `matched_only` the
/// matching times, otherwise the waiting times over matched and departed.
inline std::vector<double> waiting_samples(const SimTrace& trace, std::uint64_t warmup_agents, AgentType t,
                                           bool matched_only) {
  std::vector<double> out;
  for (const auto& r : trace.records) {
    if (r.id < warmup_agents || r.type != t) continue;
    if (r.outcome == Outcome::Matched || (!matched_only && r.outcome == Outcome::Departed))
      out.push_back(r.waiting());
  }
  return out;
}

/// Waiting times of post-warmup agents of type `t` who left unmatched.
inline std::vector<double> unmatched_waiting_samples(const SimTrace& trace, std::uint64_t warmup_agents,
                                                     AgentType t) {
  std::vector<double> out;
  for (const auto& r : trace.records)
    if (r.id >= warmup_agents && r.type == t && r.outcome == Outcome::Departed) out.push_back(r.waiting());
  return out;
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) return kNaN;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

struct MeanSe {
  double mean = kNaN;
  double se = kNaN;
  std::size_t n = 0;
};

/// Sample mean and its standard error (n - 1 denominator). NaN values are skipped.
inline MeanSe mean_and_se(const std::vector<double>& xs) {
  MeanSe out;
  double s = 0.0;
  for (double x : xs)
    if (!std::isnan(x)) {
      s += x;
      ++out.n;
    }
  if (out.n == 0) return out;
  out.mean = s / static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double x : xs)
    if (!std::isnan(x)) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
  return out;
}

/// Time-weighted mean pool sizes (E, H) over [t0, t1].
inline std::array<double, 2> pool_time_average(const SimTrace& trace, double t0, double t1) {
  if (trace.pool_series.empty() || !(t1 > t0)) throw NoSamples("no pool samples in the requested window");
  std::array<double, 2> area{0.0, 0.0};
  const auto& s = trace.pool_series;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double begin = std::max(s[i].time, t0);
    const double end = std::min(i + 1 < s.size() ? s[i + 1].time : trace.end_time, t1);
    if (end <= begin) continue;
    area[0] += static_cast<double>(s[i].easy) * (end - begin);
    area[1] += static_cast<double>(s[i].hard) * (end - begin);
  }
  return {area[0] / (t1 - t0), area[1] / (t1 - t0)};
}

/// Time-average pool sizes over `batches` equal sub-windows of [t0, t1].
inline std::vector<std::array<double, 2>> pool_batch_means(const SimTrace& trace, double t0, double t1,
                                                           std::size_t batches) {
  std::vector<std::array<double, 2>> out;
  const double width = (t1 - t0) / static_cast<double>(batches);
  for (std::size_t b = 0; b < batches; ++b)
    out.push_back(pool_time_average(trace, t0 + width * static_cast<double>(b),
                                    t0 + width * static_cast<double>(b + 1)));
  return out;
}

/// Arrival time of the first post-warmup agent.
inline double warmup_end_time(const SimTrace& trace, std::uint64_t warmup_agents) {
  if (warmup_agents >= trace.records.size()) throw NoSamples("warmup covers the whole trace");
  return warmup_agents == 0 ? 0.0 : trace.records[warmup_agents].arrival;
}

/// Compares (admitted arrival rate) x (mean waiting) with the time-average
/// pool size, per type. The window runs from the first post-warmup arrival to
/// the arrival of the first of the last `cooldown_agents` agents, and only
/// agents arriving inside it are counted.
inline LittlesLaw littles_law_check(const SimTrace& trace, AgentType t, std::uint64_t warmup_agents = 0,
                                    std::uint64_t cooldown_agents = 0) {
  const std::uint64_t n = trace.records.size();
  if (warmup_agents + cooldown_agents >= n) throw NoSamples("warmup and cooldown cover the whole trace");
  const std::uint64_t stop = n - cooldown_agents;
  const double t0 = warmup_end_time(trace, warmup_agents);
  const double t1 = cooldown_agents == 0 ? trace.end_time : trace.records[stop].arrival;
  std::uint64_t admitted = 0;
  std::vector<double> waits;
  for (std::uint64_t id = warmup_agents; id < stop; ++id) {
    const auto& r = trace.records[id];
    if (r.type != t || r.outcome == Outcome::Rejected) continue;
    ++admitted;
    if (r.outcome == Outcome::Matched || r.outcome == Outcome::Departed) waits.push_back(r.waiting());
  }
  if (waits.empty()) throw NoSamples("no completed agents of this type after warmup");
  LittlesLaw out;
  out.arrival_rate = static_cast<double>(admitted) / (t1 - t0);
  out.mean_waiting = mean(waits);
  out.mean_pool = pool_time_average(trace, t0, t1)[static_cast<std::size_t>(t)];
  if (!(out.mean_pool > 0.0)) throw NoSamples("pool of this type is always empty");
  out.relative_error = std::abs(out.arrival_rate * out.mean_waiting - out.mean_pool) / out.mean_pool;
  return out;
}

inline Report summarize(const SimTrace& trace, std::uint64_t warmup_agents) {
  Report rep;
  rep.warmup_agents = warmup_agents;
  for (AgentType t : {AgentType::Easy, AgentType::Hard}) {
    const auto k = static_cast<std::size_t>(t);
    TypeStats& s = rep.types[k];
    std::vector<double> waits;
    std::vector<double> matched;
    std::vector<double> unmatched;
    for (const auto& r : trace.records) {
      if (r.id < warmup_agents || r.type != t) continue;
      switch (r.outcome) {
        case Outcome::Matched:
          ++s.n_matched;
          waits.push_back(r.waiting());
          matched.push_back(r.waiting());
          break;
        case Outcome::Departed:
          ++s.n_departed;
          waits.push_back(r.waiting());
          unmatched.push_back(r.waiting());
          break;
        case Outcome::Rejected: ++s.n_rejected; break;
        default: ++s.n_censored; break;
      }
    }
    s.n_total = s.n_matched + s.n_departed;
    if (s.n_total == 0)
      throw NoSamples(fmt::format("no post-warmup completions for type {}", to_char(t)));
    s.match_rate = static_cast<double>(s.n_matched) / static_cast<double>(s.n_total);
    s.mean_waiting = mean(waits);
    s.mean_matching_time = mean(matched);
    s.mean_waiting_unmatched = mean(unmatched);
    rep.waiting_hist[k] = make_histogram(waits);
    rep.matching_hist[k] = make_histogram(matched);
    try {
      const std::uint64_t cooldown = 2 * warmup_agents < trace.records.size() ? warmup_agents : 0;
      rep.littles_law_error[k] = littles_law_check(trace, t, warmup_agents, cooldown).relative_error;
    } catch (const NoSamples&) {
      rep.littles_law_error[k] = kNaN;
    }
  }
  if (!trace.pool_series.empty()) {
    const double t0 = warmup_end_time(trace, warmup_agents);
    if (trace.end_time > t0) rep.pool_mean = pool_time_average(trace, t0, trace.end_time);
  }
  return rep;
}

struct KSResult {
  double statistic = 0.0;
  std::size_t n = 0;
  double mle_rate = 0.0;
};

/// One-sample Kolmogorov-Smirnov distance to Exp(rate); rate defaults to 1/mean.
inline KSResult ks_exponential(std::vector<double> samples, std::optional<double> rate = std::nullopt) {
  if (samples.empty()) throw NoSamples("KS test needs at least one sample");
  for (double x : samples)
    if (!(x >= 0.0)) throw InvalidParameter("durations must be non-negative");
  KSResult out;
  out.n = samples.size();
  const double m = mean(samples);
  out.mle_rate = m > 0.0 ? 1.0 / m : std::numeric_limits<double>::infinity();
  const double r = rate.value_or(out.mle_rate);
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = std::isinf(r) ? 1.0 : -std::expm1(-r * samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  out.statistic = std::clamp(d, 0.0, 1.0);
  return out;
}

/// Largest amount by which ECDF_b exceeds ECDF_a; zero when a is
/// stochastically smaller than b on the sample.
inline double dominance_check(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw NoSamples("dominance check needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> grid;
  grid.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double worst = 0.0;
  for (double x : grid) {
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    worst = std::max(worst, static_cast<double>(ib) / nb - static_cast<double>(ia) / na);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> columns = {
      "match_rate_E",      "match_rate_H",       "mean_waiting_E",           "mean_waiting_H",
      "mean_matching_E",   "mean_matching_H",    "mean_waiting_unmatched_E", "mean_waiting_unmatched_H",
      "n_matched_E",       "n_matched_H",        "n_total_E",                "n_total_H",
      "n_rejected_E",      "n_rejected_H",       "n_censored_E",             "n_censored_H",
      "littles_error_E",   "littles_error_H",    "pool_mean_E",              "pool_mean_H"};
  return columns;
}

/// Values in the order of report_csv_columns().
inline std::vector<double> report_values(const Report& r) {
  const auto& e = r.easy();
  const auto& h = r.hard();
  auto u = [](std::uint64_t v) { return static_cast<double>(v); };
  return {e.match_rate,
          h.match_rate,
          e.mean_waiting,
          h.mean_waiting,
          e.mean_matching_time,
          h.mean_matching_time,
          e.mean_waiting_unmatched,
          h.mean_waiting_unmatched,
          u(e.n_matched),
          u(h.n_matched),
          u(e.n_total),
          u(h.n_total),
          u(e.n_rejected),
          u(h.n_rejected),
          u(e.n_censored),
          u(h.n_censored),
          r.littles_law_error[0],
          r.littles_law_error[1],
          r.pool_mean[0],
          r.pool_mean[1]};
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{}", v);
}

inline std::string report_csv_row(const Report& r) {
  std::string out;
  const auto values = report_values(r);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

inline nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  const auto& names = report_csv_columns();
  const auto values = report_values(r);
  j["warmup_agents"] = r.warmup_agents;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (std::isnan(values[i]))
      j[names[i]] = nullptr;
    else
      j[names[i]] = values[i];
  }
  for (AgentType t : {AgentType::Easy, AgentType::Hard}) {
    const auto k = static_cast<std::size_t>(t);
    const std::string suffix(1, to_char(t));
    j["hist_waiting_max_" + suffix] = r.waiting_hist[k].max;
    j["hist_waiting_counts_" + suffix] = r.waiting_hist[k].counts;
    j["hist_matching_max_" + suffix] = r.matching_hist[k].max;
    j["hist_matching_counts_" + suffix] = r.matching_hist[k].counts;
  }
  return j;
}

}  // namespace dynmatch
