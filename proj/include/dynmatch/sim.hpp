#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "dynmatch/compat.hpp"
#include "dynmatch/errors.hpp"
#include "dynmatch/graph.hpp"
#include "dynmatch/matching.hpp"
#include "dynmatch/random.hpp"

namespace dynmatch {

struct Policy {
  enum class Kind { Greedy, Patient, Batching };

  Kind kind = Kind::Greedy;
  double period = 0.0;  // T, batching only

  static Policy greedy() { return {Kind::Greedy, 0.0}; }
  static Policy patient() { return {Kind::Patient, 0.0}; }
  static Policy batching(double T) { return {Kind::Batching, T}; }

  std::string name() const {
    switch (kind) {
      case Kind::Greedy: return "greedy";
      case Kind::Patient: return "patient";
      default: return "batching";
    }
  }

  friend bool operator==(const Policy&, const Policy&) = default;
};

inline Policy parse_policy(const std::string& name, double period = 0.0) {
  if (name == "greedy") return Policy::greedy();
  if (name == "patient") return Policy::patient();
  if (name == "batching") return Policy::batching(period);
  throw InvalidConfig("unknown policy '" + name + "' (expected greedy, patient or batching)");
}

struct SimConfig {
  double m = 1.0;       // E arrivals per day
  double lambda = 0.0;  // H arrive at (1 + lambda) m
  double d = 1.0;       // mean time to criticality, days
  CompatModel model = TwoTypeModel{};
  Policy policy;
  std::uint64_t horizon_arrivals = 0;
  std::uint64_t warmup_agents = 0;
  std::optional<double> capacity_kappa;  // C = floor(kappa * (2 + lambda) m)
  std::optional<std::uint64_t> capacity;  // absolute C; wins over kappa
  Seed seed = 0;
  bool verify_invariants = false;
  bool record_pool_series = true;

  double total_rate() const { return (2.0 + lambda) * m; }

  std::optional<std::uint64_t> resolved_capacity() const {
    if (capacity) return capacity;
    if (capacity_kappa) return static_cast<std::uint64_t>(std::floor(*capacity_kappa * total_rate()));
    return std::nullopt;
  }
};

inline void validate(const SimConfig& c) {
  if (!(c.m > 0.0) || !std::isfinite(c.m)) throw InvalidConfig("m must be positive");
  if (!(c.d > 0.0) || !std::isfinite(c.d)) throw InvalidConfig("d must be positive");
  if (!(c.lambda >= -1.0) || !std::isfinite(c.lambda)) throw InvalidConfig("lambda must be at least -1");
  if (c.horizon_arrivals <= c.warmup_agents) throw InvalidConfig("horizon must exceed warmup");
  if (c.policy.kind == Policy::Kind::Batching && !(c.policy.period > 0.0))
    throw InvalidConfig("batching period T must be positive");
  if (c.capacity_kappa && !(*c.capacity_kappa > 0.0)) throw InvalidConfig("capacity kappa must be positive");
  try {
    validate(c.model);
  } catch (const InvalidParameter& e) {
    throw InvalidConfig(e.what());
  }
  if (const auto* mm = std::get_if<MatrixModel>(&c.model); mm != nullptr && mm->n == 0)
    throw InvalidConfig("matrix model has no rows");
}

enum class Outcome : std::uint8_t { Matched, Departed, Rejected, CensoredAtEnd, Present };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Matched: return "matched";
    case Outcome::Departed: return "departed";
    case Outcome::Rejected: return "rejected";
    case Outcome::CensoredAtEnd: return "censored";
    default: return "present";
  }
}

struct AgentRecord {
  std::uint64_t id = 0;
  AgentType type = AgentType::Easy;
  std::uint32_t profile = 0;
  double arrival = 0.0;
  double criticality = 0.0;  // absolute time the agent becomes critical
  double exit = 0.0;
  Outcome outcome = Outcome::Present;
  std::int64_t partner_id = -1;
  AgentType partner_type = AgentType::Easy;
  bool initiated = false;  // this agent's own event triggered the match

  double waiting() const { return exit - arrival; }
};

struct PoolSample {
  double time = 0.0;
  std::uint32_t easy = 0;
  std::uint32_t hard = 0;
};

struct SimTrace {
  std::vector<AgentRecord> records;
  std::vector<PoolSample> pool_series;
  double end_time = 0.0;
};

/// Pool bookkeeping and the three policy steps.
///
/// Partner search scans the H pool in a uniformly random order and then the
/// E pool the same way; the order is drawn lazily (partial Fisher-Yates on
/// the pool vector) so only inspected positions consume randomness.
class MarketState {
 public:
  MarketState(CompatModel model, Seed pair_seed, Seed policy_seed)
      : model_(std::move(model)),
        pair_seed_(pair_seed),
        policy_rng_(policy_seed),
        hard_hard_possible_(hard_hard_possible(model_)) {}

  std::uint64_t add_agent(AgentType type, double arrival, double criticality, std::uint32_t profile = 0) {
    AgentRecord r;
    r.id = records_.size();
    r.type = type;
    r.profile = profile;
    r.arrival = arrival;
    r.criticality = criticality;
    records_.push_back(r);
    position_.push_back(kAbsent);
    return r.id;
  }

  const AgentRecord& record(std::uint64_t id) const { return records_[id]; }
  std::vector<AgentRecord>& records() { return records_; }
  const std::vector<AgentRecord>& records() const { return records_; }

  bool present(std::uint64_t id) const { return position_[id] != kAbsent; }
  std::size_t pool_size(AgentType t) const { return pool_[index(t)].size(); }
  std::size_t pool_size() const { return pool_[0].size() + pool_[1].size(); }
  const std::vector<std::uint64_t>& pool(AgentType t) const { return pool_[index(t)]; }

  void join_pool(std::uint64_t id) {
    auto& pool = pool_[index(records_[id].type)];
    position_[id] = static_cast<std::uint32_t>(pool.size());
    pool.push_back(id);
  }

  void leave_pool(std::uint64_t id) {
    auto& pool = pool_[index(records_[id].type)];
    const std::uint32_t pos = position_[id];
    const std::uint64_t last = pool.back();
    pool[pos] = last;
    position_[last] = pos;
    pool.pop_back();
    position_[id] = kAbsent;
  }

  bool compatible(std::uint64_t a, std::uint64_t b) const {
    return dynmatch::compatible(model_, ref(a), ref(b), pair_seed_);
  }

  /// H pool first, then E pool, each in random order. Does not change membership.
  std::optional<std::uint64_t> find_partner(std::uint64_t id) {
    const AgentType own = records_[id].type;
    for (AgentType side : {AgentType::Hard, AgentType::Easy}) {
      if (side == AgentType::Hard && own == AgentType::Hard && !hard_hard_possible_) continue;
      auto& pool = pool_[index(side)];
      const std::size_t k = pool.size();
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + policy_rng_.index(k - i);
        if (j != i) {
          std::swap(pool[i], pool[j]);
          position_[pool[i]] = static_cast<std::uint32_t>(i);
          position_[pool[j]] = static_cast<std::uint32_t>(j);
        }
        const std::uint64_t candidate = pool[i];
        if (candidate != id && compatible(id, candidate)) return candidate;
      }
    }
    return std::nullopt;
  }

  /// Greedy arrival: match now or join the pool.
  std::optional<std::uint64_t> greedy_step(std::uint64_t id, double now) {
    auto partner = find_partner(id);
    if (partner) {
      leave_pool(*partner);
      mark_matched(id, *partner, now, true);
    } else {
      join_pool(id);
    }
    return partner;
  }

  /// Patient criticality: leave the pool, match if possible, otherwise depart.
  std::optional<std::uint64_t> patient_step(std::uint64_t id, double now) {
    if (present(id)) leave_pool(id);
    auto partner = find_partner(id);
    if (partner) {
      leave_pool(*partner);
      mark_matched(id, *partner, now, true);
    } else {
      mark_departed(id, now);
    }
    return partner;
  }

  /// Batch tick: maximum matching with H priority over the whole pool.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> batch_step(double now) {
    std::vector<std::uint64_t> ids(pool_[0].begin(), pool_[0].end());
    ids.insert(ids.end(), pool_[1].begin(), pool_[1].end());
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    const std::size_t easy = pool_[0].size();
    if (ids.size() < 2 || (easy == 0 && !hard_hard_possible_)) return out;
    std::vector<AgentType> types(ids.size(), AgentType::Hard);
    std::fill(types.begin(), types.begin() + static_cast<std::ptrdiff_t>(easy), AgentType::Easy);
    CompatibilityGraph g(std::move(types));
    const std::size_t limit = hard_hard_possible_ ? ids.size() : easy;
    for (std::size_t i = 0; i < limit; ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        if (compatible(ids[i], ids[j])) g.add_edge(static_cast<Vertex>(i), static_cast<Vertex>(j));
    const Matching matching = max_matching_h_priority(g, &policy_rng_);
    for (auto [u, v] : matching.pairs) {
      const std::uint64_t a = ids[u];
      const std::uint64_t b = ids[v];
      leave_pool(a);
      leave_pool(b);
      mark_matched(a, b, now, false);
      out.emplace_back(a, b);
    }
    return out;
  }

  void mark_matched(std::uint64_t a, std::uint64_t b, double now, bool a_initiated) {
    auto& ra = records_[a];
    auto& rb = records_[b];
    ra.outcome = rb.outcome = Outcome::Matched;
    ra.exit = rb.exit = now;
    ra.partner_id = static_cast<std::int64_t>(b);
    rb.partner_id = static_cast<std::int64_t>(a);
    ra.partner_type = rb.type;
    rb.partner_type = ra.type;
    ra.initiated = a_initiated;
  }

  void mark_departed(std::uint64_t id, double now) {
    records_[id].outcome = Outcome::Departed;
    records_[id].exit = now;
  }

  void mark_rejected(std::uint64_t id, double now) {
    records_[id].outcome = Outcome::Rejected;
    records_[id].exit = now;
  }

  /// True when no two pooled agents are compatible.
  bool pool_is_stable() const {
    std::vector<std::uint64_t> all(pool_[0].begin(), pool_[0].end());
    all.insert(all.end(), pool_[1].begin(), pool_[1].end());
    for (std::size_t i = 0; i < all.size(); ++i)
      for (std::size_t j = i + 1; j < all.size(); ++j)
        if (compatible(all[i], all[j])) return false;
    return true;
  }

 private:
  static constexpr std::uint32_t kAbsent = 0xffffffffu;
  static std::size_t index(AgentType t) { return t == AgentType::Easy ? 0 : 1; }

  AgentRef ref(std::uint64_t id) const {
    const auto& r = records_[id];
    return {r.type, r.id, r.profile};
  }

  CompatModel model_;
  Seed pair_seed_;
  Rng policy_rng_;
  bool hard_hard_possible_;
  std::vector<AgentRecord> records_;
  std::vector<std::uint32_t> position_;
  std::vector<std::uint64_t> pool_[2];
};

namespace seed_stream {
inline constexpr std::uint64_t kArrivals = 11;
inline constexpr std::uint64_t kCompatibility = 12;
inline constexpr std::uint64_t kPolicy = 13;
}  // namespace seed_stream

/// Exact event simulation of one market run. The run ends with the
/// horizon_arrivals-th arrival; agents still waiting then are censored.
inline SimTrace run_simulation(const SimConfig& config) {
  validate(config);
  struct Event {
    double time;
    std::uint64_t seq;
    enum class Kind : std::uint8_t { Arrival, Critical, Tick } kind;
    std::uint64_t agent;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::uint64_t seq = 0;
  auto schedule = [&](double t, Event::Kind kind, std::uint64_t agent) {
    events.push(Event{t, seq++, kind, agent});
  };

  Rng arrivals(derive_seed(config.seed, seed_stream::kArrivals));
  MarketState state(config.model, derive_seed(config.seed, seed_stream::kCompatibility),
                    derive_seed(config.seed, seed_stream::kPolicy));
  const auto* matrix = std::get_if<MatrixModel>(&config.model);
  const double mean_gap = 1.0 / config.total_rate();
  const double easy_share = 1.0 / (2.0 + config.lambda);
  const auto capacity = config.resolved_capacity();
  const Policy policy = config.policy;

  SimTrace trace;
  state.records().reserve(config.horizon_arrivals);
  if (config.record_pool_series) trace.pool_series.push_back({0.0, 0, 0});
  auto sample_pool = [&](double t) {
    if (!config.record_pool_series) return;
    const auto e = static_cast<std::uint32_t>(state.pool_size(AgentType::Easy));
    const auto h = static_cast<std::uint32_t>(state.pool_size(AgentType::Hard));
    const PoolSample& last = trace.pool_series.back();
    if (last.easy == e && last.hard == h) return;
    if (last.time == t)
      trace.pool_series.back() = {t, e, h};
    else
      trace.pool_series.push_back({t, e, h});
  };

  schedule(arrivals.exponential(mean_gap), Event::Kind::Arrival, 0);
  std::uint64_t tick_index = 1;
  if (policy.kind == Policy::Kind::Batching) schedule(policy.period, Event::Kind::Tick, 0);

  std::uint64_t arrived = 0;
  bool admitted_since_tick = false;
  double now = 0.0;
  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    now = ev.time;
    if (ev.kind == Event::Kind::Arrival) {
      AgentType type;
      std::uint32_t profile = 0;
      if (matrix != nullptr) {
        profile = static_cast<std::uint32_t>(arrivals.index(matrix->n));
        type = matrix->labels[profile];
      } else {
        type = arrivals.uniform() < easy_share ? AgentType::Easy : AgentType::Hard;
      }
      const double critical_at = now + arrivals.exponential(config.d);
      const std::uint64_t id = state.add_agent(type, now, critical_at, profile);
      ++arrived;

      bool admitted = true;
      if (policy.kind == Policy::Kind::Greedy) {
        auto partner = state.find_partner(id);
        if (partner) {
          state.leave_pool(*partner);
          state.mark_matched(id, *partner, now, true);
          admitted = false;
        } else if (capacity && state.pool_size() >= *capacity) {
          state.mark_rejected(id, now);
          admitted = false;
        } else {
          state.join_pool(id);
        }
      } else if (capacity && state.pool_size() >= *capacity) {
        state.mark_rejected(id, now);
        admitted = false;
      } else {
        state.join_pool(id);
      }
      if (admitted) {
        schedule(critical_at, Event::Kind::Critical, id);
        admitted_since_tick = true;
      }
      if (arrived >= config.horizon_arrivals) {
        sample_pool(now);
        break;
      }
      schedule(now + arrivals.exponential(mean_gap), Event::Kind::Arrival, 0);
    } else if (ev.kind == Event::Kind::Critical) {
      if (!state.present(ev.agent)) continue;
      if (policy.kind == Policy::Kind::Patient) {
        state.patient_step(ev.agent, now);
      } else {
        state.leave_pool(ev.agent);
        state.mark_departed(ev.agent, now);
      }
    } else {
      // Leftovers of a maximum matching are pairwise incompatible, so a tick
      // without new admissions has nothing to match.
      if (admitted_since_tick) state.batch_step(now);
      admitted_since_tick = false;
      ++tick_index;
      schedule(static_cast<double>(tick_index) * policy.period, Event::Kind::Tick, 0);
    }
    if (config.verify_invariants && policy.kind == Policy::Kind::Greedy && !state.pool_is_stable())
      throw Error(fmt::format("greedy pool holds a compatible pair at t={}", now));
    sample_pool(now);
  }

  trace.end_time = now;
  trace.records = std::move(state.records());
  for (auto& r : trace.records) {
    if (r.outcome == Outcome::Present) {
      r.outcome = Outcome::CensoredAtEnd;
      r.exit = now;
    }
  }
  return trace;
}

inline void write_trace_csv(const SimTrace& trace, std::ostream& out) {
  out << "id,type,arrival,criticality,exit,outcome,partner_id,partner_type\n";
  for (const auto& r : trace.records) {
    out << fmt::format("{},{},{},{},{},{},", r.id, to_char(r.type), r.arrival, r.criticality, r.exit,
                       to_string(r.outcome));
    if (r.outcome == Outcome::Matched)
      out << fmt::format("{},{}\n", r.partner_id, to_char(r.partner_type));
    else
      out << ",\n";
  }
}

}  // namespace dynmatch
