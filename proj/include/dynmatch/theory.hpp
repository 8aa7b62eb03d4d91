#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "dynmatch/errors.hpp"

namespace dynmatch {

struct Predictions {
  double q_H = 0.0;
  double q_E = 0.0;
  double w_H = 0.0;
  double w_E = 0.0;
  double dist_rate_H = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter(std::string(name) + " must be positive");
}

inline void require_non_negative_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be non-negative");
}

// (1 - e^{-x}) / x, accurate near 0.
inline double one_minus_exp_over(double x) { return x == 0.0 ? 1.0 : -std::expm1(-x) / x; }

}  // namespace detail

/// Large-market limits under the greedy policy.
inline Predictions greedy_limits(double lambda, double d) {
  detail::require_non_negative_lambda(lambda);
  detail::require_positive(d, "d");
  Predictions p;
  p.q_H = 1.0 / (1.0 + lambda);
  p.q_E = 1.0;
  p.w_H = lambda * d / (1.0 + lambda);
  p.w_E = 0.0;
  if (lambda > 0.0) p.dist_rate_H = (1.0 + lambda) / (lambda * d);
  return p;
}

/// Large-market limits under the patient policy.
inline Predictions patient_limits(double lambda, double d) {
  detail::require_non_negative_lambda(lambda);
  detail::require_positive(d, "d");
  Predictions p;
  p.q_H = 1.0 / (1.0 + lambda);
  p.q_E = 1.0;
  p.w_H = d;
  p.w_E = 0.0;
  p.dist_rate_H = 1.0 / d;
  return p;
}

/// Upper bounds on match rates and lower bounds on waiting times under
/// batching every T days.
inline Predictions batching_bounds(double lambda, double d, double T) {
  detail::require_non_negative_lambda(lambda);
  detail::require_positive(d, "d");
  detail::require_positive(T, "T");
  const double ratio = detail::one_minus_exp_over(T / d);
  Predictions p;
  p.q_H = ratio / (1.0 + lambda);
  p.q_E = ratio;
  p.w_H = d * (1.0 - p.q_H);
  p.w_E = d * (1.0 - p.q_E);
  return p;
}

/// The H waiting-time lower bound written as a rational function of the
/// criticality rate gamma = 1/d.
inline double batching_waiting_lower_bound_integral_form(double lambda, double d, double T) {
  const double g = 1.0 / d;
  return (g * T * (1.0 + lambda) + std::expm1(-g * T)) / (g * g * (1.0 + lambda) * T);
}

/// 1 + e^{gT}(gT - 1), positive for every T > 0.
inline double batching_gap_term(double gamma, double T) {
  return 1.0 + std::exp(gamma * T) * (gamma * T - 1.0);
}

/// Bounds that hold for every policy: q_H <= 1/(1+lambda), w_H >= lambda d/(1+lambda).
inline Predictions any_policy_upper_bound(double lambda, double d) {
  detail::require_non_negative_lambda(lambda);
  detail::require_positive(d, "d");
  Predictions p;
  p.q_H = 1.0 / (1.0 + lambda);
  p.q_E = 1.0;
  p.w_H = lambda * d / (1.0 + lambda);
  p.w_E = 0.0;
  return p;
}

/// Limits for an E-majority market (-1 <= lambda < 0): everybody matches
/// and waiting vanishes.
inline Predictions small_lambda_limits(double lambda, double d) {
  if (!(lambda >= -1.0 && lambda < 0.0)) throw InvalidParameter("lambda must lie in [-1, 0)");
  detail::require_positive(d, "d");
  Predictions p;
  p.q_H = 1.0;
  p.q_E = 1.0;
  p.w_H = 0.0;
  p.w_E = 0.0;
  return p;
}

/// Bound on the greedy loss ratio. `m` is the arrival rate of E agents per
/// mean sojourn, i.e. m[per day] * d[days].
inline double greedy_loss_ratio_bound(double p, double lambda, double m) {
  detail::require_positive(p, "p");
  detail::require_positive(lambda, "lambda");
  detail::require_positive(m, "m");
  return std::exp(-p * lambda * m / 2.0) + std::exp(-lambda * m);
}

/// Two candidate values for the mean waiting time of H agents who leave
/// unmatched under greedy: the memoryless value and the closed form
/// (1 + lambda - 1/(1+lambda)) d stated alongside the waiting-time law.
struct UnmatchedHardWaiting {
  double memoryless = 0.0;
  double stated = 0.0;
};

inline UnmatchedHardWaiting unmatched_hard_waiting_candidates(double lambda, double d) {
  detail::require_positive(lambda, "lambda");
  detail::require_positive(d, "d");
  return {lambda * d / (1.0 + lambda), (1.0 + lambda - 1.0 / (1.0 + lambda)) * d};
}

// ---------------------------------------------------------------------------
// Bound curves
// ---------------------------------------------------------------------------

struct BoundRow {
  double T = 0.0;
  double q_H_ub = 0.0;
  double q_E_ub = 0.0;
  double w_H_lb = 0.0;
  double w_E_lb = 0.0;
  double q_greedy = 0.0;
  double w_greedy = 0.0;
  double w_patient = 0.0;
};

inline std::vector<BoundRow> emit_bound_curves(double lambda, double d, const std::vector<double>& periods) {
  const Predictions g = greedy_limits(lambda, d);
  const Predictions pat = patient_limits(lambda, d);
  std::vector<BoundRow> rows;
  for (double T : periods) {
    const Predictions b = batching_bounds(lambda, d, T);
    rows.push_back({T, b.q_H, b.q_E, b.w_H, b.w_E, g.q_H, g.w_H, pat.w_H});
  }
  return rows;
}

inline void write_bound_curves_csv(const std::vector<BoundRow>& rows, std::ostream& out) {
  out << "T,q_H_ub,q_E_ub,w_H_lb,w_E_lb,q_greedy,w_greedy,w_patient\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.T, r.q_H_ub, r.q_E_ub, r.w_H_lb, r.w_E_lb, r.q_greedy,
                       r.w_greedy, r.w_patient);
}

// ---------------------------------------------------------------------------
// Birth-death chains
// ---------------------------------------------------------------------------

/// Rates on the integer states lo..hi. A closed end is a true boundary of
/// the chain; an open end is a truncation whose tail mass gets estimated.
struct BirthDeathChain {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::function<double(std::int64_t)> left;
  std::function<double(std::int64_t)> right;
  bool lo_closed = true;
  bool hi_closed = true;
};

inline std::int64_t default_half_width(double m) {
  return static_cast<std::int64_t>(std::ceil(10.0 * std::sqrt(m * std::max(std::log(m), 1.0))));
}

/// Upper bounding chain: l_x = m(1 - (1-p)^x) + x, r_x = (1+lambda) m on x >= 0.
inline BirthDeathChain mu_chain(double m, double lambda, double p, std::int64_t half_width = 0) {
  detail::require_positive(m, "m");
  detail::require_non_negative_lambda(lambda);
  if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("p must lie in (0,1]");
  if (half_width <= 0) half_width = default_half_width(m);
  BirthDeathChain c;
  c.lo = 0;
  c.hi = static_cast<std::int64_t>(std::ceil(lambda * m)) + half_width;
  const double log_miss = std::log1p(-std::min(p, 1.0 - 1e-16));
  c.left = [m, log_miss](std::int64_t x) {
    return m * -std::expm1(static_cast<double>(x) * log_miss) + static_cast<double>(x);
  };
  c.right = [m, lambda](std::int64_t) { return (1.0 + lambda) * m; };
  c.lo_closed = true;
  c.hi_closed = false;
  return c;
}

/// Lower bounding chain: l_x = m + max(x, 0), r_x = (1+lambda) m on integers.
inline BirthDeathChain ml_chain(double m, double lambda, std::int64_t half_width = 0) {
  detail::require_positive(m, "m");
  detail::require_non_negative_lambda(lambda);
  if (half_width <= 0) half_width = default_half_width(m);
  BirthDeathChain c;
  const auto top = static_cast<std::int64_t>(std::ceil(lambda * m));
  c.lo = -half_width;
  c.hi = top + half_width;
  c.left = [m](std::int64_t x) { return m + static_cast<double>(std::max<std::int64_t>(x, 0)); };
  c.right = [m, lambda](std::int64_t) { return (1.0 + lambda) * m; };
  c.lo_closed = false;
  c.hi_closed = false;
  return c;
}

struct BdStationary {
  std::int64_t lo = 0;
  std::vector<double> pi;
  double boundary_mass = 0.0;

  std::int64_t hi() const { return lo + static_cast<std::int64_t>(pi.size()) - 1; }

  double prob(std::int64_t x) const {
    if (x < lo || x > hi()) return 0.0;
    return pi[static_cast<std::size_t>(x - lo)];
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) s += pi[i] * static_cast<double>(lo + static_cast<std::int64_t>(i));
    return s;
  }

  /// Mass on states with |x - center| > radius.
  double tail_mass(double center, double radius) const {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
      if (std::abs(static_cast<double>(lo + static_cast<std::int64_t>(i)) - center) > radius) s += pi[i];
    return s;
  }
};

/// Stationary law via detailed balance, pi_{x+1} / pi_x = r_x / l_{x+1},
/// accumulated in log space.
inline BdStationary bd_stationary(const BirthDeathChain& chain, double max_boundary_mass = 1e-9) {
  if (chain.hi < chain.lo) throw InvalidParameter("empty state range");
  const auto n = static_cast<std::size_t>(chain.hi - chain.lo + 1);
  std::vector<double> logpi(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const std::int64_t x = chain.lo + static_cast<std::int64_t>(i) - 1;
    const double r = chain.right(x);
    const double l = chain.left(x + 1);
    if (!(r > 0.0) || !(l > 0.0)) throw InvalidParameter(fmt::format("chain is reducible at state {}", x));
    logpi[i] = logpi[i - 1] + std::log(r) - std::log(l);
  }
  const double peak = *std::max_element(logpi.begin(), logpi.end());
  BdStationary out;
  out.lo = chain.lo;
  out.pi.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.pi[i] = std::exp(logpi[i] - peak);
    total += out.pi[i];
  }
  for (double& v : out.pi) v /= total;

  // Geometric tail bounds past each open end.
  double boundary = 0.0;
  if (!chain.hi_closed) {
    const double ratio = chain.right(chain.hi) / chain.left(chain.hi + 1);
    boundary += ratio < 1.0 ? out.pi.back() * ratio / (1.0 - ratio) : 1.0;
  }
  if (!chain.lo_closed) {
    const double ratio = chain.left(chain.lo) / chain.right(chain.lo - 1);
    boundary += ratio < 1.0 ? out.pi.front() * ratio / (1.0 - ratio) : 1.0;
  }
  out.boundary_mass = boundary;
  if (boundary > max_boundary_mass)
    throw TruncationTooTight(fmt::format("estimated mass outside [{}, {}] is {}", chain.lo, chain.hi, boundary),
                             boundary);
  return out;
}

/// Solves `make(half_width)` and doubles the width until the truncation is
/// wide enough.
inline BdStationary bd_stationary_widening(const std::function<BirthDeathChain(std::int64_t)>& make,
                                           std::int64_t half_width, int max_doublings = 12) {
  for (int i = 0;; ++i) {
    try {
      return bd_stationary(make(half_width));
    } catch (const TruncationTooTight&) {
      if (i >= max_doublings) throw;
      half_width *= 2;
    }
  }
}

inline double detailed_balance_residual(const BirthDeathChain& chain, const BdStationary& s) {
  double worst = 0.0;
  for (std::int64_t x = chain.lo; x < chain.hi; ++x) {
    const double flow_right = s.prob(x) * chain.right(x);
    const double flow_left = s.prob(x + 1) * chain.left(x + 1);
    // Subnormal tail probabilities carry too few digits to compare.
    if (!std::isnormal(flow_right) || !std::isnormal(flow_left)) continue;
    worst = std::max(worst, std::abs(flow_right - flow_left) / std::max(flow_right, flow_left));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Two-dimensional chain of the greedy market
// ---------------------------------------------------------------------------

/// State (x, y): x H agents and y E agents waiting, x + y <= C, time unit
/// equal to the mean sojourn.
struct Ctmc2D {
  double m = 0.0;
  double lambda = 0.0;
  double p = 0.0;
  double q = 0.0;
  int capacity = 0;
  bool as_written = false;  // H-arrival miss (1-q)^y instead of (1-p)^y

  std::size_t state_count() const {
    const auto c = static_cast<std::size_t>(capacity);
    return (c + 1) * (c + 2) / 2;
  }

  /// Row-by-row enumeration: all states with x = 0 first, then x = 1, ...
  std::size_t index(int x, int y) const {
    const auto c = static_cast<std::size_t>(capacity);
    const auto xs = static_cast<std::size_t>(x);
    return xs * (c + 1) - xs * (xs - 1) / 2 + static_cast<std::size_t>(y);
  }

  double miss_h(int x) const { return std::pow(1.0 - p, x); }  // M_x
  double miss_e(int y) const { return std::pow(1.0 - q, y); }  // N_y
  double hard_miss_e(int y) const { return as_written ? miss_e(y) : std::pow(1.0 - p, y); }

  double up(int x, int y) const { return x + y < capacity ? m * miss_h(x) * miss_e(y) : 0.0; }
  double right(int x, int y) const { return x + y < capacity ? m * (1.0 + lambda) * hard_miss_e(y) : 0.0; }
  double down(int x, int y) const {
    if (y == 0) return 0.0;
    return m * miss_h(x) * (1.0 - miss_e(y)) + m * (1.0 + lambda) * (1.0 - hard_miss_e(y)) + y;
  }
  double left(int x, int) const {
    if (x == 0) return 0.0;
    return m * (1.0 - miss_h(x)) + x;
  }
};

inline Ctmc2D greedy_ctmc(double m, double lambda, double p, double q, int capacity, bool as_written = false) {
  detail::require_positive(m, "m");
  if (!(lambda >= -1.0)) throw InvalidParameter("lambda must be at least -1");
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) throw InvalidParameter("probabilities must lie in [0,1]");
  if (capacity < 1) throw InvalidParameter("capacity must be at least 1");
  return {m, lambda, p, q, capacity, as_written};
}

struct Stationary2D {
  int capacity = 0;
  std::vector<double> pi;
  double mean_x = 0.0;  // H agents
  double mean_y = 0.0;  // E agents
  double residual = 0.0;  // max |(pi Q)_s|
};

inline Stationary2D ctmc_stationary_2d(const Ctmc2D& chain) {
  const std::size_t n = chain.state_count();
  const int C = chain.capacity;
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> qt;  // transpose of the generator
  auto each_transition = [&](auto&& visit) {
    for (int x = 0; x <= C; ++x) {
      for (int y = 0; x + y <= C; ++y) {
        const std::size_t s = chain.index(x, y);
        if (double r = chain.up(x, y); r > 0.0) visit(s, chain.index(x, y + 1), r);
        if (double r = chain.right(x, y); r > 0.0) visit(s, chain.index(x + 1, y), r);
        if (double r = chain.down(x, y); r > 0.0) visit(s, chain.index(x, y - 1), r);
        if (double r = chain.left(x, y); r > 0.0) visit(s, chain.index(x - 1, y), r);
      }
    }
  };
  std::vector<double> outflow(n, 0.0);
  each_transition([&](std::size_t from, std::size_t to, double rate) {
    outflow[from] += rate;
    if (to != 0) qt.emplace_back(static_cast<int>(to), static_cast<int>(from), rate);
  });
  for (std::size_t s = 0; s < n; ++s) {
    if (s != 0) qt.emplace_back(static_cast<int>(s), static_cast<int>(s), -outflow[s]);
    qt.emplace_back(0, static_cast<int>(s), 1.0);  // normalization replaces balance row 0
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(qt.begin(), qt.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
  solver.compute(A);
  if (solver.info() != Eigen::Success) throw SolveFailure("sparse LU factorization failed: " + solver.lastErrorMessage());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  b[0] = 1.0;
  Eigen::VectorXd x = solver.solve(b);
  if (solver.info() != Eigen::Success || !x.allFinite()) throw SolveFailure("sparse solve failed");

  Stationary2D out;
  out.capacity = C;
  out.pi.assign(x.data(), x.data() + n);
  for (double& v : out.pi) v = std::max(v, 0.0);
  double total = 0.0;
  for (double v : out.pi) total += v;
  for (double& v : out.pi) v /= total;

  std::vector<double> flow(n, 0.0);
  each_transition([&](std::size_t from, std::size_t to, double rate) {
    flow[to] += out.pi[from] * rate;
    flow[from] -= out.pi[from] * rate;
  });
  for (double f : flow) out.residual = std::max(out.residual, std::abs(f));
  for (int xi = 0; xi <= C; ++xi) {
    for (int yi = 0; xi + yi <= C; ++yi) {
      const double pr = out.pi[chain.index(xi, yi)];
      out.mean_x += pr * xi;
      out.mean_y += pr * yi;
    }
  }
  return out;
}

}  // namespace dynmatch
