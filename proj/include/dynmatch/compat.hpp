#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dynmatch/errors.hpp"
#include "dynmatch/graph.hpp"
#include "dynmatch/matching.hpp"
#include "dynmatch/random.hpp"

namespace dynmatch {

/// E-H pairs compatible with probability p, E-E with q, H-H never.
struct TwoTypeModel {
  double p = 0.0;
  double q = 0.0;
};

/// Every pair compatible with probability p regardless of type.
struct HomogeneousModel {
  double p = 0.0;
};

/// Fixed compatibility between n agent profiles. Agents in a market are
/// copies of a profile; two copies of the same profile are incompatible.
struct MatrixModel {
  std::size_t n = 0;
  std::vector<std::string> ids;
  std::vector<AgentType> labels;
  std::vector<std::uint8_t> bits;  // row-major n x n

  bool compatible(std::size_t i, std::size_t j) const { return bits[i * n + j] != 0; }

  std::vector<std::uint32_t> rows_of_type(AgentType t) const {
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == t) rows.push_back(static_cast<std::uint32_t>(i));
    return rows;
  }

  friend bool operator==(const MatrixModel&, const MatrixModel&) = default;
};

using CompatModel = std::variant<TwoTypeModel, HomogeneousModel, MatrixModel>;

/// An agent as seen by a compatibility query. `profile` is only read by the
/// matrix model.
struct AgentRef {
  AgentType type = AgentType::Easy;
  std::uint64_t id = 0;
  std::uint32_t profile = 0;
};

namespace detail {

inline void check_probability(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0))
    throw InvalidParameter(std::string(name) + " must lie in [0,1], got " + std::to_string(value));
}

}  // namespace detail

inline void validate(const CompatModel& model) {
  if (const auto* t = std::get_if<TwoTypeModel>(&model)) {
    detail::check_probability(t->p, "p");
    detail::check_probability(t->q, "q");
  } else if (const auto* h = std::get_if<HomogeneousModel>(&model)) {
    detail::check_probability(h->p, "p");
  } else {
    const auto& mm = std::get<MatrixModel>(model);
    if (mm.labels.size() != mm.n || mm.bits.size() != mm.n * mm.n || mm.ids.size() != mm.n)
      throw InvalidParameter("matrix model dimensions are inconsistent");
    for (std::size_t i = 0; i < mm.n; ++i) {
      if (mm.compatible(i, i)) throw InvalidParameter("matrix model has a true diagonal entry");
      for (std::size_t j = i + 1; j < mm.n; ++j)
        if (mm.compatible(i, j) != mm.compatible(j, i))
          throw InvalidParameter("matrix model is not symmetric");
    }
  }
}

inline std::string model_name(const CompatModel& model) {
  switch (model.index()) {
    case 0: return "two_type";
    case 1: return "homogeneous";
    default: return "matrix";
  }
}

/// Pairwise compatibility. Pure in (unordered id pair, types, model, seed).
inline bool compatible(const CompatModel& model, const AgentRef& a, const AgentRef& b, Seed stream_seed) {
  if (const auto* t = std::get_if<TwoTypeModel>(&model)) {
    if (a.type == AgentType::Hard && b.type == AgentType::Hard) return false;
    const double prob = (a.type == AgentType::Easy && b.type == AgentType::Easy) ? t->q : t->p;
    return pair_uniform(a.id, b.id, stream_seed) < prob;
  }
  if (const auto* h = std::get_if<HomogeneousModel>(&model))
    return pair_uniform(a.id, b.id, stream_seed) < h->p;
  return std::get<MatrixModel>(model).compatible(a.profile, b.profile);
}

/// False when no two H agents can ever be compatible under `model`.
inline bool hard_hard_possible(const CompatModel& model) {
  if (std::holds_alternative<TwoTypeModel>(model)) return false;
  if (const auto* h = std::get_if<HomogeneousModel>(&model)) return h->p > 0.0;
  const auto& mm = std::get<MatrixModel>(model);
  const auto rows = mm.rows_of_type(AgentType::Hard);
  for (auto i : rows)
    for (auto j : rows)
      if (mm.compatible(i, j)) return true;
  return false;
}

/// A realized static pool: the graph plus the agents behind its vertices.
struct StaticPool {
  CompatibilityGraph graph;
  std::vector<AgentRef> agents;
};

inline std::size_t hard_count(std::size_t m, double lambda) {
  return static_cast<std::size_t>(std::llround((1.0 + lambda) * static_cast<double>(m)));
}

/// m E agents followed by round((1+lambda) m) H agents; ids are vertex indices.
inline StaticPool sample_static_pool_with_agents(std::size_t m, double lambda, const CompatModel& model,
                                                 Seed seed) {
  if (m < 1) throw InvalidParameter("m must be at least 1");
  if (!(lambda >= -1.0)) throw InvalidParameter("lambda must be at least -1");
  validate(model);
  const std::size_t nh = hard_count(m, lambda);
  const std::size_t n = m + nh;

  StaticPool pool;
  pool.agents.resize(n);
  std::vector<AgentType> types(n);
  Rng profile_rng(derive_seed(seed, 1));
  const auto* mm = std::get_if<MatrixModel>(&model);
  std::vector<std::uint32_t> easy_rows;
  std::vector<std::uint32_t> hard_rows;
  if (mm != nullptr) {
    easy_rows = mm->rows_of_type(AgentType::Easy);
    hard_rows = mm->rows_of_type(AgentType::Hard);
    if (easy_rows.empty() || (nh > 0 && hard_rows.empty()))
      throw InvalidParameter("matrix model lacks rows of a required type");
  }
  for (std::size_t v = 0; v < n; ++v) {
    const AgentType t = v < m ? AgentType::Easy : AgentType::Hard;
    types[v] = t;
    AgentRef& a = pool.agents[v];
    a.type = t;
    a.id = v;
    if (mm != nullptr) {
      const auto& rows = t == AgentType::Easy ? easy_rows : hard_rows;
      a.profile = rows[profile_rng.index(rows.size())];
    }
  }

  pool.graph = CompatibilityGraph(std::move(types));
  const Seed pair_seed = derive_seed(seed, 2);
  const bool skip_hard_hard = !hard_hard_possible(model);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (skip_hard_hard && u >= m) break;
      if (compatible(model, pool.agents[u], pool.agents[v], pair_seed))
        pool.graph.add_edge(static_cast<Vertex>(u), static_cast<Vertex>(v));
    }
  }
  return pool;
}

inline CompatibilityGraph sample_static_pool(std::size_t m, double lambda, const CompatModel& model, Seed seed) {
  return sample_static_pool_with_agents(m, lambda, model, seed).graph;
}

/// Fraction of agents matched by a maximum matching.
inline double smm(const CompatibilityGraph& g) {
  if (g.empty()) throw EmptyGraph();
  return 2.0 * static_cast<double>(max_cardinality_matching(g).size()) / static_cast<double>(g.size());
}

/// Fraction of agents with no compatible partner.
inline double fwp(const CompatibilityGraph& g) {
  if (g.empty()) throw EmptyGraph();
  std::size_t isolated = 0;
  for (Vertex v = 0; v < g.size(); ++v) isolated += g.degree(v) == 0;
  return static_cast<double>(isolated) / static_cast<double>(g.size());
}

/// Visits vertices in `order`, pairing each unmatched one with its
/// lowest-index unmatched neighbour.
inline Matching sequential_greedy_match(const CompatibilityGraph& g, std::span<const Vertex> order) {
  if (order.size() != g.size()) throw InvalidParameter("order must be a permutation of the vertices");
  std::vector<std::uint8_t> seen(g.size(), 0);
  for (Vertex v : order) {
    if (v >= g.size() || seen[v]) throw InvalidParameter("order must be a permutation of the vertices");
    seen[v] = 1;
  }
  std::vector<std::int64_t> mate(g.size(), kUnmatched);
  for (Vertex v : order) {
    if (mate[v] != kUnmatched) continue;
    std::int64_t best = kUnmatched;
    for (Vertex u : g.neighbors(v))
      if (mate[u] == kUnmatched && (best == kUnmatched || u < best)) best = u;
    if (best != kUnmatched) {
      mate[v] = best;
      mate[best] = v;
    }
  }
  return Matching::from_mates(mate);
}

// ---------------------------------------------------------------------------
// Matrix pool files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline MatrixModel parse_pool_matrix(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(detail::trim(line));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(1, "missing agent count");

  MatrixModel mm;
  try {
    std::size_t used = 0;
    const long long n = std::stoll(lines[0], &used);
    if (used != lines[0].size() || n < 1) throw ParseError(1, "agent count must be a positive integer");
    mm.n = static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw ParseError(1, "agent count must be a positive integer");
  }
  const std::size_t n = mm.n;
  if (lines.size() < 1 + 2 * n)
    throw ParseError(lines.size() + 1, "expected " + std::to_string(1 + 2 * n) + " lines, file ends early");
  if (lines.size() > 1 + 2 * n) throw ParseError(2 * n + 2, "unexpected content after the matrix");

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lineno = i + 2;
    const auto fields = detail::split(lines[i + 1], ',');
    if (fields.size() != 2 || fields[0].empty())
      throw ParseError(lineno, "expected 'id,type'");
    if (fields[1] != "E" && fields[1] != "H") throw ParseError(lineno, "type must be E or H");
    mm.ids.push_back(fields[0]);
    mm.labels.push_back(fields[1] == "E" ? AgentType::Easy : AgentType::Hard);
  }

  mm.bits.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lineno = n + 2 + i;
    const auto fields = detail::split(lines[n + 1 + i], ',');
    if (fields.size() != n)
      throw ParseError(lineno, "expected " + std::to_string(n) + " comma-separated values");
    for (std::size_t j = 0; j < n; ++j) {
      if (fields[j] != "0" && fields[j] != "1") throw ParseError(lineno, "matrix entries must be 0 or 1");
      mm.bits[i * n + j] = fields[j] == "1";
    }
    if (mm.bits[i * n + i]) throw InvalidDiagonal(lineno, "diagonal entry must be 0");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (mm.bits[i * n + j] != mm.bits[j * n + i])
        throw AsymmetricMatrix(n + 2 + i, "entry (" + std::to_string(i) + "," + std::to_string(j) +
                                              ") differs from its transpose");
  return mm;
}

inline MatrixModel load_pool_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open pool file '" + path + "'");
  return parse_pool_matrix(in);
}

inline void write_pool_matrix(const MatrixModel& mm, std::ostream& out) {
  out << mm.n << '\n';
  for (std::size_t i = 0; i < mm.n; ++i) out << mm.ids[i] << ',' << to_char(mm.labels[i]) << '\n';
  for (std::size_t i = 0; i < mm.n; ++i) {
    for (std::size_t j = 0; j < mm.n; ++j) {
      if (j > 0) out << ',';
      out << (mm.compatible(i, j) ? '1' : '0');
    }
    out << '\n';
  }
}

inline void save_pool_matrix(const MatrixModel& mm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write pool file '" + path + "'");
  write_pool_matrix(mm, out);
}

}  // namespace dynmatch
