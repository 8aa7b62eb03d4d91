#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynmatch/errors.hpp"

namespace dynmatch {

enum class AgentType : std::uint8_t { Easy, Hard };

constexpr char to_char(AgentType t) noexcept { return t == AgentType::Easy ? 'E' : 'H'; }

inline AgentType parse_agent_type(const std::string& s) {
  if (s == "E") return AgentType::Easy;
  if (s == "H") return AgentType::Hard;
  throw InvalidParameter("agent type must be E or H, got '" + s + "'");
}

using Vertex = std::uint32_t;
inline constexpr std::int64_t kUnmatched = -1;

/// Undirected simple graph over typed vertices. Callers must not add an
/// unordered pair twice; `has_edge` is available for checking.
class CompatibilityGraph {
 public:
  CompatibilityGraph() = default;
  explicit CompatibilityGraph(std::vector<AgentType> types)
      : types_(std::move(types)), adjacency_(types_.size()) {}

  std::size_t size() const noexcept { return types_.size(); }
  bool empty() const noexcept { return types_.empty(); }
  AgentType type(Vertex v) const { return types_[v]; }
  const std::vector<AgentType>& types() const noexcept { return types_; }

  std::span<const Vertex> neighbors(Vertex v) const { return adjacency_[v]; }
  std::size_t degree(Vertex v) const { return adjacency_[v].size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }

  void add_edge(Vertex u, Vertex v) {
    if (u == v) throw InvalidParameter("self-loop on vertex " + std::to_string(u));
    if (u >= size() || v >= size()) throw InvalidParameter("edge endpoint out of range");
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
    ++edge_count_;
  }

  bool has_edge(Vertex u, Vertex v) const {
    if (u >= size() || v >= size()) return false;
    const auto& a = adjacency_[u].size() <= adjacency_[v].size() ? adjacency_[u] : adjacency_[v];
    const Vertex other = adjacency_[u].size() <= adjacency_[v].size() ? v : u;
    return std::find(a.begin(), a.end(), other) != a.end();
  }

  /// Every edge once, as (min, max), ordered by insertion around the smaller endpoint.
  std::vector<std::pair<Vertex, Vertex>> edges() const {
    std::vector<std::pair<Vertex, Vertex>> out;
    out.reserve(edge_count_);
    for (Vertex u = 0; u < size(); ++u)
      for (Vertex v : adjacency_[u])
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  bool has_hard_hard_edge() const {
    for (Vertex u = 0; u < size(); ++u) {
      if (types_[u] != AgentType::Hard) continue;
      for (Vertex v : adjacency_[u])
        if (types_[v] == AgentType::Hard) return true;
    }
    return false;
  }

 private:
  std::vector<AgentType> types_;
  std::vector<std::vector<Vertex>> adjacency_;
  std::size_t edge_count_ = 0;
};

/// A set of vertex-disjoint pairs.
struct Matching {
  std::vector<std::pair<Vertex, Vertex>> pairs;

  std::size_t size() const noexcept { return pairs.size(); }

  std::vector<std::int64_t> mates(std::size_t n) const {
    std::vector<std::int64_t> mate(n, kUnmatched);
    for (auto [u, v] : pairs) {
      mate[u] = v;
      mate[v] = u;
    }
    return mate;
  }

  static Matching from_mates(std::span<const std::int64_t> mate) {
    Matching m;
    for (std::size_t v = 0; v < mate.size(); ++v)
      if (mate[v] != kUnmatched && static_cast<std::size_t>(mate[v]) > v)
        m.pairs.emplace_back(static_cast<Vertex>(v), static_cast<Vertex>(mate[v]));
    return m;
  }
};

/// Disjointness and edge membership.
inline bool is_valid_matching(const CompatibilityGraph& g, const Matching& m) {
  std::vector<bool> used(g.size(), false);
  for (auto [u, v] : m.pairs) {
    if (u >= g.size() || v >= g.size() || u == v) return false;
    if (used[u] || used[v]) return false;
    if (!g.has_edge(u, v)) return false;
    used[u] = used[v] = true;
  }
  return true;
}

inline std::size_t matched_of_type(const CompatibilityGraph& g, const Matching& m, AgentType t) {
  std::size_t count = 0;
  for (auto [u, v] : m.pairs) count += (g.type(u) == t) + (g.type(v) == t);
  return count;
}

}  // namespace dynmatch
