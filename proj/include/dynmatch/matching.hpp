#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "dynmatch/errors.hpp"
#include "dynmatch/graph.hpp"
#include "dynmatch/random.hpp"

namespace dynmatch {

// ---------------------------------------------------------------------------
// Maximum-cardinality matching on general graphs (Edmonds)
// ---------------------------------------------------------------------------

namespace detail {

/// Single-root alternating-tree search with blossom contraction.
///
/// A search that fails leaves a Hungarian tree; its vertices can never lie on
/// a later augmenting path, so they are retired for the rest of the run.
class AugmentingPathSearch {
 public:
  explicit AugmentingPathSearch(const CompatibilityGraph& g)
      : g_(g),
        mate_(g.size(), kUnmatched),
        parent_(g.size(), kUnmatched),
        base_(g.size()),
        even_(g.size(), 0),
        in_tree_(g.size(), 0),
        in_blossom_(g.size(), 0),
        lca_stamp_(g.size(), 0),
        retired_(g.size(), 0) {
    std::iota(base_.begin(), base_.end(), std::int64_t{0});
  }

  std::vector<std::int64_t>& mates() noexcept { return mate_; }
  bool retired(Vertex v) const { return retired_[v] != 0; }

  /// Maximal matching: each unmatched vertex takes its lowest-index free neighbour.
  void greedy_initialize() {
    for (Vertex v = 0; v < g_.size(); ++v) {
      if (mate_[v] != kUnmatched) continue;
      std::int64_t best = kUnmatched;
      for (Vertex u : g_.neighbors(v))
        if (mate_[u] == kUnmatched && (best == kUnmatched || u < best)) best = u;
      if (best != kUnmatched) {
        mate_[v] = best;
        mate_[best] = v;
      }
    }
  }

  /// Augments along a path from `root` if one exists.
  bool augment_from(Vertex root) {
    if (mate_[root] != kUnmatched || retired_[root]) return false;
    std::int64_t v = find_path(root);
    if (v == kUnmatched) {
      for (Vertex t : touched_) retired_[t] = 1;
      reset();
      return false;
    }
    while (v != kUnmatched) {
      const std::int64_t pv = parent_[v];
      const std::int64_t ppv = mate_[pv];
      mate_[v] = pv;
      mate_[pv] = v;
      v = ppv;
    }
    reset();
    return true;
  }

 private:
  void touch(std::int64_t v) {
    if (!in_tree_[v]) {
      in_tree_[v] = 1;
      touched_.push_back(static_cast<Vertex>(v));
    }
  }

  void reset() {
    for (Vertex t : touched_) {
      parent_[t] = kUnmatched;
      base_[t] = t;
      even_[t] = 0;
      in_tree_[t] = 0;
    }
    touched_.clear();
  }

  std::int64_t lowest_common_base(std::int64_t a, std::int64_t b) {
    ++stamp_;
    for (;;) {
      a = base_[a];
      lca_stamp_[a] = stamp_;
      if (mate_[a] == kUnmatched) break;
      a = parent_[mate_[a]];
    }
    for (;;) {
      b = base_[b];
      if (lca_stamp_[b] == stamp_) return b;
      b = parent_[mate_[b]];
    }
  }

  void mark_path(std::int64_t v, std::int64_t b, std::int64_t child) {
    while (base_[v] != b) {
      in_blossom_[base_[v]] = 1;
      in_blossom_[base_[mate_[v]]] = 1;
      parent_[v] = child;
      child = mate_[v];
      v = parent_[mate_[v]];
    }
  }

  std::int64_t find_path(Vertex root) {
    std::vector<std::int64_t> queue;
    queue.push_back(root);
    even_[root] = 1;
    touch(root);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::int64_t v = queue[head];
      for (Vertex to : g_.neighbors(static_cast<Vertex>(v))) {
        if (retired_[to]) continue;
        if (base_[v] == base_[to] || mate_[v] == to) continue;
        if (to == root || (mate_[to] != kUnmatched && parent_[mate_[to]] != kUnmatched)) {
          const std::int64_t current = lowest_common_base(v, to);
          mark_path(v, current, to);
          mark_path(to, current, v);
          for (Vertex t : touched_) {
            if (in_blossom_[base_[t]]) {
              base_[t] = current;
              if (!even_[t]) {
                even_[t] = 1;
                queue.push_back(t);
              }
            }
          }
          for (Vertex t : touched_) in_blossom_[t] = 0;
        } else if (parent_[to] == kUnmatched) {
          parent_[to] = v;
          touch(to);
          if (mate_[to] == kUnmatched) return to;
          const std::int64_t next = mate_[to];
          even_[next] = 1;
          touch(next);
          queue.push_back(next);
        }
      }
    }
    return kUnmatched;
  }

  const CompatibilityGraph& g_;
  std::vector<std::int64_t> mate_;
  std::vector<std::int64_t> parent_;
  std::vector<std::int64_t> base_;
  std::vector<std::uint8_t> even_;
  std::vector<std::uint8_t> in_tree_;
  std::vector<std::uint8_t> in_blossom_;
  std::vector<std::uint64_t> lca_stamp_;
  std::vector<std::uint8_t> retired_;
  std::vector<Vertex> touched_;
  std::uint64_t stamp_ = 0;
};

}  // namespace detail

/// Exact maximum-cardinality matching on a general graph.
inline Matching max_cardinality_matching(const CompatibilityGraph& g) {
  detail::AugmentingPathSearch search(g);
  search.greedy_initialize();
  for (Vertex v = 0; v < g.size(); ++v) search.augment_from(v);
  return Matching::from_mates(search.mates());
}

// ---------------------------------------------------------------------------
// Maximum-weight matching on general graphs
// ---------------------------------------------------------------------------

struct WeightedEdge {
  Vertex u;
  Vertex v;
  std::int64_t weight;  // non-negative
};

struct WeightedGraph {
  std::size_t n = 0;
  std::vector<WeightedEdge> edges;
};

namespace detail {

/// Primal-dual blossom algorithm for maximum-weight matching, O(n^3).
///
/// Vertex duals are stored doubled so that integer weights keep every dual
/// and slack integral. Blossoms are numbered n..2n-1. Edge endpoints are
/// addressed as p = 2k (edge k's u) and p = 2k + 1 (edge k's v).
class WeightedBlossomSolver {
 public:
  WeightedBlossomSolver(std::size_t n, std::span<const WeightedEdge> edges)
      : n_(static_cast<int>(n)), edges_(edges.begin(), edges.end()) {
    const int nedge = static_cast<int>(edges_.size());
    endpoint_.resize(2 * nedge);
    neighbend_.assign(n_, {});
    for (int k = 0; k < nedge; ++k) {
      const auto& e = edges_[k];
      if (e.u == e.v || e.u >= n || e.v >= n) throw InvalidParameter("invalid weighted edge");
      if (e.weight < 0) throw InvalidParameter("edge weights must be non-negative");
      endpoint_[2 * k] = static_cast<int>(e.u);
      endpoint_[2 * k + 1] = static_cast<int>(e.v);
      neighbend_[e.u].push_back(2 * k + 1);
      neighbend_[e.v].push_back(2 * k);
    }
    std::int64_t max_weight = 0;
    for (const auto& e : edges_) max_weight = std::max(max_weight, e.weight);

    mate_.assign(n_, -1);
    label_.assign(2 * n_, 0);
    labelend_.assign(2 * n_, -1);
    inblossom_.resize(n_);
    std::iota(inblossom_.begin(), inblossom_.end(), 0);
    blossomparent_.assign(2 * n_, -1);
    blossomchilds_.assign(2 * n_, {});
    blossombase_.assign(2 * n_, -1);
    std::iota(blossombase_.begin(), blossombase_.begin() + n_, 0);
    blossomendps_.assign(2 * n_, {});
    bestedge_.assign(2 * n_, -1);
    blossombestedges_.assign(2 * n_, {});
    has_bestedges_.assign(2 * n_, 0);
    for (int b = 2 * n_ - 1; b >= n_; --b) unusedblossoms_.push_back(b);
    dualvar_.assign(2 * n_, 0);
    std::fill(dualvar_.begin(), dualvar_.begin() + n_, max_weight);
    allowedge_.assign(nedge, 0);
  }

  /// Returns mate[v] (vertex index, or -1).
  std::vector<std::int64_t> solve() {
    if (!edges_.empty()) run();
    std::vector<std::int64_t> out(n_, kUnmatched);
    for (int v = 0; v < n_; ++v)
      if (mate_[v] >= 0) out[v] = endpoint_[mate_[v]];
    return out;
  }

 private:
  std::int64_t slack(int k) const {
    const auto& e = edges_[k];
    return dualvar_[e.u] + dualvar_[e.v] - 2 * e.weight;
  }

  void leaves(int b, std::vector<int>& out) const {
    if (b < n_) {
      out.push_back(b);
      return;
    }
    for (int t : blossomchilds_[b]) leaves(t, out);
  }

  std::vector<int> leaves(int b) const {
    std::vector<int> out;
    leaves(b, out);
    return out;
  }

  static int wrap(int j, std::size_t size) {
    const int s = static_cast<int>(size);
    return ((j % s) + s) % s;
  }

  void assign_label(int w, int t, int p) {
    const int b = inblossom_[w];
    label_[w] = label_[b] = t;
    labelend_[w] = labelend_[b] = p;
    bestedge_[w] = bestedge_[b] = -1;
    if (t == 1) {
      leaves(b, queue_);
    } else if (t == 2) {
      const int base = blossombase_[b];
      assign_label(endpoint_[mate_[base]], 1, mate_[base] ^ 1);
    }
  }

  int scan_blossom(int v, int w) {
    std::vector<int> path;
    int base = -1;
    while (v != -1 || w != -1) {
      int b = inblossom_[v];
      if (label_[b] & 4) {
        base = blossombase_[b];
        break;
      }
      path.push_back(b);
      label_[b] = 5;
      if (labelend_[b] == -1) {
        v = -1;
      } else {
        v = endpoint_[labelend_[b]];
        b = inblossom_[v];
        v = endpoint_[labelend_[b]];
      }
      if (w != -1) std::swap(v, w);
    }
    for (int b : path) label_[b] = 1;
    return base;
  }

  void add_blossom(int base, int k) {
    int v = static_cast<int>(edges_[k].u);
    int w = static_cast<int>(edges_[k].v);
    const int bb = inblossom_[base];
    int bv = inblossom_[v];
    int bw = inblossom_[w];
    const int b = unusedblossoms_.back();
    unusedblossoms_.pop_back();
    blossombase_[b] = base;
    blossomparent_[b] = -1;
    blossomparent_[bb] = b;
    auto& path = blossomchilds_[b];
    auto& endps = blossomendps_[b];
    path.clear();
    endps.clear();
    while (bv != bb) {
      blossomparent_[bv] = b;
      path.push_back(bv);
      endps.push_back(labelend_[bv]);
      v = endpoint_[labelend_[bv]];
      bv = inblossom_[v];
    }
    path.push_back(bb);
    std::reverse(path.begin(), path.end());
    std::reverse(endps.begin(), endps.end());
    endps.push_back(2 * k);
    while (bw != bb) {
      blossomparent_[bw] = b;
      path.push_back(bw);
      endps.push_back(labelend_[bw] ^ 1);
      w = endpoint_[labelend_[bw]];
      bw = inblossom_[w];
    }
    label_[b] = 1;
    labelend_[b] = labelend_[bb];
    dualvar_[b] = 0;
    for (int leaf : leaves(b)) {
      if (label_[inblossom_[leaf]] == 2) queue_.push_back(leaf);
      inblossom_[leaf] = b;
    }
    std::vector<int> bestedgeto(2 * n_, -1);
    for (int sub : path) {
      std::vector<std::vector<int>> lists;
      if (!has_bestedges_[sub]) {
        for (int leaf : leaves(sub)) {
          std::vector<int> list;
          for (int p : neighbend_[leaf]) list.push_back(p / 2);
          lists.push_back(std::move(list));
        }
      } else {
        lists.push_back(blossombestedges_[sub]);
      }
      for (const auto& list : lists) {
        for (int kk : list) {
          int i = static_cast<int>(edges_[kk].u);
          int j = static_cast<int>(edges_[kk].v);
          if (inblossom_[j] == b) std::swap(i, j);
          const int bj = inblossom_[j];
          if (bj != b && label_[bj] == 1 &&
              (bestedgeto[bj] == -1 || slack(kk) < slack(bestedgeto[bj])))
            bestedgeto[bj] = kk;
        }
      }
      blossombestedges_[sub].clear();
      has_bestedges_[sub] = 0;
      bestedge_[sub] = -1;
    }
    auto& best = blossombestedges_[b];
    best.clear();
    for (int kk : bestedgeto)
      if (kk != -1) best.push_back(kk);
    has_bestedges_[b] = 1;
    bestedge_[b] = -1;
    for (int kk : best)
      if (bestedge_[b] == -1 || slack(kk) < slack(bestedge_[b])) bestedge_[b] = kk;
  }

  void expand_blossom(int b, bool endstage) {
    const std::vector<int> children = blossomchilds_[b];
    for (int s : children) {
      blossomparent_[s] = -1;
      if (s < n_) {
        inblossom_[s] = s;
      } else if (endstage && dualvar_[s] == 0) {
        expand_blossom(s, endstage);
      } else {
        for (int leaf : leaves(s)) inblossom_[leaf] = s;
      }
    }
    if (!endstage && label_[b] == 2) {
      const auto& childs = blossomchilds_[b];
      const auto& endps = blossomendps_[b];
      const int entrychild = inblossom_[endpoint_[labelend_[b] ^ 1]];
      int j = static_cast<int>(std::find(childs.begin(), childs.end(), entrychild) - childs.begin());
      int jstep;
      int endptrick;
      if (j & 1) {
        j -= static_cast<int>(childs.size());
        jstep = 1;
        endptrick = 0;
      } else {
        jstep = -1;
        endptrick = 1;
      }
      int p = labelend_[b];
      while (j != 0) {
        label_[endpoint_[p ^ 1]] = 0;
        label_[endpoint_[endps[wrap(j - endptrick, endps.size())] ^ endptrick ^ 1]] = 0;
        assign_label(endpoint_[p ^ 1], 2, p);
        allowedge_[endps[wrap(j - endptrick, endps.size())] / 2] = 1;
        j += jstep;
        p = endps[wrap(j - endptrick, endps.size())] ^ endptrick;
        allowedge_[p / 2] = 1;
        j += jstep;
      }
      int bv = childs[wrap(j, childs.size())];
      label_[endpoint_[p ^ 1]] = label_[bv] = 2;
      labelend_[endpoint_[p ^ 1]] = labelend_[bv] = p;
      bestedge_[bv] = -1;
      j += jstep;
      while (childs[wrap(j, childs.size())] != entrychild) {
        bv = childs[wrap(j, childs.size())];
        if (label_[bv] == 1) {
          j += jstep;
          continue;
        }
        int reached = -1;
        for (int leaf : leaves(bv)) {
          if (label_[leaf] != 0) {
            reached = leaf;
            break;
          }
        }
        if (reached != -1) {
          label_[reached] = 0;
          label_[endpoint_[mate_[blossombase_[bv]]]] = 0;
          assign_label(reached, 2, labelend_[reached]);
        }
        j += jstep;
      }
    }
    label_[b] = labelend_[b] = -1;
    blossomchilds_[b].clear();
    blossomendps_[b].clear();
    blossombase_[b] = -1;
    blossombestedges_[b].clear();
    has_bestedges_[b] = 0;
    bestedge_[b] = -1;
    unusedblossoms_.push_back(b);
  }

  void augment_blossom(int b, int v) {
    int t = v;
    while (blossomparent_[t] != b) t = blossomparent_[t];
    if (t >= n_) augment_blossom(t, v);
    auto& childs = blossomchilds_[b];
    auto& endps = blossomendps_[b];
    const int i = static_cast<int>(std::find(childs.begin(), childs.end(), t) - childs.begin());
    int j = i;
    int jstep;
    int endptrick;
    if (i & 1) {
      j -= static_cast<int>(childs.size());
      jstep = 1;
      endptrick = 0;
    } else {
      jstep = -1;
      endptrick = 1;
    }
    while (j != 0) {
      j += jstep;
      t = childs[wrap(j, childs.size())];
      const int p = endps[wrap(j - endptrick, endps.size())] ^ endptrick;
      if (t >= n_) augment_blossom(t, endpoint_[p]);
      j += jstep;
      t = childs[wrap(j, childs.size())];
      if (t >= n_) augment_blossom(t, endpoint_[p ^ 1]);
      mate_[endpoint_[p]] = p ^ 1;
      mate_[endpoint_[p ^ 1]] = p;
    }
    std::rotate(childs.begin(), childs.begin() + i, childs.end());
    std::rotate(endps.begin(), endps.begin() + i, endps.end());
    blossombase_[b] = blossombase_[childs[0]];
  }

  void augment_matching(int k) {
    const int v = static_cast<int>(edges_[k].u);
    const int w = static_cast<int>(edges_[k].v);
    const std::pair<int, int> starts[2] = {{v, 2 * k + 1}, {w, 2 * k}};
    for (auto [s, p] : starts) {
      for (;;) {
        const int bs = inblossom_[s];
        if (bs >= n_) augment_blossom(bs, s);
        mate_[s] = p;
        if (labelend_[bs] == -1) break;
        const int t = endpoint_[labelend_[bs]];
        const int bt = inblossom_[t];
        s = endpoint_[labelend_[bt]];
        const int j = endpoint_[labelend_[bt] ^ 1];
        if (bt >= n_) augment_blossom(bt, j);
        mate_[j] = labelend_[bt];
        p = labelend_[bt] ^ 1;
      }
    }
  }

  void run() {
    for (int stage = 0; stage < n_; ++stage) {
      std::fill(label_.begin(), label_.end(), 0);
      std::fill(bestedge_.begin(), bestedge_.end(), -1);
      for (int b = n_; b < 2 * n_; ++b) {
        blossombestedges_[b].clear();
        has_bestedges_[b] = 0;
      }
      std::fill(allowedge_.begin(), allowedge_.end(), 0);
      queue_.clear();
      for (int v = 0; v < n_; ++v)
        if (mate_[v] == -1 && label_[inblossom_[v]] == 0) assign_label(v, 1, -1);

      bool augmented = false;
      for (;;) {
        while (!queue_.empty() && !augmented) {
          const int v = queue_.back();
          queue_.pop_back();
          for (int p : neighbend_[v]) {
            const int k = p / 2;
            const int w = endpoint_[p];
            if (inblossom_[v] == inblossom_[w]) continue;
            std::int64_t kslack = 0;
            if (!allowedge_[k]) {
              kslack = slack(k);
              if (kslack <= 0) allowedge_[k] = 1;
            }
            if (allowedge_[k]) {
              if (label_[inblossom_[w]] == 0) {
                assign_label(w, 2, p ^ 1);
              } else if (label_[inblossom_[w]] == 1) {
                const int base = scan_blossom(v, w);
                if (base >= 0) {
                  add_blossom(base, k);
                } else {
                  augment_matching(k);
                  augmented = true;
                  break;
                }
              } else if (label_[w] == 0) {
                label_[w] = 2;
                labelend_[w] = p ^ 1;
              }
            } else if (label_[inblossom_[w]] == 1) {
              const int b = inblossom_[v];
              if (bestedge_[b] == -1 || kslack < slack(bestedge_[b])) bestedge_[b] = k;
            } else if (label_[w] == 0) {
              if (bestedge_[w] == -1 || kslack < slack(bestedge_[w])) bestedge_[w] = k;
            }
          }
        }
        if (augmented) break;

        int deltatype = 1;
        std::int64_t delta = *std::min_element(dualvar_.begin(), dualvar_.begin() + n_);
        int deltaedge = -1;
        int deltablossom = -1;
        for (int v = 0; v < n_; ++v) {
          if (label_[inblossom_[v]] == 0 && bestedge_[v] != -1) {
            const std::int64_t d = slack(bestedge_[v]);
            if (d < delta) {
              delta = d;
              deltatype = 2;
              deltaedge = bestedge_[v];
            }
          }
        }
        for (int b = 0; b < 2 * n_; ++b) {
          if (blossomparent_[b] == -1 && label_[b] == 1 && bestedge_[b] != -1) {
            const std::int64_t d = slack(bestedge_[b]) / 2;
            if (d < delta) {
              delta = d;
              deltatype = 3;
              deltaedge = bestedge_[b];
            }
          }
        }
        for (int b = n_; b < 2 * n_; ++b) {
          if (blossombase_[b] >= 0 && blossomparent_[b] == -1 && label_[b] == 2 &&
              dualvar_[b] < delta) {
            delta = dualvar_[b];
            deltatype = 4;
            deltablossom = b;
          }
        }

        for (int v = 0; v < n_; ++v) {
          if (label_[inblossom_[v]] == 1)
            dualvar_[v] -= delta;
          else if (label_[inblossom_[v]] == 2)
            dualvar_[v] += delta;
        }
        for (int b = n_; b < 2 * n_; ++b) {
          if (blossombase_[b] >= 0 && blossomparent_[b] == -1) {
            if (label_[b] == 1)
              dualvar_[b] += delta;
            else if (label_[b] == 2)
              dualvar_[b] -= delta;
          }
        }

        if (deltatype == 1) {
          break;
        } else if (deltatype == 2) {
          allowedge_[deltaedge] = 1;
          int i = static_cast<int>(edges_[deltaedge].u);
          if (label_[inblossom_[i]] == 0) i = static_cast<int>(edges_[deltaedge].v);
          queue_.push_back(i);
        } else if (deltatype == 3) {
          allowedge_[deltaedge] = 1;
          queue_.push_back(static_cast<int>(edges_[deltaedge].u));
        } else {
          expand_blossom(deltablossom, false);
        }
      }
      if (!augmented) break;
      for (int b = n_; b < 2 * n_; ++b) {
        if (blossomparent_[b] == -1 && blossombase_[b] >= 0 && label_[b] == 1 &&
            dualvar_[b] == 0)
          expand_blossom(b, true);
      }
    }
  }

  int n_;
  std::vector<WeightedEdge> edges_;
  std::vector<int> endpoint_;
  std::vector<std::vector<int>> neighbend_;
  std::vector<int> mate_;
  std::vector<int> label_;
  std::vector<int> labelend_;
  std::vector<int> inblossom_;
  std::vector<int> blossomparent_;
  std::vector<std::vector<int>> blossomchilds_;
  std::vector<int> blossombase_;
  std::vector<std::vector<int>> blossomendps_;
  std::vector<int> bestedge_;
  std::vector<std::vector<int>> blossombestedges_;
  std::vector<std::uint8_t> has_bestedges_;
  std::vector<int> unusedblossoms_;
  std::vector<std::int64_t> dualvar_;
  std::vector<std::uint8_t> allowedge_;
  std::vector<int> queue_;
};

}  // namespace detail

/// Exact maximum-weight matching. Returns mate[v] or kUnmatched.
inline std::vector<std::int64_t> max_weight_matching(const WeightedGraph& g) {
  return detail::WeightedBlossomSolver(g.n, g.edges).solve();
}

inline std::int64_t matching_weight(const WeightedGraph& g, std::span<const std::int64_t> mate) {
  std::int64_t total = 0;
  for (const auto& e : g.edges)
    if (mate[e.u] == static_cast<std::int64_t>(e.v)) total += e.weight;
  return total;
}

// ---------------------------------------------------------------------------
// Cardinality first, then matched hard-to-match agents
// ---------------------------------------------------------------------------

/// Edge weight 2(n+1) + (number of H endpoints). Any matching M then weighs
/// 2(n+1)|M| + H(M) with H(M) <= 2|M| <= n, so the weight order is the
/// lexicographic order on (|M|, H(M)).
inline WeightedGraph h_priority_weights(const CompatibilityGraph& g) {
  WeightedGraph w;
  w.n = g.size();
  const std::int64_t base = 2 * (static_cast<std::int64_t>(g.size()) + 1);
  for (auto [u, v] : g.edges()) {
    const std::int64_t hard = (g.type(u) == AgentType::Hard) + (g.type(v) == AgentType::Hard);
    w.edges.push_back({u, v, base + hard});
  }
  return w;
}

enum class HPriorityRoute {
  Automatic,  ///< two-phase cardinality route when no H-H edge exists, weighted otherwise
  Weighted,   ///< always the weighted blossom solver
};

namespace detail {

/// Maximum bipartite matching between E vertices and H vertices over E-H
/// edges only (Hopcroft-Karp). Writes into `mate`.
inline void easy_hard_bipartite(const CompatibilityGraph& g, std::vector<std::int64_t>& mate) {
  std::vector<Vertex> left;
  for (Vertex v = 0; v < g.size(); ++v)
    if (g.type(v) == AgentType::Easy) left.push_back(v);
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> dist(g.size(), kInf);
  std::vector<std::size_t> cursor(g.size(), 0);

  auto bfs = [&] {
    std::vector<Vertex> queue;
    bool found = false;
    for (Vertex u : left) {
      if (mate[u] == kUnmatched) {
        dist[u] = 0;
        queue.push_back(u);
      } else {
        dist[u] = kInf;
      }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Vertex u = queue[head];
      for (Vertex h : g.neighbors(u)) {
        if (g.type(h) != AgentType::Hard) continue;
        const std::int64_t next = mate[h];
        if (next == kUnmatched) {
          found = true;
        } else if (dist[next] == kInf) {
          dist[next] = dist[u] + 1;
          queue.push_back(static_cast<Vertex>(next));
        }
      }
    }
    return found;
  };

  // Iterative DFS along the BFS layering.
  auto dfs = [&](Vertex root) {
    std::vector<Vertex> stack{root};
    std::vector<Vertex> via;  // H vertex used to leave stack[i]
    while (!stack.empty()) {
      const Vertex u = stack.back();
      bool advanced = false;
      auto nbrs = g.neighbors(u);
      while (cursor[u] < nbrs.size()) {
        const Vertex h = nbrs[cursor[u]++];
        if (g.type(h) != AgentType::Hard) continue;
        const std::int64_t next = mate[h];
        if (next == kUnmatched) {
          via.push_back(h);
          for (std::size_t i = 0; i < stack.size(); ++i) {
            mate[stack[i]] = via[i];
            mate[via[i]] = stack[i];
          }
          return true;
        }
        if (dist[next] == dist[u] + 1) {
          via.push_back(h);
          stack.push_back(static_cast<Vertex>(next));
          advanced = true;
          break;
        }
      }
      if (!advanced) {
        dist[u] = kInf;
        stack.pop_back();
        if (!via.empty()) via.pop_back();
      }
    }
    return false;
  };

  while (bfs()) {
    std::fill(cursor.begin(), cursor.end(), 0);
    for (Vertex u : left)
      if (mate[u] == kUnmatched) dfs(u);
  }
}

}  // namespace detail

/// Among all maximum-cardinality matchings, one that matches the most H
/// vertices. When `tie_break` is given, edges are presented to the solver in
/// a uniformly random order drawn from it, which selects among optima.
///
/// Without H-H edges the optimum is reached in two phases: a maximum E-H
/// bipartite matching (it already covers as many H vertices as any matching
/// can), then Edmonds augmentation to full cardinality. Augmentation never
/// uncovers a vertex, and any remaining augmenting path joins two free E
/// vertices, so only those are used as roots.
inline Matching max_matching_h_priority(const CompatibilityGraph& graph, Rng* tie_break = nullptr,
                                        HPriorityRoute route = HPriorityRoute::Automatic) {
  const CompatibilityGraph* g = &graph;
  CompatibilityGraph shuffled;
  if (tie_break != nullptr && graph.edge_count() > 1) {
    auto edges = graph.edges();
    tie_break->shuffle(std::span(edges));
    shuffled = CompatibilityGraph(graph.types());
    for (auto [u, v] : edges) shuffled.add_edge(u, v);
    g = &shuffled;
  }

  if (route == HPriorityRoute::Weighted || g->has_hard_hard_edge()) {
    auto mate = max_weight_matching(h_priority_weights(*g));
    return Matching::from_mates(mate);
  }

  detail::AugmentingPathSearch search(*g);
  detail::easy_hard_bipartite(*g, search.mates());
  for (Vertex v = 0; v < g->size(); ++v)
    if (g->type(v) == AgentType::Easy) search.augment_from(v);
  return Matching::from_mates(search.mates());
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

enum class MatchingObjective { Cardinality, CardinalityThenHard };

/// Enumerates every matching; returns the first lexicographic optimum found.
inline Matching brute_force_matching(const CompatibilityGraph& g, MatchingObjective objective) {
  constexpr std::size_t kMaxVertices = 16;
  if (g.size() > kMaxVertices)
    throw TooLarge("brute-force matching supports at most 16 vertices, got " +
                   std::to_string(g.size()));
  const std::size_t n = g.size();
  std::vector<std::int64_t> mate(n, kUnmatched);
  std::vector<std::int64_t> best_mate = mate;
  std::pair<std::size_t, std::size_t> best{0, 0};
  std::pair<std::size_t, std::size_t> current{0, 0};

  auto score = [&](Vertex u, Vertex v) -> std::size_t {
    if (objective == MatchingObjective::Cardinality) return 0;
    return (g.type(u) == AgentType::Hard) + (g.type(v) == AgentType::Hard);
  };

  auto recurse = [&](auto&& self, Vertex v) -> void {
    while (v < n && mate[v] != kUnmatched) ++v;
    if (v >= n) {
      if (current > best) {
        best = current;
        best_mate = mate;
      }
      return;
    }
    self(self, v + 1);
    for (Vertex u : g.neighbors(v)) {
      if (u <= v || mate[u] != kUnmatched) continue;
      mate[v] = u;
      mate[u] = v;
      current.first += 1;
      current.second += score(u, v);
      self(self, v + 1);
      current.first -= 1;
      current.second -= score(u, v);
      mate[v] = mate[u] = kUnmatched;
    }
  };
  recurse(recurse, 0);
  return Matching::from_mates(best_mate);
}

}  // namespace dynmatch
