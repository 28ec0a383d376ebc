#ifndef SEMPAR_ARBORESCENCE_HPP
#define SEMPAR_ARBORESCENCE_HPP

#include <limits>
#include <stdexcept>
#include <vector>

#include "sempar/graph.hpp"

namespace sempar {

inline constexpr double kNoArc = -std::numeric_limits<double>::infinity();

/// Dense weighted digraph on nodes 0..size-1; node 0 is the root.
struct DenseDigraph {
  int size = 0;
  std::vector<double> weight;  // row-major [head * size + dep], kNoArc if absent

  explicit DenseDigraph(int n = 0) : size(n), weight(static_cast<std::size_t>(n) * n, kNoArc) {}
  double& at(int head, int dep) { return weight[static_cast<std::size_t>(head) * size + dep]; }
  double at(int head, int dep) const { return weight[static_cast<std::size_t>(head) * size + dep]; }
};

/// One node per cluster. Each node pair keeps the best original arc under the
/// objective, weighted by arc score plus destination-vertex score.
struct ContractedGraph {
  DenseDigraph graph;
  std::vector<int> best_arc;  // [head * size + dep] -> original arc index, -1 if none

  int size() const { return graph.size; }
  int arc(int head, int dep) const { return best_arc[static_cast<std::size_t>(head) * graph.size + dep]; }
};

inline ContractedGraph contract(const ExtendedGraph& gph, const SolutionVector& psi) {
  if (psi.num_vertices() != gph.num_vertices() || psi.num_arcs() != gph.num_arcs())
    throw std::invalid_argument("contract: objective does not match graph");
  const int k = gph.length() + 1;
  ContractedGraph cg{DenseDigraph(k), std::vector<int>(static_cast<std::size_t>(k) * k, -1)};
  const auto x = psi.x();
  const auto y = psi.y();
  for (int a = 0; a < gph.num_arcs(); ++a) {
    const int u = gph.source(a), v = gph.target(a);
    const int i = gph.cluster(u), j = gph.cluster(v);
    const double w = y[a] + x[v];
    double& slot = cg.graph.at(i, j);
    if (w > slot) {  // strict: keep the lowest index on ties
      slot = w;
      cg.best_arc[static_cast<std::size_t>(i) * k + j] = a;
    }
  }
  return cg;
}

struct UnreachableNode : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<int> chu_liu_edmonds(const DenseDigraph& g) {
  const int n = g.size;
  std::vector<int> parent(n, -1);
  for (int v = 1; v < n; ++v) {
    double best = kNoArc;
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      if (g.at(u, v) > best) {
        best = g.at(u, v);
        parent[v] = u;
      }
    }
    if (parent[v] < 0) throw UnreachableNode("node " + std::to_string(v) + " has no incoming arc");
  }
  // Find a cycle among the greedy choices.
  std::vector<int> mark(n, -1);
  std::vector<int> cycle;
  for (int s = 1; s < n && cycle.empty(); ++s) {
    int v = s;
    while (v > 0 && mark[v] < 0) {
      mark[v] = s;
      v = parent[v];
    }
    if (v > 0 && mark[v] == s) {
      int c = v;
      do {
        cycle.push_back(c);
        c = parent[c];
      } while (c != v);
    }
  }
  if (cycle.empty()) return parent;

  std::vector<char> in_cycle(n, 0);
  double cycle_weight = 0.0;
  for (int c : cycle) {
    in_cycle[c] = 1;
    cycle_weight += g.at(parent[c], c);
  }
  // Node map: non-cycle nodes keep relative order, the cycle becomes the last node.
  std::vector<int> new_id(n, -1), old_of;
  for (int v = 0; v < n; ++v)
    if (!in_cycle[v]) {
      new_id[v] = static_cast<int>(old_of.size());
      old_of.push_back(v);
    }
  const int cnode = static_cast<int>(old_of.size());
  const int m = cnode + 1;
  DenseDigraph h(m);
  std::vector<int> enter_at(m, -1);  // cycle vertex entered from new node u
  std::vector<int> leave_from(m, -1);  // cycle vertex leaving towards new node v
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v || g.at(u, v) == kNoArc) continue;
      if (!in_cycle[u] && !in_cycle[v]) {
        h.at(new_id[u], new_id[v]) = g.at(u, v);
      } else if (!in_cycle[u] && in_cycle[v]) {
        const double w = g.at(u, v) - g.at(parent[v], v) + cycle_weight;
        if (w > h.at(new_id[u], cnode)) {
          h.at(new_id[u], cnode) = w;
          enter_at[new_id[u]] = v;
        }
      } else if (in_cycle[u] && !in_cycle[v]) {
        if (g.at(u, v) > h.at(cnode, new_id[v])) {
          h.at(cnode, new_id[v]) = g.at(u, v);
          leave_from[new_id[v]] = u;
        }
      }
    }
  }
  const std::vector<int> sub = chu_liu_edmonds(h);
  std::vector<int> out(n, -1);
  for (int c : cycle) out[c] = parent[c];
  for (int nv = 1; nv < m; ++nv) {
    const int np = sub[nv];
    const int head = np == cnode ? leave_from[nv] : old_of[np];
    if (nv == cnode) {
      const int entry = enter_at[np];
      out[entry] = head;
    } else {
      out[old_of[nv]] = head;
    }
  }
  return out;
}

}  // namespace detail

/// Maximum-weight spanning arborescence rooted at node 0 (Chu-Liu/Edmonds).
/// Returns the parent of every node; parent[0] == -1.
inline std::vector<int> msa(const DenseDigraph& g) {
  if (g.size == 0) return {};
  return detail::chu_liu_edmonds(g);
}

inline std::vector<int> msa(const ContractedGraph& cg) { return msa(cg.graph); }

inline double arborescence_weight(const DenseDigraph& g, const std::vector<int>& parent) {
  double w = 0.0;
  for (int v = 1; v < g.size; ++v) w += g.at(parent[v], v);
  return w;
}

/// Linear maximization over spanning arborescences of the contracted graph,
/// expanded back to vertex and arc indicators of the extended graph.
inline SolutionVector lmo_sa(const ExtendedGraph& gph, const SolutionVector& psi) {
  const ContractedGraph cg = contract(gph, psi);
  const std::vector<int> parent = msa(cg);
  SolutionVector z = gph.zeros();
  z.x()[0] = 1.0;
  for (int j = 1; j < cg.size(); ++j) {
    const int a = cg.arc(parent[j], j);
    z.y()[a] = 1.0;
    z.x()[gph.target(a)] = 1.0;
  }
  return z;
}

}  // namespace sempar

#endif  // SEMPAR_ARBORESCENCE_HPP
