#ifndef SEMPAR_ANCHORING_HPP
#define SEMPAR_ANCHORING_HPP

#include <limits>
#include <stdexcept>
#include <vector>

#include "sempar/graph.hpp"

namespace sempar {

/// Maps every AST vertex to a vertex of the extended graph carrying its tag.
struct Alignment {
  std::vector<int> assign;

  friend bool operator==(const Alignment&, const Alignment&) = default;
};

struct AnchoringError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Chart[u', i]: best score of anchoring the subtree of u' with u' on word i.
/// Every cluster holds exactly one vertex per tag, so the word index
/// identifies the label-compatible graph vertex.
struct AlignmentChart {
  int words = 0;
  std::vector<std::vector<double>> score;                 // [ast vertex][word]
  std::vector<std::vector<std::vector<int>>> backpointer;  // [ast vertex][word][child pos] -> word
  int best_root_word = -1;
};

inline constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

struct DpAlignResult {
  double value = kInfeasible;
  AlignmentChart chart;
};

/// Unconstrained alignment of maximum weight: the same graph vertex may be
/// reused, but aligned arcs must exist (parent and child on distinct words).
inline DpAlignResult dp_align(const ExtendedGraph& gph, const Ast& ast, const SolutionVector& psi) {
  const Grammar& g = gph.grammar();
  for (int tag : ast.label)
    if (tag < 0 || tag >= g.num_tags()) throw AnchoringError("AST tag absent from grammar");
  const int n = gph.length();
  const int m = ast.size();
  DpAlignResult res;
  AlignmentChart& chart = res.chart;
  chart.words = n;
  chart.score.assign(m, std::vector<double>(n + 1, kInfeasible));
  chart.backpointer.assign(m, std::vector<std::vector<int>>(n + 1));
  const auto x = psi.x();
  const auto y = psi.y();
  const std::vector<int> order = ast.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int up = *it;
    const auto& kids = ast.children[up];
    for (int i = 1; i <= n; ++i) {
      const int u = gph.vertex(i, ast.label[up]);
      double total = x[u];
      std::vector<int> bp(kids.size(), -1);
      for (std::size_t c = 0; c < kids.size() && total != kInfeasible; ++c) {
        const int vp = kids[c];
        double best = kInfeasible;
        for (int j = 1; j <= n; ++j) {
          if (j == i || chart.score[vp][j] == kInfeasible) continue;
          const int v = gph.vertex(j, ast.label[vp]);
          const double s = chart.score[vp][j] + y[gph.arc_index(u, v)];
          if (s > best) {
            best = s;
            bp[c] = j;
          }
        }
        total = best == kInfeasible ? kInfeasible : total + best;
      }
      chart.score[up][i] = total;
      chart.backpointer[up][i] = std::move(bp);
    }
  }
  if (m == 0) return res;
  for (int i = 1; i <= n; ++i) {
    if (chart.score[ast.root][i] == kInfeasible) continue;
    const int u = gph.vertex(i, ast.label[ast.root]);
    const double s = chart.score[ast.root][i] + y[gph.root_arc(u)];
    if (s > res.value) {
      res.value = s;
      chart.best_root_word = i;
    }
  }
  return res;
}

/// Follows back-pointers from the best root cell.
inline Alignment backtrack(const ExtendedGraph& gph, const AlignmentChart& chart, const Ast& ast) {
  if (chart.best_root_word < 0) throw AnchoringError("no feasible alignment");
  Alignment al;
  al.assign.assign(ast.size(), -1);
  std::vector<std::pair<int, int>> stack{{ast.root, chart.best_root_word}};
  while (!stack.empty()) {
    auto [up, i] = stack.back();
    stack.pop_back();
    al.assign[up] = gph.vertex(i, ast.label[up]);
    const auto& kids = ast.children[up];
    for (std::size_t c = 0; c < kids.size(); ++c) stack.emplace_back(kids[c], chart.backpointer[up][i][c]);
  }
  return al;
}

/// Count vector of an alignment: x_u counts the AST vertices placed on u and
/// y_a counts the AST arcs realized by a, plus the root arc.
inline SolutionVector alignment_to_solution(const ExtendedGraph& gph, const Ast& ast, const Alignment& al) {
  SolutionVector z = gph.zeros();
  for (int up = 0; up < ast.size(); ++up) {
    z.x()[al.assign[up]] += 1.0;
    for (int vp : ast.children[up]) {
      const int a = gph.arc_index(al.assign[up], al.assign[vp]);
      if (a < 0) throw AnchoringError("aligned arc does not exist in the graph");
      z.y()[a] += 1.0;
    }
  }
  z.y()[gph.root_arc(al.assign[ast.root])] += 1.0;
  return z;
}

inline double alignment_weight(const ExtendedGraph& gph, const Ast& ast, const Alignment& al) {
  double w = gph.phi()[gph.root_arc(al.assign[ast.root])];
  for (int up = 0; up < ast.size(); ++up) {
    w += gph.mu()[al.assign[up]];
    for (int vp : ast.children[up]) {
      const int a = gph.arc_index(al.assign[up], al.assign[vp]);
      if (a < 0) throw AnchoringError("aligned arc does not exist in the graph");
      w += gph.phi()[a];
    }
  }
  return w;
}

inline bool is_injective_per_cluster(const ExtendedGraph& gph, const Alignment& al) {
  std::vector<char> used(gph.length() + 1, 0);
  for (int v : al.assign) {
    const int c = gph.cluster(v);
    if (used[c]) return false;
    used[c] = 1;
  }
  return true;
}

inline AnchoredAst to_anchored_ast(const ExtendedGraph& gph, const Ast& ast, const Alignment& al) {
  AnchoredAst out{ast, {}};
  for (int v : al.assign) out.word.push_back(gph.cluster(v));
  return out;
}

inline SolutionVector lmo_align(const ExtendedGraph& gph, const Ast& ast, const SolutionVector& psi) {
  const DpAlignResult res = dp_align(gph, ast, psi);
  return alignment_to_solution(gph, ast, backtrack(gph, res.chart, ast));
}

/// Maximum-benefit assignment of rows to distinct columns (rows <= cols).
/// Returns the column of every row. Kuhn-Munkres with potentials, O(n^2 m).
inline std::vector<int> hungarian_assign(const std::vector<std::vector<double>>& benefit) {
  const int rows = static_cast<int>(benefit.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(benefit[0].size());
  if (rows > cols) throw AnchoringError("more rows than columns in assignment problem");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays, minimizing cost = -benefit.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = -benefit[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col_of(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (p[j] > 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

/// Rounds a fractional anchoring: the benefit of putting AST vertex u' on
/// word i is the fractional mass of the word-i vertex labeled l'(u').
inline Alignment hungarian_round(const ExtendedGraph& gph, const Ast& ast, const SolutionVector& z) {
  const int n = gph.length();
  if (ast.size() > n)
    throw AnchoringError("AST has " + std::to_string(ast.size()) + " vertices but the sentence has " +
                         std::to_string(n) + " words");
  std::vector<std::vector<double>> benefit(ast.size(), std::vector<double>(n, 0.0));
  for (int up = 0; up < ast.size(); ++up)
    for (int i = 1; i <= n; ++i) benefit[up][i - 1] = z.x()[gph.vertex(i, ast.label[up])];
  const std::vector<int> col = hungarian_assign(benefit);
  Alignment al;
  for (int up = 0; up < ast.size(); ++up) al.assign.push_back(gph.vertex(col[up] + 1, ast.label[up]));
  return al;
}

}  // namespace sempar

#endif  // SEMPAR_ANCHORING_HPP
