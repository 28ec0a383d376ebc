#ifndef SEMPAR_ORACLE_HPP
#define SEMPAR_ORACLE_HPP

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sempar/anchoring.hpp"
#include "sempar/graph.hpp"

// Brute-force ground truth for tiny instances. Nothing here shares code with
// the solver paths it is used to check.

namespace sempar::oracle {

struct EnumerationBudget {
  int max_length = 4;
  int max_tags = 3;
  long max_structures = 1'000'000;  // candidates examined
};

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void check_shape(const ExtendedGraph& gph, const EnumerationBudget& budget) {
  if (gph.length() > budget.max_length)
    throw BudgetExceeded("sentence length " + std::to_string(gph.length()) + " exceeds budget " +
                         std::to_string(budget.max_length));
  if (gph.num_tags() > budget.max_tags)
    throw BudgetExceeded("tag count " + std::to_string(gph.num_tags()) + " exceeds budget " +
                         std::to_string(budget.max_tags));
}
}  // namespace detail

/// Visits every 0-rooted generalized valency-constrained spanning
/// arborescence of the extended graph. Candidates are all assignments of a
/// tag-or-null to each word and a head word (or the root) to each tagged word;
/// a candidate is kept iff it is an arborescence with one root child and
/// satisfies every valency.
template <typename Visitor>
void enumerate_feasible(const ExtendedGraph& gph, Visitor&& visit, const EnumerationBudget& budget = {}) {
  detail::check_shape(gph, budget);
  const Grammar& g = gph.grammar();
  const int n = gph.length();
  const int e = gph.num_tags();
  long examined = 0;
  std::vector<int> tag(n + 1, 0);  // e means null
  while (true) {
    std::vector<int> content;
    for (int i = 1; i <= n; ++i)
      if (tag[i] < e) content.push_back(i);
    // Heads of content words: 0 (root) or another content word.
    std::vector<int> head(n + 1, 0);
    const int k = static_cast<int>(content.size());
    std::vector<int> choice(k, 0);  // index into {0} U content \ {self}
    while (k > 0) {
      if (++examined > budget.max_structures) throw BudgetExceeded("enumeration budget exhausted");
      for (int c = 0; c < k; ++c) {
        const int w = content[c];
        if (choice[c] == 0) {
          head[w] = 0;
        } else {
          int idx = choice[c] - 1;
          int h = -1;
          for (int o : content) {
            if (o == w) continue;
            if (idx-- == 0) {
              h = o;
              break;
            }
          }
          head[w] = h;
        }
      }
      bool ok = true;
      int root_children = 0;
      for (int w : content) root_children += head[w] == 0;
      ok = root_children == 1;
      for (int w : content) {
        if (!ok) break;
        int c = w, steps = 0;
        while (c != 0 && ok) {
          c = head[c];
          ok = ++steps <= n;
        }
      }
      for (int w : content) {
        if (!ok) break;
        std::vector<int> counts(g.num_types(), 0);
        for (int o : content)
          if (head[o] == w) ++counts[g.tag_type(tag[o])];
        for (int t = 0; t < g.num_types() && ok; ++t) ok = counts[t] == g.tag_args(tag[w], t);
      }
      if (ok) {
        SolutionVector z = gph.zeros();
        z.x()[0] = 1.0;
        for (int i = 1; i <= n; ++i) {
          const int v = tag[i] < e ? gph.vertex(i, tag[i]) : gph.null_vertex(i);
          const int u = tag[i] < e && head[i] != 0 ? gph.vertex(head[i], tag[head[i]]) : 0;
          z.x()[v] = 1.0;
          z.y()[gph.arc_index(u, v)] = 1.0;
        }
        visit(z);
      }
      int c = 0;
      while (c < k && ++choice[c] == k) choice[c++] = 0;
      if (c == k) break;
    }
    int i = 1;
    while (i <= n && ++tag[i] == e + 1) tag[i++] = 0;
    if (i > n) break;
  }
}

inline std::vector<SolutionVector> collect_feasible(const ExtendedGraph& gph, const EnumerationBudget& budget = {}) {
  std::vector<SolutionVector> out;
  enumerate_feasible(gph, [&](const SolutionVector& z) { out.push_back(z); }, budget);
  return out;
}

inline double plain_weight(const ExtendedGraph& gph, const SolutionVector& z) {
  double s = 0.0;
  for (std::size_t i = 0; i < gph.mu().size(); ++i) s += gph.mu()[i] * z.x()[i];
  for (std::size_t i = 0; i < gph.phi().size(); ++i) s += gph.phi()[i] * z.y()[i];
  return s;
}

struct ExactMap {
  double weight = -std::numeric_limits<double>::infinity();
  SolutionVector solution;
  long count = 0;
};

inline ExactMap exact_map(const ExtendedGraph& gph, const EnumerationBudget& budget = {}) {
  ExactMap best;
  enumerate_feasible(
      gph,
      [&](const SolutionVector& z) {
        ++best.count;
        const double w = plain_weight(gph, z);
        if (w > best.weight) {
          best.weight = w;
          best.solution = z;
        }
      },
      budget);
  return best;
}

/// log sum over feasible structures of exp(weight), max-shifted.
inline double exact_log_partition(const ExtendedGraph& gph, const EnumerationBudget& budget = {}) {
  std::vector<double> w;
  enumerate_feasible(gph, [&](const SolutionVector& z) { w.push_back(plain_weight(gph, z)); }, budget);
  if (w.empty()) return -std::numeric_limits<double>::infinity();
  double m = w[0];
  for (double v : w) m = std::max(m, v);
  double s = 0.0;
  for (double v : w) s += std::exp(v - m);
  return m + std::log(s);
}

/// Visits every label-compatible alignment of the AST onto words; arcs must
/// join distinct words. `constrained` also forbids two AST vertices on one word.
template <typename Visitor>
void enumerate_alignments(const ExtendedGraph& gph, const Ast& ast, bool constrained, Visitor&& visit,
                          const EnumerationBudget& budget = {}) {
  const int n = gph.length();
  const int m = ast.size();
  if (n > budget.max_length)
    throw BudgetExceeded("sentence length " + std::to_string(n) + " exceeds budget");
  if (std::pow(static_cast<double>(n), m) > static_cast<double>(budget.max_structures))
    throw BudgetExceeded("alignment enumeration exceeds budget");
  std::vector<int> word(m, 1);
  const auto arcs = ast.arcs();
  while (m > 0) {
    bool ok = true;
    for (const auto& [u, v] : arcs) ok = ok && word[u] != word[v];
    if (ok && constrained) {
      std::vector<char> used(n + 1, 0);
      for (int w : word) {
        if (used[w]) ok = false;
        used[w] = 1;
      }
    }
    if (ok) {
      Alignment al;
      for (int u = 0; u < m; ++u) al.assign.push_back(gph.vertex(word[u], ast.label[u]));
      visit(al);
    }
    int c = 0;
    while (c < m && ++word[c] == n + 1) word[c++] = 1;
    if (c == m) break;
  }
}

/// Alignment score computed directly from mu and phi.
inline double plain_alignment_weight(const ExtendedGraph& gph, const Ast& ast, const Alignment& al) {
  double s = gph.phi()[static_cast<std::size_t>(al.assign[ast.root] - 1)];  // root arcs are indexed v-1
  for (int u = 0; u < ast.size(); ++u) s += gph.mu()[al.assign[u]];
  for (const auto& [u, v] : ast.arcs()) s += gph.phi()[gph.arc_index(al.assign[u], al.assign[v])];
  return s;
}

struct ExactAlignment {
  double weight = -std::numeric_limits<double>::infinity();
  Alignment alignment;
  long count = 0;
};

inline ExactAlignment exact_alignment(const ExtendedGraph& gph, const Ast& ast, bool constrained,
                                      const EnumerationBudget& budget = {}) {
  ExactAlignment best;
  enumerate_alignments(
      gph, ast, constrained,
      [&](const Alignment& al) {
        ++best.count;
        const double w = plain_alignment_weight(gph, ast, al);
        if (w > best.weight) {
          best.weight = w;
          best.alignment = al;
        }
      },
      budget);
  return best;
}

/// log sum of exp(weight) over constrained anchorings, each extended to a
/// full structure (unanchored words take their null vertex).
inline double exact_anchored_log_partition(const ExtendedGraph& gph, const Ast& ast,
                                           const EnumerationBudget& budget = {}) {
  std::vector<double> w;
  enumerate_alignments(
      gph, ast, true,
      [&](const Alignment& al) {
        w.push_back(plain_weight(gph, anchored_ast_to_solution(gph, to_anchored_ast(gph, ast, al))));
      },
      budget);
  if (w.empty()) return -std::numeric_limits<double>::infinity();
  double m = w[0];
  for (double v : w) m = std::max(m, v);
  double s = 0.0;
  for (double v : w) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace sempar::oracle

#endif  // SEMPAR_ORACLE_HPP
