#ifndef SEMPAR_GRAPH_HPP
#define SEMPAR_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sempar/grammar.hpp"

namespace sempar {

inline constexpr int kRootLabel = -1;
inline constexpr int kNullLabel = -2;

/// Vector over the (x, y) coordinates of an extended graph: vertex entries
/// first, then arc entries. Used both for solutions and for linear objectives.
class SolutionVector {
 public:
  SolutionVector() = default;
  SolutionVector(int num_vertices, int num_arcs, double fill = 0.0)
      : num_vertices_(num_vertices), values_(static_cast<std::size_t>(num_vertices + num_arcs), fill) {}

  int num_vertices() const { return num_vertices_; }
  int num_arcs() const { return static_cast<int>(values_.size()) - num_vertices_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> x() { return {values_.data(), static_cast<std::size_t>(num_vertices_)}; }
  std::span<const double> x() const { return {values_.data(), static_cast<std::size_t>(num_vertices_)}; }
  std::span<double> y() { return {values_.data() + num_vertices_, values_.size() - num_vertices_}; }
  std::span<const double> y() const {
    return {values_.data() + num_vertices_, values_.size() - num_vertices_};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool is_integral(double tol = 1e-9) const {
    return std::all_of(values_.begin(), values_.end(),
                       [tol](double v) { return std::abs(v - std::round(v)) <= tol; });
  }

  friend bool operator==(const SolutionVector&, const SolutionVector&) = default;

 private:
  int num_vertices_ = 0;
  std::vector<double> values_;
};

inline double dot(const SolutionVector& a, const SolutionVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Clustered graph over a sentence, extended with one null vertex per word.
///
/// Vertex 0 is the root. Word i (1-based) owns vertices
/// 1 + (i-1)(|E|+1) + k for tag k, and the last slot of its block is the
/// null vertex. Arcs are: 0 -> v for every v > 0 (index v-1), followed by
/// every u -> v between non-null vertices of distinct words, ordered by
/// (head word, head tag, dependent word, dependent tag).
class ExtendedGraph {
 public:
  ExtendedGraph() = default;
  ExtendedGraph(int n, std::shared_ptr<const Grammar> grammar) : n_(n), grammar_(std::move(grammar)) {
    if (n_ < 1) throw std::invalid_argument("sentence length must be >= 1");
    if (!grammar_) throw std::invalid_argument("null grammar");
    e_ = grammar_->num_tags();
    num_vertices_ = 1 + n_ * (e_ + 1);
    num_root_arcs_ = num_vertices_ - 1;
    num_arcs_ = num_root_arcs_ + n_ * e_ * (n_ - 1) * e_;
    source_.resize(num_arcs_);
    target_.resize(num_arcs_);
    for (int v = 1; v < num_vertices_; ++v) {
      source_[v - 1] = 0;
      target_[v - 1] = v;
    }
    int a = num_root_arcs_;
    for (int i = 1; i <= n_; ++i)
      for (int t = 0; t < e_; ++t)
        for (int j = 1; j <= n_; ++j) {
          if (j == i) continue;
          for (int s = 0; s < e_; ++s) {
            source_[a] = vertex(i, t);
            target_[a] = vertex(j, s);
            ++a;
          }
        }
    mu_.assign(num_vertices_, 0.0);
    phi_.assign(num_arcs_, 0.0);
  }

  int length() const { return n_; }
  int num_tags() const { return e_; }
  int num_vertices() const { return num_vertices_; }
  int num_arcs() const { return num_arcs_; }
  int num_root_arcs() const { return num_root_arcs_; }
  const Grammar& grammar() const { return *grammar_; }
  const std::shared_ptr<const Grammar>& grammar_ptr() const { return grammar_; }

  /// Vertex of tag `tag` in word `word` (1-based); tag == num_tags() is null.
  int vertex(int word, int tag) const { return 1 + (word - 1) * (e_ + 1) + tag; }
  int null_vertex(int word) const { return vertex(word, e_); }
  int cluster(int v) const { return v == 0 ? 0 : 1 + (v - 1) / (e_ + 1); }
  int slot(int v) const { return v == 0 ? -1 : (v - 1) % (e_ + 1); }
  bool is_null(int v) const { return v != 0 && slot(v) == e_; }
  int label(int v) const {
    if (v == 0) return kRootLabel;
    return is_null(v) ? kNullLabel : slot(v);
  }

  int source(int arc) const { return source_[arc]; }
  int target(int arc) const { return target_[arc]; }
  int root_arc(int v) const { return v - 1; }

  /// Index of arc u -> v, or -1 if the arc does not exist.
  int arc_index(int u, int v) const {
    if (v <= 0 || v >= num_vertices_ || u < 0 || u >= num_vertices_) return -1;
    if (u == 0) return root_arc(v);
    if (is_null(u) || is_null(v)) return -1;
    const int i = cluster(u), j = cluster(v);
    if (i == j) return -1;
    const int jj = j < i ? j - 1 : j - 2;
    return num_root_arcs_ + ((i - 1) * e_ + slot(u)) * ((n_ - 1) * e_) + jj * e_ + slot(v);
  }

  std::vector<double>& mu() { return mu_; }
  const std::vector<double>& mu() const { return mu_; }
  std::vector<double>& phi() { return phi_; }
  const std::vector<double>& phi() const { return phi_; }

  SolutionVector zeros() const { return SolutionVector(num_vertices_, num_arcs_); }

  /// (mu, phi) packed as a linear objective over (x, y).
  SolutionVector weights() const {
    SolutionVector w(num_vertices_, num_arcs_);
    std::copy(mu_.begin(), mu_.end(), w.x().begin());
    std::copy(phi_.begin(), phi_.end(), w.y().begin());
    return w;
  }

  std::string vertex_name(int v) const {
    if (v == 0) return std::string(kRootName);
    const std::string tag = is_null(v) ? std::string(kNullName) : grammar_->tag_name(slot(v));
    return tag + "@" + std::to_string(cluster(v));
  }

 private:
  int n_ = 0;
  int e_ = 0;
  int num_vertices_ = 0;
  int num_root_arcs_ = 0;
  int num_arcs_ = 0;
  std::shared_ptr<const Grammar> grammar_;
  std::vector<int> source_;
  std::vector<int> target_;
  std::vector<double> mu_;
  std::vector<double> phi_;
};

inline ExtendedGraph build_graph(int n, std::shared_ptr<const Grammar> g) {
  return ExtendedGraph(n, std::move(g));
}

/// Builds the graph and fills weights from `mu_source(vertex)` and
/// `phi_source(arc)`.
template <typename MuSource, typename PhiSource>
ExtendedGraph build_graph(int n, std::shared_ptr<const Grammar> g, MuSource&& mu_source,
                          PhiSource&& phi_source) {
  ExtendedGraph gph(n, std::move(g));
  for (int v = 0; v < gph.num_vertices(); ++v) gph.mu()[v] = mu_source(v);
  for (int a = 0; a < gph.num_arcs(); ++a) gph.phi()[a] = phi_source(a);
  return gph;
}

struct WeightFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Applies a weight file to `gph`. Lines:
///   vertex <word> <tag|NULL> <weight>
///   arc <word|0> <tag|ROOT> <word> <tag|NULL> <weight>
/// Entries not listed keep their current value.
inline void apply_weight_file(std::string_view text, ExtendedGraph& gph) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  const Grammar& g = gph.grammar();
  auto fail = [&](const std::string& msg) {
    throw WeightFileError("weight file line " + std::to_string(line_no) + ": " + msg);
  };
  auto resolve = [&](int word, const std::string& tag, bool allow_root) -> int {
    if (word == 0) {
      if (!allow_root || tag != kRootName) fail("word 0 must be paired with ROOT");
      return 0;
    }
    if (word < 0 || word > gph.length())
      fail("word index " + std::to_string(word) + " outside sentence of length " +
           std::to_string(gph.length()));
    if (tag == kNullName) return gph.null_vertex(word);
    auto t = g.find_tag(tag);
    if (!t) fail("unknown tag '" + tag + "'");
    return gph.vertex(word, *t);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "vertex") {
      int word;
      std::string tag;
      double w;
      if (!(ls >> word >> tag >> w)) fail("expected 'vertex <word> <tag> <weight>'");
      gph.mu()[resolve(word, tag, false)] = w;
    } else if (kw == "arc") {
      int hw, dw;
      std::string ht, dt;
      double w;
      if (!(ls >> hw >> ht >> dw >> dt >> w)) fail("expected 'arc <word> <tag> <word> <tag> <weight>'");
      const int u = resolve(hw, ht, true);
      const int v = resolve(dw, dt, false);
      const int a = gph.arc_index(u, v);
      if (a < 0) fail("no arc " + gph.vertex_name(u) + " -> " + gph.vertex_name(v));
      gph.phi()[a] = w;
    } else {
      fail("unknown keyword '" + kw + "'");
    }
  }
}

inline double weight_of(const ExtendedGraph& gph, const SolutionVector& z) {
  if (z.num_vertices() != gph.num_vertices() || z.num_arcs() != gph.num_arcs())
    throw std::invalid_argument("weight_of: dimension mismatch");
  double s = 0.0;
  for (int v = 0; v < gph.num_vertices(); ++v) s += gph.mu()[v] * z.x()[v];
  for (int a = 0; a < gph.num_arcs(); ++a) s += gph.phi()[a] * z.y()[a];
  return s;
}

/// An AST together with the word each of its vertices is anchored on.
struct AnchoredAst {
  Ast ast;
  std::vector<int> word;  // AST vertex -> word index (1-based)
};

enum class ConstraintClass { Dimensions, Integrality, Spanning, SingleRootArc, Valency };

inline const char* to_string(ConstraintClass c) {
  switch (c) {
    case ConstraintClass::Dimensions: return "dimensions";
    case ConstraintClass::Integrality: return "integrality";
    case ConstraintClass::Spanning: return "spanning";
    case ConstraintClass::SingleRootArc: return "single root arc";
    case ConstraintClass::Valency: return "valency";
  }
  return "unknown";
}

struct InfeasibleSolution : std::runtime_error {
  InfeasibleSolution(ConstraintClass c, const std::string& detail)
      : std::runtime_error(std::string(to_string(c)) + " constraint violated: " + detail), which(c) {}
  ConstraintClass which;
};

/// Decodes an integral solution of the extended graph into the anchored AST
/// it encodes. Throws InfeasibleSolution naming the first failing class.
inline AnchoredAst solution_to_anchored_ast(const ExtendedGraph& gph, const SolutionVector& z) {
  using CC = ConstraintClass;
  if (z.num_vertices() != gph.num_vertices() || z.num_arcs() != gph.num_arcs())
    throw InfeasibleSolution(CC::Dimensions, "vector does not match graph");
  for (double v : z.values())
    if (std::abs(v) > 1e-9 && std::abs(v - 1.0) > 1e-9)
      throw InfeasibleSolution(CC::Integrality, "entries must be 0 or 1");
  auto on = [](double v) { return v > 0.5; };
  const int n = gph.length();
  if (!on(z.x()[0])) throw InfeasibleSolution(CC::Spanning, "root vertex not selected");

  std::vector<int> head(gph.num_vertices(), -1);
  std::vector<int> cluster_in(n + 1, 0);
  for (int a = 0; a < gph.num_arcs(); ++a) {
    if (!on(z.y()[a])) continue;
    const int v = gph.target(a);
    if (head[v] >= 0) throw InfeasibleSolution(CC::Spanning, "vertex with two heads");
    head[v] = gph.source(a);
    ++cluster_in[gph.cluster(v)];
  }
  for (int i = 1; i <= n; ++i)
    if (cluster_in[i] != 1)
      throw InfeasibleSolution(CC::Spanning, "cluster " + std::to_string(i) + " has " +
                                                 std::to_string(cluster_in[i]) + " incoming arcs");
  for (int v = 1; v < gph.num_vertices(); ++v)
    if (on(z.x()[v]) != (head[v] >= 0))
      throw InfeasibleSolution(CC::Spanning, "vertex/arc mismatch at " + gph.vertex_name(v));
  // Cluster-level acyclicity: follow heads up to the root.
  std::vector<int> chosen(n + 1, -1);
  for (int v = 1; v < gph.num_vertices(); ++v)
    if (head[v] >= 0) chosen[gph.cluster(v)] = v;
  for (int i = 1; i <= n; ++i) {
    int c = i, steps = 0;
    while (c != 0) {
      if (++steps > n) throw InfeasibleSolution(CC::Spanning, "cycle through cluster " + std::to_string(i));
      c = gph.cluster(head[chosen[c]]);
    }
  }
  int root_child = -1, root_children = 0;
  for (int i = 1; i <= n; ++i) {
    const int v = chosen[i];
    if (head[v] == 0 && !gph.is_null(v)) {
      root_child = v;
      ++root_children;
    }
  }
  if (root_children != 1)
    throw InfeasibleSolution(CC::SingleRootArc,
                             std::to_string(root_children) + " root arcs into non-null vertices");
  const Grammar& g = gph.grammar();
  std::vector<std::vector<int>> kids(gph.num_vertices());
  for (int i = 1; i <= n; ++i) {
    const int v = chosen[i];
    if (head[v] != 0) kids[head[v]].push_back(v);  // word order
  }
  for (int i = 1; i <= n; ++i) {
    const int u = chosen[i];
    if (gph.is_null(u)) continue;
    std::vector<int> counts(g.num_types(), 0);
    for (int v : kids[u]) ++counts[g.tag_type(gph.slot(v))];
    for (int t = 0; t < g.num_types(); ++t)
      if (counts[t] != g.tag_args(gph.slot(u), t))
        throw InfeasibleSolution(CC::Valency, gph.vertex_name(u) + " has " + std::to_string(counts[t]) +
                                                  " argument(s) of type " + g.type_name(t));
  }
  for (int v = 1; v < gph.num_vertices(); ++v)
    if (head[v] > 0 && chosen[gph.cluster(head[v])] != head[v])
      throw InfeasibleSolution(CC::Valency, "arc leaves an unselected vertex");

  AnchoredAst out;
  // Preorder with children in word order.
  std::function<int(int)> visit = [&](int v) {
    const int id = out.ast.add_vertex(gph.slot(v));
    out.word.push_back(gph.cluster(v));
    for (int c : kids[v]) {
      const int cid = visit(c);
      out.ast.children[id].push_back(cid);
    }
    return id;
  };
  out.ast.root = visit(root_child);
  return out;
}

inline Ast solution_to_ast(const ExtendedGraph& gph, const SolutionVector& z) {
  return solution_to_anchored_ast(gph, z).ast;
}

/// Integral solution encoding an anchored AST; unanchored words take their
/// null vertex.
inline SolutionVector anchored_ast_to_solution(const ExtendedGraph& gph, const AnchoredAst& a) {
  SolutionVector z = gph.zeros();
  const int m = a.ast.size();
  if (static_cast<int>(a.word.size()) != m) throw std::invalid_argument("anchoring size mismatch");
  std::vector<char> used(gph.length() + 1, 0);
  auto vtx = [&](int u) {
    const int w = a.word[u];
    if (w < 1 || w > gph.length()) throw std::invalid_argument("anchor outside sentence");
    return gph.vertex(w, a.ast.label[u]);
  };
  z.x()[0] = 1.0;
  for (int u = 0; u < m; ++u) {
    if (used[a.word[u]]) throw std::invalid_argument("two AST vertices anchored on one word");
    used[a.word[u]] = 1;
    z.x()[vtx(u)] = 1.0;
    for (int c : a.ast.children[u]) z.y()[gph.arc_index(vtx(u), vtx(c))] = 1.0;
  }
  z.y()[gph.root_arc(vtx(a.ast.root))] = 1.0;
  for (int i = 1; i <= gph.length(); ++i) {
    if (used[i]) continue;
    z.x()[gph.null_vertex(i)] = 1.0;
    z.y()[gph.root_arc(gph.null_vertex(i))] = 1.0;
  }
  return z;
}

struct ArcSetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
// B must be empty or a 0-rooted arborescence over core (non-null) vertices
// using at most one vertex per cluster.
inline void check_core_arborescence(const ExtendedGraph& gph, const std::vector<int>& arcs) {
  if (arcs.empty()) return;
  std::vector<int> head(gph.num_vertices(), -1);
  std::vector<int> cluster_vertex(gph.length() + 1, -1);
  auto use = [&](int v) {
    const int c = gph.cluster(v);
    if (c == 0) return;
    if (cluster_vertex[c] >= 0 && cluster_vertex[c] != v)
      throw ArcSetError("two vertices of cluster " + std::to_string(c));
    cluster_vertex[c] = v;
  };
  for (int a : arcs) {
    if (a < 0 || a >= gph.num_arcs()) throw ArcSetError("arc index out of range");
    const int u = gph.source(a), v = gph.target(a);
    if (gph.is_null(v)) throw ArcSetError("arc into a null vertex");
    if (head[v] >= 0) throw ArcSetError("vertex with two heads");
    head[v] = u;
    use(u);
    use(v);
  }
  int root_arcs = 0;
  for (int a : arcs) root_arcs += gph.source(a) == 0;
  if (root_arcs != 1) throw ArcSetError("expected exactly one arc leaving the root");
  for (int a : arcs) {
    int v = gph.target(a), steps = 0;
    while (v != 0) {
      if (head[v] < 0) throw ArcSetError("arc source not connected to the root");
      if (++steps > gph.length() + 1) throw ArcSetError("cycle");
      v = head[v];
    }
  }
}
}  // namespace detail

/// Adds 0 -> null(i) for every cluster the core arc set does not enter.
inline std::vector<int> extend_solution(const ExtendedGraph& gph, const std::vector<int>& core_arcs) {
  detail::check_core_arborescence(gph, core_arcs);
  std::vector<char> entered(gph.length() + 1, 0);
  for (int a : core_arcs) entered[gph.cluster(gph.target(a))] = 1;
  std::vector<int> out = core_arcs;
  for (int i = 1; i <= gph.length(); ++i)
    if (!entered[i]) out.push_back(gph.root_arc(gph.null_vertex(i)));
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> restrict_solution(const ExtendedGraph& gph, const std::vector<int>& arcs) {
  std::vector<int> out;
  for (int a : arcs)
    if (!gph.is_null(gph.target(a))) out.push_back(a);
  std::sort(out.begin(), out.end());
  return out;
}

/// Integral (x, y) from a spanning arc set: x_0 = 1 and x_v = in-degree.
inline SolutionVector arcs_to_solution(const ExtendedGraph& gph, const std::vector<int>& arcs) {
  SolutionVector z = gph.zeros();
  z.x()[0] = 1.0;
  for (int a : arcs) {
    z.y()[a] += 1.0;
    z.x()[gph.target(a)] += 1.0;
  }
  return z;
}

inline std::vector<int> solution_arcs(const SolutionVector& z, double threshold = 0.5) {
  std::vector<int> out;
  for (int a = 0; a < z.num_arcs(); ++a)
    if (z.y()[a] > threshold) out.push_back(a);
  return out;
}

}  // namespace sempar

#endif  // SEMPAR_GRAPH_HPP
