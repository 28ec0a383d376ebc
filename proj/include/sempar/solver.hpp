#ifndef SEMPAR_SOLVER_HPP
#define SEMPAR_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sempar/anchoring.hpp"
#include "sempar/arborescence.hpp"
#include "sempar/graph.hpp"

namespace sempar {

/// Sparse linear system A z = b or A z <= b over the flat (x, y) coordinates.
struct ConstraintSystem {
  enum class Kind { Equality, Inequality };
  using Row = std::vector<std::pair<int, double>>;  // (coordinate, coefficient)

  Kind kind = Kind::Equality;
  std::vector<Row> rows;
  std::vector<double> rhs;

  std::size_t size() const { return rows.size(); }

  void add_row(Row row, double b) {
    rows.push_back(std::move(row));
    rhs.push_back(b);
  }

  std::vector<double> apply(const std::vector<double>& z) const {
    std::vector<double> out(rows.size(), 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (const auto& [i, c] : rows[r]) out[r] += c * z[i];
    return out;
  }

  /// Az - b for equalities, [Az - b]_+ for inequalities.
  std::vector<double> residual(const std::vector<double>& z) const {
    std::vector<double> r = apply(z);
    for (std::size_t k = 0; k < r.size(); ++k) {
      r[k] -= rhs[k];
      if (kind == Kind::Inequality) r[k] = std::max(r[k], 0.0);
    }
    return r;
  }

  void add_transpose(const std::vector<double>& r, double scale, std::vector<double>& out) const {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (r[k] == 0.0) continue;
      for (const auto& [i, c] : rows[k]) out[i] += scale * c * r[k];
    }
  }
};

/// Equality rows of the MAP problem: exactly one root arc into a content
/// vertex, and for every content vertex u and type t the number of outgoing
/// arcs into type-t vertices equals f_Args(l(u), t) x_u.
inline ConstraintSystem build_ilp1_constraints(const ExtendedGraph& gph) {
  const Grammar& g = gph.grammar();
  const int nv = gph.num_vertices();
  ConstraintSystem cs;
  cs.kind = ConstraintSystem::Kind::Equality;
  ConstraintSystem::Row root_row;
  for (int v = 1; v < nv; ++v)
    if (!gph.is_null(v)) root_row.emplace_back(nv + gph.root_arc(v), 1.0);
  cs.add_row(std::move(root_row), 1.0);
  for (int i = 1; i <= gph.length(); ++i) {
    for (int tag = 0; tag < g.num_tags(); ++tag) {
      const int u = gph.vertex(i, tag);
      for (int t = 0; t < g.num_types(); ++t) {
        ConstraintSystem::Row row;
        for (int j = 1; j <= gph.length(); ++j) {
          if (j == i) continue;
          for (int dep = 0; dep < g.num_tags(); ++dep)
            if (g.tag_type(dep) == t) row.emplace_back(nv + gph.arc_index(u, gph.vertex(j, dep)), 1.0);
        }
        const int f = g.tag_args(tag, t);
        if (f != 0) row.emplace_back(u, -static_cast<double>(f));
        if (row.empty()) continue;
        cs.add_row(std::move(row), 0.0);
      }
    }
  }
  return cs;
}

/// At most one anchored AST vertex per word.
inline ConstraintSystem build_ilp2_constraints(const ExtendedGraph& gph) {
  ConstraintSystem cs;
  cs.kind = ConstraintSystem::Kind::Inequality;
  for (int i = 1; i <= gph.length(); ++i) {
    ConstraintSystem::Row row;
    for (int tag = 0; tag < gph.num_tags(); ++tag) row.emplace_back(gph.vertex(i, tag), 1.0);
    cs.add_row(std::move(row), 1.0);
  }
  return cs;
}

struct PenaltyEval {
  double value = 0.0;
  std::vector<double> gradient;  // of the penalty (to be subtracted)
};

/// (1/2beta)||Az-b||^2 or (1/2beta)||[Az-b]_+||^2 and its gradient A^T r / beta.
inline PenaltyEval penalty_value_grad(const ConstraintSystem& cs, const std::vector<double>& z, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const std::vector<double> r = cs.residual(z);
  PenaltyEval out;
  out.gradient.assign(z.size(), 0.0);
  double sq = 0.0;
  for (double v : r) sq += v * v;
  out.value = sq / (2.0 * beta);
  cs.add_transpose(r, 1.0 / beta, out.gradient);
  return out;
}

/// Exact line search for theta^T z - (1/2beta)||Az - b||^2 along d, clipped to [0, 1].
inline double step_size_equality(const std::vector<double>& theta, const ConstraintSystem& cs,
                                 const std::vector<double>& z, const std::vector<double>& d, double beta) {
  double td = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) td += theta[i] * d[i];
  const std::vector<double> ad = cs.apply(d);
  const std::vector<double> r = cs.residual(z);
  double ad_sq = 0.0, r_ad = 0.0;
  for (std::size_t k = 0; k < ad.size(); ++k) {
    ad_sq += ad[k] * ad[k];
    r_ad += r[k] * ad[k];
  }
  if (ad_sq <= 1e-300) return td > 0.0 ? 1.0 : 0.0;
  const double gamma = (beta * td - r_ad) / ad_sq;
  return std::clamp(gamma, 0.0, 1.0);
}

/// Bisection on the derivative of theta^T z - (1/2beta)||[Az - b]_+||^2 along d.
inline double step_size_inequality(const std::vector<double>& theta, const ConstraintSystem& cs,
                                   const std::vector<double>& z, const std::vector<double>& d, double beta,
                                   int iterations = 10) {
  double td = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) td += theta[i] * d[i];
  const std::vector<double> az = cs.apply(z);
  const std::vector<double> ad = cs.apply(d);
  auto derivative = [&](double gamma) {
    double s = 0.0;
    for (std::size_t k = 0; k < ad.size(); ++k) {
      const double r = az[k] + gamma * ad[k] - cs.rhs[k];
      if (r > 0.0) s += r * ad[k];
    }
    return td - s / beta;
  };
  if (derivative(0.0) <= 0.0) return 0.0;
  if (derivative(1.0) >= 0.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (derivative(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  // The midpoint can overshoot a root close to lo; never step to a worse point.
  auto gain = [&](double gamma) {
    double s = 0.0;
    for (std::size_t k = 0; k < ad.size(); ++k) {
      const double r = std::max(az[k] + gamma * ad[k] - cs.rhs[k], 0.0);
      s += r * r;
    }
    return gamma * td - s / (2.0 * beta);
  };
  const double mid = 0.5 * (lo + hi);
  return gain(mid) >= gain(lo) ? mid : lo;
}

struct SolverConfig {
  double beta0 = 1.0;
  int max_iters = 500;
  double eps = 1e-6;
  int bisection_iters = 10;
  double support_threshold = 1e-6;
  bool freeze_beta = false;  // keep beta = beta0 (testing aid)
  std::ostream* trace = nullptr;

  void validate() const {
    if (!(beta0 > 0.0)) throw std::invalid_argument("beta0 must be > 0");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
    if (bisection_iters < 1) throw std::invalid_argument("bisection_iters must be >= 1");
  }
};

struct IterationRecord {
  int iteration = 0;
  double beta = 0.0;
  double objective = 0.0;  // smoothed objective at the current iterate
  double gap = 0.0;
  double step = 0.0;
};

struct SolveResult {
  SolutionVector z_fractional;
  double dual_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  double beta = 0.0;                  // smoothness at the returned iterate
  double smoothed_objective = 0.0;    // g_beta(z_fractional)
  double linear_objective = 0.0;      // theta^T z_fractional
  std::vector<IterationRecord> trace;
  SolutionVector z_integral;
  bool integral_feasible = false;

  /// Certified bound on the smoothed optimum, hence on every feasible point.
  double upper_bound() const { return smoothed_objective + dual_gap; }
};

inline double beta_at(const SolverConfig& cfg, int k) {
  return cfg.freeze_beta ? cfg.beta0 : cfg.beta0 / std::sqrt(static_cast<double>(k) + 1.0);
}

inline double smoothed_objective(const std::vector<double>& theta, const ConstraintSystem& cs,
                                 const std::vector<double>& z, double beta) {
  double lin = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) lin += theta[i] * z[i];
  return lin - penalty_value_grad(cs, z, beta).value;
}

/// Conditional gradient on g(z) = theta^T z - penalty_beta(Az) over the hull
/// of the LMO's vertices, starting at lmo(theta). `lmo` maps a SolutionVector
/// objective to an optimal vertex.
template <typename Lmo>
SolveResult conditional_gradient(Lmo&& lmo, const SolutionVector& theta, const ConstraintSystem& cs,
                                 const SolverConfig& cfg) {
  cfg.validate();
  const std::vector<double>& th = theta.values();
  SolveResult res;
  SolutionVector z = lmo(theta);
  SolutionVector grad = theta;
  std::vector<double> d(z.size());

  // Evaluates the gradient at z with the given beta, calls the LMO and
  // fills d; returns (gap, objective).
  auto direction = [&](double beta) {
    const PenaltyEval pen = penalty_value_grad(cs, z.values(), beta);
    for (std::size_t i = 0; i < th.size(); ++i) grad[i] = th[i] - pen.gradient[i];
    const SolutionVector s = lmo(grad);
    double gap = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = s[i] - z[i];
      gap += grad[i] * d[i];
      lin += th[i] * z[i];
    }
    return std::pair{gap, lin - pen.value};
  };

  int k = 0;
  double gap = 0.0, objective = 0.0, beta = beta_at(cfg, 0);
  for (; k < cfg.max_iters; ++k) {
    beta = beta_at(cfg, k);
    std::tie(gap, objective) = direction(beta);
    IterationRecord rec{k, beta, objective, gap, 0.0};
    if (gap <= cfg.eps) {
      res.converged = true;
      res.trace.push_back(rec);
      if (cfg.trace)
        *cfg.trace << "iter=" << k << " beta=" << beta << " objective=" << objective << " gap=" << gap
                   << " step=0\n";
      break;
    }
    const double gamma = cs.kind == ConstraintSystem::Kind::Equality
                             ? step_size_equality(th, cs, z.values(), d, beta)
                             : step_size_inequality(th, cs, z.values(), d, beta, cfg.bisection_iters);
    rec.step = gamma;
    res.trace.push_back(rec);
    if (cfg.trace)
      *cfg.trace << "iter=" << k << " beta=" << beta << " objective=" << objective << " gap=" << gap
                 << " step=" << gamma << "\n";
    for (std::size_t i = 0; i < d.size(); ++i) z[i] += gamma * d[i];
  }
  if (!res.converged) {
    beta = beta_at(cfg, k);
    std::tie(gap, objective) = direction(beta);
    res.converged = gap <= cfg.eps;
  }
  res.iterations = k;
  res.dual_gap = gap;
  res.beta = beta;
  res.smoothed_objective = objective;
  res.linear_objective = dot(theta, z);
  res.z_fractional = std::move(z);
  return res;
}

namespace detail {

/// Depth-first branch-and-bound over valency slots, restricted to the arcs
/// flagged in `allowed`. Children of one (head, type) slot are chosen in
/// increasing word order so every structure is visited once.
class SupportSearch {
 public:
  SupportSearch(const ExtendedGraph& gph, const std::vector<char>& allowed, long node_limit)
      : gph_(gph), g_(gph.grammar()), allowed_(allowed), node_limit_(node_limit) {
    const int n = gph.length();
    null_value_.assign(n + 1, kInfeasible);
    best_any_.assign(n + 1, kInfeasible);
    for (int a = 0; a < gph.num_arcs(); ++a) {
      if (!allowed_[a]) continue;
      const int v = gph.target(a), j = gph.cluster(v);
      const double w = gph.phi()[a] + gph.mu()[v];
      if (gph.is_null(v)) null_value_[j] = w;
      best_any_[j] = std::max(best_any_[j], w);
    }
    used_.assign(n + 1, 0);
    chosen_.assign(n + 1, -1);
    head_arc_.assign(n + 1, -1);
  }

  std::optional<std::vector<int>> run() {
    const int n = gph_.length();
    double rest = 0.0;
    for (int j = 1; j <= n; ++j) rest += best_any_[j];
    rest_bound_ = rest;
    for (int j = 1; j <= n; ++j) {
      for (int tag = 0; tag < g_.num_tags(); ++tag) {
        const int v = gph_.vertex(j, tag);
        const int a = gph_.root_arc(v);
        if (!allowed_[a]) continue;
        place(j, v, a);
        const std::size_t mark = pending_.size();
        push_groups(v);
        search(gph_.phi()[a] + gph_.mu()[v]);
        pop_groups(mark);
        unplace(j);
      }
    }
    if (best_value_ == kInfeasible) return std::nullopt;
    return best_arcs_;
  }

  double best_value() const { return best_value_; }
  bool exhausted() const { return nodes_ <= node_limit_; }
  long nodes() const { return nodes_; }

 private:
  struct Group {
    int head;
    int type;
    int remaining;
    int last_word;
  };

  void place(int j, int v, int a) {
    used_[j] = 1;
    chosen_[j] = v;
    head_arc_[j] = a;
    rest_bound_ -= best_any_[j];
  }
  void unplace(int j) {
    used_[j] = 0;
    chosen_[j] = -1;
    head_arc_[j] = -1;
    rest_bound_ += best_any_[j];
  }

  void pop_groups(std::size_t mark) {
    for (std::size_t k = mark; k < pending_.size(); ++k) open_slots_ -= pending_[k].remaining;
    pending_.resize(mark);
  }

  void push_groups(int v) {
    const int tag = gph_.slot(v);
    for (int t = 0; t < g_.num_types(); ++t) {
      const int f = g_.tag_args(tag, t);
      if (f > 0) {
        pending_.push_back({v, t, f, 0});
        open_slots_ += f;
      }
    }
  }

  void search(double value) {
    if (++nodes_ > node_limit_) return;
    const int n = gph_.length();
    int free_clusters = 0;
    for (int j = 1; j <= n; ++j) free_clusters += !used_[j];
    if (open_slots_ > free_clusters) return;
    if (rest_bound_ == kInfeasible || value + rest_bound_ <= best_value_) return;
    if (pending_.empty()) {
      double total = value;
      for (int j = 1; j <= n; ++j)
        if (!used_[j]) total += null_value_[j];
      if (total > best_value_) {
        best_value_ = total;
        best_arcs_.clear();
        for (int j = 1; j <= n; ++j)
          best_arcs_.push_back(used_[j] ? head_arc_[j] : gph_.root_arc(gph_.null_vertex(j)));
        std::sort(best_arcs_.begin(), best_arcs_.end());
      }
      return;
    }
    const Group group = pending_.back();
    for (int j = group.last_word + 1; j <= n; ++j) {
      if (used_[j]) continue;
      for (int tag = 0; tag < g_.num_tags(); ++tag) {
        if (g_.tag_type(tag) != group.type) continue;
        const int v = gph_.vertex(j, tag);
        const int a = gph_.arc_index(group.head, v);
        if (!allowed_[a]) continue;
        // Consume one slot of the current group.
        pending_.back() = {group.head, group.type, group.remaining - 1, j};
        if (group.remaining == 1) pending_.pop_back();
        --open_slots_;
        place(j, v, a);
        const std::size_t mark = pending_.size();
        push_groups(v);
        search(value + gph_.phi()[a] + gph_.mu()[v]);
        pop_groups(mark);
        unplace(j);
        ++open_slots_;
        if (group.remaining == 1)
          pending_.push_back(group);
        else
          pending_.back() = group;
      }
    }
  }

  const ExtendedGraph& gph_;
  const Grammar& g_;
  const std::vector<char>& allowed_;
  long node_limit_;
  long nodes_ = 0;
  std::vector<double> null_value_;
  std::vector<double> best_any_;
  std::vector<char> used_;
  std::vector<int> chosen_;
  std::vector<int> head_arc_;
  std::vector<Group> pending_;
  int open_slots_ = 0;
  double rest_bound_ = 0.0;
  double best_value_ = kInfeasible;
  std::vector<int> best_arcs_;
};

}  // namespace detail

/// Exact MAP structure using only the arcs flagged in `allowed`.
inline std::optional<SolutionVector> solve_restricted(const ExtendedGraph& gph, const std::vector<char>& allowed,
                                                      long node_limit = 20'000'000) {
  detail::SupportSearch search(gph, allowed, node_limit);
  auto arcs = search.run();
  if (!arcs) return std::nullopt;
  return arcs_to_solution(gph, *arcs);
}

/// Rounds a fractional MAP solution by solving the problem exactly on the
/// arcs whose mass (and source-vertex mass) exceeds `threshold`. The threshold
/// halves while the restricted problem is infeasible; after that the support
/// grows by zero-mass arcs until it covers the full graph.
inline std::optional<SolutionVector> round_support(const ExtendedGraph& gph, const SolutionVector& z,
                                                   double threshold = 1e-6) {
  std::vector<char> allowed(gph.num_arcs(), 0);
  std::size_t last_count = 0;
  double tau = threshold;
  while (tau > 0.0) {
    std::size_t count = 0;
    for (int a = 0; a < gph.num_arcs(); ++a) {
      const int u = gph.source(a);
      allowed[a] = z.y()[a] > tau && (u == 0 || z.x()[u] > tau);
      count += allowed[a];
    }
    if (count > last_count) {
      last_count = count;
      if (auto sol = solve_restricted(gph, allowed)) return sol;
    }
    // Halve until the next-largest entry enters the support.
    double next = 0.0;
    for (double v : z.values())
      if (v <= tau && v > next) next = v;
    if (next <= 0.0) break;
    do tau *= 0.5;
    while (tau >= next);
  }
  // Zero-mass arcs enter by decreasing arc-plus-target weight, in batches
  // that double each round.
  std::vector<int> rest;
  for (int a = 0; a < gph.num_arcs(); ++a)
    if (!allowed[a]) rest.push_back(a);
  auto gain = [&gph](int a) { return gph.phi()[a] + gph.mu()[gph.target(a)]; };
  std::stable_sort(rest.begin(), rest.end(), [&](int l, int r) { return gain(l) > gain(r); });
  std::size_t batch = std::max<std::size_t>(last_count, static_cast<std::size_t>(gph.length()) + 1);
  std::size_t pos = 0;
  while (pos < rest.size()) {
    const std::size_t end = std::min(rest.size(), pos + batch);
    for (; pos < end; ++pos) allowed[rest[pos]] = 1;
    if (auto sol = solve_restricted(gph, allowed)) {
      // One more doubling; keep whichever restricted optimum is heavier.
      const std::size_t more = std::min(rest.size(), pos + 2 * batch);
      for (; pos < more; ++pos) allowed[rest[pos]] = 1;
      auto wider = solve_restricted(gph, allowed);
      return wider && weight_of(gph, *wider) > weight_of(gph, *sol) ? wider : sol;
    }
    batch *= 2;
  }
  return std::nullopt;
}

inline bool is_feasible_structure(const ExtendedGraph& gph, const SolutionVector& z) {
  try {
    (void)solution_to_anchored_ast(gph, z);
    return true;
  } catch (const InfeasibleSolution&) {
    return false;
  }
}

/// Approximate MAP decoding: smoothed conditional gradient over spanning
/// arborescences of the contracted graph, then support-restricted rounding.
inline SolveResult map_inference(const ExtendedGraph& gph, const SolverConfig& cfg = {}, bool round = true) {
  const ConstraintSystem cs = build_ilp1_constraints(gph);
  const SolutionVector theta = gph.weights();
  SolveResult res =
      conditional_gradient([&gph](const SolutionVector& psi) { return lmo_sa(gph, psi); }, theta, cs, cfg);
  if (!round) return res;
  if (res.z_fractional.is_integral() && is_feasible_structure(gph, res.z_fractional)) {
    res.z_integral = res.z_fractional;
    for (double& v : res.z_integral.values()) v = std::round(v);
    res.integral_feasible = true;
    return res;
  }
  if (auto rounded = round_support(gph, res.z_fractional, cfg.support_threshold)) {
    res.z_integral = std::move(*rounded);
    res.integral_feasible = true;
  }
  return res;
}

struct AnchorResult {
  Alignment alignment;
  SolveResult solve;
};

/// Latent anchoring: smoothed conditional gradient over the alignment
/// relaxation with per-word inequality penalties, then Kuhn-Munkres rounding.
inline AnchorResult latent_anchor_detailed(const ExtendedGraph& gph, const Ast& ast, const SolverConfig& cfg = {}) {
  if (ast.size() > gph.length())
    throw AnchoringError("no label-compatible anchoring: AST has more vertices than the sentence has words");
  const ConstraintSystem cs = build_ilp2_constraints(gph);
  const SolutionVector theta = gph.weights();
  AnchorResult out;
  out.solve = conditional_gradient(
      [&gph, &ast](const SolutionVector& psi) { return lmo_align(gph, ast, psi); }, theta, cs, cfg);
  out.alignment = hungarian_round(gph, ast, out.solve.z_fractional);
  out.solve.z_integral = alignment_to_solution(gph, ast, out.alignment);
  out.solve.integral_feasible = is_injective_per_cluster(gph, out.alignment);
  return out;
}

inline Alignment latent_anchor(const ExtendedGraph& gph, const Ast& ast, const SolverConfig& cfg = {}) {
  return latent_anchor_detailed(gph, ast, cfg).alignment;
}

}  // namespace sempar

#endif  // SEMPAR_SOLVER_HPP
