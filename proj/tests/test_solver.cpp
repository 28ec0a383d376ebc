#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "test_util.hpp"

namespace sempar {
namespace {

using testing::list_states_graph;
using testing::score;

std::vector<double> random_vector(synthetic::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = synthetic::uniform(rng, lo, hi);
  return v;
}

double line_value(const std::vector<double>& theta, const ConstraintSystem& cs, const std::vector<double>& z,
                  const std::vector<double>& d, double beta, double gamma) {
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = z[i] + gamma * d[i];
  return smoothed_objective(theta, cs, p, beta);
}

double grid_argmax(const std::vector<double>& theta, const ConstraintSystem& cs, const std::vector<double>& z,
                   const std::vector<double>& d, double beta, int points) {
  double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
  for (int k = 0; k < points; ++k) {
    const double gamma = static_cast<double>(k) / (points - 1);
    const double v = line_value(theta, cs, z, d, beta, gamma);
    if (v > best) {
      best = v;
      arg = gamma;
    }
  }
  return arg;
}

TEST(Constraints, MapRowCounts) {
  const ExtendedGraph gph(2, testing::toy_grammar());
  const ConstraintSystem cs = build_ilp1_constraints(gph);
  EXPECT_EQ(cs.kind, ConstraintSystem::Kind::Equality);
  EXPECT_EQ(cs.size(), 5u);
  EXPECT_EQ(cs.rhs[0], 1.0);
  EXPECT_EQ(cs.rows[0].size(), 4u);
}

TEST(Constraints, ListStatesPredicateRow) {
  const ExtendedGraph gph = list_states_graph();
  const Grammar& g = gph.grammar();
  const ConstraintSystem cs = build_ilp1_constraints(gph);
  const int nv = gph.num_vertices();
  const int loc = gph.vertex(1, g.tag_id("loc_1"));
  const int arc = gph.arc_index(loc, gph.vertex(2, g.tag_id("state_all")));
  ConstraintSystem::Row expected = {{nv + arc, 1.0}, {loc, -1.0}};
  EXPECT_NE(std::find(cs.rows.begin(), cs.rows.end(), expected), cs.rows.end());
}

TEST(Constraints, FeasibleStructuresSatisfyMapRows) {
  synthetic::Rng rng(73);
  for (int k = 0; k < 50; ++k) {
    auto inst = synthetic::random_instance(rng);
    const ConstraintSystem cs = build_ilp1_constraints(inst.graph);
    for (const SolutionVector& z : collect_feasible(inst.graph))
      for (double r : cs.residual(z.values())) EXPECT_EQ(r, 0.0);
  }
}

TEST(Constraints, AnchoringRows) {
  auto g = testing::toy_grammar();
  const ExtendedGraph gph(3, g);
  const ConstraintSystem cs = build_ilp2_constraints(gph);
  EXPECT_EQ(cs.kind, ConstraintSystem::Kind::Inequality);
  EXPECT_EQ(cs.size(), 3u);
  SolutionVector z = gph.zeros();
  z.x()[gph.vertex(2, 0)] = 2.0;
  EXPECT_EQ(cs.residual(z.values()), (std::vector<double>{0.0, 1.0, 0.0}));
  const Ast ast = parse_program("P(A)", *g);
  enumerate_alignments(gph, ast, true, [&](const Alignment& al) {
    for (double r : cs.residual(alignment_to_solution(gph, ast, al).values())) EXPECT_EQ(r, 0.0);
  });
}

TEST(Penalty, ZeroOnFeasiblePoints) {
  const ExtendedGraph gph = list_states_graph();
  const ConstraintSystem cs = build_ilp1_constraints(gph);
  for (const SolutionVector& z : collect_feasible(gph)) {
    const PenaltyEval p = penalty_value_grad(cs, z.values(), 1.0);
    EXPECT_EQ(p.value, 0.0);
    for (double v : p.gradient) EXPECT_EQ(v, 0.0);
  }
  const PenaltyEval infeasible = penalty_value_grad(cs, lmo_sa(gph, gph.weights()).values(), 1.0);
  EXPECT_GT(infeasible.value, 0.0);
}

TEST(Penalty, SingleUnitResidual) {
  ConstraintSystem eq;
  eq.add_row({{0, 1.0}}, 0.0);
  EXPECT_DOUBLE_EQ(penalty_value_grad(eq, {1.0}, 1.0).value, 0.5);
  ConstraintSystem ineq = eq;
  ineq.kind = ConstraintSystem::Kind::Inequality;
  EXPECT_DOUBLE_EQ(penalty_value_grad(ineq, {1.0}, 1.0).value, 0.5);
  EXPECT_DOUBLE_EQ(penalty_value_grad(ineq, {-1.0}, 1.0).value, 0.0);
  EXPECT_THROW(penalty_value_grad(eq, {1.0}, 0.0), std::invalid_argument);
}

TEST(Penalty, GradientMatchesFiniteDifferences) {
  synthetic::Rng rng(79);
  const double h = 1e-4;
  for (int k = 0; k < 40; ++k) {
    auto inst = synthetic::random_instance(rng);
    for (const ConstraintSystem& cs : {build_ilp1_constraints(inst.graph), build_ilp2_constraints(inst.graph)}) {
      const std::vector<double> z = random_vector(rng, inst.graph.zeros().size(), 0.0, 1.0);
      const double beta = synthetic::uniform(rng, 0.2, 2.0);
      const PenaltyEval p = penalty_value_grad(cs, z, beta);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        std::vector<double> up = z, dn = z;
        up[i] += h;
        dn[i] -= h;
        const double fd = (penalty_value_grad(cs, up, beta).value - penalty_value_grad(cs, dn, beta).value) / (2 * h);
        num = std::max(num, std::abs(fd - p.gradient[i]));
        den = std::max(den, std::abs(fd));
      }
      EXPECT_LE(num / std::max(den, 1.0), 1e-6);
    }
  }
}

TEST(StepSize, EqualityUnconstrainedAscent) {
  ConstraintSystem cs;
  cs.add_row({{0, 1.0}, {1, 1.0}}, 1.0);
  // d keeps the row sum fixed.
  EXPECT_EQ(step_size_equality({0.0, 1.0}, cs, {1.0, 0.0}, {-1.0, 1.0}, 1.0), 1.0);
  EXPECT_EQ(step_size_equality({1.0, 0.0}, cs, {1.0, 0.0}, {-1.0, 1.0}, 1.0), 0.0);
}

TEST(StepSize, EqualityClipsAtZero) {
  ConstraintSystem cs;
  cs.add_row({{0, 1.0}}, 0.0);
  // Moving along d only increases the violation and decreases theta^T z.
  EXPECT_EQ(step_size_equality({-1.0}, cs, {0.0}, {1.0}, 1.0), 0.0);
}

TEST(StepSize, EqualityMatchesGridSearch) {
  synthetic::Rng rng(83);
  int interior = 0;
  for (int k = 0; k < 40; ++k) {
    auto inst = synthetic::random_instance(rng);
    const ExtendedGraph& gph = inst.graph;
    const ConstraintSystem cs = build_ilp1_constraints(gph);
    const SolutionVector a = lmo_sa(gph, testing::random_psi(rng, gph));
    const SolutionVector b = lmo_sa(gph, testing::random_psi(rng, gph));
    const double w = synthetic::uniform(rng, 0.0, 1.0);
    std::vector<double> z(a.size()), d(a.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = w * a[i] + (1 - w) * b[i];
    const SolutionVector s = lmo_sa(gph, testing::random_psi(rng, gph));
    for (std::size_t i = 0; i < z.size(); ++i) d[i] = s[i] - z[i];
    const double beta = synthetic::uniform(rng, 0.1, 2.0);
    const double gamma = step_size_equality(gph.weights().values(), cs, z, d, beta);
    const double grid = grid_argmax(gph.weights().values(), cs, z, d, beta, 100001);
    EXPECT_NEAR(gamma, grid, 1e-4);
    interior += gamma > 0.0 && gamma < 1.0;
  }
  EXPECT_GT(interior, 0);
}

TEST(StepSize, InequalityTrivialCases) {
  ConstraintSystem cs;
  cs.kind = ConstraintSystem::Kind::Inequality;
  cs.add_row({{0, 1.0}}, 1.0);
  // Row stays slack over the whole segment.
  EXPECT_EQ(step_size_inequality({0.0, 1.0}, cs, {0.0, 0.0}, {0.0, 1.0}, 1.0), 1.0);
  // Objective decreases and the penalty grows.
  EXPECT_EQ(step_size_inequality({-1.0, 0.0}, cs, {1.0, 0.0}, {1.0, 0.0}, 1.0), 0.0);
}

TEST(StepSize, InequalityMatchesGridSearch) {
  synthetic::Rng rng(89);
  int interior = 0;
  for (int k = 0; k < 120; ++k) {
    auto inst = synthetic::random_instance(rng);
    const ExtendedGraph& gph = inst.graph;
    const ConstraintSystem cs = build_ilp2_constraints(gph);
    const std::size_t dim = gph.zeros().size();
    const std::vector<double> z = random_vector(rng, dim, 0.0, 0.5);
    const std::vector<double> d = random_vector(rng, dim, -1.0, 1.0);
    const std::vector<double> theta = random_vector(rng, dim, -1.0, 1.0);
    const double beta = synthetic::uniform(rng, 0.1, 2.0);
    const double gamma = step_size_inequality(theta, cs, z, d, beta);
    const double grid = grid_argmax(theta, cs, z, d, beta, 100001);
    EXPECT_NEAR(gamma, grid, std::ldexp(1.0, -10) + 1e-6);
    interior += gamma > 0.0 && gamma < 1.0;
  }
  EXPECT_GT(interior, 0);
}

TEST(ConditionalGradient, StopsImmediatelyWhenUnpenalizedOptimumIsFeasible) {
  ExtendedGraph gph = list_states_graph();
  gph.mu()[gph.vertex(1, gph.grammar().tag_id("loc_1"))] = -5.0;
  gph.mu()[gph.vertex(1, gph.grammar().tag_id("state_all"))] = -5.0;
  const SolveResult r = map_inference(gph);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.dual_gap, 1e-6);
  EXPECT_TRUE(r.z_fractional.is_integral());
  EXPECT_EQ(r.z_integral, r.z_fractional);
}

TEST(ConditionalGradient, ListStatesExample) {
  const ExtendedGraph gph = list_states_graph();
  const SolveResult r = map_inference(gph);
  ASSERT_TRUE(r.integral_feasible);
  const AnchoredAst a = solution_to_anchored_ast(gph, r.z_integral);
  EXPECT_EQ(serialize_ast(gph.grammar(), a.ast), "state_all");
  EXPECT_EQ(a.word, std::vector<int>{2});
  EXPECT_EQ(r.z_integral.x()[gph.null_vertex(1)], 1.0);
  EXPECT_DOUBLE_EQ(weight_of(gph, r.z_integral), 2.5);
}

TEST(ConditionalGradient, ConfigValidation) {
  const ExtendedGraph gph = list_states_graph();
  SolverConfig cfg;
  cfg.beta0 = 0.0;
  EXPECT_THROW(map_inference(gph, cfg), std::invalid_argument);
  cfg = {};
  cfg.max_iters = 0;
  EXPECT_THROW(map_inference(gph, cfg), std::invalid_argument);
  cfg = {};
  cfg.eps = -1.0;
  EXPECT_THROW(map_inference(gph, cfg), std::invalid_argument);
}

TEST(ConditionalGradient, BoundsAndFeasibilityAgainstOracle) {
  synthetic::Rng rng(97);
  int optimal = 0, total = 0;
  for (int k = 0; k < 200; ++k) {
    auto inst = synthetic::random_instance(rng);
    const ExtendedGraph& gph = inst.graph;
    const ExactMap best = exact_map(gph);
    if (best.count == 0) continue;
    SolverConfig cfg;
    cfg.max_iters = 200;
    const SolveResult r = map_inference(gph, cfg);
    ++total;
    EXPECT_GE(r.dual_gap, -1e-9);
    EXPECT_GE(r.upper_bound(), best.weight - 1e-9);
    for (double v : r.z_fractional.values()) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    ASSERT_TRUE(r.integral_feasible);
    const AnchoredAst a = solution_to_anchored_ast(gph, r.z_integral);
    EXPECT_TRUE(validate_ast(*inst.grammar, a.ast).ok());
    const double w = weight_of(gph, r.z_integral);
    EXPECT_LE(w, best.weight + 1e-9);
    EXPECT_LE(w, r.upper_bound() + 1e-6);
    optimal += std::abs(w - best.weight) <= 1e-9;
    // Exact on the support: if every arc of the optimum kept mass, rounding finds it.
    bool survives = true;
    for (int arc : solution_arcs(best.solution)) survives = survives && r.z_fractional.y()[arc] > 1e-6;
    if (survives) EXPECT_NEAR(w, best.weight, 1e-9);
  }
  EXPECT_GE(optimal, total * 9 / 10);
}

TEST(ConditionalGradient, MonotoneWithFrozenBeta) {
  synthetic::Rng rng(101);
  for (int k = 0; k < 60; ++k) {
    auto inst = synthetic::random_instance(rng);
    SolverConfig cfg;
    cfg.freeze_beta = true;
    cfg.max_iters = 200;
    cfg.eps = 0.0;
    const SolveResult r = map_inference(inst.graph, cfg, false);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
      EXPECT_GE(r.trace[i].objective, r.trace[i - 1].objective - 1e-12 * std::max(1.0, std::abs(r.trace[i - 1].objective)));
  }
}

TEST(ConditionalGradient, TraceOutput) {
  const ExtendedGraph gph = list_states_graph();
  std::ostringstream out;
  SolverConfig cfg;
  cfg.max_iters = 3;
  cfg.trace = &out;
  const SolveResult r = map_inference(gph, cfg);
  EXPECT_EQ(r.trace.size(), 3u);
  EXPECT_NE(out.str().find("iter=0 beta=1 objective="), std::string::npos);
}

TEST(RoundSupport, IntegralFeasibleInputIsIdentity) {
  synthetic::Rng rng(103);
  for (int k = 0; k < 50; ++k) {
    auto inst = synthetic::random_instance(rng);
    for (const SolutionVector& z : collect_feasible(inst.graph)) {
      auto out = round_support(inst.graph, z);
      ASSERT_TRUE(out.has_value());
      EXPECT_EQ(*out, z);
      break;
    }
  }
}

TEST(RoundSupport, GrowsSupportWhenRestrictionIsInfeasible) {
  const ExtendedGraph gph = list_states_graph();
  // The unconstrained optimum keeps loc_1 on "List" with no argument.
  const SolutionVector z = lmo_sa(gph, gph.weights());
  auto out = round_support(gph, z);
  ASSERT_TRUE(out.has_value());
  EXPECT_TRUE(is_feasible_structure(gph, *out));
}

TEST(LatentAnchor, UniqueCompatibleAnchoring) {
  auto g = std::make_shared<const Grammar>(parse_grammar("type e\ntag A e\ntag P e e=1\ntag Q e e=1"));
  synthetic::Rng rng(107);
  const ExtendedGraph gph = synthetic::random_graph(rng, 2, g);
  const Ast ast = parse_program("P(Q(A))", *g);
  EXPECT_THROW(latent_anchor(gph, ast), AnchoringError);
  const ExtendedGraph one(1, g);
  EXPECT_EQ(latent_anchor(one, parse_program("A", *g)).assign, std::vector<int>{one.vertex(1, 0)});
}

TEST(LatentAnchor, QuestionWithMatchingWords) {
  auto g = std::make_shared<const Grammar>(parse_grammar(
      "type e\ntag state e e=1\ntag loc_1 e e=1\ntag most e e=1\ntag major e e=1\ntag city_all e\n"));
  const std::vector<std::string> words = {"What", "state", "has", "the", "most", "major", "cities", "?"};
  const std::map<std::string, std::string> lexicon = {
      {"state", "state"}, {"has", "loc_1"}, {"most", "most"}, {"major", "major"}, {"cities", "city_all"}};
  synthetic::Rng rng(109);
  ExtendedGraph gph = synthetic::random_graph(rng, 8, g, -0.1, 0.1);
  for (int i = 1; i <= 8; ++i) {
    auto it = lexicon.find(words[i - 1]);
    if (it != lexicon.end()) gph.mu()[gph.vertex(i, g->tag_id(it->second))] = 1.0;
  }
  const Ast ast = parse_program("most(state(loc_1(major(city_all))))", *g);
  const AnchoredAst a = to_anchored_ast(gph, ast, latent_anchor(gph, ast));
  std::map<std::string, std::string> got;
  for (int u = 0; u < ast.size(); ++u) got[g->tag_name(ast.label[u])] = words[a.word[u] - 1];
  EXPECT_EQ(got, (std::map<std::string, std::string>{
                     {"state", "state"}, {"loc_1", "has"}, {"most", "most"}, {"major", "major"}, {"city_all", "cities"}}));
}

TEST(LatentAnchor, NearOptimalAgainstOracle) {
  synthetic::Rng rng(113);
  int total = 0, optimal = 0;
  while (total < 200) {
    auto inst = synthetic::random_instance(rng, 4, 3);
    const Ast ast = synthetic::random_ast(rng, *inst.grammar, 4);
    if (ast.size() == 0 || ast.size() > inst.graph.length()) continue;
    const ExactAlignment best = exact_alignment(inst.graph, ast, true);
    if (best.count == 0) continue;
    ++total;
    const AnchorResult r = latent_anchor_detailed(inst.graph, ast);
    EXPECT_TRUE(r.solve.integral_feasible);
    EXPECT_TRUE(is_injective_per_cluster(inst.graph, r.alignment));
    const double w = alignment_weight(inst.graph, ast, r.alignment);
    EXPECT_LE(w, best.weight + 1e-9);
    optimal += std::abs(w - best.weight) <= 1e-6;
  }
  EXPECT_GE(optimal, 180);
}

}  // namespace
}  // namespace sempar
