#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "test_util.hpp"

namespace sempar {
namespace {

std::shared_ptr<const Grammar> single_entity_grammar() {
  return std::make_shared<const Grammar>(parse_grammar("type e\ntag A e"));
}

// Largest central-difference error of `f`'s analytic gradient over mu and phi,
// relative to the largest numeric derivative (floored at 1).
double gradient_error(ExtendedGraph gph, const std::function<LossReport(const ExtendedGraph&)>& f) {
  const double h = 1e-4;
  const LossReport rep = f(gph);
  double err = 0.0, scale = 1.0;
  auto probe = [&](double& w, double analytic) {
    const double saved = w;
    w = saved + h;
    const double up = f(gph).loss;
    w = saved - h;
    const double dn = f(gph).loss;
    w = saved;
    const double fd = (up - dn) / (2 * h);
    err = std::max(err, std::abs(fd - analytic));
    scale = std::max(scale, std::abs(fd));
  };
  for (int v = 1; v < gph.num_vertices(); ++v) probe(gph.mu()[v], rep.grad_mu[v]);
  for (int a = 0; a < gph.num_arcs(); ++a) probe(gph.phi()[a], rep.grad_phi[a]);
  return err / scale;
}

TEST(Surrogate, UniformSingleWord) {
  const ExtendedGraph gph(1, single_entity_grammar());
  const LossReport r = surrogate_log_partition(gph);
  EXPECT_DOUBLE_EQ(r.loss, 2.0 * std::log(2.0));
  EXPECT_DOUBLE_EQ(r.grad_mu[gph.vertex(1, 0)], 0.5);
  EXPECT_DOUBLE_EQ(r.grad_phi[0], 0.5);
  EXPECT_EQ(r.grad_mu[0], 0.0);
}

TEST(Surrogate, UpperBoundsExactLogPartition) {
  synthetic::Rng rng(127);
  for (int k = 0; k < 200; ++k) {
    auto inst = synthetic::random_instance(rng);
    EXPECT_GE(surrogate_log_partition(inst.graph).loss, exact_log_partition(inst.graph) - 1e-9);
  }
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  synthetic::Rng rng(131);
  for (int k = 0; k < 40; ++k) {
    auto inst = synthetic::random_instance(rng);
    EXPECT_LE(gradient_error(inst.graph, surrogate_log_partition), 1e-5);
  }
}

TEST(SupervisedLoss, ZeroWeightsSingleWord) {
  const ExtendedGraph gph(1, single_entity_grammar());
  const SolutionVector target = arcs_to_solution(gph, {gph.root_arc(gph.vertex(1, 0))});
  EXPECT_DOUBLE_EQ(supervised_loss(gph, target).loss, 2.0 * std::log(2.0));
  EXPECT_THROW(supervised_loss(gph, SolutionVector(1, 1)), std::invalid_argument);
}

TEST(SupervisedLoss, GradientMatchesFiniteDifferences) {
  synthetic::Rng rng(137);
  for (int k = 0; k < 40; ++k) {
    auto inst = synthetic::random_instance(rng);
    const auto feasible = collect_feasible(inst.graph);
    if (feasible.empty()) continue;
    const SolutionVector target = feasible[synthetic::uniform_int(rng, 0, static_cast<int>(feasible.size()) - 1)];
    EXPECT_LE(gradient_error(inst.graph, [&](const ExtendedGraph& g) { return supervised_loss(g, target); }), 1e-5);
  }
}

TEST(SupervisedLoss, BoundedByExactNegativeLogLikelihood) {
  synthetic::Rng rng(139);
  for (int k = 0; k < 100; ++k) {
    auto inst = synthetic::random_instance(rng);
    const double c = exact_log_partition(inst.graph);
    for (const SolutionVector& z : collect_feasible(inst.graph))
      EXPECT_GE(supervised_loss(inst.graph, z).loss, -(weight_of(inst.graph, z) - c) - 1e-9);
  }
}

TEST(SupervisedLoss, DescentRecoversTarget) {
  synthetic::Rng rng(149);
  int checked = 0;
  while (checked < 20) {
    auto inst = synthetic::random_instance(rng);
    const auto feasible = collect_feasible(inst.graph);
    if (feasible.size() < 2) continue;
    ++checked;
    const SolutionVector target = feasible[synthetic::uniform_int(rng, 0, static_cast<int>(feasible.size()) - 1)];
    ExtendedGraph gph = inst.graph;
    for (int step = 0; step < 100; ++step) {
      const LossReport rep = supervised_loss(gph, target);
      for (int v = 1; v < gph.num_vertices(); ++v) gph.mu()[v] -= 0.5 * rep.grad_mu[v];
      for (int a = 0; a < gph.num_arcs(); ++a) gph.phi()[a] -= 0.5 * rep.grad_phi[a];
    }
    const SolveResult r = map_inference(gph);
    ASSERT_TRUE(r.integral_feasible);
    EXPECT_EQ(r.z_integral, target);
  }
}

TEST(WeakLoss, ForcedAnchoringEqualsSupervised) {
  // Each tag has a single plausible word, so the E-step has one choice.
  auto g = std::make_shared<const Grammar>(parse_grammar("type e\ntag A e\ntag P e e=1"));
  ExtendedGraph gph(3, g);
  for (int i = 1; i <= 3; ++i)
    for (int t = 0; t < 2; ++t) gph.mu()[gph.vertex(i, t)] = -10.0;
  gph.mu()[gph.vertex(3, g->tag_id("P"))] = 2.0;
  gph.mu()[gph.vertex(1, g->tag_id("A"))] = 2.0;
  const Ast ast = parse_program("P(A)", *g);
  const WeakLossReport weak = weak_loss(gph, ast);
  EXPECT_EQ(weak.anchoring.word, (std::vector<int>{3, 1}));
  const LossReport sup = supervised_loss(gph, anchored_ast_to_solution(gph, AnchoredAst{ast, {3, 1}}));
  EXPECT_DOUBLE_EQ(weak.report.loss, sup.loss);
  EXPECT_EQ(weak.report.grad_mu, sup.grad_mu);
  EXPECT_EQ(weak.report.grad_phi, sup.grad_phi);
}

TEST(WeakLoss, HardAssignmentLowerBound) {
  synthetic::Rng rng(151);
  int checked = 0;
  while (checked < 100) {
    auto inst = synthetic::random_instance(rng);
    const Ast ast = synthetic::random_ast(rng, *inst.grammar, 4);
    if (ast.size() == 0 || ast.size() > inst.graph.length()) continue;
    if (exact_alignment(inst.graph, ast, true).count == 0) continue;
    ++checked;
    const WeakLossReport w = weak_loss(inst.graph, ast);
    const double expected_score = weight_of(inst.graph, anchored_ast_to_solution(inst.graph, w.anchoring));
    EXPECT_LE(expected_score, exact_anchored_log_partition(inst.graph, ast) + 1e-9);
  }
}

TEST(Scorer, ZeroParamsGiveZeroWeights) {
  const ScorerParams p(1 << 12);
  const ExtendedGraph gph = score_graph(p, {"what", "is", "this"}, synthetic::training_grammar());
  for (double v : gph.mu()) EXPECT_EQ(v, 0.0);
  for (double v : gph.phi()) EXPECT_EQ(v, 0.0);
}

TEST(Scorer, Deterministic) {
  ScorerParams p(1 << 12, 7);
  synthetic::Rng rng(157);
  for (double& v : p.vertex_weights) v = synthetic::uniform(rng, -1.0, 1.0);
  for (double& v : p.arc_weights) v = synthetic::uniform(rng, -1.0, 1.0);
  const auto g = synthetic::training_grammar();
  const ExtendedGraph a = score_graph(p, {"city_w", "of", "river_v"}, g);
  const ExtendedGraph b = score_graph(p, {"city_w", "of", "river_v"}, g);
  EXPECT_EQ(a.mu(), b.mu());
  EXPECT_EQ(a.phi(), b.phi());
}

TEST(Scorer, SparseUpdate) {
  const auto g = synthetic::training_grammar();
  ScorerParams p(1 << 16);
  const std::vector<std::string> words = {"capital_w", "city_v"};
  ExtendedGraph gph(2, g);
  const GraphFeatures f = extract_features(gph, words, p);
  apply_scores(gph, f, p);
  const Ast ast = parse_program("capital(city)", *g);
  const SolutionVector target = anchored_ast_to_solution(gph, AnchoredAst{ast, {1, 2}});
  const ScorerParams before = p;
  apply_gradient(p, f, supervised_loss(gph, target), 0.5);
  std::set<std::uint32_t> vslots(f.vertex.begin() + GraphFeatures::kPerVertex, f.vertex.end());
  std::set<std::uint32_t> aslots(f.arc.begin(), f.arc.end());
  int changed = 0;
  for (std::size_t i = 0; i < p.table_size(); ++i) {
    if (p.vertex_weights[i] != before.vertex_weights[i]) {
      EXPECT_TRUE(vslots.count(static_cast<std::uint32_t>(i)));
      ++changed;
    }
    if (p.arc_weights[i] != before.arc_weights[i]) {
      EXPECT_TRUE(aslots.count(static_cast<std::uint32_t>(i)));
      ++changed;
    }
  }
  EXPECT_GT(changed, 0);
  // A sentence sharing no word with the instance still sees the bias updates
  // but not the lexical ones.
  const ExtendedGraph other = score_graph(p, {"zero_w", "count_v"}, g);
  const ExtendedGraph same = score_graph(p, words, g);
  EXPECT_NE(other.mu(), same.mu());
}

TEST(Train, EmptyDatasetLeavesParamsUnchanged) {
  ScorerParams p(1 << 10, 3);
  p.vertex_weights[5] = 1.25;
  TrainOptions opts;
  opts.epochs = 3;
  EXPECT_EQ(train({}, synthetic::training_grammar(), p, opts), p);
}

TEST(Train, SupervisedLearnsSyntheticLanguage) {
  synthetic::Rng rng(163);
  const auto g = synthetic::training_grammar();
  const auto data = synthetic::synthetic_dataset(rng, *g, 150, 4);
  const auto held_out = synthetic::synthetic_dataset(rng, *g, 40, 4);
  TrainOptions opts;
  opts.epochs = 4;
  std::vector<EpochStats> log;
  opts.dev = &held_out;
  opts.on_epoch = [&](const EpochStats& s) { log.push_back(s); };
  const ScorerParams p = train(data, g, ScorerParams(1 << 18), opts);
  ASSERT_EQ(log.size(), 4u);
  EXPECT_LT(log.back().loss, log.front().loss);
  EXPECT_GE(exact_match(p, held_out, g, SolverConfig{}), 0.9);
}

TEST(Train, WeakSupervisionLearnsSyntheticLanguage) {
  synthetic::Rng rng(167);
  const auto g = synthetic::training_grammar();
  auto data = synthetic::synthetic_dataset(rng, *g, 150, 4);
  for (auto& inst : data) inst.anchoring.reset();
  const auto held_out = synthetic::synthetic_dataset(rng, *g, 40, 4);
  TrainOptions opts;
  opts.mode = TrainMode::Weak;
  opts.epochs = 5;
  const ScorerParams p = train(data, g, ScorerParams(1 << 18), opts);
  EXPECT_GE(exact_match(p, held_out, g, SolverConfig{}), 0.8);
}

TEST(Checkpoint, RoundTrip) {
  ScorerParams p(1 << 10, 42, 0.25);
  synthetic::Rng rng(173);
  for (int k = 0; k < 50; ++k) {
    p.vertex_weights[synthetic::uniform_int(rng, 0, 1023)] = synthetic::uniform(rng, -1.0, 1.0);
    p.arc_weights[synthetic::uniform_int(rng, 0, 1023)] = synthetic::uniform(rng, -1.0, 1.0);
  }
  std::stringstream s;
  save_checkpoint(s, p);
  EXPECT_EQ(load_checkpoint(s), p);
}

TEST(Checkpoint, RejectsMalformedInput) {
  std::istringstream bad_magic("weights 1\n");
  EXPECT_THROW(load_checkpoint(bad_magic), CheckpointError);
  std::istringstream bad_entry("sempar-checkpoint 1\nseed 0\ntable_size 4\nlearning_rate 0.5\nv 9 1.0\n");
  EXPECT_THROW(load_checkpoint(bad_entry), CheckpointError);
  std::istringstream bad_kind("sempar-checkpoint 1\nseed 0\ntable_size 4\nlearning_rate 0.5\nq 1 1.0\n");
  EXPECT_THROW(load_checkpoint(bad_kind), CheckpointError);
}

}  // namespace
}  // namespace sempar
