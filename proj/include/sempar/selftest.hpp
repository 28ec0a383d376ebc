#ifndef SEMPAR_SELFTEST_HPP
#define SEMPAR_SELFTEST_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sempar/anchoring.hpp"
#include "sempar/arborescence.hpp"
#include "sempar/grammar.hpp"
#include "sempar/graph.hpp"
#include "sempar/losses.hpp"
#include "sempar/oracle.hpp"
#include "sempar/solver.hpp"
#include "sempar/synthetic.hpp"

// Oracle-backed property suite shared by the acceptance binary and the CLI.

namespace sempar::selftest {

inline constexpr const char* kListStatesGrammar =
    "type state\n"
    "type place\n"
    "tag state_all state\n"
    "tag loc_1 place state=1\n";

inline constexpr const char* kListStatesWeights =
    "vertex 1 NULL 0\n"
    "vertex 1 state_all -1\n"
    "vertex 1 loc_1 0\n"
    "vertex 2 NULL 0\n"
    "vertex 2 state_all 1\n"
    "vertex 2 loc_1 -1\n"
    "arc 0 ROOT 1 NULL 0\n"
    "arc 0 ROOT 1 state_all 1\n"
    "arc 0 ROOT 1 loc_1 1\n"
    "arc 0 ROOT 2 NULL 0\n"
    "arc 0 ROOT 2 state_all 1.5\n"
    "arc 0 ROOT 2 loc_1 1.5\n"
    "arc 1 state_all 2 state_all -1\n"
    "arc 1 state_all 2 loc_1 -1\n"
    "arc 1 loc_1 2 state_all -1\n"
    "arc 1 loc_1 2 loc_1 -1\n"
    "arc 2 state_all 1 state_all -1\n"
    "arc 2 state_all 1 loc_1 -1\n"
    "arc 2 loc_1 1 state_all -1\n"
    "arc 2 loc_1 1 loc_1 -1\n";

inline constexpr const char* kListStatesSentence = "List states";

struct Budget {
  std::uint64_t seed = 1;
  int map_instances = 300;
  int gradient_instances = 60;
  int alignment_pairs = 300;
  int step_pairs = 120;
  int fw_instances = 300;
  int train_size = 500;
  int test_size = 100;
  int epochs = 25;
  int throughput_sentences = 100;
  double tolerance_scale = 1.0;  // multiplies every numeric tolerance
  bool learning = true;
  bool throughput = true;
};

struct Check {
  std::string id;
  bool passed = false;
  std::string summary;
  std::vector<std::pair<std::string, double>> metrics;  // reproducible for a fixed seed
  std::vector<std::pair<std::string, double>> timings;  // wall clock
};

struct Report {
  std::uint64_t seed = 0;
  std::vector<Check> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline synthetic::Rng stream(std::uint64_t seed, std::uint64_t id) {
  return synthetic::Rng(mix64(seed, id));
}

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string ratio(int hit, int total) { return std::to_string(hit) + "/" + std::to_string(total); }

/// max |a - f| / max(max |a|, max |f|); absolute when both are zero.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& f) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - f[i]));
    den = std::max({den, std::abs(a[i]), std::abs(f[i])});
  }
  return den > 0.0 ? num / den : num;
}

/// Central differences of f over the coordinates of v.
inline std::vector<double> central_differences(std::vector<double>& v, const std::function<double()>& f,
                                               double h) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f();
    v[i] = keep - h;
    const double down = f();
    v[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

inline std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// theta^T (z + g d) - penalty(z + g d), evaluated row by row.
inline double line_objective(const std::vector<double>& theta, const ConstraintSystem& cs,
                             const std::vector<double>& z, const std::vector<double>& d, double beta, double g) {
  double lin = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) lin += theta[i] * (z[i] + g * d[i]);
  double sq = 0.0;
  for (std::size_t r = 0; r < cs.rows.size(); ++r) {
    double v = -cs.rhs[r];
    for (const auto& [i, c] : cs.rows[r]) v += c * (z[i] + g * d[i]);
    if (cs.kind == ConstraintSystem::Kind::Inequality) v = std::max(v, 0.0);
    sq += v * v;
  }
  return lin - sq / (2.0 * beta);
}

/// Argmax of the line objective over points k / (points - 1), first on ties.
inline double grid_argmax(const std::vector<double>& theta, const ConstraintSystem& cs, const std::vector<double>& z,
                          const std::vector<double>& d, double beta, int points) {
  double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
  for (int k = 0; k < points; ++k) {
    const double g = static_cast<double>(k) / (points - 1);
    const double v = line_objective(theta, cs, z, d, beta, g);
    if (v > best) {
      best = v;
      arg = g;
    }
  }
  return arg;
}

inline SolutionVector random_objective(synthetic::Rng& rng, const ExtendedGraph& gph) {
  SolutionVector psi = gph.zeros();
  for (double& v : psi.values()) v = synthetic::uniform(rng, -1.0, 1.0);
  return psi;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5)];
}

}  // namespace detail

/// Approximate MAP decoding against exhaustive enumeration on tiny instances.
inline Check check_map_oracle(const Budget& b) {
  const double bound_tol = 1e-6 * b.tolerance_scale;
  const double equal_tol = 1e-9 * b.tolerance_scale;
  const double runtime_limit = 60.0;
  auto rng = detail::stream(b.seed, 1);
  int feasible = 0, bounded = 0, optimal = 0;
  double solve_time = 0.0, worst_excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < b.map_instances; ++k) {
    const auto inst = synthetic::random_instance(rng, 4, 3, 2);
    const auto t0 = detail::Clock::now();
    const SolveResult res = map_inference(inst.graph);
    solve_time += detail::seconds_since(t0);
    const auto best = oracle::exact_map(inst.graph);
    if (!res.integral_feasible || !is_feasible_structure(inst.graph, res.z_integral)) continue;
    if (!validate_ast(*inst.grammar, solution_to_ast(inst.graph, res.z_integral)).ok()) continue;
    ++feasible;
    const double w = oracle::plain_weight(inst.graph, res.z_integral);
    worst_excess = std::max(worst_excess, w - res.upper_bound());
    bounded += w <= res.upper_bound() + bound_tol;
    optimal += std::abs(w - best.weight) <= equal_tol;
  }
  const int n = b.map_instances;
  Check c;
  c.id = "map_oracle_equivalence";
  c.passed = n > 0 && feasible == n && bounded == n && optimal >= 0.95 * n && solve_time <= runtime_limit;
  c.summary = "feasible " + detail::ratio(feasible, n) + ", weight <= bound " + detail::ratio(bounded, n) +
              ", optimal " + detail::ratio(optimal, n) + " (need 95%)";
  c.metrics = {{"instances", n},
               {"feasible", feasible},
               {"bounded", bounded},
               {"optimal", optimal},
               {"worst_bound_excess", worst_excess}};
  c.timings = {{"solve_seconds", solve_time}, {"limit_seconds", runtime_limit}};
  return c;
}

/// The surrogate log-partition never falls below the exact one.
inline Check check_surrogate_bound(const Budget& b) {
  const double tol = 1e-9 * b.tolerance_scale;
  auto rng = detail::stream(b.seed, 1);  // same instances as the MAP check
  int held = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < b.map_instances; ++k) {
    const auto inst = synthetic::random_instance(rng, 4, 3, 2);
    const double upper = surrogate_log_partition(inst.graph).loss;
    const double exact = oracle::exact_log_partition(inst.graph);
    min_margin = std::min(min_margin, upper - exact);
    held += upper >= exact - tol;
  }
  Check c;
  c.id = "surrogate_upper_bound";
  c.passed = b.map_instances > 0 && held == b.map_instances;
  c.summary = "bound holds " + detail::ratio(held, b.map_instances) + ", min margin " + detail::fmt(min_margin);
  c.metrics = {{"instances", b.map_instances}, {"held", held}, {"min_margin", min_margin}};
  return c;
}

/// Analytic gradients against central finite differences.
inline Check check_gradients(const Budget& b) {
  const double h = 1e-4;
  const double tol = 1e-5 * b.tolerance_scale;
  auto rng = detail::stream(b.seed, 3);
  double worst_surrogate = 0.0, worst_supervised = 0.0, worst_eq = 0.0, worst_ineq = 0.0;
  int passed = 0;
  for (int k = 0; k < b.gradient_instances; ++k) {
    auto inst = synthetic::random_instance(rng, 4, 3, 2);
    ExtendedGraph& gph = inst.graph;

    // Perturb mu and phi through one flat parameter vector.
    std::vector<double> params = detail::concat(gph.mu(), gph.phi());
    const std::size_t nv = gph.mu().size();
    auto load = [&] {
      std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nv), gph.mu().begin());
      std::copy(params.begin() + static_cast<std::ptrdiff_t>(nv), params.end(), gph.phi().begin());
    };
    const LossReport sur = surrogate_log_partition(gph);
    const auto fd_sur = detail::central_differences(
        params, [&] { load(); return surrogate_log_partition(gph).loss; }, h);
    load();
    const double e1 = detail::relative_error(detail::concat(sur.grad_mu, sur.grad_phi), fd_sur);

    const auto structures = oracle::collect_feasible(gph);
    const SolutionVector& target =
        structures[static_cast<std::size_t>(synthetic::uniform_int(rng, 0, static_cast<int>(structures.size()) - 1))];
    const LossReport sup = supervised_loss(gph, target);
    const auto fd_sup = detail::central_differences(
        params, [&] { load(); return supervised_loss(gph, target).loss; }, h);
    load();
    const double e2 = detail::relative_error(detail::concat(sup.grad_mu, sup.grad_phi), fd_sup);

    auto penalty_error = [&](const ConstraintSystem& cs) {
      std::vector<double> z(static_cast<std::size_t>(gph.num_vertices() + gph.num_arcs()));
      for (double& v : z) v = synthetic::uniform(rng, 0.0, 1.0);
      const double beta = synthetic::uniform(rng, 0.2, 2.0);
      const auto analytic = penalty_value_grad(cs, z, beta).gradient;
      const auto fd = detail::central_differences(z, [&] { return penalty_value_grad(cs, z, beta).value; }, h);
      return detail::relative_error(analytic, fd);
    };
    const double e3 = penalty_error(build_ilp1_constraints(gph));
    const double e4 = penalty_error(build_ilp2_constraints(gph));
    worst_surrogate = std::max(worst_surrogate, e1);
    worst_supervised = std::max(worst_supervised, e2);
    worst_eq = std::max(worst_eq, e3);
    worst_ineq = std::max(worst_ineq, e4);
    passed += e1 <= tol && e2 <= tol && e3 <= tol && e4 <= tol;
  }
  Check c;
  c.id = "gradient_agreement";
  c.passed = b.gradient_instances >= 50 && passed == b.gradient_instances;
  c.summary = "instances within " + detail::fmt(tol) + ": " + detail::ratio(passed, b.gradient_instances) +
              "; worst rel err surrogate " + detail::fmt(worst_surrogate, 3) + ", supervised " +
              detail::fmt(worst_supervised, 3) + ", equality " + detail::fmt(worst_eq, 3) + ", inequality " +
              detail::fmt(worst_ineq, 3);
  c.metrics = {{"instances", b.gradient_instances},
               {"passed", passed},
               {"worst_surrogate", worst_surrogate},
               {"worst_supervised", worst_supervised},
               {"worst_equality_penalty", worst_eq},
               {"worst_inequality_penalty", worst_ineq}};
  return c;
}

/// The alignment chart against enumeration of every unconstrained alignment.
inline Check check_alignment_dp(const Budget& b) {
  const double tol = 1e-9 * b.tolerance_scale;
  auto rng = detail::stream(b.seed, 4);
  oracle::EnumerationBudget eb;
  eb.max_length = 5;
  int pairs = 0, equal = 0;
  double worst = 0.0;
  while (pairs < b.alignment_pairs) {
    const auto inst = synthetic::random_instance(rng, 5, 3, 2);
    const Ast ast = synthetic::random_ast(rng, *inst.grammar, 5);
    if (ast.size() == 0) continue;
    ++pairs;
    const double dp = dp_align(inst.graph, ast, inst.graph.weights()).value;
    const double brute = oracle::exact_alignment(inst.graph, ast, false, eb).weight;
    const bool both_empty = std::isinf(dp) && std::isinf(brute) && dp < 0 && brute < 0;
    const double err = both_empty ? 0.0 : std::abs(dp - brute);
    worst = std::max(worst, err);
    equal += both_empty || err <= tol;
  }
  Check c;
  c.id = "alignment_dp_exactness";
  c.passed = pairs > 0 && equal == pairs;
  c.summary = "equal " + detail::ratio(equal, pairs) + ", worst abs err " + detail::fmt(worst, 3);
  c.metrics = {{"pairs", pairs}, {"equal", equal}, {"worst_abs_error", worst}};
  return c;
}

/// Closed-form and bisection step sizes against a dense grid.
inline Check check_step_sizes(const Budget& b) {
  const int points = 100'001;
  const double eq_tol = 1e-4 * b.tolerance_scale;
  const double ineq_tol = (std::ldexp(1.0, -10) + 1e-6) * b.tolerance_scale;
  auto rng = detail::stream(b.seed, 5);
  int eq_ok = 0, ineq_ok = 0, eq_interior = 0, ineq_interior = 0;
  double eq_worst = 0.0, ineq_worst = 0.0;
  for (int k = 0; k < b.step_pairs; ++k) {
    const auto inst = synthetic::random_instance(rng, 4, 3, 2);
    const ExtendedGraph& gph = inst.graph;
    const std::vector<double> theta = gph.weights().values();

    const ConstraintSystem eq = build_ilp1_constraints(gph);
    SolutionVector z = lmo_sa(gph, gph.weights());
    for (int mix = 0; mix < 3; ++mix) {
      const SolutionVector s = lmo_sa(gph, detail::random_objective(rng, gph));
      const double a = synthetic::uniform(rng, 0.0, 1.0);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - a) * z[i] + a * s[i];
    }
    const SolutionVector s = lmo_sa(gph, detail::random_objective(rng, gph));
    std::vector<double> d(z.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = s[i] - z[i];
    const double beta = synthetic::uniform(rng, 0.05, 2.0);
    const double ge = step_size_equality(theta, eq, z.values(), d, beta);
    const double err = std::abs(ge - detail::grid_argmax(theta, eq, z.values(), d, beta, points));
    eq_interior += ge > 0.0 && ge < 1.0;
    eq_worst = std::max(eq_worst, err);
    eq_ok += err <= eq_tol;

    // Box points put cluster sums near their bound so that rows become
    // active partway along d.
    const ConstraintSystem in = build_ilp2_constraints(gph);
    std::vector<double> zi(theta.size()), di(theta.size()), ti(theta.size());
    for (std::size_t i = 0; i < zi.size(); ++i) {
      zi[i] = synthetic::uniform(rng, 0.0, 0.5);
      di[i] = synthetic::uniform(rng, -1.0, 1.0);
      ti[i] = synthetic::uniform(rng, -1.0, 1.0);
    }
    const double beta_i = synthetic::uniform(rng, 0.05, 2.0);
    const double gi = step_size_inequality(ti, in, zi, di, beta_i, 10);
    const double err_i = std::abs(gi - detail::grid_argmax(ti, in, zi, di, beta_i, points));
    ineq_interior += gi > 0.0 && gi < 1.0;
    ineq_worst = std::max(ineq_worst, err_i);
    ineq_ok += err_i <= ineq_tol;
  }
  Check c;
  c.id = "step_size_accuracy";
  c.passed = b.step_pairs >= 100 && eq_ok == b.step_pairs && ineq_ok == b.step_pairs;
  c.summary = "closed form " + detail::ratio(eq_ok, b.step_pairs) + " (worst " + detail::fmt(eq_worst, 3) + ", " +
              std::to_string(eq_interior) + " interior), bisection " + detail::ratio(ineq_ok, b.step_pairs) +
              " (worst " + detail::fmt(ineq_worst, 3) + ", " + std::to_string(ineq_interior) + " interior)";
  c.metrics = {{"pairs", b.step_pairs},
               {"equality_ok", eq_ok},
               {"equality_worst", eq_worst},
               {"equality_interior", eq_interior},
               {"inequality_ok", ineq_ok},
               {"inequality_worst", ineq_worst},
               {"inequality_interior", ineq_interior}};
  return c;
}

/// With beta frozen the smoothed objective never decreases.
inline Check check_fw_monotone(const Budget& b) {
  const double slack = 1e-12 * b.tolerance_scale;
  auto rng = detail::stream(b.seed, 6);
  int runs = 0, monotone = 0;
  double worst_drop = 0.0;
  auto inspect = [&](const SolveResult& res) {
    bool ok = true;
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
      const double prev = res.trace[k - 1].objective, cur = res.trace[k].objective;
      const double drop = prev - cur;
      worst_drop = std::max(worst_drop, drop);
      ok = ok && drop <= slack * std::max(1.0, std::abs(prev));
    }
    ++runs;
    monotone += ok;
  };
  const int count = std::max(1, b.fw_instances / 3);
  for (int k = 0; k < count; ++k) {
    const auto inst = synthetic::random_instance(rng, 4, 3, 2);
    SolverConfig cfg;
    cfg.freeze_beta = true;
    cfg.beta0 = synthetic::uniform(rng, 0.05, 1.0);
    cfg.max_iters = 200;
    cfg.eps = 0.0;
    inspect(map_inference(inst.graph, cfg, false));
    Ast ast;
    while (ast.size() == 0 || ast.size() > inst.graph.length())
      ast = synthetic::random_ast(rng, *inst.grammar, inst.graph.length());
    inspect(latent_anchor_detailed(inst.graph, ast, cfg).solve);
  }
  Check c;
  c.id = "fw_monotone_frozen_beta";
  c.passed = runs > 0 && monotone == runs;
  c.summary = "non-decreasing " + detail::ratio(monotone, runs) + ", largest drop " + detail::fmt(worst_drop, 3);
  c.metrics = {{"runs", runs}, {"monotone", monotone}, {"largest_drop", worst_drop}};
  return c;
}

/// Dual gap at termination under the default smoothing schedule.
inline Check check_fw_gap(const Budget& b) {
  const double eps = 1e-6;
  auto rng = detail::stream(b.seed, 7);
  int converged = 0;
  std::vector<double> gaps;
  for (int k = 0; k < b.fw_instances; ++k) {
    const auto inst = synthetic::random_instance(rng, 4, 3, 2);
    SolverConfig cfg;
    cfg.max_iters = 500;
    cfg.eps = eps;
    const SolveResult res = map_inference(inst.graph, cfg, false);
    gaps.push_back(res.dual_gap);
    converged += res.dual_gap <= eps;
  }
  const int n = b.fw_instances;
  Check c;
  c.id = "fw_dual_gap_convergence";
  c.passed = n > 0 && converged >= 0.9 * n;
  c.summary = "gap <= " + detail::fmt(eps) + " on " + detail::ratio(converged, n) + " (need 90%), median gap " +
              detail::fmt(detail::quantile(gaps, 0.5), 3) + ", 90th percentile " +
              detail::fmt(detail::quantile(gaps, 0.9), 3);
  c.metrics = {{"instances", n},
               {"converged", converged},
               {"median_gap", detail::quantile(gaps, 0.5)},
               {"p90_gap", detail::quantile(gaps, 0.9)}};
  return c;
}

/// Training on synthetic data from a generated grammar.
inline Check check_learning(const Budget& b, TrainMode mode) {
  const double target = mode == TrainMode::Supervised ? 0.95 : 0.85;
  const double time_limit = 300.0;
  auto rng = detail::stream(b.seed, 8);
  const auto g = synthetic::random_grammar(rng, 8, 2);
  const auto train_set = synthetic::synthetic_dataset(rng, *g, b.train_size);
  const auto test_set = synthetic::synthetic_dataset(rng, *g, b.test_size);
  TrainOptions opts;
  opts.mode = mode;
  opts.epochs = b.epochs;
  opts.dev = &test_set;
  int reached_at = -1;
  double final_match = 0.0, best = 0.0;
  opts.on_epoch = [&](const EpochStats& s) {
    final_match = s.dev_exact_match.value_or(0.0);
    best = std::max(best, final_match);
    if (reached_at < 0 && final_match >= target) reached_at = s.epoch;
  };
  const auto t0 = detail::Clock::now();
  train(train_set, g, ScorerParams(ScorerParams::kDefaultTableSize, b.seed, 0.5), opts);
  const double elapsed = detail::seconds_since(t0);
  Check c;
  c.id = mode == TrainMode::Supervised ? "learning_supervised" : "learning_weak";
  c.passed = reached_at > 0 && reached_at <= 25 && elapsed <= time_limit;
  c.summary = "exact match " + detail::fmt(final_match, 4) + " after " + std::to_string(b.epochs) +
              " epochs, target " + detail::fmt(target, 3) +
              (reached_at > 0 ? " reached at epoch " + std::to_string(reached_at) : std::string(" not reached"));
  c.metrics = {{"epochs", b.epochs},
               {"final_exact_match", final_match},
               {"best_exact_match", best},
               {"reached_at_epoch", reached_at}};
  c.timings = {{"train_seconds", elapsed}, {"limit_seconds", time_limit}};
  return c;
}

/// Median decoding latency at n = 10, |E| = 12, K = 200.
inline Check check_throughput(const Budget& b) {
  const double limit_ms = 250.0;
  auto rng = detail::stream(b.seed, 9);
  std::vector<double> ms;
  int feasible = 0;
  SolverConfig cfg;
  cfg.max_iters = 200;
  for (int k = 0; k < b.throughput_sentences; ++k) {
    const auto g = synthetic::random_grammar(rng, 12, 2);
    const ExtendedGraph gph = synthetic::random_graph(rng, 10, g);
    const auto t0 = detail::Clock::now();
    const SolveResult res = map_inference(gph, cfg);
    ms.push_back(1000.0 * detail::seconds_since(t0));
    feasible += res.integral_feasible;
  }
  const double median = detail::quantile(ms, 0.5);
  Check c;
  c.id = "decoding_throughput";
  c.passed = !ms.empty() && median <= limit_ms;
  c.summary = "median " + detail::fmt(median, 4) + " ms per sentence (limit " + detail::fmt(limit_ms) + " ms), " +
              detail::ratio(feasible, b.throughput_sentences) + " feasible";
  c.metrics = {{"sentences", b.throughput_sentences}, {"feasible", feasible}};
  c.timings = {{"median_ms", median}, {"p90_ms", detail::quantile(ms, 0.9)}, {"limit_ms", limit_ms}};
  return c;
}

/// "List states" with the hand-set weights: the unconstrained arborescence
/// keeps an argument-less loc_1; the penalized decode drops it.
inline Check check_worked_example(const Budget& b) {
  const double tol = 1e-9 * b.tolerance_scale;
  const auto g = std::make_shared<const Grammar>(parse_grammar(kListStatesGrammar));
  const auto words = split_words(kListStatesSentence);
  ExtendedGraph gph(static_cast<int>(words.size()), g);
  apply_weight_file(kListStatesWeights, gph);
  const SolutionVector unconstrained = lmo_sa(gph, gph.weights());
  const double unconstrained_weight = weight_of(gph, unconstrained);
  const SolveResult res = map_inference(gph);
  Check c;
  c.id = "worked_example";
  std::string program = "FAIL";
  double weight = std::numeric_limits<double>::quiet_NaN();
  int anchor = -1;
  if (res.integral_feasible) {
    const AnchoredAst a = solution_to_anchored_ast(gph, res.z_integral);
    program = serialize_ast(*g, a.ast);
    weight = weight_of(gph, res.z_integral);
    if (a.ast.size() == 1) anchor = a.word[0];
  }
  c.passed = !is_feasible_structure(gph, unconstrained) && program == "state_all" && anchor == 2 &&
             std::abs(weight - 2.5) <= tol;
  c.summary = "unconstrained " + detail::fmt(unconstrained_weight) + " (infeasible), decoded '" + program +
              "' on word " + std::to_string(anchor) + " with weight " + detail::fmt(weight);
  c.metrics = {{"unconstrained_weight", unconstrained_weight},
               {"weight", weight},
               {"anchor_word", anchor},
               {"dual_gap", res.dual_gap}};
  return c;
}

inline Report run_all(const Budget& b, const std::function<void(const Check&)>& on_check = {}) {
  Report rep;
  rep.seed = b.seed;
  auto add = [&](Check c) {
    if (on_check) on_check(c);
    rep.checks.push_back(std::move(c));
  };
  add(check_map_oracle(b));
  add(check_surrogate_bound(b));
  add(check_gradients(b));
  add(check_alignment_dp(b));
  add(check_step_sizes(b));
  add(check_fw_monotone(b));
  add(check_fw_gap(b));
  if (b.learning) {
    add(check_learning(b, TrainMode::Supervised));
    add(check_learning(b, TrainMode::Weak));
  }
  if (b.throughput) add(check_throughput(b));
  add(check_worked_example(b));
  return rep;
}

}  // namespace sempar::selftest

#endif  // SEMPAR_SELFTEST_HPP
