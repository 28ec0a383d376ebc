#ifndef SEMPAR_LOSSES_HPP
#define SEMPAR_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sempar/anchoring.hpp"
#include "sempar/graph.hpp"
#include "sempar/solver.hpp"

namespace sempar {

struct LossReport {
  double loss = 0.0;
  std::vector<double> grad_mu;   // d loss / d mu
  std::vector<double> grad_phi;  // d loss / d phi
};

namespace detail {
inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}
}  // namespace detail

/// Upper bound on the log-partition function: one log-sum-exp over the
/// vertices of each word cluster and one over the arcs entering it. The root
/// cluster is left out of both sums. Gradients are the per-cluster softmaxes.
inline LossReport surrogate_log_partition(const ExtendedGraph& gph) {
  const int n = gph.length();
  LossReport out;
  out.grad_mu.assign(gph.num_vertices(), 0.0);
  out.grad_phi.assign(gph.num_arcs(), 0.0);
  for (int i = 1; i <= n; ++i) {
    const int first = gph.vertex(i, 0), last = gph.null_vertex(i);
    double m = -std::numeric_limits<double>::infinity();
    for (int v = first; v <= last; ++v) m = std::max(m, gph.mu()[v]);
    double s = 0.0;
    for (int v = first; v <= last; ++v) s += std::exp(gph.mu()[v] - m);
    out.loss += m + std::log(s);
    for (int v = first; v <= last; ++v) out.grad_mu[v] = std::exp(gph.mu()[v] - m) / s;
  }
  std::vector<double> arc_max(n + 1, -std::numeric_limits<double>::infinity());
  std::vector<double> arc_sum(n + 1, 0.0);
  for (int a = 0; a < gph.num_arcs(); ++a) {
    const int j = gph.cluster(gph.target(a));
    arc_max[j] = std::max(arc_max[j], gph.phi()[a]);
  }
  for (int a = 0; a < gph.num_arcs(); ++a) {
    const int j = gph.cluster(gph.target(a));
    const double e = std::exp(gph.phi()[a] - arc_max[j]);
    out.grad_phi[a] = e;
    arc_sum[j] += e;
  }
  for (int j = 1; j <= n; ++j) out.loss += arc_max[j] + std::log(arc_sum[j]);
  for (int a = 0; a < gph.num_arcs(); ++a) out.grad_phi[a] /= arc_sum[gph.cluster(gph.target(a))];
  return out;
}

/// Negated surrogate log-likelihood of an integral target:
/// c_hat(mu, phi) - (mu^T x + phi^T y), root vertex excluded.
inline LossReport supervised_loss(const ExtendedGraph& gph, const SolutionVector& target) {
  if (target.num_vertices() != gph.num_vertices() || target.num_arcs() != gph.num_arcs())
    throw std::invalid_argument("supervised_loss: dimension mismatch");
  LossReport out = surrogate_log_partition(gph);
  double score = 0.0;
  for (int v = 1; v < gph.num_vertices(); ++v) {
    score += gph.mu()[v] * target.x()[v];
    out.grad_mu[v] -= target.x()[v];
  }
  for (int a = 0; a < gph.num_arcs(); ++a) {
    score += gph.phi()[a] * target.y()[a];
    out.grad_phi[a] -= target.y()[a];
  }
  out.loss -= score;
  return out;
}

struct WeakLossReport {
  LossReport report;
  AnchoredAst anchoring;
};

/// Hard-EM step: the best anchoring found by latent_anchor becomes the
/// target of the supervised loss.
inline WeakLossReport weak_loss(const ExtendedGraph& gph, const Ast& ast, const SolverConfig& cfg = {}) {
  const Alignment al = latent_anchor(gph, ast, cfg);
  if (!is_injective_per_cluster(gph, al)) throw AnchoringError("rounded anchoring is infeasible");
  WeakLossReport out;
  out.anchoring = to_anchored_ast(gph, ast, al);
  out.report = supervised_loss(gph, anchored_ast_to_solution(gph, out.anchoring));
  return out;
}

// ---------------------------------------------------------------------------
// Linear feature scorer

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

/// Hashed weight tables of the linear scorer.
struct ScorerParams {
  static constexpr std::size_t kDefaultTableSize = std::size_t{1} << 20;

  std::uint64_t seed = 0;
  double learning_rate = 0.5;
  std::vector<double> vertex_weights;
  std::vector<double> arc_weights;

  explicit ScorerParams(std::size_t table_size = kDefaultTableSize, std::uint64_t seed_ = 0, double lr = 0.5)
      : seed(seed_), learning_rate(lr), vertex_weights(table_size, 0.0), arc_weights(table_size, 0.0) {}

  std::size_t table_size() const { return vertex_weights.size(); }

  friend bool operator==(const ScorerParams&, const ScorerParams&) = default;
};

enum FeatureTemplate : std::uint64_t {
  kVertexWord = 1,
  kVertexBias,
  kRootWord,
  kRootBias,
  kRootPosition,
  kArcWords,
  kArcDistance,
  kArcPair,
};

/// Feature slots of every vertex and arc of a scored graph.
struct GraphFeatures {
  static constexpr int kPerVertex = 2;
  static constexpr int kPerArc = 3;
  std::vector<std::uint32_t> vertex;  // kPerVertex per vertex (root: unused)
  std::vector<std::uint32_t> arc;     // kPerArc per arc
};

inline GraphFeatures extract_features(const ExtendedGraph& gph, const std::vector<std::string>& words,
                                      const ScorerParams& params) {
  const std::uint64_t size = params.table_size();
  std::vector<std::uint64_t> wh(words.size() + 1, 0);
  for (std::size_t i = 0; i < words.size(); ++i) wh[i + 1] = fnv1a(words[i]);
  auto slot = [&](std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = mix64(params.seed, 0x51ed);
    for (std::uint64_t p : parts) h = mix64(h, p);
    return static_cast<std::uint32_t>(h % size);
  };
  // Labels shifted so that null (-2) and root (-1) hash distinctly from tags.
  auto lab = [&](int v) { return static_cast<std::uint64_t>(gph.label(v) + 3); };
  GraphFeatures f;
  f.vertex.assign(static_cast<std::size_t>(gph.num_vertices()) * GraphFeatures::kPerVertex, 0);
  f.arc.assign(static_cast<std::size_t>(gph.num_arcs()) * GraphFeatures::kPerArc, 0);
  for (int v = 1; v < gph.num_vertices(); ++v) {
    const int i = gph.cluster(v);
    f.vertex[v * 2 + 0] = slot({kVertexWord, wh[i], lab(v)});
    f.vertex[v * 2 + 1] = slot({kVertexBias, lab(v)});
  }
  for (int a = 0; a < gph.num_arcs(); ++a) {
    const int u = gph.source(a), v = gph.target(a);
    const int j = gph.cluster(v);
    std::uint32_t* out = &f.arc[static_cast<std::size_t>(a) * 3];
    if (u == 0) {
      out[0] = slot({kRootWord, wh[j], lab(v)});
      out[1] = slot({kRootBias, lab(v)});
      out[2] = slot({kRootPosition, lab(v), static_cast<std::uint64_t>(std::min(j - 1, 4))});
    } else {
      const int i = gph.cluster(u);
      const int dist = std::clamp(j - i, -5, 5);
      out[0] = slot({kArcWords, wh[i], lab(u), wh[j], lab(v)});
      out[1] = slot({kArcDistance, lab(u), lab(v), static_cast<std::uint64_t>(dist + 8)});
      out[2] = slot({kArcPair, lab(u), lab(v)});
    }
  }
  return f;
}

inline void apply_scores(ExtendedGraph& gph, const GraphFeatures& f, const ScorerParams& params) {
  for (int v = 1; v < gph.num_vertices(); ++v)
    gph.mu()[v] = params.vertex_weights[f.vertex[v * 2]] + params.vertex_weights[f.vertex[v * 2 + 1]];
  for (int a = 0; a < gph.num_arcs(); ++a) {
    const std::uint32_t* s = &f.arc[static_cast<std::size_t>(a) * 3];
    gph.phi()[a] = params.arc_weights[s[0]] + params.arc_weights[s[1]] + params.arc_weights[s[2]];
  }
}

inline ExtendedGraph score_graph(const ScorerParams& params, const std::vector<std::string>& sentence,
                                 std::shared_ptr<const Grammar> g) {
  ExtendedGraph gph(static_cast<int>(sentence.size()), std::move(g));
  apply_scores(gph, extract_features(gph, sentence, params), params);
  return gph;
}

/// params -= rate * d loss / d params, chaining through the feature sums.
inline void apply_gradient(ScorerParams& params, const GraphFeatures& f, const LossReport& rep, double rate) {
  for (std::size_t v = 1; v < rep.grad_mu.size(); ++v) {
    const double gmu = rep.grad_mu[v];
    if (gmu == 0.0) continue;
    params.vertex_weights[f.vertex[v * 2]] -= rate * gmu;
    params.vertex_weights[f.vertex[v * 2 + 1]] -= rate * gmu;
  }
  for (std::size_t a = 0; a < rep.grad_phi.size(); ++a) {
    const double g = rep.grad_phi[a];
    if (g == 0.0) continue;
    const std::uint32_t* s = &f.arc[a * 3];
    for (int k = 0; k < 3; ++k) params.arc_weights[s[k]] -= rate * g;
  }
}

// ---------------------------------------------------------------------------
// Training

struct Instance {
  std::vector<std::string> words;
  Ast program;
  std::optional<std::vector<int>> anchoring;  // word (1-based) per AST vertex
};

enum class TrainMode { Supervised, Weak };

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  int skipped = 0;
  std::optional<double> dev_exact_match;
};

struct TrainOptions {
  TrainMode mode = TrainMode::Supervised;
  int epochs = 10;
  SolverConfig estep;  // latent anchoring solver settings
  SolverConfig decode;  // used for dev evaluation
  const std::vector<Instance>* dev = nullptr;
  std::function<void(const EpochStats&)> on_epoch;
};

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

/// Decodes one sentence; nullopt when no feasible structure was produced.
inline std::optional<Ast> predict(const ScorerParams& params, const std::vector<std::string>& words,
                                  const std::shared_ptr<const Grammar>& g, const SolverConfig& cfg,
                                  SolveResult* diagnostics = nullptr) {
  if (words.empty()) return std::nullopt;
  const ExtendedGraph gph = score_graph(params, words, g);
  SolveResult res = map_inference(gph, cfg);
  std::optional<Ast> out;
  if (res.integral_feasible) out = solution_to_ast(gph, res.z_integral);
  if (diagnostics) *diagnostics = std::move(res);
  return out;
}

inline double exact_match(const ScorerParams& params, const std::vector<Instance>& data,
                          const std::shared_ptr<const Grammar>& g, const SolverConfig& cfg) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const auto& inst : data) {
    auto pred = predict(params, inst.words, g, cfg);
    hits += pred && same_program(*g, *pred, inst.program);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Per-instance gradient descent on the surrogate loss with a fixed rate in
/// dataset order. In weak mode the anchorings are re-estimated by
/// latent_anchor at the start of every epoch.
inline ScorerParams train(const std::vector<Instance>& dataset, const std::shared_ptr<const Grammar>& g,
                          ScorerParams params, const TrainOptions& opts) {
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    std::vector<std::optional<std::vector<int>>> targets(dataset.size());
    if (opts.mode == TrainMode::Weak) {
      for (std::size_t k = 0; k < dataset.size(); ++k) {
        const Instance& inst = dataset[k];
        if (inst.program.size() > static_cast<int>(inst.words.size())) continue;
        const ExtendedGraph gph = score_graph(params, inst.words, g);
        const Alignment al = latent_anchor(gph, inst.program, opts.estep);
        targets[k] = to_anchored_ast(gph, inst.program, al).word;
      }
    } else {
      for (std::size_t k = 0; k < dataset.size(); ++k) targets[k] = dataset[k].anchoring;
    }
    for (std::size_t k = 0; k < dataset.size(); ++k) {
      const Instance& inst = dataset[k];
      if (!targets[k]) {
        ++stats.skipped;
        continue;
      }
      ExtendedGraph gph(static_cast<int>(inst.words.size()), g);
      const GraphFeatures f = extract_features(gph, inst.words, params);
      apply_scores(gph, f, params);
      const SolutionVector target = anchored_ast_to_solution(gph, AnchoredAst{inst.program, *targets[k]});
      const LossReport rep = supervised_loss(gph, target);
      stats.loss += rep.loss;
      apply_gradient(params, f, rep, params.learning_rate);
    }
    if (opts.dev) stats.dev_exact_match = exact_match(params, *opts.dev, g, opts.decode);
    if (opts.on_epoch) opts.on_epoch(stats);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Checkpoints: text dump of the non-zero table entries.

inline void save_checkpoint(std::ostream& out, const ScorerParams& p) {
  out << "sempar-checkpoint 1\n";
  out << "seed " << p.seed << "\n";
  out << "table_size " << p.table_size() << "\n";
  out.precision(17);
  out << "learning_rate " << p.learning_rate << "\n";
  for (std::size_t i = 0; i < p.vertex_weights.size(); ++i)
    if (p.vertex_weights[i] != 0.0) out << "v " << i << " " << p.vertex_weights[i] << "\n";
  for (std::size_t i = 0; i < p.arc_weights.size(); ++i)
    if (p.arc_weights[i] != 0.0) out << "a " << i << " " << p.arc_weights[i] << "\n";
}

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline ScorerParams load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "sempar-checkpoint" || version != 1)
    throw CheckpointError("not a sempar checkpoint (version 1)");
  std::string key;
  std::uint64_t seed = 0;
  std::size_t size = 0;
  double lr = 0.0;
  if (!(in >> key >> seed) || key != "seed") throw CheckpointError("missing seed");
  if (!(in >> key >> size) || key != "table_size" || size == 0) throw CheckpointError("missing table_size");
  if (!(in >> key >> lr) || key != "learning_rate") throw CheckpointError("missing learning_rate");
  ScorerParams p(size, seed, lr);
  std::size_t idx;
  double w;
  while (in >> key) {
    if (!(in >> idx >> w) || idx >= size) throw CheckpointError("bad entry");
    if (key == "v")
      p.vertex_weights[idx] = w;
    else if (key == "a")
      p.arc_weights[idx] = w;
    else
      throw CheckpointError("unknown entry kind '" + key + "'");
  }
  return p;
}

}  // namespace sempar

#endif  // SEMPAR_LOSSES_HPP
