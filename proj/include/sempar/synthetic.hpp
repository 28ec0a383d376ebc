#ifndef SEMPAR_SYNTHETIC_HPP
#define SEMPAR_SYNTHETIC_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sempar/grammar.hpp"
#include "sempar/graph.hpp"
#include "sempar/losses.hpp"

// Random grammars, graphs, ASTs and datasets for tests and the self-test.

namespace sempar::synthetic {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Random grammar with `num_tags` tags over `num_types` types, arities <= 2
/// and at least one entity.
inline std::shared_ptr<const Grammar> random_grammar(Rng& rng, int num_tags, int num_types) {
  auto g = std::make_shared<Grammar>();
  for (int t = 0; t < num_types; ++t) g->add_type("t" + std::to_string(t));
  const int forced_entity = uniform_int(rng, 0, num_tags - 1);
  for (int e = 0; e < num_tags; ++e) {
    const std::string type = "t" + std::to_string(uniform_int(rng, 0, num_types - 1));
    std::vector<std::pair<std::string, int>> args;
    if (e != forced_entity && uniform(rng, 0.0, 1.0) < 0.6) {
      const int arity = uniform_int(rng, 1, 2);
      for (int k = 0; k < arity; ++k) args.emplace_back("t" + std::to_string(uniform_int(rng, 0, num_types - 1)), 1);
    }
    g->add_tag("T" + std::to_string(e), type, args);
  }
  return g;
}

/// Graph with mu and phi uniform in [lo, hi]; the root vertex weight stays 0.
inline ExtendedGraph random_graph(Rng& rng, int n, std::shared_ptr<const Grammar> g, double lo = -1.0,
                                  double hi = 1.0) {
  ExtendedGraph gph(n, std::move(g));
  for (int v = 1; v < gph.num_vertices(); ++v) gph.mu()[v] = uniform(rng, lo, hi);
  for (int a = 0; a < gph.num_arcs(); ++a) gph.phi()[a] = uniform(rng, lo, hi);
  return gph;
}

struct TinyInstance {
  std::shared_ptr<const Grammar> grammar;
  ExtendedGraph graph;
};

/// n <= max_len, |E| <= max_tags, |T| <= max_types, weights uniform in [-1, 1].
inline TinyInstance random_instance(Rng& rng, int max_len = 4, int max_tags = 3, int max_types = 2) {
  const int e = uniform_int(rng, 1, max_tags);
  const int t = uniform_int(rng, 1, max_types);
  const int n = uniform_int(rng, 1, max_len);
  auto g = random_grammar(rng, e, t);
  return {g, random_graph(rng, n, g)};
}

/// Random well-formed AST: tags are expanded by their valency; below
/// `max_depth` only entities are drawn when the required type has one.
/// Returns an empty AST when the grammar cannot close a tree within
/// `max_size` vertices after a few attempts.
inline Ast random_ast(Rng& rng, const Grammar& g, int max_size, int max_depth = 3) {
  std::vector<std::vector<int>> by_type(g.num_types());
  for (int e = 0; e < g.num_tags(); ++e) by_type[g.tag_type(e)].push_back(e);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Ast ast;
    bool ok = true;
    auto pick = [&](const std::vector<int>& pool, int depth) {
      std::vector<int> entities;
      for (int e : pool)
        if (g.is_entity(e)) entities.push_back(e);
      const auto& from = depth >= max_depth && !entities.empty() ? entities : pool;
      return from[uniform_int(rng, 0, static_cast<int>(from.size()) - 1)];
    };
    std::function<int(int, int)> grow = [&](int tag, int depth) -> int {
      const int u = ast.add_vertex(tag);
      if (ast.size() > max_size) {
        ok = false;
        return u;
      }
      for (int t = 0; t < g.num_types() && ok; ++t) {
        for (int k = 0; k < g.tag_args(tag, t) && ok; ++k) {
          if (by_type[t].empty()) {
            ok = false;
            break;
          }
          const int child = grow(pick(by_type[t], depth + 1), depth + 1);
          ast.children[u].push_back(child);
        }
      }
      return u;
    };
    std::vector<int> all(g.num_tags());
    for (int e = 0; e < g.num_tags(); ++e) all[e] = e;
    ast.root = grow(pick(all, 0), 0);
    if (ok && ast.size() <= max_size) return ast;
  }
  return Ast{};
}

/// A fixed training grammar with 8 tags over two types, arities <= 2.
inline std::shared_ptr<const Grammar> training_grammar() {
  return std::make_shared<const Grammar>(parse_grammar(
      "type place\n"
      "type number\n"
      "tag city place\n"
      "tag river place\n"
      "tag count number\n"
      "tag zero number\n"
      "tag capital place place=1\n"
      "tag size number place=1\n"
      "tag larger place place=1 number=1\n"
      "tag exclude place place=2\n"));
}

struct Lexicon {
  std::vector<std::vector<std::string>> triggers;  // per tag
  std::vector<std::string> fillers;
};

/// Two trigger words per tag plus shared function words.
inline Lexicon make_lexicon(const Grammar& g) {
  Lexicon lex;
  for (int e = 0; e < g.num_tags(); ++e)
    lex.triggers.push_back({g.tag_name(e) + "_w", g.tag_name(e) + "_v"});
  lex.fillers = {"the", "of", "what", "is", "a", "which", "in", "me"};
  return lex;
}

/// Sentence realizing the AST in preorder: one trigger word per vertex, with
/// filler words inserted between them at random.
inline Instance realize(Rng& rng, const Grammar& g, const Lexicon& lex, const Ast& ast, double filler_rate = 0.3) {
  (void)g;
  Instance inst;
  inst.program = ast;
  std::vector<int> anchor(ast.size(), 0);
  auto filler = [&] {
    inst.words.push_back(lex.fillers[uniform_int(rng, 0, static_cast<int>(lex.fillers.size()) - 1)]);
  };
  if (uniform(rng, 0.0, 1.0) < 0.5) filler();
  for (int u : ast.topological_order()) {
    const auto& words = lex.triggers[ast.label[u]];
    inst.words.push_back(words[uniform_int(rng, 0, static_cast<int>(words.size()) - 1)]);
    anchor[u] = static_cast<int>(inst.words.size());
    if (uniform(rng, 0.0, 1.0) < filler_rate) filler();
  }
  inst.anchoring = anchor;
  return inst;
}

inline std::vector<Instance> synthetic_dataset(Rng& rng, const Grammar& g, int count, int max_ast = 5,
                                               int max_depth = 3) {
  const Lexicon lex = make_lexicon(g);
  std::vector<Instance> out;
  while (static_cast<int>(out.size()) < count) {
    Ast ast = random_ast(rng, g, max_ast, max_depth);
    if (ast.size() == 0) continue;
    out.push_back(realize(rng, g, lex, ast));
  }
  return out;
}

}  // namespace sempar::synthetic

#endif  // SEMPAR_SYNTHETIC_HPP
