#ifndef SEMPAR_GRAMMAR_HPP
#define SEMPAR_GRAMMAR_HPP

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sempar {

inline constexpr std::string_view kRootName = "ROOT";
inline constexpr std::string_view kNullName = "NULL";

struct GrammarError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Typed semantic grammar: tags (predicates and entities), types, the typing
/// function and the valency function. Tag and type ids are their positions in
/// declaration order.
class Grammar {
 public:
  int add_type(const std::string& name) {
    check_name(name);
    if (type_index_.count(name)) throw GrammarError("duplicate type '" + name + "'");
    type_index_[name] = static_cast<int>(types_.size());
    types_.push_back(name);
    for (auto& row : tag_args_) row.push_back(0);
    return static_cast<int>(types_.size()) - 1;
  }

  int add_tag(const std::string& name, const std::string& type,
              const std::vector<std::pair<std::string, int>>& args = {}) {
    check_name(name);
    if (tag_index_.count(name)) throw GrammarError("duplicate tag '" + name + "'");
    if (type_index_.count(name)) throw GrammarError("tag '" + name + "' collides with a type name");
    const int t = type_id(type);
    std::vector<int> counts(types_.size(), 0);
    for (const auto& [arg_type, count] : args) {
      if (count < 0) throw GrammarError("negative argument count for tag '" + name + "'");
      counts[type_id(arg_type)] += count;
    }
    tag_index_[name] = static_cast<int>(tags_.size());
    tags_.push_back(name);
    tag_type_.push_back(t);
    tag_args_.push_back(std::move(counts));
    return static_cast<int>(tags_.size()) - 1;
  }

  int num_tags() const { return static_cast<int>(tags_.size()); }
  int num_types() const { return static_cast<int>(types_.size()); }
  const std::string& tag_name(int tag) const { return tags_.at(tag); }
  const std::string& type_name(int type) const { return types_.at(type); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& types() const { return types_; }

  std::optional<int> find_tag(std::string_view name) const {
    auto it = tag_index_.find(std::string(name));
    if (it == tag_index_.end()) return std::nullopt;
    return it->second;
  }

  int tag_id(std::string_view name) const {
    auto t = find_tag(name);
    if (!t) throw GrammarError("unknown tag '" + std::string(name) + "'");
    return *t;
  }

  int type_id(std::string_view name) const {
    auto it = type_index_.find(std::string(name));
    if (it == type_index_.end()) throw GrammarError("unknown type '" + std::string(name) + "'");
    return it->second;
  }

  int tag_type(int tag) const { return tag_type_.at(tag); }
  int tag_args(int tag, int type) const { return tag_args_.at(tag).at(type); }

  int arity(int tag) const {
    int total = 0;
    for (int c : tag_args_.at(tag)) total += c;
    return total;
  }

  bool is_entity(int tag) const { return arity(tag) == 0; }

 private:
  static void check_name(const std::string& name) {
    if (name.empty()) throw GrammarError("empty identifier");
    if (name == kRootName || name == kNullName)
      throw GrammarError("reserved identifier '" + name + "'");
  }

  std::vector<std::string> tags_;
  std::vector<std::string> types_;
  std::vector<int> tag_type_;
  std::vector<std::vector<int>> tag_args_;
  std::map<std::string, int, std::less<>> tag_index_;
  std::map<std::string, int, std::less<>> type_index_;
};

inline bool is_entity(const Grammar& g, std::string_view tag) { return g.is_entity(g.tag_id(tag)); }

/// Parses the line-oriented grammar format:
///   type <name>
///   tag <name> <type> [<argtype>=<count> ...]
/// Blank lines and '#' comments are ignored.
inline Grammar parse_grammar(std::string_view text) {
  Grammar g;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw GrammarError("grammar line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    try {
      if (kw == "type") {
        std::string name, extra;
        if (!(ls >> name)) fail("missing type name");
        if (ls >> extra) fail("trailing tokens after type name");
        g.add_type(name);
      } else if (kw == "tag") {
        std::string name, type, tok;
        if (!(ls >> name >> type)) fail("expected 'tag <name> <type>'");
        std::vector<std::pair<std::string, int>> args;
        while (ls >> tok) {
          auto eq = tok.find('=');
          if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
            fail("malformed argument spec '" + tok + "'");
          int count = 0;
          try {
            std::size_t used = 0;
            count = std::stoi(tok.substr(eq + 1), &used);
            if (used != tok.size() - eq - 1) throw std::invalid_argument(tok);
          } catch (const std::logic_error&) {
            fail("bad count in '" + tok + "'");
          }
          args.emplace_back(tok.substr(0, eq), count);
        }
        g.add_tag(name, type, args);
      } else {
        fail("unknown keyword '" + kw + "'");
      }
    } catch (const GrammarError& e) {
      if (std::string_view(e.what()).starts_with("grammar line")) throw;
      fail(e.what());
    }
  }
  return g;
}

/// Inverse of parse_grammar.
inline std::string format_grammar(const Grammar& g) {
  std::string out;
  for (const auto& t : g.types()) out += "type " + t + "\n";
  for (int e = 0; e < g.num_tags(); ++e) {
    out += "tag " + g.tag_name(e) + " " + g.type_name(g.tag_type(e));
    for (int t = 0; t < g.num_types(); ++t)
      if (g.tag_args(e, t) > 0) out += " " + g.type_name(t) + "=" + std::to_string(g.tag_args(e, t));
    out += "\n";
  }
  return out;
}

/// Labeled arborescence of tag instances. Vertex ids follow preorder when the
/// tree comes from parse_program; children keep their written order.
struct Ast {
  std::vector<int> label;                  // vertex -> tag id
  std::vector<std::vector<int>> children;  // ordered argument lists
  int root = 0;

  int size() const { return static_cast<int>(label.size()); }

  int add_vertex(int tag) {
    label.push_back(tag);
    children.emplace_back();
    return size() - 1;
  }

  std::vector<std::pair<int, int>> arcs() const {
    std::vector<std::pair<int, int>> out;
    for (int u = 0; u < size(); ++u)
      for (int v : children[u]) out.emplace_back(u, v);
    return out;
  }

  std::vector<int> parents() const {
    std::vector<int> p(label.size(), -1);
    for (int u = 0; u < size(); ++u)
      for (int v : children[u]) p[v] = u;
    return p;
  }

  /// Vertices so that every parent precedes its children.
  std::vector<int> topological_order() const {
    std::vector<int> order;
    if (label.empty()) return order;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      order.push_back(u);
      for (auto it = children[u].rbegin(); it != children[u].rend(); ++it) stack.push_back(*it);
    }
    return order;
  }

  friend bool operator==(const Ast&, const Ast&) = default;
};

namespace detail {

class ProgramReader {
 public:
  ProgramReader(std::string_view text, const Grammar& g) : text_(text), g_(g) {}

  Ast read() {
    Ast ast;
    skip_ws();
    ast.root = read_node(ast);
    skip_ws();
    if (pos_ != text_.size()) error("unexpected trailing input");
    return ast;
  }

 private:
  int read_node(Ast& ast) {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')' && text_[pos_] != ',')
      ++pos_;
    if (start == pos_) error("expected a tag name");
    std::string_view name = text_.substr(start, pos_ - start);
    auto tag = g_.find_tag(name);
    if (!tag) error("unknown tag '" + std::string(name) + "'");
    const int u = ast.add_vertex(*tag);
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        int child = read_node(ast);
        ast.children[u].push_back(child);
        skip_ws();
        if (pos_ >= text_.size()) error("unbalanced parentheses");
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        error("expected ',' or ')'");
      }
    }
    return u;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void error(const std::string& msg) const {
    throw ParseError("program parse error at offset " + std::to_string(pos_) + ": " + msg);
  }

  std::string_view text_;
  const Grammar& g_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct Violation {
  int vertex = -1;  // -1 for structural problems
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "; ";
      if (v.vertex >= 0) s += "vertex " + std::to_string(v.vertex) + ": ";
      s += v.message;
    }
    return s;
  }
};

/// Checks that the AST is an arborescence and that every vertex has exactly
/// the number of children of each type its tag requires. Argument order is
/// not checked.
inline ValidationReport validate_ast(const Grammar& g, const Ast& a) {
  ValidationReport report;
  const int m = a.size();
  if (m == 0) {
    report.violations.push_back({-1, "empty AST"});
    return report;
  }
  if (a.root < 0 || a.root >= m) {
    report.violations.push_back({-1, "root out of range"});
    return report;
  }
  std::vector<int> indegree(m, 0);
  std::size_t arc_count = 0;
  for (int u = 0; u < m; ++u) {
    for (int v : a.children[u]) {
      if (v < 0 || v >= m) {
        report.violations.push_back({u, "child index out of range"});
        return report;
      }
      ++indegree[v];
      ++arc_count;
    }
  }
  for (int v = 0; v < m; ++v) {
    if (v == a.root && indegree[v] != 0) report.violations.push_back({v, "root has a parent"});
    if (v != a.root && indegree[v] > 1) report.violations.push_back({v, "reentrant vertex"});
  }
  if (arc_count != static_cast<std::size_t>(m - 1))
    report.violations.push_back({-1, "arc count is not |V|-1"});
  std::vector<char> seen(m, 0);
  std::vector<int> stack{a.root};
  int reached = 0;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    if (seen[u]) continue;
    seen[u] = 1;
    ++reached;
    for (int v : a.children[u]) stack.push_back(v);
  }
  if (reached != m) report.violations.push_back({-1, "not all vertices reachable from root"});
  for (int u = 0; u < m; ++u) {
    const int tag = a.label[u];
    if (tag < 0 || tag >= g.num_tags()) {
      report.violations.push_back({u, "label outside grammar"});
      continue;
    }
    std::vector<int> counts(g.num_types(), 0);
    for (int v : a.children[u])
      if (a.label[v] >= 0 && a.label[v] < g.num_tags()) ++counts[g.tag_type(a.label[v])];
    for (int t = 0; t < g.num_types(); ++t) {
      if (counts[t] != g.tag_args(tag, t)) {
        report.violations.push_back(
            {u, "valency violation at " + g.tag_name(tag) + ": " + std::to_string(counts[t]) +
                    " argument(s) of type " + g.type_name(t) + ", expected " +
                    std::to_string(g.tag_args(tag, t))});
      }
    }
  }
  return report;
}

/// Parses "tag(arg, arg, ...)" notation. When `validate` is set, ill-formed
/// programs are rejected with the offending vertex in the message.
inline Ast parse_program(std::string_view text, const Grammar& g, bool validate = true) {
  Ast ast = detail::ProgramReader(text, g).read();
  if (validate) {
    auto report = validate_ast(g, ast);
    if (!report.ok()) throw ParseError("ill-formed program: " + report.to_string());
  }
  return ast;
}

namespace detail {
inline void serialize_into(const Grammar& g, const Ast& a, int u, std::string& out) {
  out += g.tag_name(a.label[u]);
  if (a.children[u].empty()) return;
  out += '(';
  bool first = true;
  for (int v : a.children[u]) {
    if (!first) out += ',';
    first = false;
    serialize_into(g, a, v, out);
  }
  out += ')';
}

inline std::string canonical_into(const Grammar& g, const Ast& a, int u) {
  std::vector<std::string> args;
  for (int v : a.children[u]) args.push_back(canonical_into(g, a, v));
  std::sort(args.begin(), args.end());
  std::string out = g.tag_name(a.label[u]);
  if (args.empty()) return out;
  out += '(';
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ',';
    out += args[i];
  }
  out += ')';
  return out;
}
}  // namespace detail

inline std::string serialize_ast(const Grammar& g, const Ast& a) {
  std::string out;
  if (a.size() > 0) detail::serialize_into(g, a, a.root, out);
  return out;
}

/// Serialization with every argument list sorted; two ASTs denote the same
/// program up to argument order iff their canonical strings are equal.
inline std::string canonical_program(const Grammar& g, const Ast& a) {
  return a.size() > 0 ? detail::canonical_into(g, a, a.root) : std::string();
}

inline bool same_program(const Grammar& g, const Ast& a, const Ast& b) {
  return canonical_program(g, a) == canonical_program(g, b);
}

}  // namespace sempar

#endif  // SEMPAR_GRAMMAR_HPP
