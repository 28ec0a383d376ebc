#ifndef SEMPAR_DATASET_HPP
#define SEMPAR_DATASET_HPP

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sempar/grammar.hpp"
#include "sempar/losses.hpp"

namespace sempar {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Space-separated "astVertex:word" pairs; words are 1-based.
inline std::vector<int> parse_anchoring(std::string_view text, int ast_size, int sentence_length) {
  std::vector<int> word(ast_size, 0);
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw DatasetError("malformed anchoring pair '" + tok + "'");
    int u = 0, w = 0;
    try {
      u = std::stoi(tok.substr(0, colon));
      w = std::stoi(tok.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw DatasetError("malformed anchoring pair '" + tok + "'");
    }
    if (u < 0 || u >= ast_size) throw DatasetError("anchoring vertex out of range in '" + tok + "'");
    if (w < 1 || w > sentence_length) throw DatasetError("anchoring word out of range in '" + tok + "'");
    if (word[u] != 0) throw DatasetError("vertex anchored twice in '" + tok + "'");
    word[u] = w;
  }
  for (int u = 0; u < ast_size; ++u)
    if (word[u] == 0) throw DatasetError("vertex " + std::to_string(u) + " has no anchor");
  return word;
}

inline std::string format_anchoring(const std::vector<int>& word) {
  std::string out;
  for (std::size_t u = 0; u < word.size(); ++u) {
    if (u) out += ' ';
    out += std::to_string(u) + ":" + std::to_string(word[u]);
  }
  return out;
}

/// Reads `sentence<TAB>program[<TAB>anchoring]` lines. Errors carry the line
/// number.
inline std::vector<Instance> read_dataset(std::istream& in, const Grammar& g) {
  std::vector<Instance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    try {
      if (fields.size() < 2 || fields.size() > 3) throw DatasetError("expected 2 or 3 tab-separated fields");
      Instance inst;
      inst.words = split_words(fields[0]);
      if (inst.words.empty()) throw DatasetError("empty sentence");
      inst.program = parse_program(fields[1], g);
      if (fields.size() == 3 && fields[2].find_first_not_of(' ') != std::string::npos)
        inst.anchoring = parse_anchoring(fields[2], inst.program.size(), static_cast<int>(inst.words.size()));
      out.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw DatasetError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_dataset(std::ostream& out, const Grammar& g, const std::vector<Instance>& data,
                          bool with_anchoring = true) {
  for (const auto& inst : data) {
    for (std::size_t i = 0; i < inst.words.size(); ++i) out << (i ? " " : "") << inst.words[i];
    out << '\t' << serialize_ast(g, inst.program);
    if (with_anchoring && inst.anchoring) out << '\t' << format_anchoring(*inst.anchoring);
    out << '\n';
  }
}

}  // namespace sempar

#endif  // SEMPAR_DATASET_HPP
