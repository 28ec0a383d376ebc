// Command-line front end: parse, align, train, eval, gen and selftest.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sempar/sempar.hpp"
#include "sempar/selftest.hpp"

using json = nlohmann::ordered_json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::shared_ptr<const sempar::Grammar> load_grammar(const std::string& path) {
  return std::make_shared<const sempar::Grammar>(sempar::parse_grammar(read_file(path)));
}

sempar::ScorerParams load_params(const std::string& path) {
  std::istringstream in(read_file(path));
  return sempar::load_checkpoint(in);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Output stream: a file when a path is given, stdout otherwise.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw CliError("cannot write '" + path + "'");
    }
  }
  std::ostream& out() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct Manifest {
  std::string path;
  json doc = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(json timing = json::object()) {
    if (path.empty()) return;
    timing["total_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    doc["timing"] = std::move(timing);
    std::ofstream out(path);
    if (!out) throw CliError("cannot write manifest '" + path + "'");
    out << doc.dump(2) << "\n";
  }
};

struct SolverFlags {
  int iters = 500;
  double eps = 1e-6;
  double beta0 = 1.0;

  void add(CLI::App* app) {
    app->add_option("--iters", iters, "Conditional-gradient iterations (K)")->check(CLI::PositiveNumber);
    app->add_option("--eps", eps, "Dual-gap tolerance")->check(CLI::NonNegativeNumber);
    app->add_option("--beta0", beta0, "Initial smoothness")->check(CLI::PositiveNumber);
  }
  sempar::SolverConfig config() const {
    sempar::SolverConfig cfg;
    cfg.max_iters = iters;
    cfg.eps = eps;
    cfg.beta0 = beta0;
    return cfg;
  }
  json to_json() const { return {{"iters", iters}, {"eps", eps}, {"beta0", beta0}}; }
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// parse

struct ParseArgs {
  std::string grammar, weights, checkpoint, output, manifest;
  std::vector<std::string> inputs;
  SolverFlags solver;
  bool no_round = false;
  bool verbose = false;
  int jobs = 1;
  std::uint64_t seed = 0;
};

std::string anchors_of(const sempar::AnchoredAst& a) { return sempar::format_anchoring(a.word); }

std::string fractional_diagnostics(const sempar::ExtendedGraph& gph, const sempar::SolveResult& res) {
  std::string out = "objective=" + fmt(res.smoothed_objective) + "\tlinear=" + fmt(res.linear_objective);
  std::string support;
  const auto& z = res.z_fractional;
  for (int v = 1; v < gph.num_vertices(); ++v)
    if (z.x()[v] > 1e-6) support += (support.empty() ? "" : " ") + gph.vertex_name(v) + "=" + fmt(z.x()[v]);
  return out + "\tx=" + support;
}

int cmd_parse(const ParseArgs& a) {
  Manifest manifest{a.manifest.empty() && !a.output.empty() ? a.output + ".manifest.json" : a.manifest};
  const auto g = load_grammar(a.grammar);
  std::optional<std::string> weight_text;
  std::optional<sempar::ScorerParams> params;
  if (!a.weights.empty()) weight_text = read_file(a.weights);
  if (!a.checkpoint.empty()) params = load_params(a.checkpoint);
  std::vector<std::string> sentences;
  const std::vector<std::string> inputs = a.inputs.empty() ? std::vector<std::string>{"-"} : a.inputs;
  for (const auto& path : inputs)
    for (auto& line : read_lines(read_file(path))) sentences.push_back(std::move(line));

  sempar::SolverConfig cfg = a.solver.config();
  const int count = static_cast<int>(sentences.size());
  std::vector<std::string> lines(count);
  std::vector<std::string> traces(count);
  std::vector<double> ms(count, 0.0);
  std::vector<char> integral(count, 0);
  parallel_for(count, a.jobs, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto words = sempar::split_words(sentences[i]);
    if (words.empty()) {
      lines[i] = "FAIL\t\tgap=nan\tintegral=0\treason=empty sentence";
      return;
    }
    sempar::ExtendedGraph gph(static_cast<int>(words.size()), g);
    if (params) gph = sempar::score_graph(*params, words, g);
    if (weight_text) {
      try {
        sempar::apply_weight_file(*weight_text, gph);
      } catch (const sempar::WeightFileError& e) {
        throw CliError("sentence " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    std::ostringstream trace;
    sempar::SolverConfig local = cfg;
    if (a.verbose) local.trace = &trace;
    const sempar::SolveResult res = sempar::map_inference(gph, local, !a.no_round);
    const std::string stats = "gap=" + fmt(res.dual_gap) + "\tintegral=";
    if (a.no_round) {
      lines[i] = "FRACTIONAL\t\t" + stats + (res.z_fractional.is_integral() ? "1" : "0") + "\t" +
                 fractional_diagnostics(gph, res);
    } else if (res.integral_feasible) {
      const auto anchored = sempar::solution_to_anchored_ast(gph, res.z_integral);
      lines[i] = sempar::serialize_ast(*g, anchored.ast) + "\t" + anchors_of(anchored) + "\t" + stats +
                 (res.z_fractional.is_integral() ? "1" : "0");
      integral[i] = 1;
    } else {
      lines[i] = "FAIL\t\t" + stats + "0";
    }
    traces[i] = trace.str();
    ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });

  Sink sink(a.output);
  for (int i = 0; i < count; ++i) {
    if (a.verbose) std::cerr << "# sentence " << i + 1 << "\n" << traces[i];
    sink.out() << lines[i] << "\n";
  }
  int parsed = 0;
  for (char c : integral) parsed += c;
  manifest.doc = {{"command", "parse"},
                  {"grammar", a.grammar},
                  {"inputs", inputs},
                  {"weights", a.weights},
                  {"checkpoint", a.checkpoint},
                  {"config", {{"solver", a.solver.to_json()}, {"round", !a.no_round}, {"jobs", a.jobs}}},
                  {"seed", a.seed},
                  {"sentences", count},
                  {"parsed", parsed}};
  manifest.write({{"median_ms_per_sentence", median(ms)}});
  return 0;
}

// ---------------------------------------------------------------------------
// align

struct AlignArgs {
  std::string grammar, checkpoint, weights, dataset, output, manifest;
  SolverFlags solver;
  int jobs = 1;
  std::uint64_t seed = 0;
};

int cmd_align(const AlignArgs& a) {
  Manifest manifest{a.manifest.empty() && !a.output.empty() ? a.output + ".manifest.json" : a.manifest};
  const auto g = load_grammar(a.grammar);
  std::istringstream data_in(read_file(a.dataset));
  const auto data = sempar::read_dataset(data_in, *g);
  std::optional<sempar::ScorerParams> params;
  std::optional<std::string> weight_text;
  if (!a.checkpoint.empty()) params = load_params(a.checkpoint);
  if (!a.weights.empty()) weight_text = read_file(a.weights);
  const sempar::SolverConfig cfg = a.solver.config();
  const int count = static_cast<int>(data.size());
  std::vector<std::string> lines(count);
  parallel_for(count, a.jobs, [&](int i) {
    const auto& inst = data[i];
    sempar::ExtendedGraph gph(static_cast<int>(inst.words.size()), g);
    if (params) gph = sempar::score_graph(*params, inst.words, g);
    if (weight_text) {
      try {
        sempar::apply_weight_file(*weight_text, gph);
      } catch (const sempar::WeightFileError& e) {
        throw CliError("instance " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    try {
      const sempar::Alignment al = sempar::latent_anchor(gph, inst.program, cfg);
      if (!sempar::is_injective_per_cluster(gph, al)) {
        lines[i] = "FAIL two vertices anchored on one word";
        return;
      }
      lines[i] = sempar::format_anchoring(sempar::to_anchored_ast(gph, inst.program, al).word);
    } catch (const sempar::AnchoringError& e) {
      lines[i] = std::string("FAIL ") + e.what();
    }
  });
  Sink sink(a.output);
  for (const auto& l : lines) sink.out() << l << "\n";
  manifest.doc = {{"command", "align"},
                  {"grammar", a.grammar},
                  {"inputs", {a.dataset}},
                  {"checkpoint", a.checkpoint},
                  {"weights", a.weights},
                  {"config", {{"solver", a.solver.to_json()}, {"jobs", a.jobs}}},
                  {"seed", a.seed},
                  {"instances", count}};
  manifest.write();
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string grammar, dataset, dev, out, manifest, mode = "supervised";
  int epochs = 10;
  double lr = 0.5;
  std::uint64_t seed = 0;
  SolverFlags solver;
};

int cmd_train(const TrainArgs& a) {
  Manifest manifest{a.manifest.empty() ? a.out + ".manifest.json" : a.manifest};
  const auto g = load_grammar(a.grammar);
  std::istringstream data_in(read_file(a.dataset));
  const auto data = sempar::read_dataset(data_in, *g);
  std::vector<sempar::Instance> dev;
  if (!a.dev.empty()) {
    std::istringstream dev_in(read_file(a.dev));
    dev = sempar::read_dataset(dev_in, *g);
  }
  sempar::TrainOptions opts;
  opts.mode = a.mode == "weak" ? sempar::TrainMode::Weak : sempar::TrainMode::Supervised;
  opts.epochs = a.epochs;
  opts.estep = a.solver.config();
  opts.decode = a.solver.config();
  if (!dev.empty()) opts.dev = &dev;
  if (opts.mode == sempar::TrainMode::Supervised) {
    for (std::size_t k = 0; k < data.size(); ++k)
      if (!data[k].anchoring)
        throw CliError("supervised training needs an anchoring on every line (instance " + std::to_string(k + 1) +
                       ")");
  }
  json epochs = json::array();
  opts.on_epoch = [&](const sempar::EpochStats& s) {
    std::cout << "epoch=" << s.epoch << " loss=" << fmt(s.loss) << " skipped=" << s.skipped;
    if (s.dev_exact_match) std::cout << " dev_exact_match=" << std::fixed << std::setprecision(4)
                                     << *s.dev_exact_match << std::defaultfloat;
    std::cout << std::endl;
    json e = {{"epoch", s.epoch}, {"loss", s.loss}, {"skipped", s.skipped}};
    if (s.dev_exact_match) e["dev_exact_match"] = *s.dev_exact_match;
    epochs.push_back(e);
  };
  const sempar::ScorerParams init(sempar::ScorerParams::kDefaultTableSize, a.seed, a.lr);
  const sempar::ScorerParams trained = sempar::train(data, g, init, opts);
  {
    std::ofstream out(a.out);
    if (!out) throw CliError("cannot write '" + a.out + "'");
    sempar::save_checkpoint(out, trained);
  }
  manifest.doc = {{"command", "train"},
                  {"grammar", a.grammar},
                  {"inputs", a.dev.empty() ? json{a.dataset} : json{a.dataset, a.dev}},
                  {"config",
                   {{"mode", a.mode}, {"epochs", a.epochs}, {"learning_rate", a.lr}, {"solver", a.solver.to_json()}}},
                  {"seed", a.seed},
                  {"checkpoint", a.out},
                  {"epoch_log", epochs}};
  manifest.write();
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string grammar, gold, predicted;
};

std::optional<sempar::Ast> parse_field(const std::string& text, const sempar::Grammar& g) {
  try {
    return sempar::parse_program(text, g);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Program of a prediction line or a dataset line (sentence, program, anchoring).
std::optional<sempar::Ast> program_field(const std::string& line, const sempar::Grammar& g) {
  const std::size_t tab = line.find('\t');
  if (auto ast = parse_field(line.substr(0, tab), g)) return ast;
  if (tab == std::string::npos) return std::nullopt;
  const std::size_t next = line.find('\t', tab + 1);
  return parse_field(line.substr(tab + 1, next == std::string::npos ? std::string::npos : next - tab - 1), g);
}

int cmd_eval(const EvalArgs& a) {
  const auto g = load_grammar(a.grammar);
  auto gold = read_lines(read_file(a.gold));
  auto pred = read_lines(read_file(a.predicted));
  auto trim = [](std::vector<std::string>& v) {
    while (!v.empty() && v.back().find_first_not_of(" \t") == std::string::npos) v.pop_back();
  };
  trim(gold);
  trim(pred);
  if (gold.size() != pred.size())
    throw CliError("length mismatch: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) +
                   " predicted");
  int hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto ga = program_field(gold[i], *g);
    if (!ga) throw CliError("gold line " + std::to_string(i + 1) + ": not a valid program");
    const auto pa = program_field(pred[i], *g);
    hits += pa && sempar::same_program(*g, *ga, *pa);
  }
  const double acc = gold.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gold.size());
  std::cout << std::fixed << std::setprecision(4) << acc << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string grammar, grammar_out, output;
  int count = 100;
  int max_ast = 5;
  std::uint64_t seed = 0;
  bool anchors = true;
};

int cmd_gen(const GenArgs& a) {
  const auto g = a.grammar.empty() ? sempar::synthetic::training_grammar() : load_grammar(a.grammar);
  sempar::synthetic::Rng rng(a.seed);
  const auto data = sempar::synthetic::synthetic_dataset(rng, *g, a.count, a.max_ast);
  if (!a.grammar_out.empty()) {
    std::ofstream out(a.grammar_out);
    if (!out) throw CliError("cannot write '" + a.grammar_out + "'");
    out << sempar::format_grammar(*g);
  }
  Sink sink(a.output);
  sempar::write_dataset(sink.out(), *g, data, a.anchors);
  return 0;
}

// ---------------------------------------------------------------------------
// selftest

struct SelftestArgs {
  sempar::selftest::Budget budget;
  bool quick = false;
  bool timings = false;
  bool strict = false;
  std::string output;
};

int cmd_selftest(SelftestArgs a) {
  if (a.quick) {
    a.budget.map_instances = 200;
    a.budget.alignment_pairs = 200;
    a.budget.fw_instances = 100;
    a.budget.gradient_instances = 50;
    a.budget.step_pairs = 100;
    a.budget.learning = false;
    a.budget.throughput = false;
  }
  const auto report = sempar::selftest::run_all(a.budget);
  json checks = json::array();
  json failed = json::array();
  for (const auto& c : report.checks) {
    json metrics = json::object();
    for (const auto& [k, v] : c.metrics) metrics[k] = v;
    json entry = {{"id", c.id}, {"passed", c.passed}, {"metrics", metrics}};
    if (a.timings) {
      json t = json::object();
      for (const auto& [k, v] : c.timings) t[k] = v;
      entry["timings"] = t;
    }
    checks.push_back(entry);
    if (!c.passed) failed.push_back(c.id);
  }
  const json doc = {{"seed", report.seed},
                    {"tolerance_scale", a.budget.tolerance_scale},
                    {"checks", checks},
                    {"passed", static_cast<int>(report.checks.size() - failed.size())},
                    {"failed", failed}};
  Sink sink(a.output);
  sink.out() << doc.dump(2) << "\n";
  return a.strict && !failed.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based semantic parser"};
  app.require_subcommand(1);

  ParseArgs pa;
  auto* parse = app.add_subcommand("parse", "Decode sentences (one per line) into programs");
  parse->add_option("--grammar", pa.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
  auto* w_opt = parse->add_option("--weights", pa.weights, "Weight file applied to every sentence");
  auto* c_opt = parse->add_option("--checkpoint", pa.checkpoint, "Trained scorer checkpoint");
  w_opt->excludes(c_opt);
  parse->add_option("sentences", pa.inputs, "Sentence files ('-' for stdin)");
  parse->add_option("-o,--output", pa.output, "Output file (default stdout)");
  parse->add_option("--manifest", pa.manifest, "Run manifest path");
  parse->add_flag("--no-round", pa.no_round, "Emit fractional diagnostics instead of programs");
  parse->add_flag("--verbose", pa.verbose, "Solver trace on stderr");
  parse->add_option("--jobs", pa.jobs, "Worker threads")->check(CLI::PositiveNumber);
  parse->add_option("--seed", pa.seed, "Recorded in the manifest");
  pa.solver.add(parse);

  AlignArgs aa;
  auto* align = app.add_subcommand("align", "Anchor gold programs onto their sentences");
  align->add_option("--grammar", aa.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
  auto* ac = align->add_option("--checkpoint", aa.checkpoint, "Trained scorer checkpoint");
  auto* aw = align->add_option("--weights", aa.weights, "Weight file applied to every instance");
  ac->excludes(aw);
  align->add_option("dataset", aa.dataset, "Dataset (sentence<TAB>program per line)")->required();
  align->add_option("-o,--output", aa.output, "Output file (default stdout)");
  align->add_option("--manifest", aa.manifest, "Run manifest path");
  align->add_option("--jobs", aa.jobs, "Worker threads")->check(CLI::PositiveNumber);
  align->add_option("--seed", aa.seed, "Recorded in the manifest");
  aa.solver.add(align);

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train the scorer");
  trn->add_option("--grammar", ta.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
  trn->add_option("dataset", ta.dataset, "Training dataset")->required();
  trn->add_option("--dev", ta.dev, "Dev dataset for per-epoch exact match");
  trn->add_option("--mode", ta.mode, "supervised or weak")->check(CLI::IsMember({"supervised", "weak"}));
  trn->add_option("--epochs", ta.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  trn->add_option("--lr", ta.lr, "Learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--out", ta.out, "Checkpoint to write")->required();
  trn->add_option("--manifest", ta.manifest, "Run manifest path");
  trn->add_option("--seed", ta.seed, "Feature hashing seed");
  ta.solver.add(trn);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Exact-match accuracy of predicted programs");
  ev->add_option("--grammar", ea.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
  ev->add_option("gold", ea.gold, "Gold programs or dataset (program in the first or second tab field)")->required();
  ev->add_option("predicted", ea.predicted, "Predicted programs (program in the first or second tab field)")->required();

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset");
  gen->add_option("--grammar", ga.grammar, "Grammar file (default: built-in 8-tag grammar)");
  gen->add_option("--write-grammar", ga.grammar_out, "Also write the grammar used");
  gen->add_option("--count", ga.count, "Instances")->check(CLI::NonNegativeNumber);
  gen->add_option("--max-ast", ga.max_ast, "Maximum program size")->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed, "Random seed");
  gen->add_option("-o,--output", ga.output, "Output file (default stdout)");
  bool no_anchors = false;
  gen->add_flag("--no-anchors", no_anchors, "Omit the anchoring column");

  SelftestArgs sa;
  auto* st = app.add_subcommand("selftest", "Run the oracle-backed property suite; prints JSON");
  st->add_option("--seed", sa.budget.seed, "Random seed");
  st->add_option("--tolerance-scale", sa.budget.tolerance_scale, "Multiplies every numeric tolerance")
      ->check(CLI::NonNegativeNumber);
  st->add_flag("--quick", sa.quick, "Minimum instance counts; skip training and timing");
  st->add_flag("--timings", sa.timings, "Include wall-clock measurements");
  st->add_flag("--strict", sa.strict, "Exit 1 when any property fails");
  st->add_option("-o,--output", sa.output, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  ga.anchors = !no_anchors;
  try {
    if (*parse) return cmd_parse(pa);
    if (*align) return cmd_align(aa);
    if (*trn) return cmd_train(ta);
    if (*ev) return cmd_eval(ea);
    if (*gen) return cmd_gen(ga);
    if (*st) return cmd_selftest(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
