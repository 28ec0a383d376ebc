#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace sempar {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("sempar_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
    return path(name);
  }

  CliRun run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(SEMPAR_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = testing::read_text(out);
    r.err = testing::read_text(err);
    return r;
  }

  fs::path dir_;
};

const std::string kGrammar = testing::data_path("list_states.grammar");
const std::string kWeights = testing::data_path("list_states.weights");
const std::string kSentence = testing::data_path("list_states.txt");

TEST_F(Cli, ParsesListStatesExample) {
  const CliRun r = run("parse --grammar " + kGrammar + " --weights " + kWeights + " " + kSentence);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out.rfind("state_all\t0:2\tgap=", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("\tintegral="), std::string::npos);
}

TEST_F(Cli, ParseWritesOutputAndManifest) {
  const std::string out = path("parsed.txt");
  const CliRun r = run("parse --grammar " + kGrammar + " --weights " + kWeights + " -o " + out + " " + kSentence);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(testing::read_text(out).rfind("state_all\t", 0), 0u);
  const std::string manifest = testing::read_text(out + ".manifest.json");
  EXPECT_NE(manifest.find("\"command\": \"parse\""), std::string::npos) << manifest;
}

TEST_F(Cli, EmptySentenceReportsFailure) {
  const std::string input = write("in.txt", "List states\n\n");
  const CliRun r = run("parse --grammar " + kGrammar + " --weights " + kWeights + " " + input);
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream lines(r.out);
  std::string first, second;
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(first.rfind("state_all\t", 0), 0u);
  EXPECT_EQ(second, "FAIL\t\tgap=nan\tintegral=0\treason=empty sentence");
}

TEST_F(Cli, FractionalDiagnostics) {
  const CliRun r = run("parse --no-round --grammar " + kGrammar + " --weights " + kWeights + " " + kSentence);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out.rfind("FRACTIONAL\t", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("objective="), std::string::npos);
}

TEST_F(Cli, BadWeightFileExitsWithError) {
  const std::string weights = write("bad.weights", "vertex 9 loc_1 1\n");
  const CliRun r = run("parse --grammar " + kGrammar + " --weights " + weights + " " + kSentence);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("weight file line 1"), std::string::npos) << r.err;
}

TEST_F(Cli, EvalExactMatch) {
  const std::string grammar = write("geo.grammar",
                                    "type state\ntag stateid state\ntag state_all state\n"
                                    "tag next_to_2 state state=1\ntag exclude state state=2\n");
  const std::string gold = write("gold.tsv",
                                 "a\texclude(state_all,next_to_2(stateid))\n"
                                 "b\tstateid\n"
                                 "c\tnext_to_2(stateid)\n"
                                 "d\tstate_all\n");
  const std::string same = write("same.txt",
                                 "exclude(next_to_2(stateid),state_all)\t0:1\n"
                                 "stateid\nnext_to_2(stateid)\nstate_all\n");
  const std::string one_off = write("off.txt", "exclude(state_all,next_to_2(stateid))\nstateid\nFAIL\nstate_all\n");
  const std::string short_file = write("short.txt", "stateid\n");
  CliRun r = run("eval --grammar " + grammar + " " + gold + " " + same);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("1.0000"), std::string::npos) << r.out;
  r = run("eval --grammar " + grammar + " " + gold + " " + one_off);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("0.7500"), std::string::npos) << r.out;
  r = run("eval --grammar " + grammar + " " + gold + " " + short_file);
  EXPECT_EQ(r.status, 2);
}

TEST_F(Cli, GenTrainParseEval) {
  const std::string grammar = path("train.grammar");
  const std::string train = path("train.tsv");
  const std::string dev = path("dev.tsv");
  ASSERT_EQ(run("gen --count 150 --max-ast 4 --seed 3 --write-grammar " + grammar + " -o " + train).status, 0);
  ASSERT_EQ(run("gen --count 30 --max-ast 4 --seed 4 -o " + dev).status, 0);
  const std::string ckpt = path("model.ckpt");
  CliRun r = run("train --grammar " + grammar + " " + train + " --dev " + dev + " --epochs 3 --out " + ckpt);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("epoch=3"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(ckpt + ".manifest.json"));

  std::ifstream in(dev);
  std::ostringstream sentences;
  std::string line;
  while (std::getline(in, line)) sentences << line.substr(0, line.find('\t')) << "\n";
  const std::string input = write("dev.txt", sentences.str());
  const std::string pred = path("pred.txt");
  r = run("parse --grammar " + grammar + " --checkpoint " + ckpt + " --jobs 2 -o " + pred + " " + input);
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("eval --grammar " + grammar + " " + dev + " " + pred);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_GE(std::stod(r.out), 0.8) << r.out;

  r = run("align --grammar " + grammar + " --checkpoint " + ckpt + " " + dev);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 30);
}

TEST_F(Cli, SelftestIsDeterministic) {
  const CliRun a = run("selftest --quick --seed 7");
  const CliRun b = run("selftest --quick --seed 7");
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("\"seed\": 7"), std::string::npos);
}

TEST_F(Cli, UnknownSubcommandFails) {
  EXPECT_NE(run("frobnicate").status, 0);
  EXPECT_NE(run("parse").status, 0);
}

}  // namespace
}  // namespace sempar
