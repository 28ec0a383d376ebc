#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

namespace sempar {
namespace {

TEST(Anchoring, ParseAndFormat) {
  EXPECT_EQ(parse_anchoring("0:3 1:1", 2, 3), (std::vector<int>{3, 1}));
  EXPECT_EQ(parse_anchoring("1:1 0:3", 2, 3), (std::vector<int>{3, 1}));
  EXPECT_EQ(format_anchoring({3, 1}), "0:3 1:1");
  EXPECT_EQ(parse_anchoring(format_anchoring({2, 4, 1}), 3, 4), (std::vector<int>{2, 4, 1}));
}

TEST(Anchoring, Errors) {
  EXPECT_THROW(parse_anchoring("0-1", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("0:x", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("1:1", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("0:0", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("0:3", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("0:1 0:2", 1, 2), DatasetError);
  EXPECT_THROW(parse_anchoring("0:1", 2, 2), DatasetError);
}

TEST(Dataset, ReadsRecords) {
  const auto g = testing::toy_grammar();
  std::istringstream in("a b\tP(A)\t0:2 1:1\n\n  \nc\tA\r\n");
  const auto data = read_dataset(in, *g);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].words, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(serialize_ast(*g, data[0].program), "P(A)");
  EXPECT_EQ(data[0].anchoring, (std::vector<int>{2, 1}));
  EXPECT_FALSE(data[1].anchoring.has_value());
}

TEST(Dataset, ErrorsCarryLineNumbers) {
  const auto g = testing::toy_grammar();
  auto message = [&](const std::string& text) {
    std::istringstream in(text);
    try {
      read_dataset(in, *g);
    } catch (const DatasetError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("a\tA\nb\tP(A,A)\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("a\tA\n\nb\tA\t0:5\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("\tA\n").find("empty sentence"), std::string::npos);
  EXPECT_NE(message("a\tA\tx\ty\n").find("line 1"), std::string::npos);
}

TEST(Dataset, WriteReadRoundTrip) {
  synthetic::Rng rng(191);
  const auto g = synthetic::training_grammar();
  const auto data = synthetic::synthetic_dataset(rng, *g, 50);
  std::stringstream s;
  write_dataset(s, *g, data);
  const auto back = read_dataset(s, *g);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    EXPECT_EQ(back[k].words, data[k].words);
    EXPECT_EQ(back[k].program, data[k].program);
    EXPECT_EQ(back[k].anchoring, data[k].anchoring);
  }
}

TEST(Dataset, SyntheticAnchoringsAreFeasible) {
  synthetic::Rng rng(193);
  const auto g = synthetic::training_grammar();
  for (const auto& inst : synthetic::synthetic_dataset(rng, *g, 100)) {
    const ExtendedGraph gph(static_cast<int>(inst.words.size()), g);
    const SolutionVector z = anchored_ast_to_solution(gph, AnchoredAst{inst.program, *inst.anchoring});
    const AnchoredAst back = solution_to_anchored_ast(gph, z);
    EXPECT_TRUE(same_program(*g, back.ast, inst.program));
  }
}

}  // namespace
}  // namespace sempar
