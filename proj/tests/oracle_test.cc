// Copyright 2026 The redcb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "redcb/oracle.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "redcb/analysis.h"
#include "redcb/analytic_oracle.h"
#include "redcb/errors.h"
#include "redcb/random.h"
#include "redcb/synthcorpus.h"
#include "redcb/toy_transformer.h"

namespace redcb {
namespace {

constexpr std::size_t kDim = 32;
constexpr std::size_t kClasses = 4;

VisualInput Repeat(const EmbeddingVector& v, std::size_t n) {
  VisualInput in;
  for (std::size_t i = 0; i < n; ++i) in.tokens.AppendRow(v);
  return in;
}

RequestKey AnyKey() { return RequestKey{"img", RequestKind::kSingle, 0, {}}; }

AnalyticOracle MakeAnalytic() { return AnalyticOracle(ClassDirections(kClasses, kDim)); }

// Step 1 always prefers id 2 (an article); once it has been generated the
// favourite becomes id 0.
class ArticleOracle : public LiveOracle {
 public:
  ArticleOracle() {
    caps_.vocab_size = 4;
    caps_.embed_dim = 2;
    caps_.article_ids = {2};
    pad_.assign(2, 0.0);
  }
  std::string model_id() const override { return "article"; }
  const OracleCapabilities& capabilities() const override { return caps_; }
  const EmbeddingVector& pad_embedding() const override { return pad_; }
  mutable int forwards = 0;

 protected:
  OracleResponse Forward(const VisualInput&, PromptKind,
                         std::span<const TokenId> generated) const override {
    ++forwards;
    OracleResponse r;
    r.logits.ids = {0, 1, 2, 3};
    if (generated.empty()) {
      r.logits.logits = {0, 0, 5, 0};
    } else {
      EXPECT_EQ(generated.size(), 1u);
      EXPECT_EQ(generated[0], 2);
      // Would loop forever if the skip were applied again.
      r.logits.logits = {1, 0, 9, 0};
    }
    return r;
  }

 private:
  OracleCapabilities caps_;
  EmbeddingVector pad_;
};

TEST(RequestKindTest, RoundTrip) {
  for (auto k : {RequestKind::kSingle, RequestKind::kRegionSrc, RequestKind::kRegionAblate,
                 RequestKind::kGlobalSrc, RequestKind::kGlobalAblate}) {
    EXPECT_EQ(ParseRequestKind(ToString(k)), k);
  }
  EXPECT_EQ(ToString(RequestKind::kRegionAblate), "region_ablate");
  EXPECT_THROW(ParseRequestKind("bogus"), InvalidInput);
}

TEST(RequestKeyTest, ToString) {
  RequestKey k{"img_00001", RequestKind::kGlobalAblate, -1, {3, 4, 11}};
  EXPECT_EQ(k.ToString(), "img_00001|global_ablate|-1|3,4,11");
}

TEST(VisualInputTest, Validate) {
  VisualInput in = Repeat({1, 0}, 4);
  in.newline_after = {1, 3};
  EXPECT_NO_THROW(in.Validate());
  in.newline_after = {3, 1};
  EXPECT_THROW(in.Validate(), InvalidInput);
  in.newline_after = {4};
  EXPECT_THROW(in.Validate(), InvalidInput);
  in.newline_after = {};
  in.grid = std::pair<std::size_t, std::size_t>{3, 2};
  EXPECT_THROW(in.Validate(), InvalidInput);
}

TEST(SingleTokenInputTest, NoRepeat) {
  OracleCapabilities caps;
  const EmbeddingVector v = {1, 2, 3};
  const VisualInput in = BuildSingleTokenInput(v, caps, 576);
  ASSERT_EQ(in.tokens.rows(), 1u);
  EXPECT_EQ(in.tokens, Matrix::FromRows({v}));
  EXPECT_TRUE(in.newline_after.empty());
}

TEST(SingleTokenInputTest, RepeatWithNewline) {
  OracleCapabilities caps;
  caps.repeat_for_single_input = true;
  caps.uses_image_newline = true;
  const VisualInput in = BuildSingleTokenInput(EmbeddingVector{1, 2}, caps, 576);
  EXPECT_EQ(in.tokens.rows(), 24u);
  EXPECT_EQ(in.newline_after, std::vector<std::size_t>{23});
}

TEST(SingleTokenInputTest, RepeatCeilSqrt) {
  OracleCapabilities caps;
  caps.repeat_for_single_input = true;
  EXPECT_EQ(BuildSingleTokenInput(EmbeddingVector{1}, caps, 64).tokens.rows(), 8u);
  EXPECT_EQ(BuildSingleTokenInput(EmbeddingVector{1}, caps, 65).tokens.rows(), 9u);
  EXPECT_TRUE(BuildSingleTokenInput(EmbeddingVector{1}, caps, 64).newline_after.empty());
}

TEST(ArticleSkipTest, SkipsOnceAndReturnsStepTwo) {
  ArticleOracle oracle;
  const OracleResponse r = oracle.FirstStepLogits(Repeat({1, 1}, 2), PromptKind::kDescribeImage,
                                                  AnyKey());
  EXPECT_EQ(r.step, 2);
  EXPECT_TRUE(r.article_skipped);
  EXPECT_EQ(r.logits.logits, (std::vector<double>{1, 0, 9, 0}));
  EXPECT_EQ(oracle.forwards, 2);
}

EmbeddingVector Row(const Matrix& m, std::size_t i) {
  return EmbeddingVector(m.row(i).begin(), m.row(i).end());
}

TEST(AnalyticOracleTest, NeverSkips) {
  const AnalyticOracle oracle = MakeAnalytic();
  EXPECT_TRUE(oracle.capabilities().article_ids.empty());
  EXPECT_EQ(oracle.capabilities().vocab_size, kClasses + 1);
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    EmbeddingVector v(kDim);
    for (double& x : v) x = rng.Normal();
    const auto r = oracle.FirstStepLogits(Repeat(v, 3), PromptKind::kDescribeImage, AnyKey());
    EXPECT_EQ(r.step, 1);
    EXPECT_FALSE(r.article_skipped);
  }
}

TEST(AnalyticOracleTest, BackgroundGivesUniformLogits) {
  const AnalyticOracle oracle = MakeAnalytic();
  const auto r = oracle.FirstStepLogits(Repeat(BackgroundDirection(kDim), 5),
                                        PromptKind::kDescribeImage, AnyKey());
  ASSERT_EQ(r.logits.ids.size(), kClasses + 1);
  for (double l : r.logits.logits) EXPECT_EQ(l, 0.0);
  EXPECT_NEAR(Top1Probability(r.logits, kClasses + 1), 1.0 / (kClasses + 1), 1e-12);
}

TEST(AnalyticOracleTest, ClassDirectionPeaks) {
  const AnalyticOracle oracle = MakeAnalytic();
  const Matrix classes = ClassDirections(kClasses, kDim);
  for (std::size_t c = 0; c < kClasses; ++c) {
    const auto r = oracle.FirstStepLogits(Repeat(Row(classes, c), 4),
                                          PromptKind::kDescribeImage, AnyKey());
    EXPECT_EQ(ArgmaxId(r.logits), static_cast<TokenId>(c));
    for (std::size_t k = 0; k <= kClasses; ++k) {
      EXPECT_NEAR(r.logits.logits[k], k == c ? 5.0 : 0.0, 1e-12);
    }
  }
}

TEST(AnalyticOracleTest, PadGivesZeroLogits) {
  const AnalyticOracle oracle = MakeAnalytic();
  const auto r = oracle.FirstStepLogits(Repeat(oracle.pad_embedding(), 2),
                                        PromptKind::kDescribeRegion, AnyKey());
  for (double l : r.logits.logits) EXPECT_EQ(l, 0.0);
}

TEST(AnalyticOracleTest, ShapeMismatch) {
  const AnalyticOracle oracle = MakeAnalytic();
  EXPECT_THROW(oracle.FirstStepLogits(Repeat({1, 0, 0}, 2), PromptKind::kDescribeImage, AnyKey()),
               ShapeError);
}

TEST(AnalyticOracleTest, AttentionIsADistribution) {
  const AnalyticOracle oracle = MakeAnalytic();
  const Matrix classes = ClassDirections(kClasses, kDim);
  VisualInput in;
  in.tokens.AppendRow(classes.row(0));
  in.tokens.AppendRow(BackgroundDirection(kDim));
  in.tokens.AppendRow(classes.row(2));
  const auto r = oracle.FirstStepLogits(in, PromptKind::kDescribeImage, AnyKey());
  ASSERT_TRUE(r.attention.has_value());
  ASSERT_EQ(r.attention->layers(), 1u);
  ASSERT_EQ(r.attention->heads(), 1u);
  const auto& row = r.attention->scores[0][0];
  EXPECT_NEAR(row[0], 0.5, 1e-12);
  EXPECT_NEAR(row[1], 0.0, 1e-12);
  EXPECT_NEAR(row[2], 0.5, 1e-12);
}

TEST(AnalyticOracleTest, NearClassTokensBeatBackground) {
  const AnalyticOracle oracle = MakeAnalytic();
  const Matrix classes = ClassDirections(kClasses, kDim);
  const EmbeddingVector bg = BackgroundDirection(kDim);
  const double p_bg = SingleTokenProbe(oracle, bg, 64, 50, AnyKey());
  Rng rng(77);
  int pass = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const std::size_t c = rng.UniformInt(kClasses);
    // Random unit direction orthogonal to e_c, mixed in at an angle <= 30 deg.
    EmbeddingVector u(kDim);
    for (double& x : u) x = rng.Normal();
    u[c] = 0.0;
    const double n = Norm(u);
    for (double& x : u) x /= n;
    const double theta = rng.Uniform01() * M_PI / 6.0;
    EmbeddingVector v(kDim);
    for (std::size_t j = 0; j < kDim; ++j) {
      v[j] = std::cos(theta) * classes(c, j) + std::sin(theta) * u[j];
    }
    if (SingleTokenProbe(oracle, v, 64, 50, AnyKey()) > p_bg) ++pass;
  }
  EXPECT_GE(pass, trials * 99 / 100);
}

ToyTransformerOracle MakeToy() { return ToyTransformerOracle(ToyTransformerConfig{}); }

VisualInput RandomInput(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  VisualInput in;
  in.tokens = Matrix(n, kDim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kDim; ++j) in.tokens(i, j) = rng.Normal() / std::sqrt(kDim);
  return in;
}

TEST(ToyTransformerTest, Defaults) {
  const ToyTransformerOracle toy = MakeToy();
  const auto& caps = toy.capabilities();
  EXPECT_EQ(caps.vocab_size, 64u);
  EXPECT_EQ(caps.embed_dim, 32u);
  EXPECT_TRUE(caps.repeat_for_single_input);
  EXPECT_TRUE(caps.uses_image_newline);
  EXPECT_EQ(caps.article_ids, (std::set<TokenId>{60, 61, 62}));
  EXPECT_EQ(toy.model_id(), "toy-transformer-seed1234");
}

TEST(ToyTransformerTest, Deterministic) {
  const ToyTransformerOracle a = MakeToy();
  const ToyTransformerOracle b = MakeToy();
  VisualInput in = RandomInput(4, 9);
  in.newline_after = {2, 5, 8};
  const auto ra = a.FirstStepLogits(in, PromptKind::kDescribeRegion, AnyKey());
  const auto rb = b.FirstStepLogits(in, PromptKind::kDescribeRegion, AnyKey());
  const auto rc = a.FirstStepLogits(in, PromptKind::kDescribeRegion, AnyKey());
  EXPECT_EQ(ra.logits.logits, rb.logits.logits);
  EXPECT_EQ(ra.logits.logits, rc.logits.logits);
  EXPECT_EQ(ra.attention->scores, rb.attention->scores);
  EXPECT_EQ(ra.logits.ids.size(), 64u);
}

TEST(ToyTransformerTest, SeedChangesWeights) {
  ToyTransformerConfig cfg;
  cfg.seed = 99;
  const ToyTransformerOracle other(cfg);
  const VisualInput in = RandomInput(4, 4);
  EXPECT_NE(other.FirstStepLogits(in, PromptKind::kDescribeImage, AnyKey()).logits.logits,
            MakeToy().FirstStepLogits(in, PromptKind::kDescribeImage, AnyKey()).logits.logits);
}

TEST(ToyTransformerTest, AttentionRowsAreDistributions) {
  const ToyTransformerOracle toy = MakeToy();
  VisualInput in = RandomInput(8, 16);
  in.newline_after = {3, 7, 11, 15};
  const auto r = toy.FirstStepLogits(in, PromptKind::kDescribeImage, AnyKey());
  ASSERT_TRUE(r.attention.has_value());
  const AttentionRecord& rec = *r.attention;
  ASSERT_EQ(rec.layers(), 2u);
  ASSERT_EQ(rec.heads(), 4u);
  ASSERT_EQ(rec.row_mass.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 4; ++h) {
      ASSERT_EQ(rec.scores[l][h].size(), 16u);
      double visual = 0.0;
      for (double a : rec.scores[l][h]) {
        EXPECT_GE(a, 0.0);
        visual += a;
      }
      EXPECT_LE(visual, 1.0 + 1e-6);
      EXPECT_NEAR(rec.row_mass[l][h], 1.0, 1e-6);
    }
  }
}

TEST(ToyTransformerTest, AttentionFollowsContent) {
  const ToyTransformerOracle toy = MakeToy();
  VisualInput in = RandomInput(12, 6);
  VisualInput swapped = in;
  for (std::size_t j = 0; j < kDim; ++j) std::swap(swapped.tokens(1, j), swapped.tokens(4, j));
  const auto a = toy.FirstStepLogits(in, PromptKind::kDescribeImage, AnyKey());
  const auto b = toy.FirstStepLogits(swapped, PromptKind::kDescribeImage, AnyKey());
  const auto& ra = a.attention->scores[0][0];
  const auto& rb = b.attention->scores[0][0];
  // Layer 0 keys depend on content plus a small positional term, so the
  // swapped tokens carry (approximately) their attention with them.
  EXPECT_NE(ra, rb);
  EXPECT_NEAR(ra[1], rb[4], 0.25 * std::max(ra[1], rb[4]));
  EXPECT_NEAR(ra[4], rb[1], 0.25 * std::max(ra[4], rb[1]));
  EXPECT_NEAR(ra[0], rb[0], 0.25 * std::max(ra[0], rb[0]));
}

TEST(ToyTransformerTest, ShapeMismatch) {
  EXPECT_THROW(MakeToy().FirstStepLogits(Repeat({1, 2}, 2), PromptKind::kDescribeImage,
                                         AnyKey()),
               ShapeError);
}

TEST(ToyTransformerTest, PromptIds) {
  EXPECT_EQ(ToyTransformerOracle::PromptIds(PromptKind::kDescribeSingleToken),
            (std::vector<TokenId>{10, 11, 12}));
  EXPECT_EQ(ToyTransformerOracle::PromptIds(PromptKind::kDescribeImage),
            (std::vector<TokenId>{10, 15, 16, 17}));
}

TEST(CountingOracleTest, CountsPerKind) {
  const AnalyticOracle inner = MakeAnalytic();
  CountingOracle counter(inner);
  const VisualInput in = Repeat(BackgroundDirection(kDim), 2);
  counter.FirstStepLogits(in, PromptKind::kDescribeImage,
                          RequestKey{"a", RequestKind::kGlobalSrc, -1, {}});
  counter.FirstStepLogits(in, PromptKind::kDescribeImage,
                          RequestKey{"a", RequestKind::kGlobalAblate, -1, {1}});
  counter.FirstStepLogits(in, PromptKind::kDescribeImage,
                          RequestKey{"a", RequestKind::kGlobalAblate, -1, {0}});
  EXPECT_EQ(counter.count(RequestKind::kGlobalSrc), 1u);
  EXPECT_EQ(counter.count(RequestKind::kGlobalAblate), 2u);
  EXPECT_EQ(counter.count(RequestKind::kSingle), 0u);
  EXPECT_EQ(counter.total(), 3u);
  EXPECT_EQ(counter.model_id(), "analytic");
}

}  // namespace
}  // namespace redcb
