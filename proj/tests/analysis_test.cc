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

#include "redcb/analysis.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "redcb/analytic_oracle.h"
#include "redcb/errors.h"
#include "redcb/random.h"
#include "redcb/synthcorpus.h"
#include "redcb/toy_transformer.h"
#include "test_util.h"

namespace redcb {
namespace {

constexpr std::size_t kDim = 32;
constexpr std::size_t kClasses = 4;

// side x side grid of noisy background with a square object of class
// `cls` and side `obj` at (r0, c0).
ImageTokens Fixture(std::size_t side, std::size_t r0, std::size_t c0, std::size_t obj,
                    std::size_t cls = 0, std::uint64_t seed = 5) {
  Rng rng(seed);
  const Matrix classes = ClassDirections(kClasses, kDim);
  const EmbeddingVector bg = BackgroundDirection(kDim);
  ImageTokens im{"fixture", side, side, Matrix(side * side, kDim)};
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const bool inside = r >= r0 && r < r0 + obj && c >= c0 && c < c0 + obj;
      for (std::size_t j = 0; j < kDim; ++j) {
        im.tokens(r * side + c, j) =
            inside ? classes(cls, j) + 0.05 * rng.Normal() : bg[j] + 0.01 * rng.Normal();
      }
    }
  }
  return im;
}

AnalyticOracle MakeAnalytic() { return AnalyticOracle(ClassDirections(kClasses, kDim)); }

RequestKey Key() { return RequestKey{"x", RequestKind::kSingle, 0, {}}; }

// Fails every query aimed at one token.
class FailingOracle : public ModelOracle {
 public:
  FailingOracle(const ModelOracle& inner, std::int64_t bad) : inner_(inner), bad_(bad) {}
  std::string model_id() const override { return inner_.model_id(); }
  const OracleCapabilities& capabilities() const override { return inner_.capabilities(); }
  const EmbeddingVector& pad_embedding() const override { return inner_.pad_embedding(); }
  OracleResponse FirstStepLogits(const VisualInput& in, PromptKind p,
                                 const RequestKey& key) const override {
    if (key.target_idx == bad_) throw MissingRecordError("no record for " + key.ToString());
    return inner_.FirstStepLogits(in, p, key);
  }

 private:
  const ModelOracle& inner_;
  std::int64_t bad_;
};

TEST(AnalysisConfigTest, Validate) {
  AnalysisConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.neighborhood = 4;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = AnalysisConfig{};
  cfg.m_jsd = 0;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
}

TEST(SingleTokenProbeTest, Examples) {
  const AnalyticOracle oracle = MakeAnalytic();
  EXPECT_NEAR(SingleTokenProbe(oracle, BackgroundDirection(kDim), 64, 50, Key()), 0.2, 0.02);
  const Matrix classes = ClassDirections(kClasses, kDim);
  const double e5 = std::exp(5.0);
  EXPECT_NEAR(SingleTokenProbe(oracle, classes.row(1), 64, 50, Key()), e5 / (e5 + 4), 0.01);
  EXPECT_NEAR(SingleTokenProbe(oracle, oracle.pad_embedding(), 64, 50, Key()), 0.2, 1e-12);
}

TEST(NeighborhoodTest, Examples) {
  EXPECT_EQ(NeighborhoodOf(3 * 8 + 3, 8, 8),
            (std::vector<std::size_t>{18, 19, 20, 26, 27, 28, 34, 35, 36}));
  EXPECT_EQ(NeighborhoodOf(0, 8, 8), (std::vector<std::size_t>{0, 1, 8, 9}));
  EXPECT_EQ(NeighborhoodOf(3, 8, 8).size(), 6u);
  EXPECT_EQ(NeighborhoodOf(4, 3, 3), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(NeighborhoodOf(63, 8, 8), (std::vector<std::size_t>{54, 55, 62, 63}));
  EXPECT_THROW(NeighborhoodOf(64, 8, 8), InvalidInput);
}

TEST(CascadedJsdTest, Examples) {
  AnalysisConfig cfg;
  EXPECT_EQ(CascadedJsd(0, 0, cfg), 0.0);
  EXPECT_NEAR(CascadedJsd(0.01, 0.002, cfg), 0.042, 1e-12);
  cfg.k_global = 0;
  EXPECT_EQ(CascadedJsd(0.01, 0.002, cfg), 0.01);
}

TEST(RegionLeaveOneOutTest, IdentityAblationIsZero) {
  const AnalyticOracle oracle = MakeAnalytic();
  const ImageTokens im = Fixture(8, 2, 2, 2);
  AnalysisConfig cfg;
  cfg.ablation = AblationMode::kIdentity;
  const ImageAnalysis a(oracle, im, cfg);
  for (std::size_t t : {0u, 18u, 27u, 63u}) EXPECT_NEAR(a.RegionLeaveOneOut(t), 0.0, 1e-12);
}

TEST(RegionLeaveOneOutTest, ObjectTokenOutweighsBackground) {
  const AnalyticOracle oracle = MakeAnalytic();
  // A single-token object at (4, 4).
  const ImageTokens im = Fixture(8, 4, 4, 1);
  const ImageAnalysis a(oracle, im, AnalysisConfig{});
  const double background = a.RegionLeaveOneOut(1 * 8 + 1);
  const double object = a.RegionLeaveOneOut(4 * 8 + 4);
  EXPECT_LT(background, 1e-3);
  EXPECT_GE(object, 10.0 * background);
}

TEST(GlobalLeaveOneOutTest, EmptyRegion) {
  const AnalyticOracle oracle = MakeAnalytic();
  const ImageTokens im = Fixture(8, 2, 2, 2);
  ImageAnalysis a(oracle, im, AnalysisConfig{});
  EXPECT_EQ(a.GlobalLeaveOneOut({}), 0.0);
}

TEST(GlobalLeaveOneOutTest, Memoized) {
  const AnalyticOracle inner = MakeAnalytic();
  CountingOracle oracle(inner);
  const ImageTokens im = Fixture(8, 2, 2, 2);
  ImageAnalysis a(oracle, im, AnalysisConfig{});
  const std::vector<std::size_t> region = {18, 19, 26, 27};
  const std::vector<std::size_t> shuffled = {27, 18, 26, 19};
  const double first = a.GlobalLeaveOneOut(region);
  const double second = a.GlobalLeaveOneOut(shuffled);
  EXPECT_EQ(first, second);
  EXPECT_EQ(oracle.count(RequestKind::kGlobalAblate), 1u);
  EXPECT_EQ(oracle.count(RequestKind::kGlobalSrc), 1u);
  EXPECT_THROW(a.GlobalLeaveOneOut(std::vector<std::size_t>{64}), InvalidInput);
}

TEST(GlobalLeaveOneOutTest, ObjectOutweighsBackground) {
  const AnalyticOracle oracle = MakeAnalytic();
  const ImageTokens im = Fixture(8, 2, 2, 2);
  ImageAnalysis a(oracle, im, AnalysisConfig{});
  const double object = a.GlobalLeaveOneOut(std::vector<std::size_t>{18, 19, 26, 27});
  const double background = a.GlobalLeaveOneOut(std::vector<std::size_t>{45, 46, 53, 54});
  EXPECT_GT(object, background);
}

TEST(AnalyzeImageTest, CoversEveryToken) {
  const AnalyticOracle oracle = MakeAnalytic();
  const ImageTokens im = Fixture(8, 2, 2, 2);
  const EmbeddingVector cls = SyntheticClsEmbedding(kClasses, kDim);
  const auto records = AnalyzeImage(oracle, im, AnalysisConfig{}, &cls);
  ASSERT_EQ(records.size(), 64u);
  for (std::size_t t = 0; t < 64; ++t) {
    const auto& r = records[t];
    EXPECT_EQ(r.token_idx, t);
    EXPECT_EQ(r.image_id, "fixture");
    EXPECT_GT(r.p1, 0.0);
    EXPECT_LE(r.p1, 1.0);
    EXPECT_GE(r.cluster_size_img, 1u);
    EXPECT_NEAR(r.jsd_final, r.jsd_region + 16.0 * r.jsd_global, 1e-12);
    EXPECT_LE(r.jsd_final, 17.0 * std::log(2.0));
    ASSERT_TRUE(r.clssim.has_value());
    ASSERT_TRUE(r.attn_score.has_value());
    EXPECT_GE(*r.attn_score, 0.0);
  }
  EXPECT_EQ(records, AnalyzeImage(oracle, im, AnalysisConfig{}, &cls));
}

TEST(AnalyzeImageTest, ObjectNeighbourhoodScoresHigher) {
  const AnalyticOracle oracle = MakeAnalytic();
  const ImageTokens im = Fixture(8, 1, 1, 2);
  const auto records = AnalyzeImage(oracle, im, AnalysisConfig{});
  // Tokens within one step of the object versus the far corner block.
  double near = 0.0, far = 0.0;
  std::size_t n_near = 0, n_far = 0;
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const double v = records[r * 8 + c].jsd_final;
      if (r <= 3 && c <= 3) {
        near += v;
        ++n_near;
      } else if (r >= 5 && c >= 5) {
        far += v;
        ++n_far;
      }
    }
  }
  EXPECT_GT(near / n_near, far / n_far);
}

TEST(AnalyzeImageTest, GlobalQueriesBoundedByDistinctRegions) {
  const AnalyticOracle inner = MakeAnalytic();
  CountingOracle oracle(inner);
  AnalysisConfig cfg;
  cfg.neighborhood = 5;
  // On a 3x3 grid every clipped 5x5 window is the whole grid.
  AnalyzeImage(oracle, Fixture(3, 1, 1, 1), cfg);
  EXPECT_EQ(oracle.count(RequestKind::kGlobalAblate), 1u);
  EXPECT_EQ(oracle.count(RequestKind::kRegionSrc), 9u);
  EXPECT_EQ(oracle.count(RequestKind::kSingle), 9u);

  CountingOracle again(inner);
  AnalyzeImage(again, Fixture(8, 2, 2, 2), AnalysisConfig{});
  EXPECT_LE(again.count(RequestKind::kGlobalAblate), 64u);
  EXPECT_EQ(again.count(RequestKind::kGlobalSrc), 1u);
}

TEST(AnalyzeImageTest, KGlobalZero) {
  const AnalyticOracle oracle = MakeAnalytic();
  AnalysisConfig cfg;
  cfg.k_global = 0.0;
  for (const auto& r : AnalyzeImage(oracle, Fixture(8, 2, 2, 2), cfg)) {
    EXPECT_EQ(r.jsd_final, r.jsd_region);
  }
}

TEST(AnalyzeImageTest, ErrorsNameTheToken) {
  const AnalyticOracle inner = MakeAnalytic();
  const FailingOracle oracle(inner, 5);
  try {
    AnalyzeImage(oracle, Fixture(8, 2, 2, 2), AnalysisConfig{});
    FAIL() << "expected MissingRecordError";
  } catch (const MissingRecordError& e) {
    EXPECT_NE(std::string(e.what()).find("token 5"), std::string::npos) << e.what();
  }
}

TEST(AnalyzeImageTest, RejectsBadShapes) {
  const AnalyticOracle oracle = MakeAnalytic();
  ImageTokens im = Fixture(8, 2, 2, 2);
  im.grid_cols = 7;
  EXPECT_THROW(AnalyzeImage(oracle, im, AnalysisConfig{}), InvalidInput);
  ImageTokens narrow{"n", 3, 3, Matrix(9, 4)};
  EXPECT_THROW(AnalyzeImage(oracle, narrow, AnalysisConfig{}), ShapeError);
}

TEST(NullAblationTest, ToyTransformerAllZero) {
  ToyTransformerOracle toy{ToyTransformerConfig{}};
  AnalysisConfig cfg;
  cfg.ablation = AblationMode::kIdentity;
  const auto records = AnalyzeImage(toy, Fixture(4, 1, 1, 2), cfg);
  for (const auto& r : records) {
    EXPECT_EQ(r.jsd_region, 0.0);
    EXPECT_EQ(r.jsd_global, 0.0);
    EXPECT_EQ(r.jsd_final, 0.0);
  }
}

TEST(AnalyzeCorpusTest, DeterministicAcrossJobs) {
  SynthConfig sc;
  sc.n_images = 6;
  std::vector<ImageTokens> images;
  for (const auto& im : GenerateCorpus(sc)) images.push_back(im.ToImageTokens());
  const AnalyticOracle oracle = MakeAnalytic();
  const auto base = AnalyzeCorpus(oracle, images, AnalysisConfig{}, nullptr, 1);
  ASSERT_EQ(base.size(), 6u * 64u);
  EXPECT_EQ(base[64].image_id, "img_00001");
  EXPECT_EQ(base[64].token_idx, 0u);
  EXPECT_EQ(AnalyzeCorpus(oracle, images, AnalysisConfig{}, nullptr, 3), base);
}

TEST(RecordsTest, JsonlRoundTrip) {
  testing::TempDir tmp;
  const AnalyticOracle oracle = MakeAnalytic();
  const EmbeddingVector cls = SyntheticClsEmbedding(kClasses, kDim);
  auto records = AnalyzeImage(oracle, Fixture(8, 2, 2, 2), AnalysisConfig{}, &cls);
  records[3].clssim.reset();
  records[4].attn_score.reset();
  records[5].p1 = 0.1 + 0.2;  // not exactly representable in short form
  const auto path = tmp.path() / "records.jsonl";
  WriteRecords(path, records);
  EXPECT_EQ(ReadRecords(path), records);
}

TEST(RecordsTest, RejectsMalformed) {
  nlohmann::json j = ToJson(AnalysisRecord{"a", 1, 0.5, 2, 0.1, 0.0, 0.1, {}, {}});
  EXPECT_TRUE(j["clssim"].is_null());
  EXPECT_EQ(AnalysisRecordFromJson(j).token_idx, 1u);
  j.erase("p1");
  EXPECT_THROW(AnalysisRecordFromJson(j), Error);
}

}  // namespace
}  // namespace redcb
