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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include "json.hpp"
#include "redcb/analysis.h"
#include "redcb/codebook.h"
#include "redcb/store.h"
#include "test_util.h"

namespace redcb {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI through the shell; stderr is captured via a side file.
CliResult Cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = env + " '" REDCB_CLI_PATH "' " + args + " 2>'" + err.string() + "'";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path Path(const std::string& name) const { return tmp_.path() / name; }
  std::string P(const std::string& name) const { return "'" + Path(name).string() + "'"; }
  CliResult Do(const std::string& args, const std::string& env = "") {
    return Cli(args, tmp_.path(), env);
  }
  // 10-image corpus, analysed with the analytic oracle.
  void Corpus() {
    ASSERT_EQ(Do("synth-gen --images 10 --seed 42 --out " + P("c")).code, 0);
    ASSERT_EQ(Do("analyze --corpus " + P("c") + " --out " + P("r.jsonl")).code, 0);
  }
  void Codebook() {
    Corpus();
    const CliResult r = Do("build-codebook --profile synthetic --records " + P("r.jsonl") +
                     " --corpus " + P("c") + " --out " + P("cb.rcb"));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  testing::TempDir tmp_;
};

TEST_F(CliTest, SynthGen) {
  const CliResult r = Do("synth-gen --images 100 --grid 8 --classes 4 --seed 42 --out " + P("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "images=100 L=64 d=32\n");
  std::size_t blobs = 0;
  for (const auto& e : fs::recursive_directory_iterator(Path("c"))) {
    blobs += e.path().filename() == "embeddings.bin";
  }
  EXPECT_EQ(blobs, 100u);
  EXPECT_TRUE(fs::exists(Path("c") / "manifest.json"));
  EXPECT_TRUE(fs::exists(Path("c") / "labels.jsonl"));

  ASSERT_EQ(Do("synth-gen --images 100 --grid 8 --classes 4 --seed 42 --out " + P("d")).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(Path("c"))) {
    if (!e.is_regular_file()) continue;
    const fs::path other = Path("d") / fs::relative(e.path(), Path("c"));
    EXPECT_EQ(Slurp(e.path()), Slurp(other)) << e.path();
  }
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Do("synth-gen --grid 2 --out " + P("c")).code, 1);
  EXPECT_EQ(Do("").code, 1);
  EXPECT_EQ(Do("frobnicate").code, 1);
  EXPECT_EQ(Do("flops --l 1 --n 1").code, 1);
  EXPECT_EQ(Do("analyze --oracle bogus --corpus x --out y").code, 5);
}

TEST_F(CliTest, IoErrors) {
  std::ofstream(Path("file")) << "x";
  EXPECT_EQ(Do("synth-gen --images 2 --out " + P("file/sub")).code, 2);
}

TEST_F(CliTest, CorruptStore) {
  fs::create_directories(Path("empty"));
  const CliResult r = Do("analyze --corpus " + P("empty") + " --out " + P("r.jsonl"));
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
}

TEST_F(CliTest, Analyze) {
  Corpus();
  const auto records = ReadRecords(Path("r.jsonl"));
  EXPECT_EQ(records.size(), 640u);
  ASSERT_EQ(Do("--jobs 3 analyze --corpus " + P("c") + " --out " + P("r3.jsonl")).code, 0);
  EXPECT_EQ(Slurp(Path("r.jsonl")), Slurp(Path("r3.jsonl")));

  ASSERT_EQ(Do("analyze --k-global 0 --corpus " + P("c") + " --out " + P("k0.jsonl")).code, 0);
  for (const auto& r : ReadRecords(Path("k0.jsonl"))) EXPECT_EQ(r.jsd_final, r.jsd_region);
}

TEST_F(CliTest, AnalyzeToyDeterministic) {
  ASSERT_EQ(Do("synth-gen --images 2 --grid 4 --out " + P("c")).code, 0);
  ASSERT_EQ(Do("analyze --oracle toy --corpus " + P("c") + " --out " + P("a.jsonl")).code, 0);
  ASSERT_EQ(Do("analyze --oracle toy --corpus " + P("c") + " --out " + P("b.jsonl")).code, 0);
  EXPECT_EQ(Slurp(Path("a.jsonl")), Slurp(Path("b.jsonl")));
  EXPECT_EQ(ReadRecords(Path("a.jsonl")).size(), 32u);
}

TEST_F(CliTest, ExportReplayAndMissingRecord) {
  ASSERT_EQ(Do("synth-gen --images 2 --grid 3 --out " + P("c")).code, 0);
  ASSERT_EQ(Do("export --oracle toy --corpus " + P("c") + " --out " + P("s")).code, 0);
  const CliResult lint = Do("lint-replay --store " + P("s"));
  EXPECT_EQ(lint.code, 0) << lint.out;
  EXPECT_EQ(lint.out, "ok\n");
  ASSERT_EQ(Do("analyze --oracle replay:" + P("s") + " --out " + P("r.jsonl")).code, 0);
  EXPECT_EQ(ReadRecords(Path("r.jsonl")).size(), 18u);

  // Drop one request; analysis must stop with exit 3 naming the key.
  std::string kept;
  std::istringstream in(Slurp(Path("s") / "requests.jsonl"));
  bool dropped = false;
  for (std::string l; std::getline(in, l);) {
    if (!dropped && l.find("\"region_src\"") != std::string::npos) {
      dropped = true;
      continue;
    }
    kept += l + "\n";
  }
  std::ofstream(Path("s") / "requests.jsonl") << kept;
  const CliResult r = Do("analyze --oracle replay:" + P("s") + " --out " + P("r2.jsonl"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("|region_src|"), std::string::npos) << r.err;
  EXPECT_EQ(Do("lint-replay --store " + P("s")).code, 5);
}

TEST_F(CliTest, BuildCodebook) {
  Codebook();
  const RedundancyCodebook cb = LoadCodebook(Path("cb.rcb"));
  EXPECT_GE(cb.size(), 1u);
  EXPECT_EQ(cb.thresholds, FindProfile("synthetic").thresholds);

  const CliResult echo = Do("build-codebook --profile synthetic --tau-jsd 0.005 --tau-in 20 --k-pool 32"
                      " --records " + P("r.jsonl") + " --corpus " + P("c") + " --out " +
                      P("cb2.rcb"));
  ASSERT_EQ(echo.code, 0) << echo.err;
  EXPECT_NE(echo.out.find("tau_jsd=0.005"), std::string::npos) << echo.out;
  const RedundancyCodebook cb2 = LoadCodebook(Path("cb2.rcb"));
  EXPECT_EQ(cb2.thresholds.tau_jsd, 0.005);
  EXPECT_EQ(cb2.thresholds.tau_in, 20u);
  EXPECT_EQ(cb2.k_pool, 32u);
  EXPECT_EQ(cb2.thresholds.tau_prob, 0.3);

  const CliResult empty = Do("build-codebook --profile synthetic --tau-prob 1e-9 --records " +
                       P("r.jsonl") + " --corpus " + P("c") + " --out " + P("cb3.rcb"));
  EXPECT_EQ(empty.code, 4);
  EXPECT_NE(empty.err.find("relax"), std::string::npos);
  EXPECT_FALSE(fs::exists(Path("cb3.rcb")));
}

TEST_F(CliTest, Prune) {
  Codebook();
  const CliResult r = Do("prune --budget 16 --image img_00003 --codebook " + P("cb.rcb") +
                   " --corpus " + P("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["image_id"], "img_00003");
  EXPECT_EQ(j["mode"], "budget");
  const auto kept = j["kept"].get<std::vector<std::size_t>>();
  ASSERT_EQ(kept.size(), 16u);
  for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_LT(kept[i - 1], kept[i]);

  const CliResult all = Do("prune --r-threshold 0.5 --codebook " + P("cb.rcb") + " --corpus " + P("c"));
  ASSERT_EQ(all.code, 0);
  EXPECT_EQ(std::count(all.out.begin(), all.out.end(), '\n'), 10);

  EXPECT_EQ(Do("prune --budget 3 --r-threshold 0.5 --codebook " + P("cb.rcb") + " --corpus " +
               P("c")).code, 1);
  EXPECT_EQ(Do("prune --codebook " + P("cb.rcb") + " --corpus " + P("c")).code, 1);
  EXPECT_EQ(Do("prune --budget 3 --image nope --codebook " + P("cb.rcb") + " --corpus " +
               P("c")).code, 1);
}

TEST_F(CliTest, CorruptCodebook) {
  Codebook();
  std::string bytes = Slurp(Path("cb.rcb"));
  bytes[bytes.size() - 10] ^= 0x40;
  std::ofstream(Path("cb.rcb"), std::ios::binary) << bytes;
  EXPECT_EQ(Do("prune --budget 3 --codebook " + P("cb.rcb") + " --corpus " + P("c")).code, 5);
}

TEST_F(CliTest, Calibrate) {
  Codebook();
  const CliResult r = Do("calibrate --target-fraction 0.25 --codebook " + P("cb.rcb") + " --corpus " +
                   P("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::regex_match(r.out, std::regex("-?[0-9]\\.[0-9]{4}\n"))) << r.out;
  EXPECT_EQ(Do("calibrate --target 0 --codebook " + P("cb.rcb") + " --corpus " + P("c")).code, 1);
}

TEST_F(CliTest, Compare) {
  Codebook();
  const CliResult r = Do("compare --budget 13 --strategies codebook,random --codebook " + P("cb.rcb") +
                   " --corpus " + P("c") + " --out-dir " + P("rep"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = Slurp(Path("rep") / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 + 3);
  EXPECT_NE(csv.find("codebook,aggregate,"), std::string::npos);
  EXPECT_NE(csv.find("random,aggregate,"), std::string::npos);
  EXPECT_NE(csv.find("random,seed,2,13,"), std::string::npos);
  const auto j = nlohmann::json::parse(Slurp(Path("rep") / "report.json"));
  EXPECT_EQ(j["rows"].size(), 5u);
}

TEST_F(CliTest, Flops) {
  const CliResult r = Do("flops --l 576 --n 969 --d 4096");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "4571757504\n");
  EXPECT_EQ(Do("flops --l 1099511627776 --n 1048576 --d 1024").code, 5);
}

TEST_F(CliTest, QuietAndLogLevel) {
  const CliResult q = Do("--quiet synth-gen --images 2 --out " + P("c"));
  EXPECT_EQ(q.code, 0);
  EXPECT_EQ(q.out, "");
  const CliResult noisy = Do("analyze --corpus " + P("c") + " --out " + P("r.jsonl"));
  EXPECT_NE(noisy.err.find("[info]"), std::string::npos);
  const CliResult silent = Do("analyze --corpus " + P("c") + " --out " + P("r.jsonl"), "REDCB_LOG=error");
  EXPECT_EQ(silent.err, "");
  const CliResult quiet = Do("--quiet analyze --corpus " + P("c") + " --out " + P("r.jsonl"));
  EXPECT_EQ(quiet.err, "");
  EXPECT_EQ(quiet.out, "");
}

}  // namespace
}  // namespace redcb
