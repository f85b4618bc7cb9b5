// Copyright 2026 The medcap Authors.
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

#include <fstream>

#include "cli.hpp"
#include "config.hpp"
#include "medcap/errors.hpp"
#include "medcap/report.hpp"
#include "medcap/util.hpp"
#include "pipeline.hpp"
#include "run_fixture.hpp"

namespace medcap::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<std::string, std::string> stage_records(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(run_dir / "stages")) return out;
  for (const auto& e : fs::directory_iterator(run_dir / "stages")) {
    std::ifstream in(e.path());
    out[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

TEST(Slug, LowercasesAndDashes) {
  EXPECT_EQ(slug("Fine-Tuned"), "fine-tuned");
  EXPECT_EQ(slug("Base"), "base");
  EXPECT_EQ(slug("My Model v2!"), "my-model-v2");
}

TEST(ExitCode, OnePerCategory) {
  EXPECT_EQ(exit_code(ErrorCategory::kInput), 3);
  EXPECT_EQ(exit_code(ErrorCategory::kConfig), 4);
  EXPECT_EQ(exit_code(ErrorCategory::kIo), 5);
  EXPECT_EQ(exit_code(ErrorCategory::kEndpoint), 7);
  EXPECT_EQ(exit_code(ErrorCategory::kStageDependency), 8);
  EXPECT_EQ(exit_code(ErrorCategory::kInterrupted), 130);
}

class ConfigTest : public ::testing::Test {
 protected:
  testing::RunFixture fixture_;
};

TEST_F(ConfigTest, ParsesFixtureConfig) {
  const auto c = load_config(fixture_.config_path());
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.teacher, "teacher");
  ASSERT_EQ(c.candidates.size(), 2u);
  EXPECT_EQ(c.label_for_role("finetuned"), "Fine-Tuned");
  ASSERT_EQ(c.datasets.size(), 3u);
  EXPECT_EQ(c.datasets[0].csv, fixture_.root() / "data/fundus/labels.csv");
  EXPECT_EQ(*c.run_dir, fixture_.root() / "run");
  EXPECT_EQ(c.dataset(DatasetId::kChestXray).quota.per_class_quota.size(), 2u);
  EXPECT_EQ(c.hash.size(), 64u);
  EXPECT_EQ(c.hash, load_config(fixture_.config_path()).hash);
  EXPECT_EQ(c.report_formats.size(), 3u);
  EXPECT_THROW(c.endpoint("nope"), ConfigError);
}

TEST_F(ConfigTest, RejectsBadConfigs) {
  const auto base = fixture_.config();
  const auto parse = [&](const json& j) { return parse_config(j, fixture_.root()); };
  auto j = base;
  j["surprise"] = 1;
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["roles"]["judge"] = "missing";
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["datasets"][0]["quota"] = {{"total", 10}, {"per_class", 2}};
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["datasets"][0]["quota"] = {{"classes", {{"grade 9", 2}}}};
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["split"] = {{"ratios", {0.5, 0.5, 0.5}}};
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["endpoints"][0]["max_concurrent_requests"] = 0;
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["metrics"] = {{"correctness_weights", {0.9, 0.9}}};
  EXPECT_THROW(parse(j), ConfigError);
  j = base;
  j["report"] = {{"formats", {"pdf"}}};
  EXPECT_THROW(parse(j), ConfigError);
  EXPECT_THROW(load_config(fixture_.root() / "absent.json"), ConfigError);
  std::ofstream(fixture_.root() / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(fixture_.root() / "bad.json"), ConfigError);
}

TEST_F(ConfigTest, UsageErrors) {
  EXPECT_EQ(fixture_.run({}), 2);
  EXPECT_EQ(fixture_.run({"frobnicate"}), 2);
  const char* no_config[] = {"medcap", "ingest"};
  EXPECT_EQ(run_cli(2, no_config), 2);
}

TEST_F(ConfigTest, MissingApiKeyFailsBeforeAnyRequest) {
  fixture_.config()["endpoints"][0]["api_key_env_var"] = "MEDCAP_TEST_UNSET_KEY";
  fixture_.write_config();
  ::unsetenv("MEDCAP_TEST_UNSET_KEY");
  EXPECT_EQ(fixture_.run({"ingest"}), 0);
  EXPECT_EQ(fixture_.run({"distill"}), 4);
  EXPECT_EQ(fixture_.server().request_count(), 0u);
}

TEST_F(ConfigTest, StageDependencyIsReported) {
  EXPECT_EQ(fixture_.run({"eval-rag"}), 8);
  EXPECT_EQ(fixture_.run({"split"}), 8);
  EXPECT_EQ(fixture_.server().request_count(), 0u);
}

TEST_F(ConfigTest, RunDirectoryIsExclusive) {
  fs::create_directories(fixture_.run_dir());
  RunDirectory held(fixture_.run_dir());
  EXPECT_THROW(RunDirectory(fixture_.run_dir()), IoError);
  EXPECT_EQ(fixture_.run({"ingest"}), 5);
}

TEST(Pipeline, RunStageSkipsWhenUnchanged) {
  testing::TempDir tmp;
  RunDirectory dir(tmp.path());
  std::ofstream(tmp / "in.txt") << "v1";
  int runs = 0;
  StageSpec spec{"demo", {tmp / "in.txt"}, json{{"k", 1}}, [&](const StageContext&) {
                   ++runs;
                   std::ofstream(tmp / "out.txt") << "result";
                   return std::vector<fs::path>{tmp / "out.txt"};
                 }};
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kRan);
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kSkipped);
  EXPECT_EQ(run_stage(dir, spec, true), StageOutcome::kRan);
  // A changed input, config or a tampered output each trigger a rerun.
  std::ofstream(tmp / "in.txt") << "v2";
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kRan);
  spec.config["k"] = 2;
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kRan);
  std::ofstream(tmp / "out.txt") << "edited";
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kRan);
  EXPECT_EQ(run_stage(dir, spec, false), StageOutcome::kSkipped);
  EXPECT_EQ(runs, 5);
  spec.inputs.push_back(tmp / "missing.txt");
  EXPECT_THROW(run_stage(dir, spec, false), StageDependencyError);
}

TEST(Pipeline, StageRecordRoundTrip) {
  StageRecord r{"split", "abc", {{"a", "1"}}, {{"b", "2"}}, "t0", "t1"};
  const auto back = stage_record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
}

TEST(EndToEnd, RunAllThenShortCircuit) {
  testing::RunFixture fixture;
  ASSERT_EQ(fixture.run({"run-all"}), 0);
  const auto run = fixture.run_dir();
  for (const char* artifact :
       {"ingest/manifest.jsonl", "distill/corpus.jsonl", "split/split_manifest.json",
        "corpus/train.jsonl", "corpus/validation.jsonl", "predict/base/predictions.jsonl",
        "predict/fine-tuned/predictions.jsonl", "eval/classification.json", "eval/captions.json",
        "report.json", "report.csv", "report.txt"}) {
    EXPECT_TRUE(fs::exists(run / artifact)) << artifact;
  }
  const auto report = report::report_from_json(json::parse(read_file_text(run / "report.json")));
  EXPECT_EQ(report.datasets.size(), 3u);
  EXPECT_EQ(report.metadata.seed, 7u);
  EXPECT_EQ(report.metadata.config_hash, load_config(fixture.config_path()).hash);
  for (const auto& b : report.datasets) {
    EXPECT_EQ(b.classification.size(), 2u) << b.dataset;
    EXPECT_TRUE(b.delta.has_value()) << b.dataset;
  }
  const auto records = stage_records(run);
  EXPECT_EQ(records.size(), 8u);
  const auto report_bytes = read_file_bytes(run / "report.txt");

  fixture.server().reset_counters();
  ASSERT_EQ(fixture.run({"run-all"}), 0);
  EXPECT_EQ(fixture.server().request_count(), 0u);
  EXPECT_EQ(stage_records(run), records);
  EXPECT_EQ(read_file_bytes(run / "report.txt"), report_bytes);

  // A new seed changes the split, so everything downstream of it reruns.
  fixture.config()["seed"] = 8;
  fixture.write_config();
  ASSERT_EQ(fixture.run({"run-all"}), 0);
  const auto after = stage_records(run);
  EXPECT_EQ(after.at("ingest.json"), records.at("ingest.json"));
  EXPECT_NE(after.at("split.json"), records.at("split.json"));
  EXPECT_NE(after.at("report.json"), records.at("report.json"));
}

}  // namespace
}  // namespace medcap::cli
