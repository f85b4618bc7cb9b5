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

#include <cmath>

#include "medcap/capmetrics.hpp"
#include "medcap/errors.hpp"
#include "medcap/modelio/audit_log.hpp"
#include "medcap/modelio/client.hpp"
#include "mock_models.hpp"
#include "mock_server.hpp"
#include "test_support.hpp"

namespace medcap::capmetrics {
namespace {

using nlohmann::json;
using mock::MockReply;
using mock::MockRequest;
using mock::MockServer;

JudgeTask task_of(const MockRequest& r) {
  const auto system = mock::system_prompt_of(r);
  for (auto t : {JudgeTask::kDecompose, JudgeTask::kVerify, JudgeTask::kQuestions,
                 JudgeTask::kClassifyClaims}) {
    if (system == judge_system_prompt(t)) return t;
  }
  throw std::runtime_error("unknown judge task");
}

// Judge whose replies are fixed per task by the test.
struct ScriptedJudge {
  std::map<std::string, json> statements;  // text -> statements
  json verdicts = json::array();
  json questions = json::array();
  json claims = json::object();
  int malformed_first = 0;  // leading replies that are not JSON

  MockReply operator()(const MockRequest& r) {
    if (malformed_first > 0) {
      --malformed_first;
      return mock::chat_reply("I think the statements are fine.");
    }
    const auto user = mock::user_text_of(r);
    switch (task_of(r)) {
      case JudgeTask::kDecompose: {
        const auto text = read_marked_value(user, kMarkerText)->get<std::string>();
        return mock::chat_reply(json{{"statements", statements.at(text)}}.dump());
      }
      case JudgeTask::kVerify: return mock::chat_reply(verdicts.dump());
      case JudgeTask::kQuestions: return mock::chat_reply(json{{"questions", questions}}.dump());
      case JudgeTask::kClassifyClaims: return mock::chat_reply(claims.dump());
    }
    return mock::error_reply(500, "unreachable");
  }
};

// Embedder with fixed vectors per text.
struct TableEmbedder {
  std::map<std::string, std::vector<double>> table;
  MockReply operator()(const MockRequest& r) const {
    std::vector<std::vector<double>> out;
    for (const auto& t : mock::embedding_inputs_of(r)) out.push_back(table.at(t));
    return mock::embeddings_reply(out);
  }
};

class CapMetricsTest : public ::testing::Test {
 protected:
  CapMetricsTest()
      : judge_server_([this](const MockRequest& r) { return script_(r); }),
        embed_server_([this](const MockRequest& r) { return table_(r); }),
        judge_(testing::mock_endpoint("judge", judge_server_.base_url(), "j"), audit_, clock_),
        embedder_(testing::mock_endpoint("emb", embed_server_.base_url(), "e"), audit_, clock_) {}

  ScriptedJudge script_;
  TableEmbedder table_;
  MockServer judge_server_;
  MockServer embed_server_;
  std::shared_ptr<modelio::AuditLog> audit_ = std::make_shared<modelio::AuditLog>();
  std::shared_ptr<testing::FakeClock> clock_ = std::make_shared<testing::FakeClock>();
  modelio::ModelClient judge_;
  modelio::ModelClient embedder_;
};

TEST(ReadMarkedValue, FindsValueAtLineStart) {
  const std::string prompt = "CONTEXT:\n\"a TEXT: b\"\n\nTEXT:\n[\"x\", \"y\"]\n\nTail";
  EXPECT_EQ(*read_marked_value(prompt, kMarkerText), json::array({"x", "y"}));
  EXPECT_EQ(*read_marked_value(prompt, kMarkerContext), "a TEXT: b");
  EXPECT_FALSE(read_marked_value(prompt, kMarkerCount).has_value());
  EXPECT_FALSE(read_marked_value("COUNT:\nnot json", kMarkerCount).has_value());
}

TEST(ClaimF1, Arithmetic) {
  EXPECT_DOUBLE_EQ(claim_f1({2, 1, 1}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(claim_f1({3, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(claim_f1({0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(claim_f1({0, 2, 5}), 0.0);
}

TEST(Cosine, Basics) {
  EXPECT_NEAR(cosine_similarity({1, 0}, {0.8, 0.6}), 0.8, 1e-12);
  EXPECT_NEAR(cosine_similarity({1, 2, 3}, {-1, -2, -3}), -1.0, 1e-12);
  EXPECT_EQ(cosine_similarity({0, 0}, {1, 0}), 0.0);
  EXPECT_THROW(cosine_similarity({1}, {1, 2}), InputError);
}

TEST(MetricOptions, Validation) {
  EXPECT_NO_THROW(MetricOptions{}.validate());
  EXPECT_THROW((MetricOptions{0, {0.75, 0.25}, 0}.validate()), ConfigError);
  EXPECT_THROW((MetricOptions{3, {0.7, 0.2}, 0}.validate()), ConfigError);
  EXPECT_THROW((MetricOptions{3, {1.5, -0.5}, 0}.validate()), ConfigError);
}

TEST(EvalCase, MapsReferenceToContextAndGroundTruth) {
  const auto c = CaptionEvalCase::make("id", "fundus", "q", "ref", "ans");
  EXPECT_EQ(c.context, "ref");
  EXPECT_EQ(c.ground_truth, "ref");
  EXPECT_EQ(c.answer, "ans");
  EXPECT_THROW(CaptionEvalCase::make("id", "fundus", "q", "ref", " "), InputError);
}

TEST_F(CapMetricsTest, FaithfulnessFromScriptedVerdicts) {
  script_.verdicts = {1, 0, 1};
  EXPECT_NEAR(score_faithfulness({"a", "b", "c"}, "ctx", judge_), 2.0 / 3.0, 1e-9);
  script_.verdicts = json::array({json{{"verdict", 1}}, json{{"verdict", 1}}, true});
  EXPECT_NEAR(score_faithfulness({"a", "b", "c"}, "ctx", judge_), 1.0, 1e-9);
  // Flipping one verdict lowers the score by exactly 1/total.
  script_.verdicts = {1, 1, 0};
  EXPECT_NEAR(score_faithfulness({"a", "b", "c"}, "ctx", judge_), 1.0 - 1.0 / 3.0, 1e-9);
  EXPECT_THROW(score_faithfulness({}, "ctx", judge_), MetricUnavailable);
}

TEST_F(CapMetricsTest, ReaskOnceThenUnavailable) {
  script_.verdicts = {1, 1};
  script_.malformed_first = 1;
  json transcript = json::object();
  EXPECT_NEAR(score_faithfulness({"a", "b"}, "ctx", judge_, &transcript), 1.0, 1e-12);
  EXPECT_EQ(judge_server_.request_count(), 2u);
  EXPECT_EQ(transcript["judge_replies"].size(), 2u);
  const auto reask = judge_server_.requests().back();
  EXPECT_NE(mock::user_text_of(reask), mock::user_text_of(judge_server_.requests().front()));

  script_.malformed_first = 2;
  try {
    score_faithfulness({"a", "b"}, "ctx", judge_);
    FAIL();
  } catch (const MetricUnavailable& e) {
    EXPECT_EQ(e.metric(), "faithfulness");
  }
  // A verdict list of the wrong length is as bad as prose.
  script_.verdicts = {1};
  EXPECT_THROW(score_faithfulness({"a", "b"}, "ctx", judge_), MetricUnavailable);
}

TEST_F(CapMetricsTest, CorrectnessBlendsClaimF1AndSimilarity) {
  script_.statements["the answer"] = {"s1", "s2", "s3"};
  script_.statements["the reference"] = {"r1", "r2", "r3"};
  script_.claims = {{"answer", {1, 1, 0}}, {"reference", {1, 1, 0}}};
  table_.table["the answer"] = {1.0, 0.0};
  table_.table["the reference"] = {0.8, 0.6};
  json transcript = json::object();
  const auto score = score_correctness("the answer", "the reference", judge_, embedder_,
                                       {0.75, 0.25}, &transcript);
  EXPECT_EQ(transcript["tp"], 2);
  EXPECT_EQ(transcript["fp"], 1);
  EXPECT_EQ(transcript["fn"], 1);
  EXPECT_NEAR(score, 0.70, 1e-9);
  EXPECT_NEAR(score_correctness("the answer", "the reference", judge_, embedder_, {1.0, 0.0}),
              2.0 / 3.0, 1e-9);
  embed_server_.reset_counters();
  judge_server_.reset_counters();
  EXPECT_NEAR(score_correctness("the answer", "the reference", judge_, embedder_, {0.0, 1.0}),
              0.8, 1e-9);
  EXPECT_EQ(judge_server_.request_count(), 0u);
  EXPECT_EQ(embed_server_.request_count(), 1u);
  // Negative similarity is clamped.
  table_.table["the reference"] = {-1.0, 0.0};
  EXPECT_NEAR(score_correctness("the answer", "the reference", judge_, embedder_, {0.0, 1.0}),
              0.0, 1e-12);
}

TEST_F(CapMetricsTest, RelevancyIsMeanCosineToQuestion) {
  script_.questions = {"q1", "q2", "q3", "q4"};
  table_.table = {{"what is shown?", {1, 0}},
                  {"q1", {1, 0}},
                  {"q2", {0, 1}},
                  {"q3", {0.6, 0.8}},
                  {"q4", {-1, 0}}};
  EXPECT_NEAR(score_relevancy("answer", "what is shown?", judge_, embedder_, 3),
              (1.0 + 0.0 + 0.6) / 3.0, 1e-12);
  EXPECT_EQ(read_marked_value(mock::user_text_of(judge_server_.requests().back()), kMarkerCount),
            json(3));
  script_.questions = {"q1"};
  EXPECT_THROW(score_relevancy("answer", "what is shown?", judge_, embedder_, 3),
               MetricUnavailable);
}

class HeuristicMetricsTest : public ::testing::Test {
 protected:
  HeuristicMetricsTest()
      : judge_server_(mock::HeuristicJudge()),
        embed_server_(mock::HashingEmbedder()),
        judge_(testing::mock_endpoint("judge", judge_server_.base_url(), "j"), audit_, clock_),
        embedder_(testing::mock_endpoint("emb", embed_server_.base_url(), "e"), audit_, clock_) {}

  MockServer judge_server_;
  MockServer embed_server_;
  std::shared_ptr<modelio::AuditLog> audit_ = std::make_shared<modelio::AuditLog>();
  std::shared_ptr<testing::FakeClock> clock_ = std::make_shared<testing::FakeClock>();
  modelio::ModelClient judge_;
  modelio::ModelClient embedder_;
};

constexpr const char* kReference =
    "IMAGE TYPE: Color fundus photograph\nANATOMICAL REGION: Posterior pole of the retina\n"
    "KEY FINDINGS: Scattered microaneurysms. Dot hemorrhages in two quadrants.\n"
    "CLINICAL SIGNIFICANCE: Consistent with moderate nonproliferative retinopathy";

TEST_F(HeuristicMetricsTest, IdenticalAnswerIsFullyFaithfulAndCorrect) {
  const auto c = CaptionEvalCase::make("a", "fundus", "Describe the image.", kReference, kReference);
  const auto scores = evaluate_case(c, judge_, embedder_, {});
  ASSERT_TRUE(scores.faithfulness.has_value()) << scores.diagnostics.dump();
  EXPECT_DOUBLE_EQ(*scores.faithfulness, 1.0);
  ASSERT_TRUE(scores.answer_correctness.has_value());
  EXPECT_NEAR(*scores.answer_correctness, 1.0, 1e-9);
  ASSERT_TRUE(scores.answer_relevancy.has_value());
  EXPECT_GE(*scores.answer_relevancy, -1.0);
  EXPECT_LE(*scores.answer_relevancy, 1.0);
  EXPECT_TRUE(scores.unavailable.empty());
}

TEST_F(HeuristicMetricsTest, UnsupportedStatementsLowerFaithfulness) {
  const std::string answer =
      "IMAGE TYPE: Color fundus photograph\nANATOMICAL REGION: Posterior pole of the retina\n"
      "KEY FINDINGS: Optic disc neovascularization. Vitreous hemorrhage obscuring view.\n"
      "CLINICAL SIGNIFICANCE: Consistent with moderate nonproliferative retinopathy";
  const auto c = CaptionEvalCase::make("b", "fundus", "Describe the image.", kReference, answer);
  const auto scores = evaluate_case(c, judge_, embedder_, {});
  ASSERT_TRUE(scores.faithfulness.has_value());
  EXPECT_NEAR(*scores.faithfulness, 3.0 / 5.0, 1e-12);
  EXPECT_LT(*scores.answer_correctness, 1.0);
}

TEST_F(HeuristicMetricsTest, BatchEvaluationSummarizesAndExcludesFailures) {
  std::vector<CaptionEvalCase> cases;
  for (int i = 0; i < 6; ++i) {
    cases.push_back(CaptionEvalCase::make("img" + std::to_string(5 - i), i < 3 ? "fundus" : "dermatology",
                                          "Describe the image.", kReference, kReference));
  }
  judge_server_.set_handler([base = mock::HeuristicJudge()](const MockRequest& r) {
    // img0 never gets a usable statement list, so its faithfulness is excluded.
    if (task_of(r) == JudgeTask::kVerify &&
        mock::user_text_of(r).find("img0-marker") != std::string::npos) {
      return mock::chat_reply("nope");
    }
    return base(r);
  });
  cases[5].answer = std::string(kReference) + "\nimg0-marker";
  const auto eval = evaluate_captions(cases, judge_, embedder_, {3, {0.75, 0.25}, 3});
  ASSERT_EQ(eval.cases.size(), 6u);
  EXPECT_EQ(eval.cases.front().image_id, "img0");
  EXPECT_TRUE(eval.cases.front().scores.unavailable.contains("faithfulness"));
  const auto& derm = eval.per_dataset.at("dermatology");
  EXPECT_EQ(derm.n, 3u);
  EXPECT_EQ(derm.faithfulness.available, 2u);
  EXPECT_EQ(derm.faithfulness.excluded, 1u);
  EXPECT_DOUBLE_EQ(*derm.faithfulness.mean, 1.0);
  EXPECT_EQ(eval.per_dataset.at("fundus").faithfulness.excluded, 0u);
  EXPECT_LE(judge_server_.peak_in_flight(), 4u);

  const auto back = caption_summary_from_json(to_json(eval.per_dataset));
  EXPECT_EQ(to_json(back), to_json(eval.per_dataset));
  EXPECT_THROW(evaluate_captions({}, judge_, embedder_), EmptyInput);
}

TEST(Summarize, AllUnavailableGivesNoMean) {
  CaseResult r{"a", "fundus", {}};
  r.scores.unavailable["faithfulness"] = "x";
  r.scores.answer_relevancy = 0.5;
  const auto s = summarize({r, r});
  EXPECT_FALSE(s.at("fundus").faithfulness.mean.has_value());
  EXPECT_EQ(s.at("fundus").faithfulness.excluded, 2u);
  EXPECT_DOUBLE_EQ(*s.at("fundus").answer_relevancy.mean, 0.5);
}

}  // namespace
}  // namespace medcap::capmetrics
