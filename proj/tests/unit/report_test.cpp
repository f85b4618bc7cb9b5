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

#include <sstream>

#include <nlohmann/json.hpp>

#include "medcap/errors.hpp"
#include "medcap/report.hpp"
#include "test_support.hpp"

namespace medcap::report {
namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

// The line in [begin, end) whose tokens end with `tail`.
bool has_row(const std::vector<std::string>& lines, std::size_t begin, std::size_t end,
             const std::vector<std::string>& tail) {
  for (std::size_t i = begin; i < end && i < lines.size(); ++i) {
    const auto t = tokens(lines[i]);
    if (t.size() >= tail.size() && std::equal(tail.rbegin(), tail.rend(), t.rbegin())) return true;
  }
  return false;
}

TEST(RenderTable, ReproducesReferenceScoresAtFourDecimals) {
  const auto text = render(testing::reference_report(), Format::kTableText);
  const auto lines = lines_of(text);
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines.front(), "GROUND-TRUTH CONCORDANCE ON TEST SET");
  const auto caption_title =
      std::find(lines.begin(), lines.end(), "CAPTION FIDELITY AND QUALITY") - lines.begin();
  ASSERT_LT(static_cast<std::size_t>(caption_title), lines.size());
  const auto split = static_cast<std::size_t>(caption_title);

  for (const auto& row : testing::reference_rows()) {
    const auto& c = row.classification;
    EXPECT_TRUE(has_row(lines, 0, split, {row.model, c[0], c[2], c[1], c[2], c[3], "0"}))
        << row.dataset << " " << row.model;
    EXPECT_TRUE(has_row(lines, split, lines.size(),
                        {row.model, row.caption[0], row.caption[1], row.caption[2]}))
        << row.dataset << " " << row.model;
  }
  EXPECT_NE(text.find("Fundus (n=50)"), std::string::npos);
  EXPECT_NE(text.find("Dermatology (n=68)"), std::string::npos);
  EXPECT_NE(text.find("Chest-Xray (n=50)"), std::string::npos);
  // Fundus faithfulness rises from 0.2996 to 0.5662.
  EXPECT_TRUE(has_row(lines, split, lines.size(), {"Delta", "+0.2666", "+0.0107", "+0.2077"}));
  EXPECT_TRUE(has_row(lines, 0, split, {"Delta", "+0.3383", "+0.3859", "+0.4057", "+0.3859",
                                        "+0.4159"}));
  EXPECT_NE(text.find("config sha256: " + std::string(64, '0')), std::string::npos);
  for (const auto& l : lines) {
    EXPECT_TRUE(l.empty() || l.back() != ' ') << "trailing space: [" << l << "]";
  }
}

TEST(RenderTable, MissingCaptionScoresPrintPlaceholder) {
  auto r = testing::reference_report();
  r.datasets[0].caption[0].answer_relevancy.reset();
  compute_deltas(r);
  EXPECT_FALSE(r.datasets[0].delta->answer_relevancy.has_value());
  EXPECT_TRUE(r.datasets[0].delta->faithfulness.has_value());
  const auto lines = lines_of(render(r, "table-text"));
  EXPECT_TRUE(has_row(lines, 0, lines.size(), {"Base", "0.2996", "n/a", "0.4136"}));
  EXPECT_TRUE(has_row(lines, 0, lines.size(), {"Delta", "+0.2666", "n/a", "+0.2077"}));
}

TEST(Deltas, FineTunedMinusBase) {
  auto r = testing::reference_report();
  const auto& d = *r.datasets[0].delta;
  EXPECT_NEAR(*d.faithfulness, 0.2666, 1e-12);
  EXPECT_NEAR(*d.accuracy, 0.10, 1e-12);
  EXPECT_NEAR(*r.datasets[1].delta->f1, 0.4870 - 0.0711, 1e-12);
  // Without a fine-tuned row there is nothing to subtract.
  r.datasets[2].classification.pop_back();
  r.datasets[2].caption.pop_back();
  compute_deltas(r);
  EXPECT_FALSE(r.datasets[2].delta.has_value());
}

TEST(RenderCsv, LongFormatRows) {
  const auto csv = render(testing::reference_report(), Format::kCsv);
  const auto lines = lines_of(csv);
  EXPECT_EQ(lines.front(), "table,dataset,n,model,metric,value");
  const auto contains = [&](const std::string& l) {
    return std::find(lines.begin(), lines.end(), l) != lines.end();
  };
  EXPECT_TRUE(contains("caption,fundus,50,Base,faithfulness,0.2996"));
  EXPECT_TRUE(contains("classification,dermatology,68,Fine-Tuned,f1,0.487"));
  EXPECT_TRUE(contains("classification,chest_xray,50,Base,unparseable,0"));
  std::size_t delta_rows = 0;
  for (const auto& l : lines) {
    if (l.find(",delta,") != std::string::npos) ++delta_rows;
  }
  EXPECT_EQ(delta_rows, 3u * 8u);
  // 3 datasets x 2 models x (6 + 3) metrics + 24 delta rows + header.
  EXPECT_EQ(lines.size(), 1u + 54u + 24u);
}

TEST(Render, DeterministicAndRoundTrips) {
  const auto r = testing::reference_report();
  for (auto f : {Format::kJson, Format::kCsv, Format::kTableText}) {
    EXPECT_EQ(render(r, f), render(testing::reference_report(), f));
    EXPECT_EQ(format_from_string(to_string(f)), f);
  }
  const auto j = to_json(r);
  EXPECT_EQ(report_from_json(j), r);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(render(r, Format::kJson))), r);
  EXPECT_EQ(j["metadata"]["config_sha256"], std::string(64, '0'));
}

TEST(Render, ErrorCases) {
  EXPECT_THROW(render(ComparisonReport{}, Format::kJson), EmptyInput);
  EXPECT_THROW(render(testing::reference_report(), "xlsx"), ConfigError);
  EXPECT_THROW(format_from_string("pdf"), ConfigError);
  EXPECT_THROW(report_from_json({{"datasets", 3}}), InputError);
}

TEST(Assemble, FollowsFamilyOrderAndLabels) {
  const auto families = default_dataset_families();
  clsmetrics::ClassificationReport cls;
  cls.n = 10;
  cls.accuracy = 0.5;
  cls.macro_f1 = 0.4;
  capmetrics::DatasetCaptionSummary cap;
  cap.n = 10;
  cap.faithfulness.mean = 0.3;
  ModelResults base{"Base", {{DatasetId::kChestXray, cls}, {DatasetId::kFundus, cls}},
                    {{"fundus", cap}}};
  cls.accuracy = 0.7;
  cap.faithfulness.mean = 0.6;
  ModelResults tuned{"Fine-Tuned", {{DatasetId::kChestXray, cls}, {DatasetId::kFundus, cls}},
                     {{"fundus", cap}}};
  const auto r = assemble({base, tuned}, families, {});
  ASSERT_EQ(r.datasets.size(), 2u);
  EXPECT_EQ(r.datasets[0].dataset, "fundus");
  EXPECT_EQ(r.datasets[0].display_name, "Fundus");
  EXPECT_EQ(r.datasets[1].dataset, "chest_xray");
  EXPECT_EQ(r.datasets[0].n, 10u);
  ASSERT_EQ(r.datasets[0].classification.size(), 2u);
  EXPECT_NEAR(*r.datasets[0].delta->accuracy, 0.2, 1e-12);
  EXPECT_NEAR(*r.datasets[0].delta->faithfulness, 0.3, 1e-12);
  EXPECT_TRUE(r.datasets[1].caption.empty());
  EXPECT_FALSE(r.datasets[1].delta->faithfulness.has_value());
}

}  // namespace
}  // namespace medcap::report
