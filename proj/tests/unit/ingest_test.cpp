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

#include "medcap/errors.hpp"
#include "medcap/ingest.hpp"
#include "test_support.hpp"

namespace medcap::ingest {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

TEST(SplitCsvRecord, HandlesQuoting) {
  using V = std::vector<std::string>;
  EXPECT_EQ(split_csv_record("a,b,c"), (V{"a", "b", "c"}));
  EXPECT_EQ(split_csv_record("a,,"), (V{"a", "", ""}));
  EXPECT_EQ(split_csv_record(R"("x, y","say ""hi""",z)"), (V{"x, y", R"(say "hi")", "z"}));
  EXPECT_EQ(split_csv_record("a,b\r"), (V{"a", "b"}));
}

class IngestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    images_ = tmp_ / "images";
    std::filesystem::create_directories(images_);
    for (const char* id : {"img1", "img2", "img3", "img4", "img5", "img6"}) {
      testing::write_noise_image(images_ / (std::string(id) + ".png"), 1);
    }
  }

  CsvAdapterConfig config(std::optional<std::string> delimiter = std::nullopt) const {
    return {"Image Index", "Finding Labels", delimiter, images_, ".png", DatasetId::kChestXray};
  }

  testing::TempDir tmp_;
  std::filesystem::path images_;
};

TEST_F(IngestTest, MultiLabelOutOfVocabularyAndMissingImage) {
  write_text(tmp_ / "labels.csv",
             "\xEF\xBB\xBF"
             "Image Index,Finding Labels,Age\n"
             "img1,Cardiomegaly,60\n"
             "img2,Cardiomegaly|Effusion,50\n"
             "img3,No Finding,40\n"
             "img4,Unicorn,30\n"
             "img9,Mass,20\n"
             "img5,Effusion|Pleural Effusion,10\n"
             "img6,,5\n"
             "\n");
  const auto result =
      ingest_csv(tmp_ / "labels.csv", config("|"), default_chest_xray_family());
  ASSERT_EQ(result.manifest.size(), 3u);
  EXPECT_EQ(result.manifest[0].image_id, "img1");
  EXPECT_EQ(result.manifest[0].ground_truth.canonical, "cardiomegaly");
  EXPECT_EQ(result.manifest[1].ground_truth.canonical, "normal");
  // Two spellings of the same finding collapse to one label.
  EXPECT_EQ(result.manifest[2].image_id, "img5");
  EXPECT_EQ(result.manifest[2].ground_truth.canonical, "effusion");
  EXPECT_EQ(result.manifest[2].image_path, images_ / "img5.png");
  const auto& s = result.stats;
  EXPECT_EQ(s.rows_read, 7u);
  EXPECT_EQ(s.emitted, 3u);
  EXPECT_EQ(s.multi_label_dropped, 1u);
  EXPECT_EQ(s.out_of_vocabulary, 1u);
  EXPECT_EQ(s.missing_image, 1u);
  EXPECT_EQ(s.empty_label, 1u);
  EXPECT_EQ(s.pool_sizes.at("cardiomegaly"), 1u);
  EXPECT_EQ(s.pool_sizes.at("hernia"), 0u);
  EXPECT_EQ(s.pool_sizes.size(), 15u);
}

TEST_F(IngestTest, QuotedFieldsWithEmbeddedNewline) {
  write_text(tmp_ / "labels.csv",
             "\"Finding Labels\",\"Image Index\"\r\n"
             "\"Mass\",\"img1\"\r\n"
             "\"Nod\nule\",img2\r\n"
             "Nodule,img3\r\n");
  const auto result = ingest_csv(tmp_ / "labels.csv", config(), default_chest_xray_family());
  ASSERT_EQ(result.manifest.size(), 2u);
  EXPECT_EQ(result.manifest[1].ground_truth.canonical, "nodule");
  EXPECT_EQ(result.stats.out_of_vocabulary, 1u);
}

TEST_F(IngestTest, WithoutDelimiterWholeCellIsOneLabel) {
  write_text(tmp_ / "labels.csv", "Image Index,Finding Labels\nimg1,Mass|Nodule\n");
  const auto result = ingest_csv(tmp_ / "labels.csv", config(), default_chest_xray_family());
  EXPECT_TRUE(result.manifest.empty());
  EXPECT_EQ(result.stats.out_of_vocabulary, 1u);
}

TEST_F(IngestTest, ConfigurationErrors) {
  write_text(tmp_ / "labels.csv", "Image Index,Label\nimg1,Mass\n");
  EXPECT_THROW(ingest_csv(tmp_ / "labels.csv", config(), default_chest_xray_family()),
               ConfigError);
  auto bad_dir = config();
  bad_dir.image_dir = tmp_ / "nope";
  bad_dir.label_column = "Label";
  EXPECT_THROW(ingest_csv(tmp_ / "labels.csv", bad_dir, default_chest_xray_family()),
               ConfigError);
  EXPECT_THROW(ingest_csv(tmp_ / "missing.csv", config(), default_chest_xray_family()), IoError);
  write_text(tmp_ / "empty.csv", "");
  EXPECT_THROW(ingest_csv(tmp_ / "empty.csv", config(), default_chest_xray_family()),
               ConfigError);
}

TEST(ValidateManifest, ReportsDuplicatesAndUnknownLabels) {
  const auto families = default_dataset_families();
  const auto& fundus = families[0];
  Manifest m{{"a", "a.png", DatasetId::kFundus, fundus.canonicalize("0")},
             {"b", "b.png", DatasetId::kFundus, fundus.canonicalize("1")},
             {"a", "a2.png", DatasetId::kFundus, fundus.canonicalize("1")},
             {"a", "a3.png", DatasetId::kFundus, fundus.canonicalize("1")},
             {"c", "c.png", DatasetId::kFundus, fundus.canonicalize("grade 9")}};
  const auto report = validate_manifest(m, families);
  EXPECT_FALSE(report.ok());
  EXPECT_EQ(report.duplicate_ids, std::vector<std::string>{"a"});
  EXPECT_EQ(report.out_of_vocabulary, std::vector<std::string>{"c"});
  EXPECT_EQ(report.per_class_counts.at("fundus").at("grade 1"), 3u);
  EXPECT_TRUE(validate_manifest({m[0], m[1]}, families).ok());
}

}  // namespace
}  // namespace medcap::ingest
