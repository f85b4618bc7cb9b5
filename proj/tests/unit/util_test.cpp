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
#include "medcap/util.hpp"
#include "test_support.hpp"

namespace medcap {
namespace {

using nlohmann::json;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Base64, Rfc4648Vectors) {
  const std::pair<std::string, std::string> cases[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},        {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, encoded] : cases) {
    const std::vector<std::uint8_t> bytes(plain.begin(), plain.end());
    EXPECT_EQ(base64_encode(bytes), encoded);
    EXPECT_EQ(base64_decode(encoded), bytes) << encoded;
  }
}

TEST(Base64, RoundTripsAllByteValues) {
  std::vector<std::uint8_t> bytes;
  for (int i = 0; i < 1000; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 37 + 11));
  for (std::size_t n = 0; n < 8; ++n) {
    std::vector<std::uint8_t> slice(bytes.begin(), bytes.end() - static_cast<long>(n));
    EXPECT_EQ(base64_decode(base64_encode(slice)), slice);
    EXPECT_EQ(testing::oracle_base64_decode(base64_encode(slice)), slice);
  }
}

TEST(Base64, RejectsInvalidInput) {
  EXPECT_THROW(base64_decode("abc"), InputError);
  EXPECT_THROW(base64_decode("ab!d"), InputError);
}

TEST(FindJson, SkipsProseAndHonorsStrings) {
  auto j = find_json("Sure! Here it is: {\"a\": \"}{\", \"b\": [1, 2]} trailing", '{');
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ((*j)["a"], "}{");
  EXPECT_EQ((*j)["b"], json::array({1, 2}));
}

TEST(FindJson, HandlesEscapedQuotes) {
  auto j = find_json(R"(x {"a": "say \"hi\" {"} y)", '{');
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ((*j)["a"], "say \"hi\" {");
}

TEST(FindJson, FallsThroughUnparseableCandidates) {
  auto j = find_json("{not json} then {\"ok\": true}", '{');
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ((*j)["ok"], true);
}

TEST(FindJson, FindsArraysAndReportsAbsence) {
  auto j = find_json("```json\n[1, 0, 1]\n```", '[');
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ(*j, json::array({1, 0, 1}));
  EXPECT_FALSE(find_json("no json here", '{').has_value());
  EXPECT_FALSE(find_json("{\"unterminated\": 1", '{').has_value());
}

TEST(Trim, StripsAsciiWhitespace) {
  EXPECT_EQ(trim("  a b \n\t"), "a b");
  EXPECT_EQ(trim("   "), "");
}

TEST(Jsonl, WriterAppendsAndReaderToleratesTruncation) {
  testing::TempDir tmp;
  const auto path = tmp / "log.jsonl";
  {
    JsonlWriter w(path);
    w.append({{"i", 1}});
    w.append({{"i", 2}});
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"i\": 3";  // torn final line
  }
  EXPECT_THROW(read_jsonl(path), InputError);
  const auto read = read_jsonl(path, true);
  ASSERT_EQ(read.records.size(), 2u);
  EXPECT_EQ(read.skipped_lines, 1u);
  EXPECT_EQ(read.records[1]["i"], 2);

  // Resuming after the torn line keeps the next record intact.
  JsonlWriter(path).append({{"i", 4}});
  const auto resumed = read_jsonl(path, true);
  ASSERT_EQ(resumed.records.size(), 3u);
  EXPECT_EQ(resumed.records[2]["i"], 4);
}

TEST(Jsonl, WriteIsAtomicAndReadable) {
  testing::TempDir tmp;
  const auto path = tmp / "sub" / "x.jsonl";
  write_jsonl(path, {json{{"a", 1}}, json{{"b", "two"}}});
  EXPECT_EQ(read_file_text(path), "{\"a\":1}\n{\"b\":\"two\"}\n");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST(Files, MissingFileIsIoError) {
  EXPECT_THROW(read_file_bytes("/nonexistent/medcap/file"), IoError);
}

}  // namespace
}  // namespace medcap
