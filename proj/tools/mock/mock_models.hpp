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

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medcap/datamodel.hpp"
#include "mock_server.hpp"

namespace medcap::mock {

/// Uniform value in [0, 1) derived from (seed, key); the basis of every mock
/// decision so that replies depend only on the request.
double unit_hash(std::uint64_t seed, std::string_view key);

struct CaptionModelOptions {
  /// Fraction of images answered with a wrong class.
  double error_rate = 0.0;
  /// Fraction of images whose first reply is not JSON.
  double malformed_rate = 0.0;
  /// Fraction of those whose re-ask reply is malformed as well.
  double malformed_reask_rate = 0.0;
  /// Fraction of reference findings the model reproduces; the rest are
  /// replaced by unsupported statements.
  double fidelity = 1.0;
  std::uint64_t seed = 0;
  std::chrono::milliseconds delay{0};
};

/// Vision-language model stand-in. Images are recognized by the SHA-256 of
/// the uploaded bytes, so pass-through encodings (small JPEG/PNG) are needed.
class CaptionModel {
 public:
  CaptionModel(const Manifest& pool, std::vector<DatasetFamily> families,
               CaptionModelOptions options);

  MockReply operator()(const MockRequest& request) const;

  bool answers_wrongly(const std::string& image_id) const;
  bool answers_malformed(const std::string& image_id, int reask) const;
  /// The class this model names for `record`.
  std::string predicted_label(const ImageRecord& record) const;
  /// The full JSON caption this model writes for `record`.
  std::string caption_json(const ImageRecord& record) const;

 private:
  const DatasetFamily& family_of(DatasetId id) const;

  std::map<std::string, ImageRecord> by_sha256_;
  std::vector<DatasetFamily> families_;
  CaptionModelOptions options_;
};

/// Deterministic reference description sections for `record` as seen as
/// class `label`.
DescriptionSections reference_sections(const ImageRecord& record, const std::string& label);

/// Lower-cased content words: length >= 3 or containing a digit, no stop words.
std::vector<std::string> content_words(std::string_view text);

/// Judge stand-in. Statements are split on sentence and line boundaries;
/// a statement is supported when at least `support_threshold` of its content
/// words occur in the other text.
class HeuristicJudge {
 public:
  explicit HeuristicJudge(double support_threshold = 0.8,
                          std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : threshold_(support_threshold), delay_(delay) {}

  MockReply operator()(const MockRequest& request) const;

  std::vector<std::string> decompose(std::string_view text) const;
  bool supported(std::string_view statement, std::string_view context) const;

 private:
  double threshold_;
  std::chrono::milliseconds delay_;
};

/// Bag-of-words embedder: each content word adds 1 to a hashed dimension.
class HashingEmbedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

  MockReply operator()(const MockRequest& request) const;
  std::vector<double> embed(std::string_view text) const;

 private:
  std::size_t dimension_;
};

/// Model names served by `standard_router`.
inline constexpr std::string_view kTeacherModel = "mock-teacher";
inline constexpr std::string_view kBaseModel = "mock-base";
inline constexpr std::string_view kTunedModel = "mock-tuned";
inline constexpr std::string_view kJudgeModel = "mock-judge";
inline constexpr std::string_view kEmbedderModel = "mock-embedder";

struct StandardMockOptions {
  CaptionModelOptions teacher{0.3, 0.05, 0.5, 1.0, 11, {}};
  CaptionModelOptions base{0.6, 0.1, 0.0, 0.3, 23, {}};
  CaptionModelOptions tuned{0.3, 0.02, 0.0, 0.8, 37, {}};
};

/// Serves teacher, base and fine-tuned students, judge and embedder under
/// the names above.
ModelRouter standard_router(const Manifest& pool, const std::vector<DatasetFamily>& families,
                            const StandardMockOptions& options = {});

}  // namespace medcap::mock
