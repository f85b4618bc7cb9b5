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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medcap/distill.hpp"

namespace medcap::corpus {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

using Ratios = std::array<double, 3>;
using Allocation = std::array<std::size_t, 3>;

struct SplitCounts {
  Allocation total{};
  /// dataset -> per-split counts
  std::map<std::string, Allocation> per_dataset;
  /// dataset -> class -> per-split counts
  std::map<std::string, std::map<std::string, Allocation>> per_class;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  Ratios ratios{};
  std::map<std::string, Split> assignment;
  SplitCounts counts;

  std::vector<std::string> ids_in(Split split) const;
};

/// Hamilton (largest remainder) apportionment of n items. Equal remainders
/// go to the earlier split (train, then validation, then test).
Allocation largest_remainder(std::size_t n, const Ratios& ratios);

/// Rounds the class-level shares n_c * ratios so each cell is the floor or
/// ceiling of its ideal value, rows sum to the class sizes and columns sum
/// to `totals`. Among such roundings, prefers rounding up the cells with the
/// largest fractional parts.
std::vector<Allocation> apportion_strata(const std::vector<std::size_t>& sizes,
                                         const Ratios& ratios, const Allocation& totals);

/// Deterministic stratified split. Dataset totals come from largest
/// remainder over the dataset size; those totals are then apportioned to
/// (dataset, class) strata. Within a stratum, records are sorted by
/// image_id, shuffled with a generator keyed on (seed, dataset, class) and
/// dealt train, validation, test in that order.
SplitManifest split(const std::vector<distill::CorpusEntry>& corpus, const Ratios& ratios,
                    std::uint64_t seed);

nlohmann::json to_json(const SplitManifest& manifest);
SplitManifest split_manifest_from_json(const nlohmann::json& j);
/// Byte-stable serialization (sorted keys, fixed indentation).
std::string serialize(const SplitManifest& manifest);

struct EmitResult {
  std::filesystem::path train_path;
  std::filesystem::path validation_path;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
};

/// Writes train.jsonl and validation.jsonl under `out_dir`. Each line is a
/// {system, user, assistant} conversation; the user turn references the image
/// by a path relative to `out_dir`. Lines are ordered by image_id.
EmitResult emit_instruction_corpus(const SplitManifest& split,
                                   const std::vector<distill::CorpusEntry>& corpus,
                                   const std::map<DatasetId, distill::PromptTemplate>& prompts,
                                   const std::filesystem::path& out_dir);

}  // namespace medcap::corpus
