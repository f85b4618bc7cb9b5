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

#include "medcap/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"

namespace medcap::corpus {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw InputError("unknown split '" + std::string(name) + "'");
}

std::vector<std::string> SplitManifest::ids_in(Split split) const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : assignment) {
    if (s == split) ids.push_back(id);
  }
  return ids;
}

namespace {

constexpr double kEps = 1e-9;

void check_ratios(const Ratios& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw InputError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > kEps) throw InputError("split ratios must sum to 1");
}

struct Share {
  std::size_t floor = 0;
  std::int64_t frac_key = 0;  // fractional part on a 1e-9 grid
};

Share share_of(std::size_t n, double ratio) {
  const double ideal = static_cast<double>(n) * ratio;
  const double f = std::floor(ideal + kEps);
  const double frac = ideal - f;
  return {static_cast<std::size_t>(f), frac < kEps ? 0 : std::llround(frac * 1e9)};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform draw in [0, bound) by rejection; std distributions are not
// specified bit-exactly across standard libraries.
std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = gen();
    if (x < limit) return x % bound;
  }
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed, std::string_view key) {
  std::mt19937_64 gen(splitmix64(seed ^ fnv1a(key)));
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

// Successive-shortest-path min-cost flow on a tiny dense graph.
class MinCostFlow {
 public:
  explicit MinCostFlow(std::size_t nodes) : graph_(nodes) {}

  void add_edge(std::size_t from, std::size_t to, std::int64_t cap, std::int64_t cost) {
    graph_[from].push_back({to, graph_[to].size(), cap, cost});
    graph_[to].push_back({from, graph_[from].size() - 1, 0, -cost});
  }

  std::int64_t flow(std::size_t source, std::size_t sink) {
    std::int64_t total = 0;
    const auto n = graph_.size();
    constexpr auto kInf = std::numeric_limits<std::int64_t>::max() / 4;
    for (;;) {
      std::vector<std::int64_t> dist(n, kInf);
      std::vector<std::pair<std::size_t, std::size_t>> prev(n, {n, 0});
      dist[source] = 0;
      for (std::size_t round = 0; round + 1 < n; ++round) {
        bool changed = false;
        for (std::size_t u = 0; u < n; ++u) {
          if (dist[u] == kInf) continue;
          for (std::size_t e = 0; e < graph_[u].size(); ++e) {
            const auto& edge = graph_[u][e];
            if (edge.cap > 0 && dist[u] + edge.cost < dist[edge.to]) {
              dist[edge.to] = dist[u] + edge.cost;
              prev[edge.to] = {u, e};
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (dist[sink] == kInf) return total;
      std::int64_t push = kInf;
      for (auto v = sink; v != source; v = prev[v].first) {
        push = std::min(push, graph_[prev[v].first][prev[v].second].cap);
      }
      for (auto v = sink; v != source; v = prev[v].first) {
        auto& edge = graph_[prev[v].first][prev[v].second];
        edge.cap -= push;
        graph_[v][edge.rev].cap += push;
      }
      total += push;
    }
  }

  std::int64_t flow_on(std::size_t from, std::size_t to) const {
    for (const auto& edge : graph_[from]) {
      if (edge.to == to) return graph_[to][edge.rev].cap;
    }
    return 0;
  }

 private:
  struct Edge {
    std::size_t to;
    std::size_t rev;
    std::int64_t cap;
    std::int64_t cost;
  };
  std::vector<std::vector<Edge>> graph_;
};

}  // namespace

Allocation largest_remainder(std::size_t n, const Ratios& ratios) {
  check_ratios(ratios);
  Allocation out{};
  std::array<std::int64_t, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto s = share_of(n, ratios[j]);
    out[j] = s.floor;
    frac[j] = s.frac_key;
    assigned += s.floor;
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % 3]];
  return out;
}

std::vector<Allocation> apportion_strata(const std::vector<std::size_t>& sizes,
                                         const Ratios& ratios, const Allocation& totals) {
  check_ratios(ratios);
  const std::size_t rows = sizes.size();
  std::vector<Allocation> out(rows);
  std::vector<std::array<std::int64_t, 3>> frac(rows);
  std::vector<std::size_t> row_deficit(rows);
  Allocation col_floor{};
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t sum = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto s = share_of(sizes[i], ratios[j]);
      out[i][j] = s.floor;
      frac[i][j] = s.frac_key;
      sum += s.floor;
      col_floor[j] += s.floor;
    }
    row_deficit[i] = sizes[i] - sum;
  }
  const std::size_t source = 0;
  const std::size_t sink = rows + 4;
  MinCostFlow graph(rows + 5);
  std::int64_t needed = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    graph.add_edge(source, 1 + i, static_cast<std::int64_t>(row_deficit[i]), 0);
    needed += static_cast<std::int64_t>(row_deficit[i]);
    for (std::size_t j = 0; j < 3; ++j) {
      if (frac[i][j] > 0) graph.add_edge(1 + i, 1 + rows + j, 1, -frac[i][j]);
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    if (totals[j] < col_floor[j]) throw InputError("split totals below the stratum floors");
    graph.add_edge(1 + rows + j, sink, static_cast<std::int64_t>(totals[j] - col_floor[j]), 0);
  }
  if (graph.flow(source, sink) != needed) {
    throw InputError("no stratum allocation matches the requested split totals");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      out[i][j] += static_cast<std::size_t>(graph.flow_on(1 + i, 1 + rows + j));
    }
  }
  return out;
}

SplitManifest split(const std::vector<distill::CorpusEntry>& corpus, const Ratios& ratios,
                    std::uint64_t seed) {
  check_ratios(ratios);
  if (corpus.empty()) throw EmptyInput("cannot split an empty corpus");

  // dataset -> class -> image_ids
  std::map<std::string, std::map<std::string, std::vector<std::string>>> strata;
  for (const auto& e : corpus) {
    strata[std::string(to_string(e.record.dataset))][e.record.ground_truth.canonical].push_back(
        e.record.image_id);
  }

  SplitManifest manifest;
  manifest.seed = seed;
  manifest.ratios = ratios;
  const auto nonzero = std::count_if(ratios.begin(), ratios.end(), [](double r) { return r > 0; });

  for (auto& [dataset, classes] : strata) {
    std::vector<std::size_t> sizes;
    std::size_t dataset_size = 0;
    for (const auto& [label, ids] : classes) {
      sizes.push_back(ids.size());
      dataset_size += ids.size();
    }
    const auto totals = largest_remainder(dataset_size, ratios);
    const auto allocations = apportion_strata(sizes, ratios, totals);

    std::size_t row = 0;
    for (auto& [label, ids] : classes) {
      if (ids.size() < static_cast<std::size_t>(nonzero)) {
        spdlog::warn("stratum {}/{} has {} record(s); some splits receive none", dataset, label,
                     ids.size());
      }
      std::sort(ids.begin(), ids.end());
      seeded_shuffle(ids, seed, dataset + '\x1f' + label);
      const auto& alloc = allocations[row++];
      std::size_t k = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t c = 0; c < alloc[j]; ++c, ++k) {
          const auto [it, fresh] = manifest.assignment.emplace(ids[k], static_cast<Split>(j));
          if (!fresh) throw InputError("duplicate image_id in corpus: " + ids[k]);
        }
      }
      manifest.counts.per_class[dataset][label] = alloc;
      for (std::size_t j = 0; j < 3; ++j) {
        manifest.counts.per_dataset[dataset][j] += alloc[j];
        manifest.counts.total[j] += alloc[j];
      }
    }
  }
  return manifest;
}

namespace {

json allocation_json(const Allocation& a) {
  return {{"train", a[0]}, {"validation", a[1]}, {"test", a[2]}};
}

Allocation allocation_from_json(const json& j) {
  return {j.at("train").get<std::size_t>(), j.at("validation").get<std::size_t>(),
          j.at("test").get<std::size_t>()};
}

}  // namespace

json to_json(const SplitManifest& m) {
  json assignment = json::object();
  for (const auto& [id, s] : m.assignment) assignment[id] = to_string(s);
  json per_dataset = json::object();
  for (const auto& [d, a] : m.counts.per_dataset) per_dataset[d] = allocation_json(a);
  json per_class = json::object();
  for (const auto& [d, classes] : m.counts.per_class) {
    for (const auto& [c, a] : classes) per_class[d][c] = allocation_json(a);
  }
  return {{"seed", m.seed},
          {"ratios", {{"train", m.ratios[0]}, {"validation", m.ratios[1]}, {"test", m.ratios[2]}}},
          {"assignment", assignment},
          {"counts",
           {{"total", allocation_json(m.counts.total)},
            {"per_dataset", per_dataset},
            {"per_class", per_class}}}};
}

SplitManifest split_manifest_from_json(const json& j) {
  try {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    m.ratios = {r.at("train").get<double>(), r.at("validation").get<double>(),
                r.at("test").get<double>()};
    for (const auto& [id, s] : j.at("assignment").items()) {
      m.assignment[id] = split_from_string(s.get<std::string>());
    }
    const auto& counts = j.at("counts");
    m.counts.total = allocation_from_json(counts.at("total"));
    for (const auto& [d, a] : counts.at("per_dataset").items()) {
      m.counts.per_dataset[d] = allocation_from_json(a);
    }
    for (const auto& [d, classes] : counts.at("per_class").items()) {
      for (const auto& [c, a] : classes.items()) m.counts.per_class[d][c] = allocation_from_json(a);
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad split manifest: ") + e.what());
  }
}

std::string serialize(const SplitManifest& manifest) { return to_json(manifest).dump(2) + "\n"; }

EmitResult emit_instruction_corpus(const SplitManifest& split,
                                   const std::vector<distill::CorpusEntry>& corpus,
                                   const std::map<DatasetId, distill::PromptTemplate>& prompts,
                                   const std::filesystem::path& out_dir) {
  std::vector<const distill::CorpusEntry*> ordered;
  ordered.reserve(corpus.size());
  for (const auto& e : corpus) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return a->record.image_id < b->record.image_id;
  });

  std::filesystem::create_directories(out_dir);
  const auto base = std::filesystem::weakly_canonical(std::filesystem::absolute(out_dir));
  std::vector<json> train;
  std::vector<json> validation;
  for (const auto* e : ordered) {
    auto it = split.assignment.find(e->record.image_id);
    if (it == split.assignment.end()) {
      throw InputError("split does not cover " + e->record.image_id);
    }
    if (it->second == Split::kTest) continue;
    const auto& d = e->caption.description;
    if (trim(d.image_type).empty() || trim(d.anatomical_region).empty() ||
        trim(d.key_findings).empty() || trim(d.clinical_significance).empty()) {
      throw InputError("corpus entry " + e->record.image_id + " has no complete teacher caption");
    }
    auto prompt = prompts.find(e->record.dataset);
    if (prompt == prompts.end()) {
      throw ConfigError("no prompt for dataset " + std::string(to_string(e->record.dataset)));
    }
    const auto image = std::filesystem::weakly_canonical(std::filesystem::absolute(e->record.image_path));
    json conversation{
        {"image_id", e->record.image_id},
        {"dataset", to_string(e->record.dataset)},
        {"messages",
         json::array({{{"role", "system"}, {"content", prompt->second.render_system()}},
                      {{"role", "user"},
                       {"content", prompt->second.user_prompt},
                       {"image", image.lexically_relative(base).generic_string()}},
                      {{"role", "assistant"}, {"content", serialize_caption(e->caption)}}})}};
    (it->second == Split::kTrain ? train : validation).push_back(std::move(conversation));
  }
  EmitResult result;
  result.train_path = out_dir / "train.jsonl";
  result.validation_path = out_dir / "validation.jsonl";
  write_jsonl(result.train_path, train);
  write_jsonl(result.validation_path, validation);
  result.train_records = train.size();
  result.validation_records = validation.size();
  return result;
}

}  // namespace medcap::corpus
