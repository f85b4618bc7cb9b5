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

#include "medcap/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "medcap/errors.hpp"

namespace medcap::report {

using nlohmann::json;

Format format_from_string(std::string_view name) {
  if (name == "json") return Format::kJson;
  if (name == "csv") return Format::kCsv;
  if (name == "table-text" || name == "table") return Format::kTableText;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string_view to_string(Format format) {
  switch (format) {
    case Format::kJson: return "json";
    case Format::kCsv: return "csv";
    case Format::kTableText: return "table-text";
  }
  return "json";
}

namespace {

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

template <typename Row>
const Row* find_row(const std::vector<Row>& rows, const std::string& model) {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) { return r.model == model; });
  return it == rows.end() ? nullptr : &*it;
}

}  // namespace

void compute_deltas(ComparisonReport& report) {
  const auto& base = report.metadata.base_label;
  const auto& tuned = report.metadata.finetuned_label;
  for (auto& block : report.datasets) {
    block.delta.reset();
    DeltaRow d;
    bool any = false;
    const auto* cb = find_row(block.classification, base);
    const auto* ct = find_row(block.classification, tuned);
    if (cb && ct) {
      d.accuracy = ct->accuracy - cb->accuracy;
      d.balanced_accuracy = ct->balanced_accuracy - cb->balanced_accuracy;
      d.precision = ct->precision - cb->precision;
      d.recall = ct->recall - cb->recall;
      d.f1 = ct->f1 - cb->f1;
      any = true;
    }
    const auto* rb = find_row(block.caption, base);
    const auto* rt = find_row(block.caption, tuned);
    if (rb && rt) {
      d.faithfulness = diff(rt->faithfulness, rb->faithfulness);
      d.answer_relevancy = diff(rt->answer_relevancy, rb->answer_relevancy);
      d.answer_correctness = diff(rt->answer_correctness, rb->answer_correctness);
      any = true;
    }
    if (any) block.delta = d;
  }
}

ComparisonReport assemble(const std::vector<ModelResults>& models,
                          const std::vector<DatasetFamily>& families, RunMetadata metadata) {
  ComparisonReport report;
  report.metadata = std::move(metadata);
  for (const auto& family : families) {
    DatasetBlock block;
    block.dataset = std::string(to_string(family.id));
    block.display_name = family.display_name;
    for (const auto& m : models) {
      if (auto it = m.classification.find(family.id); it != m.classification.end()) {
        const auto& r = it->second;
        block.n = std::max(block.n, r.n);
        block.classification.push_back({m.label, r.accuracy, r.balanced_accuracy,
                                        r.macro_precision, r.macro_recall, r.macro_f1,
                                        r.unparseable});
      }
      if (auto it = m.captions.find(block.dataset); it != m.captions.end()) {
        const auto& s = it->second;
        block.n = std::max(block.n, s.n);
        block.caption.push_back(
            {m.label, s.faithfulness.mean, s.answer_relevancy.mean, s.answer_correctness.mean});
      }
    }
    if (!block.classification.empty() || !block.caption.empty()) {
      report.datasets.push_back(std::move(block));
    }
  }
  compute_deltas(report);
  return report;
}

namespace {

std::string fixed4(double v) { return fmt::format("{:.4f}", v); }

std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : "n/a"; }

std::string signed4(const std::optional<double>& v) {
  if (!v) return "n/a";
  // Avoid "-0.0000" for tiny negative differences.
  const double rounded = std::round(*v * 1e4) / 1e4;
  return fmt::format("{:+.4f}", rounded == 0.0 ? 0.0 : rounded);
}

std::string exact(double v) { return fmt::format("{}", v); }

std::string exact(const std::optional<double>& v) { return v ? exact(*v) : ""; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_csv(const ComparisonReport& report) {
  std::string out = "table,dataset,n,model,metric,value\n";
  auto line = [&](const char* table, const DatasetBlock& b, const std::string& model,
                  const char* metric, const std::string& value) {
    out += fmt::format("{},{},{},{},{},{}\n", table, csv_field(b.dataset), b.n, csv_field(model),
                       metric, value);
  };
  for (const auto& b : report.datasets) {
    for (const auto& r : b.classification) {
      line("classification", b, r.model, "accuracy", exact(r.accuracy));
      line("classification", b, r.model, "balanced_accuracy", exact(r.balanced_accuracy));
      line("classification", b, r.model, "precision", exact(r.precision));
      line("classification", b, r.model, "recall", exact(r.recall));
      line("classification", b, r.model, "f1", exact(r.f1));
      line("classification", b, r.model, "unparseable", std::to_string(r.unparseable));
    }
    for (const auto& r : b.caption) {
      line("caption", b, r.model, "faithfulness", exact(r.faithfulness));
      line("caption", b, r.model, "answer_relevancy", exact(r.answer_relevancy));
      line("caption", b, r.model, "answer_correctness", exact(r.answer_correctness));
    }
    if (b.delta) {
      const auto& d = *b.delta;
      const std::string model = "delta";
      if (d.accuracy) {
        line("classification", b, model, "accuracy", exact(d.accuracy));
        line("classification", b, model, "balanced_accuracy", exact(d.balanced_accuracy));
        line("classification", b, model, "precision", exact(d.precision));
        line("classification", b, model, "recall", exact(d.recall));
        line("classification", b, model, "f1", exact(d.f1));
      }
      if (find_row(b.caption, report.metadata.base_label) &&
          find_row(b.caption, report.metadata.finetuned_label)) {
        line("caption", b, model, "faithfulness", exact(d.faithfulness));
        line("caption", b, model, "answer_relevancy", exact(d.answer_relevancy));
        line("caption", b, model, "answer_correctness", exact(d.answer_correctness));
      }
    }
  }
  return out;
}

constexpr int kDatasetWidth = 22;
constexpr int kModelWidth = 14;
constexpr int kNumberWidth = 14;

std::string row_text(const std::string& dataset, const std::string& model,
                     const std::vector<std::string>& cells) {
  std::string out = fmt::format("{:<{}}{:<{}}", dataset, kDatasetWidth, model, kModelWidth);
  for (const auto& c : cells) out += fmt::format("{:>{}}", c, kNumberWidth);
  // Trailing spaces would make diffs noisy.
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out + "\n";
}

std::string render_table(const ComparisonReport& report) {
  std::string out;
  const auto& meta = report.metadata;

  out += "GROUND-TRUTH CONCORDANCE ON TEST SET\n\n";
  out += row_text("Dataset", "Model",
                  {"Accuracy", "Balanced Acc", "Precision", "Recall", "F1", "Unparseable"});
  for (const auto& b : report.datasets) {
    if (b.classification.empty()) continue;
    std::string label = fmt::format("{} (n={})", b.display_name, b.n);
    for (const auto& r : b.classification) {
      out += row_text(label, r.model,
                      {fixed4(r.accuracy), fixed4(r.balanced_accuracy), fixed4(r.precision),
                       fixed4(r.recall), fixed4(r.f1), std::to_string(r.unparseable)});
      label.clear();
    }
    if (b.delta && b.delta->accuracy) {
      const auto& d = *b.delta;
      out += row_text("", "Delta",
                      {signed4(d.accuracy), signed4(d.balanced_accuracy), signed4(d.precision),
                       signed4(d.recall), signed4(d.f1)});
    }
  }

  out += "\nCAPTION FIDELITY AND QUALITY\n\n";
  out += row_text("Dataset", "Model", {"Faithfulness", "Relevancy", "Correctness"});
  for (const auto& b : report.datasets) {
    if (b.caption.empty()) continue;
    std::string label = fmt::format("{} (n={})", b.display_name, b.n);
    for (const auto& r : b.caption) {
      out += row_text(label, r.model,
                      {fixed4(r.faithfulness), fixed4(r.answer_relevancy),
                       fixed4(r.answer_correctness)});
      label.clear();
    }
    if (b.delta && find_row(b.caption, meta.base_label) &&
        find_row(b.caption, meta.finetuned_label)) {
      const auto& d = *b.delta;
      out += row_text("", "Delta",
                      {signed4(d.faithfulness), signed4(d.answer_relevancy),
                       signed4(d.answer_correctness)});
    }
  }

  out += "\nseed: " + std::to_string(meta.seed) + "\n";
  out += "config sha256: " + meta.config_hash + "\n";
  for (const auto& [role, name] : meta.endpoints) out += role + ": " + name + "\n";
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string render(const ComparisonReport& report, Format format) {
  if (report.datasets.empty()) throw EmptyInput("report has no dataset blocks");
  switch (format) {
    case Format::kJson: return to_json(report).dump(2) + "\n";
    case Format::kCsv: return render_csv(report);
    case Format::kTableText: return render_table(report);
  }
  throw ConfigError("unknown report format");
}

std::string render(const ComparisonReport& report, std::string_view format) {
  return render(report, format_from_string(format));
}

json to_json(const ComparisonReport& report) {
  json blocks = json::array();
  for (const auto& b : report.datasets) {
    json cls = json::array();
    for (const auto& r : b.classification) {
      cls.push_back({{"model", r.model},
                     {"accuracy", r.accuracy},
                     {"balanced_accuracy", r.balanced_accuracy},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"unparseable", r.unparseable}});
    }
    json cap = json::array();
    for (const auto& r : b.caption) {
      cap.push_back({{"model", r.model},
                     {"faithfulness", optional_number(r.faithfulness)},
                     {"answer_relevancy", optional_number(r.answer_relevancy)},
                     {"answer_correctness", optional_number(r.answer_correctness)}});
    }
    json block = {{"dataset", b.dataset},
                  {"display_name", b.display_name},
                  {"n", b.n},
                  {"classification", std::move(cls)},
                  {"caption", std::move(cap)}};
    if (b.delta) {
      const auto& d = *b.delta;
      block["delta"] = {{"accuracy", optional_number(d.accuracy)},
                        {"balanced_accuracy", optional_number(d.balanced_accuracy)},
                        {"precision", optional_number(d.precision)},
                        {"recall", optional_number(d.recall)},
                        {"f1", optional_number(d.f1)},
                        {"faithfulness", optional_number(d.faithfulness)},
                        {"answer_relevancy", optional_number(d.answer_relevancy)},
                        {"answer_correctness", optional_number(d.answer_correctness)}};
    } else {
      block["delta"] = nullptr;
    }
    blocks.push_back(std::move(block));
  }
  const auto& m = report.metadata;
  return {{"datasets", std::move(blocks)},
          {"metadata",
           {{"seed", m.seed},
            {"config_sha256", m.config_hash},
            {"endpoints", m.endpoints},
            {"base_label", m.base_label},
            {"finetuned_label", m.finetuned_label}}}};
}

ComparisonReport report_from_json(const json& j) {
  try {
    ComparisonReport report;
    for (const auto& b : j.at("datasets")) {
      DatasetBlock block;
      block.dataset = b.at("dataset").get<std::string>();
      block.display_name = b.at("display_name").get<std::string>();
      block.n = b.at("n").get<std::size_t>();
      for (const auto& r : b.at("classification")) {
        block.classification.push_back(
            {r.at("model").get<std::string>(), r.at("accuracy").get<double>(),
             r.at("balanced_accuracy").get<double>(), r.at("precision").get<double>(),
             r.at("recall").get<double>(), r.at("f1").get<double>(),
             r.at("unparseable").get<std::size_t>()});
      }
      for (const auto& r : b.at("caption")) {
        block.caption.push_back({r.at("model").get<std::string>(),
                                 number_or_null(r, "faithfulness"),
                                 number_or_null(r, "answer_relevancy"),
                                 number_or_null(r, "answer_correctness")});
      }
      if (b.contains("delta") && !b.at("delta").is_null()) {
        const auto& d = b.at("delta");
        block.delta = DeltaRow{number_or_null(d, "accuracy"),
                               number_or_null(d, "balanced_accuracy"),
                               number_or_null(d, "precision"),
                               number_or_null(d, "recall"),
                               number_or_null(d, "f1"),
                               number_or_null(d, "faithfulness"),
                               number_or_null(d, "answer_relevancy"),
                               number_or_null(d, "answer_correctness")};
      }
      report.datasets.push_back(std::move(block));
    }
    const auto& m = j.at("metadata");
    report.metadata.seed = m.at("seed").get<std::uint64_t>();
    report.metadata.config_hash = m.at("config_sha256").get<std::string>();
    report.metadata.endpoints = m.at("endpoints").get<std::map<std::string, std::string>>();
    report.metadata.base_label = m.at("base_label").get<std::string>();
    report.metadata.finetuned_label = m.at("finetuned_label").get<std::string>();
    return report;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad comparison report: ") + e.what());
  }
}

}  // namespace medcap::report
