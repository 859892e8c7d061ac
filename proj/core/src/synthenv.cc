// Copyright 2026 The tarl Authors
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

#include "tarl/synthenv.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "tarl/errors.h"
#include "tarl/text.h"

namespace tarl {
namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 8> kMetrics = {
    "revenue", "cost",     "profit",     "assets",
    "debt",    "cashflow", "dividends", "capex"};

constexpr std::array<std::string_view, 16> kSegments = {
    "retail",     "wholesale", "online",     "services",
    "hardware",   "software",  "consulting", "licensing",
    "energy",     "logistics", "healthcare", "insurance",
    "mining",     "media",     "telecom",    "tourism"};

constexpr int kFirstYear = 2012;
constexpr int kLastYear = 2024;
constexpr size_t kSegmentsPerImage = 5;
constexpr size_t kNumOptions = 5;
constexpr uint64_t kPoolStream = 0x706f6f6cULL;

constexpr std::array<std::pair<Category, std::string_view>, 4>
    kCategoryNames = {{{Category::kArithmetic, "arithmetic"},
                       {Category::kStatistical, "statistical"},
                       {Category::kExplanation, "explanation"},
                       {Category::kKnowledge, "knowledge"}}};

constexpr std::array<std::pair<QuestionKind, std::string_view>, 7>
    kKindNames = {{{QuestionKind::kSum, "sum"},
                   {QuestionKind::kDifference, "difference"},
                   {QuestionKind::kPercentChange, "percent_change"},
                   {QuestionKind::kSeriesSum, "series_sum"},
                   {QuestionKind::kMaxSeries, "max_series"},
                   {QuestionKind::kMinSeries, "min_series"},
                   {QuestionKind::kSeriesLookup, "series_lookup"}}};

std::string FormatInteger(double v) {
  return std::to_string(static_cast<long long>(std::llround(v)));
}

std::string FormatPercent(double v) {
  char buf[48];
  double rounded = std::round(v * 100.0) / 100.0;
  if (rounded == 0.0) rounded = 0.0;  // drop negative zero
  std::snprintf(buf, sizeof(buf), "%.2f%%", rounded);
  return buf;
}

std::vector<std::string> TokenSet(std::string_view text) {
  std::vector<std::string> tokens;
  for (std::string_view tok : SplitWhitespace(text)) {
    tokens.push_back(ToLower(tok));
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

SyntheticImage RandomImage(Rng& rng, uint64_t image_id) {
  const std::string_view metric = kMetrics[rng.Below(kMetrics.size())];
  const int year = static_cast<int>(rng.Between(kFirstYear, kLastYear));

  std::array<size_t, kSegments.size()> order;
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.Shuffle(std::span<size_t>(order));

  std::vector<int64_t> values;
  while (values.size() < kSegmentsPerImage) {
    const int64_t v = rng.Between(10, 999);
    if (std::find(values.begin(), values.end(), v) == values.end()) {
      values.push_back(v);
    }
  }

  SyntheticImage image;
  image.image_id = image_id;
  for (size_t i = 0; i < kSegmentsPerImage; ++i) {
    std::string name = std::string(metric) + " " + std::to_string(year) +
                       " " + std::string(kSegments[order[i]]);
    image.feature_table.emplace_back(std::move(name),
                                     static_cast<double>(values[i]));
  }
  image.rendered_text = RenderImageText(image.feature_table);
  return image;
}

// Rows of `image` that belong to (metric, year), keyed by segment.
std::vector<std::pair<std::string, double>> MatchingRows(
    const TaskInstance& task, const SyntheticImage& image) {
  const std::string prefix = task.metric + " " + std::to_string(task.year) + " ";
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& [name, value] : image.feature_table) {
    if (name.starts_with(prefix)) {
      rows.emplace_back(name.substr(prefix.size()), value);
    }
  }
  return rows;
}

// Correct value plus four perturbed distractors: +-1, +-2, +-10% and a
// sign flip, deduplicated by numeric value.
std::vector<std::string> NumericOptionTexts(double correct, bool percent,
                                            Rng& rng) {
  auto format = [&](double v) {
    return percent ? FormatPercent(v) : FormatInteger(v);
  };
  const std::string correct_text = format(correct);
  std::vector<std::string> candidates;
  for (double v : {correct + 1, correct - 1, correct + 2, correct - 2,
                   correct * 1.1, correct * 0.9, -correct}) {
    candidates.push_back(format(v));
  }
  rng.Shuffle(std::span<std::string>(candidates));

  std::vector<std::string> texts = {correct_text};
  std::vector<std::string> seen = {NormalizeMath(correct_text)};
  for (const std::string& c : candidates) {
    if (texts.size() == kNumOptions) break;
    std::string norm = NormalizeMath(c);
    if (std::find(seen.begin(), seen.end(), norm) != seen.end()) continue;
    seen.push_back(std::move(norm));
    texts.push_back(c);
  }
  return texts;
}

// Shuffles option texts (texts[0] is correct), assigns labels A..E.
void AssignOptions(TaskInstance& task, std::vector<std::string> texts,
                   Rng& rng) {
  std::vector<size_t> order(texts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.Shuffle(std::span<size_t>(order));
  task.options.clear();
  for (size_t slot = 0; slot < order.size(); ++slot) {
    const char label = static_cast<char>('A' + slot);
    task.options.push_back({label, texts[order[slot]]});
    if (order[slot] == 0) task.correct_option = label;
  }
}

}  // namespace

std::string_view CategoryName(Category c) {
  for (const auto& [value, name] : kCategoryNames) {
    if (value == c) return name;
  }
  return "unknown";
}

std::string_view QuestionKindName(QuestionKind k) {
  for (const auto& [value, name] : kKindNames) {
    if (value == k) return name;
  }
  return "unknown";
}

std::optional<Category> ParseCategory(std::string_view name) {
  for (const auto& [value, n] : kCategoryNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

std::optional<QuestionKind> ParseQuestionKind(std::string_view name) {
  for (const auto& [value, n] : kKindNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

std::string RenderImageText(
    std::span<const std::pair<std::string, double>> feature_table) {
  std::string text;
  for (const auto& [name, value] : feature_table) {
    if (!text.empty()) text.push_back(' ');
    text += name + " = " + FormatDouble(value) + " ;";
  }
  return text;
}

const Option& TaskInstance::option(char label) const {
  for (const Option& o : options) {
    if (o.label == label) return o;
  }
  throw ValidationError(std::string("task has no option ") + label);
}

void EnvConfig::Validate() const {
  if (stage != 1 && stage != 2) {
    throw ValidationError("stage must be 1 or 2");
  }
  if (min_distractors < 1 || min_distractors > max_distractors) {
    throw ValidationError("distractor range must satisfy 1 <= min <= max");
  }
  if (stage == 2 && image_pool_size < max_distractors) {
    throw ValidationError("image pool must hold at least " +
                          std::to_string(max_distractors) + " images");
  }
}

TaskInstance GenStage1Task(Rng& rng, const EnvConfig& cfg, uint64_t task_id) {
  (void)cfg;
  TaskInstance task;
  task.task_id = task_id;
  task.stage = 1;
  task.category = Category::kArithmetic;
  const std::array<QuestionKind, 3> kinds = {
      QuestionKind::kSum, QuestionKind::kDifference,
      QuestionKind::kPercentChange};
  task.kind = kinds[rng.Below(kinds.size())];
  const int64_t a = rng.Between(10, 999);
  const int64_t b = rng.Between(10, 999);
  task.operands = {a, b};
  const std::string sa = std::to_string(a), sb = std::to_string(b);
  switch (task.kind) {
    case QuestionKind::kSum:
      task.question = "What is " + sa + " plus " + sb + " ?";
      break;
    case QuestionKind::kDifference:
      task.question = "What is " + sa + " minus " + sb + " ?";
      break;
    default:
      task.question =
          "What is the percent change from " + sa + " to " + sb + " ?";
      break;
  }
  const bool percent = task.kind == QuestionKind::kPercentChange;
  const double correct =
      task.kind == QuestionKind::kSum          ? static_cast<double>(a + b)
      : task.kind == QuestionKind::kDifference ? static_cast<double>(a - b)
                                               : 100.0 * (b - a) / a;
  AssignOptions(task, NumericOptionTexts(correct, percent, rng), rng);
  return task;
}

TaskInstance GenStage2Task(Rng& rng, const EnvConfig& cfg,
                           std::span<const SyntheticImage> pool,
                           uint64_t task_id) {
  if (pool.size() < cfg.max_distractors) {
    throw ValidationError("image pool has " + std::to_string(pool.size()) +
                          " images, need at least " +
                          std::to_string(cfg.max_distractors));
  }
  TaskInstance task;
  task.task_id = task_id;
  task.stage = 2;
  switch (task_id % 4) {
    case 0:
      task.category = Category::kArithmetic;
      task.kind = QuestionKind::kSeriesSum;
      break;
    case 1:
      task.category = Category::kStatistical;
      task.kind = QuestionKind::kMaxSeries;
      break;
    case 2:
      task.category = Category::kExplanation;
      task.kind = QuestionKind::kMinSeries;
      break;
    default:
      task.category = Category::kKnowledge;
      task.kind = QuestionKind::kSeriesLookup;
      break;
  }

  SyntheticImage correct =
      RandomImage(rng, cfg.image_pool_size + task_id);
  // Recover metric / year / segments from the first row name.
  const std::vector<std::string_view> name_parts =
      SplitWhitespace(correct.feature_table.front().first);
  task.metric = std::string(name_parts[0]);
  task.year = std::stoi(std::string(name_parts[1]));
  std::vector<std::string> segments;
  for (const auto& row : correct.feature_table) {
    segments.push_back(std::string(SplitWhitespace(row.first)[2]));
  }

  const std::string year = std::to_string(task.year);
  switch (task.kind) {
    case QuestionKind::kSeriesSum: {
      const size_t i = rng.Below(segments.size());
      size_t j = rng.Below(segments.size() - 1);
      if (j >= i) ++j;
      task.segments = {segments[i], segments[j]};
      task.question = "What is the combined " + task.metric + " of " +
                      segments[i] + " and " + segments[j] + " in " + year +
                      " ?";
      break;
    }
    case QuestionKind::kMaxSeries:
      task.question = "Which segment had the highest " + task.metric +
                      " in " + year + " ?";
      break;
    case QuestionKind::kMinSeries:
      task.question = "Which segment had the lowest " + task.metric +
                      " in " + year + " ?";
      break;
    default: {
      const size_t i = rng.Below(segments.size());
      task.segments = {segments[i]};
      task.question = "What was the " + task.metric + " of " + segments[i] +
                      " in " + year + " ?";
      break;
    }
  }

  const std::string answer = *DeriveAnswer(task, &correct);
  std::vector<std::string> texts;
  if (task.kind == QuestionKind::kMaxSeries ||
      task.kind == QuestionKind::kMinSeries) {
    texts.push_back(answer);
    for (const std::string& s : segments) {
      if (s != answer) texts.push_back(s);
    }
  } else {
    texts = NumericOptionTexts(std::stod(answer), false, rng);
  }
  AssignOptions(task, std::move(texts), rng);

  const size_t k = static_cast<size_t>(
      rng.Between(static_cast<int64_t>(cfg.min_distractors),
                  static_cast<int64_t>(cfg.max_distractors)));
  std::vector<SyntheticImage> images = {std::move(correct)};
  for (uint64_t id : SelectDistractors(pool, task.question, k)) {
    auto it = std::find_if(pool.begin(), pool.end(),
                           [&](const SyntheticImage& im) {
                             return im.image_id == id;
                           });
    images.push_back(*it);
  }
  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.Shuffle(std::span<size_t>(order));
  for (size_t slot = 0; slot < order.size(); ++slot) {
    task.images.push_back(images[order[slot]]);
    if (order[slot] == 0) task.correct_image_index = slot;
  }
  return task;
}

double JaccardSimilarity(std::string_view a, std::string_view b) {
  const std::vector<std::string> sa = TokenSet(a);
  const std::vector<std::string> sb = TokenSet(b);
  if (sa.empty() && sb.empty()) return 0.0;
  std::vector<std::string> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(common));
  const size_t uni = sa.size() + sb.size() - common.size();
  return static_cast<double>(common.size()) / static_cast<double>(uni);
}

std::vector<uint64_t> SelectDistractors(std::span<const SyntheticImage> pool,
                                        std::string_view question, size_t k) {
  if (pool.size() < k) {
    throw ValidationError("distractor pool smaller than k");
  }
  std::vector<std::pair<double, uint64_t>> ranked;
  ranked.reserve(pool.size());
  for (const SyntheticImage& image : pool) {
    ranked.emplace_back(JaccardSimilarity(question, image.rendered_text),
                        image.image_id);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<uint64_t> ids;
  for (size_t i = 0; i < k; ++i) ids.push_back(ranked[i].second);
  return ids;
}

bool VerifyAnswer(const TaskInstance& task, const CanonicalAnswer& canonical) {
  if (canonical.kind == AnswerKind::kChoiceLetter) {
    return AnswersEquivalent(
        canonical, {AnswerKind::kChoiceLetter,
                    std::string(1, task.correct_option)});
  }
  return AnswersEquivalent(
      canonical, {AnswerKind::kNormalizedValue,
                  NormalizeMath(task.option(task.correct_option).text)});
}

std::optional<std::string> DeriveAnswer(const TaskInstance& task,
                                        const SyntheticImage* image) {
  if (task.stage == 1) {
    if (task.operands.size() != 2) return std::nullopt;
    const double a = static_cast<double>(task.operands[0]);
    const double b = static_cast<double>(task.operands[1]);
    switch (task.kind) {
      case QuestionKind::kSum:
        return FormatInteger(a + b);
      case QuestionKind::kDifference:
        return FormatInteger(a - b);
      case QuestionKind::kPercentChange:
        return FormatPercent(100.0 * (b - a) / a);
      default:
        return std::nullopt;
    }
  }
  if (image == nullptr) return std::nullopt;
  const auto rows = MatchingRows(task, *image);
  if (rows.empty()) return std::nullopt;
  auto lookup = [&](const std::string& segment) -> std::optional<double> {
    for (const auto& [name, value] : rows) {
      if (name == segment) return value;
    }
    return std::nullopt;
  };
  switch (task.kind) {
    case QuestionKind::kMaxSeries:
      return std::max_element(rows.begin(), rows.end(),
                              [](const auto& x, const auto& y) {
                                return x.second < y.second;
                              })
          ->first;
    case QuestionKind::kMinSeries:
      return std::min_element(rows.begin(), rows.end(),
                              [](const auto& x, const auto& y) {
                                return x.second < y.second;
                              })
          ->first;
    case QuestionKind::kSeriesLookup: {
      if (task.segments.empty()) return std::nullopt;
      auto v = lookup(task.segments[0]);
      if (!v) return std::nullopt;
      return FormatInteger(*v);
    }
    case QuestionKind::kSeriesSum: {
      if (task.segments.size() != 2) return std::nullopt;
      auto v1 = lookup(task.segments[0]);
      auto v2 = lookup(task.segments[1]);
      if (!v1 || !v2) return std::nullopt;
      return FormatInteger(*v1 + *v2);
    }
    default:
      return std::nullopt;
  }
}

TaskEnvironment::TaskEnvironment(EnvConfig cfg) : cfg_(cfg) {
  cfg_.Validate();
  if (cfg_.stage == 2) {
    Rng rng(StreamSeed(cfg_.seed, {kPoolStream}));
    for (size_t i = 0; i < cfg_.image_pool_size; ++i) {
      pool_.push_back(RandomImage(rng, i));
    }
  }
}

TaskInstance TaskEnvironment::Task(uint64_t task_id) const {
  Rng rng(StreamSeed(cfg_.seed, {static_cast<uint64_t>(cfg_.stage), task_id}));
  if (cfg_.stage == 1) return GenStage1Task(rng, cfg_, task_id);
  return GenStage2Task(rng, cfg_, pool_, task_id);
}

std::string TaskToRecord(const TaskInstance& task) {
  json j;
  j["task_id"] = task.task_id;
  j["stage"] = task.stage;
  j["category"] = CategoryName(task.category);
  j["kind"] = QuestionKindName(task.kind);
  j["question"] = task.question;
  json options = json::array();
  for (const Option& o : task.options) {
    options.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  }
  j["options"] = std::move(options);
  j["correct_option"] = std::string(1, task.correct_option);
  json images = json::array();
  for (const SyntheticImage& im : task.images) {
    json features = json::array();
    for (const auto& [name, value] : im.feature_table) {
      features.push_back(json::array({name, value}));
    }
    images.push_back({{"image_id", im.image_id},
                      {"features", std::move(features)},
                      {"rendered_text", im.rendered_text}});
  }
  j["images"] = std::move(images);
  j["correct_image_index"] =
      task.correct_image_index ? json(*task.correct_image_index) : json();
  j["operands"] = task.operands;
  j["metric"] = task.metric;
  j["year"] = task.year;
  j["segments"] = task.segments;
  return j.dump();
}

TaskInstance TaskFromRecord(std::string_view line) {
  try {
    const json j = json::parse(line);
    TaskInstance task;
    task.task_id = j.at("task_id").get<uint64_t>();
    task.stage = j.at("stage").get<int>();
    auto category = ParseCategory(j.at("category").get<std::string>());
    auto kind = ParseQuestionKind(j.at("kind").get<std::string>());
    if (!category || !kind) throw ValidationError("unknown category or kind");
    task.category = *category;
    task.kind = *kind;
    task.question = j.at("question").get<std::string>();
    for (const json& o : j.at("options")) {
      const std::string label = o.at("label").get<std::string>();
      if (label.size() != 1) throw ValidationError("bad option label");
      task.options.push_back({label[0], o.at("text").get<std::string>()});
    }
    const std::string correct = j.at("correct_option").get<std::string>();
    if (correct.size() != 1) throw ValidationError("bad correct_option");
    task.correct_option = correct[0];
    for (const json& im : j.at("images")) {
      SyntheticImage image;
      image.image_id = im.at("image_id").get<uint64_t>();
      for (const json& f : im.at("features")) {
        image.feature_table.emplace_back(f.at(0).get<std::string>(),
                                         f.at(1).get<double>());
      }
      image.rendered_text = im.at("rendered_text").get<std::string>();
      task.images.push_back(std::move(image));
    }
    if (!j.at("correct_image_index").is_null()) {
      task.correct_image_index = j.at("correct_image_index").get<size_t>();
    }
    task.operands = j.at("operands").get<std::vector<int64_t>>();
    task.metric = j.at("metric").get<std::string>();
    task.year = j.at("year").get<int>();
    task.segments = j.at("segments").get<std::vector<std::string>>();
    return task;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed task record: ") + e.what());
  }
}

void WriteTaskDump(std::ostream& out, std::span<const TaskInstance> tasks) {
  for (const TaskInstance& task : tasks) out << TaskToRecord(task) << '\n';
  out.flush();
  if (!out) throw IoError("failed to write task dump");
}

std::vector<TaskInstance> ReadTaskDump(std::istream& in) {
  std::vector<TaskInstance> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    tasks.push_back(TaskFromRecord(line));
  }
  return tasks;
}

}  // namespace tarl
