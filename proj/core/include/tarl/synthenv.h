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

#ifndef TARL_SYNTHENV_H_
#define TARL_SYNTHENV_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tarl/outparse.h"
#include "tarl/random.h"

namespace tarl {

enum class Category { kArithmetic, kStatistical, kExplanation, kKnowledge };

enum class QuestionKind {
  // Stage 1, two integer operands.
  kSum,
  kDifference,
  kPercentChange,
  // Stage 2, answered from one table image.
  kSeriesSum,
  kMaxSeries,
  kMinSeries,
  kSeriesLookup,
};

std::string_view CategoryName(Category c);
std::string_view QuestionKindName(QuestionKind k);
std::optional<Category> ParseCategory(std::string_view name);
std::optional<QuestionKind> ParseQuestionKind(std::string_view name);

// Stand-in for a chart or table image: an ordered feature table. Feature
// names read "<metric> <year> <segment>".
struct SyntheticImage {
  uint64_t image_id = 0;
  std::vector<std::pair<std::string, double>> feature_table;
  std::string rendered_text;
};

// Deterministic serialization: "<name> = <value> ;" per entry.
std::string RenderImageText(
    std::span<const std::pair<std::string, double>> feature_table);

struct TaskInstance {
  uint64_t task_id = 0;
  int stage = 1;
  Category category = Category::kArithmetic;
  QuestionKind kind = QuestionKind::kSum;
  std::string question;
  std::vector<Option> options;
  char correct_option = 'A';
  std::vector<SyntheticImage> images;
  std::optional<size_t> correct_image_index;

  // Structured form of the question. Stage 1 uses operands; stage 2 uses
  // metric, year and (for sum / lookup) the named segments.
  std::vector<int64_t> operands;
  std::string metric;
  int year = 0;
  std::vector<std::string> segments;

  const Option& option(char label) const;
};

struct EnvConfig {
  int stage = 1;
  uint64_t seed = 0;
  size_t image_pool_size = 64;
  size_t min_distractors = 2;
  size_t max_distractors = 4;

  void Validate() const;
};

TaskInstance GenStage1Task(Rng& rng, const EnvConfig& cfg, uint64_t task_id);

// Throws ValidationError when the pool cannot supply max_distractors.
TaskInstance GenStage2Task(Rng& rng, const EnvConfig& cfg,
                           std::span<const SyntheticImage> pool,
                           uint64_t task_id);

// Token-set Jaccard similarity over lowercase whitespace tokens.
double JaccardSimilarity(std::string_view a, std::string_view b);

// The k pool images least similar to the question, ties broken by
// ascending image_id.
std::vector<uint64_t> SelectDistractors(std::span<const SyntheticImage> pool,
                                        std::string_view question, size_t k);

bool VerifyAnswer(const TaskInstance& task, const CanonicalAnswer& canonical);

// Reference solver. For stage 1 it evaluates the operands; for stage 2 it
// reads the given image and returns nullopt when the image holds no rows
// for the question's metric and year (or lacks a named segment). The
// returned string has the same rendering as the option texts.
std::optional<std::string> DeriveAnswer(const TaskInstance& task,
                                        const SyntheticImage* image);

// Seeded task source. Task(id) depends only on (seed, id), so tasks can be
// generated in any order or in parallel.
class TaskEnvironment {
 public:
  explicit TaskEnvironment(EnvConfig cfg);

  TaskInstance Task(uint64_t task_id) const;
  std::span<const SyntheticImage> pool() const { return pool_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  EnvConfig cfg_;
  std::vector<SyntheticImage> pool_;
};

// Task dump: one JSON object per line with fields in this order:
//   task_id, stage, category, kind, question, options [{label, text}],
//   correct_option, images [{image_id, features [[name, value]],
//   rendered_text}], correct_image_index (null for stage 1), operands,
//   metric, year, segments.
std::string TaskToRecord(const TaskInstance& task);
TaskInstance TaskFromRecord(std::string_view line);
void WriteTaskDump(std::ostream& out, std::span<const TaskInstance> tasks);
std::vector<TaskInstance> ReadTaskDump(std::istream& in);

}  // namespace tarl

#endif  // TARL_SYNTHENV_H_
