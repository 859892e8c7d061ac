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
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.h"
#include "tarl/errors.h"
#include "tarl/outparse.h"

namespace tarl {
namespace {

TaskEnvironment MakeEnv(int stage, uint64_t seed) {
  EnvConfig cfg;
  cfg.stage = stage;
  cfg.seed = seed;
  return TaskEnvironment(cfg);
}

void ExpectDistinctOptions(const TaskInstance& task) {
  ASSERT_EQ(task.options.size(), 5u);
  std::set<std::string> seen;
  for (size_t i = 0; i < task.options.size(); ++i) {
    EXPECT_EQ(task.options[i].label, static_cast<char>('A' + i));
    seen.insert(NormalizeMath(task.options[i].text));
  }
  EXPECT_EQ(seen.size(), 5u) << task.question;
}

TEST(SynthEnvTest, Stage1AnswersMatchIndependentSolver) {
  const TaskEnvironment env = MakeEnv(1, 42);
  std::set<QuestionKind> kinds;
  for (uint64_t id = 0; id < 1000; ++id) {
    const TaskInstance task = env.Task(id);
    kinds.insert(task.kind);
    EXPECT_TRUE(task.images.empty());
    ExpectDistinctOptions(task);
    const auto solved = oracle::SolveFromText(task);
    ASSERT_TRUE(solved.has_value()) << task.question;
    size_t matches = 0;
    for (const Option& o : task.options) {
      if (oracle::OptionMatches(*solved, o.text)) {
        ++matches;
        EXPECT_EQ(o.label, task.correct_option) << task.question;
      }
    }
    EXPECT_EQ(matches, 1u) << task.question;
  }
  EXPECT_EQ(kinds.size(), 3u);
}

TEST(SynthEnvTest, Stage2AnswersMatchIndependentSolver) {
  const TaskEnvironment env = MakeEnv(2, 42);
  for (uint64_t id = 0; id < 1000; ++id) {
    const TaskInstance task = env.Task(id);
    ASSERT_GE(task.images.size(), 3u);
    ASSERT_LE(task.images.size(), 5u);
    ASSERT_TRUE(task.correct_image_index.has_value());
    ASSERT_LT(*task.correct_image_index, task.images.size());
    ExpectDistinctOptions(task);
    const auto solved = oracle::SolveFromText(task);
    ASSERT_TRUE(solved.has_value()) << task.question;
    size_t matches = 0;
    for (const Option& o : task.options) {
      if (oracle::OptionMatches(*solved, o.text)) {
        ++matches;
        EXPECT_EQ(o.label, task.correct_option) << task.question;
      }
    }
    EXPECT_EQ(matches, 1u) << task.question;
  }
}

TEST(SynthEnvTest, CategoriesRotate) {
  const TaskEnvironment env = MakeEnv(2, 1);
  const Category want[] = {Category::kArithmetic, Category::kStatistical,
                           Category::kExplanation, Category::kKnowledge};
  for (uint64_t id = 0; id < 16; ++id) {
    EXPECT_EQ(env.Task(id).category, want[id % 4]);
  }
}

TEST(SynthEnvTest, DistractorsAreLeastSimilarPoolImages) {
  const TaskEnvironment env = MakeEnv(2, 9);
  const std::vector<SyntheticImage> pool(env.pool().begin(), env.pool().end());
  for (uint64_t id = 0; id < 200; ++id) {
    const TaskInstance task = env.Task(id);
    std::vector<uint64_t> got;
    for (size_t i = 0; i < task.images.size(); ++i) {
      if (i != *task.correct_image_index) got.push_back(task.images[i].image_id);
    }
    std::vector<uint64_t> want =
        oracle::BruteForceDistractors(pool, task.question, got.size());
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(got, want) << task.question;
    EXPECT_EQ(SelectDistractors(env.pool(), task.question, got.size()).size(),
              got.size());
  }
}

TEST(SynthEnvTest, SelectDistractorsMatchesBruteForceRanking) {
  const TaskEnvironment env = MakeEnv(2, 4);
  const std::vector<SyntheticImage> pool(env.pool().begin(), env.pool().end());
  for (size_t k = 1; k <= 6; ++k) {
    const std::string q = "What was the revenue of software in 2019 ?";
    EXPECT_EQ(SelectDistractors(env.pool(), q, k),
              oracle::BruteForceDistractors(pool, q, k));
  }
}

TEST(SynthEnvTest, SameSeedSameTasks) {
  const TaskEnvironment a = MakeEnv(2, 7);
  const TaskEnvironment b = MakeEnv(2, 7);
  const TaskEnvironment c = MakeEnv(2, 8);
  size_t differ = 0;
  for (uint64_t id = 0; id < 50; ++id) {
    EXPECT_EQ(TaskToRecord(a.Task(id)), TaskToRecord(b.Task(id)));
    differ += TaskToRecord(a.Task(id)) != TaskToRecord(c.Task(id));
  }
  EXPECT_GT(differ, 40u);
}

TEST(SynthEnvTest, DumpRoundTrip) {
  for (int stage : {1, 2}) {
    const TaskEnvironment env = MakeEnv(stage, 3);
    std::vector<TaskInstance> tasks;
    for (uint64_t id = 0; id < 20; ++id) tasks.push_back(env.Task(id));
    std::stringstream buf;
    WriteTaskDump(buf, tasks);
    const std::vector<TaskInstance> back = ReadTaskDump(buf);
    ASSERT_EQ(back.size(), tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i) {
      EXPECT_EQ(TaskToRecord(back[i]), TaskToRecord(tasks[i]));
      EXPECT_EQ(back[i].correct_option, tasks[i].correct_option);
      EXPECT_EQ(back[i].correct_image_index, tasks[i].correct_image_index);
    }
  }
}

TEST(SynthEnvTest, MalformedDumpLineIsRejected) {
  EXPECT_THROW(TaskFromRecord("{not json"), ValidationError);
  EXPECT_THROW(TaskFromRecord("{\"task_id\": 1}"), ValidationError);
}

TEST(SynthEnvTest, VerifyAndDerive) {
  const TaskEnvironment env = MakeEnv(2, 5);
  const TaskInstance task = env.Task(3);
  EXPECT_TRUE(VerifyAnswer(
      task, CanonicalAnswer{AnswerKind::kChoiceLetter,
                            std::string(1, task.correct_option)}));
  EXPECT_TRUE(VerifyAnswer(
      task, CanonicalAnswer{AnswerKind::kNormalizedValue,
                            NormalizeMath(task.option(task.correct_option)
                                              .text)}));
  const char wrong = task.correct_option == 'A' ? 'B' : 'A';
  EXPECT_FALSE(VerifyAnswer(
      task, CanonicalAnswer{AnswerKind::kChoiceLetter, std::string(1, wrong)}));
  const auto derived =
      DeriveAnswer(task, &task.images[*task.correct_image_index]);
  ASSERT_TRUE(derived.has_value());
  EXPECT_EQ(NormalizeMath(*derived),
            NormalizeMath(task.option(task.correct_option).text));
}

TEST(SynthEnvTest, PoolTooSmallIsRejected) {
  EnvConfig cfg;
  cfg.stage = 2;
  cfg.image_pool_size = 3;
  EXPECT_THROW(TaskEnvironment{cfg}, ValidationError);
}

TEST(SynthEnvTest, JaccardBasics) {
  EXPECT_DOUBLE_EQ(JaccardSimilarity("a b", "a b"), 1.0);
  EXPECT_DOUBLE_EQ(JaccardSimilarity("a b", "c d"), 0.0);
  EXPECT_DOUBLE_EQ(JaccardSimilarity("A b c", "a b d"), 0.5);
  EXPECT_DOUBLE_EQ(JaccardSimilarity("", ""), 0.0);
}

}  // namespace
}  // namespace tarl
