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

#include "tarl/outparse.h"

#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oracles.h"
#include "tarl/policy.h"
#include "tarl/random.h"
#include "tarl/synthenv.h"

namespace tarl {
namespace {

const std::vector<Option> kOptions = {
    {'A', "12"}, {'B', "9.18%"}, {'C', "0.5"}, {'D', "-3"}, {'E', "100"}};

TEST(ParseOutputTest, ThinkThenAnswer) {
  ParsedOutput p = ParseOutput("<think>compute 2+3</think><answer>B</answer>");
  EXPECT_TRUE(p.format_valid);
  EXPECT_EQ(p.think_text, "compute 2+3");
  ASSERT_TRUE(p.answer_raw.has_value());
  EXPECT_EQ(*p.answer_raw, "B");
  EXPECT_FALSE(p.image_selection_raw.has_value());
  EXPECT_EQ(p.think_token_count, 2u);
}

TEST(ParseOutputTest, MissingThinkIsInvalid) {
  EXPECT_FALSE(ParseOutput("<answer>B</answer>").format_valid);
}

TEST(ParseOutputTest, ImageSelectionSpan) {
  ParsedOutput p = ParseOutput(
      "<think>a</think><answer>B</answer><image_selection>0</image_selection>");
  EXPECT_TRUE(p.format_valid);
  ASSERT_TRUE(p.image_selection_raw.has_value());
  EXPECT_EQ(*p.image_selection_raw, "0");
}

TEST(ParseOutputTest, DuplicateThinkIsInvalid) {
  EXPECT_FALSE(
      ParseOutput("<think>x</think><think>y</think><answer>A</answer>")
          .format_valid);
}

TEST(ParseOutputTest, TokenCountZeroIffBlank) {
  for (const char* think : {"", " ", "\n\t  ", "a", " a  b "}) {
    const std::string text =
        std::string("<think>") + think + "</think><answer>A</answer>";
    const ParsedOutput p = ParseOutput(text);
    const bool blank =
        std::string(think).find_first_not_of(" \t\n") == std::string::npos;
    EXPECT_EQ(p.think_token_count == 0, blank) << think;
  }
}

TEST(ParseOutputTest, TotalOnRandomStrings) {
  const std::vector<std::string> pieces = {
      "<think>", "</think>", "<answer>", "</answer>", "<image_selection>",
      "</image_selection>", "<", ">", "/", "think", "A", " ", "0", "<think",
      "answer>"};
  Rng rng(17);
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    const size_t n = rng.Below(12);
    for (size_t k = 0; k < n; ++k) text += pieces[rng.Below(pieces.size())];
    const ParsedOutput a = ParseOutput(text);
    const ParsedOutput b = ParseOutput(text);
    EXPECT_EQ(a.format_valid, b.format_valid);
    EXPECT_EQ(a.think_text, b.think_text);
    if (a.format_valid) {
      EXPECT_TRUE(a.answer_raw.has_value()) << text;
    }
  }
}

TEST(NormalizeAnswerTest, LetterDotPercentForm) {
  NormalizeResult r = NormalizeAnswer("B. 9.18%", kOptions);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.answer.kind, AnswerKind::kChoiceLetter);
  EXPECT_EQ(r.answer.value, "B");
}

TEST(NormalizeAnswerTest, BareLetter) {
  NormalizeResult r = NormalizeAnswer("A", kOptions);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.answer, (CanonicalAnswer{AnswerKind::kChoiceLetter, "A"}));
}

TEST(NormalizeAnswerTest, FractionMatchesDecimalOption) {
  NormalizeResult r = NormalizeAnswer("1/2", kOptions);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.answer.value, "C");
}

TEST(NormalizeAnswerTest, AmbiguousIsDistinctFromValid) {
  const std::vector<Option> dup = {{'A', "1/2"}, {'B', "0.5"}, {'C', "2"}};
  NormalizeResult r = NormalizeAnswer("0.50", dup);
  EXPECT_EQ(r.status, NormalizeStatus::kAmbiguous);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.matched_labels, (std::vector<char>{'A', 'B'}));
}

TEST(NormalizeAnswerTest, EmptyAfterTrim) {
  EXPECT_EQ(NormalizeAnswer("   ", kOptions).status, NormalizeStatus::kEmpty);
}

TEST(NormalizeAnswerTest, IdempotentOnOwnOutput) {
  for (const char* raw : {"42", "1/3", "\\frac{3}{4}", "$1,250", "7.50%",
                          "B", "B. 9.18%", "-0.125", "12 kg", "xyz"}) {
    NormalizeResult first = NormalizeAnswer(raw, kOptions);
    ASSERT_TRUE(first.ok()) << raw;
    NormalizeResult second = NormalizeAnswer(first.answer.value, kOptions);
    ASSERT_TRUE(second.ok()) << raw;
    EXPECT_EQ(first.answer, second.answer) << raw;
  }
}

TEST(AnswersEquivalentTest, Examples) {
  const CanonicalAnswer b{AnswerKind::kChoiceLetter, "B"};
  const CanonicalAnswer c{AnswerKind::kChoiceLetter, "C"};
  EXPECT_TRUE(AnswersEquivalent(b, b));
  EXPECT_FALSE(AnswersEquivalent(b, c));
  const CanonicalAnswer x{AnswerKind::kNormalizedValue,
                          NormalizeMath("0.500000000000")};
  const CanonicalAnswer y{AnswerKind::kNormalizedValue, NormalizeMath("0.5")};
  EXPECT_TRUE(AnswersEquivalent(x, y));
  const CanonicalAnswer letter_b{AnswerKind::kChoiceLetter, "0.5"};
  EXPECT_FALSE(AnswersEquivalent(x, letter_b));
}

// Every pair from a corpus of numeric spellings must compare equal exactly
// when the exact rational values agree.
TEST(AnswersEquivalentTest, AgreesWithRationalOracle) {
  const std::vector<std::string> corpus = {
      "0.5",   "1/2",   "0.500000000000", "2/4",  "0.25", "1/4",  "3",
      "3.0",   "6/2",   "-3",             "-6/2", "0.1",  "1/10", "0.3333",
      "1/3",   "2/3",   "0.75",           "3/4",  "1250", "1250.00",
      "-0.125", "-1/8", "10",             "100/10", "0"};
  for (const std::string& a : corpus) {
    for (const std::string& b : corpus) {
      const auto ra = oracle::ParseRational(a);
      const auto rb = oracle::ParseRational(b);
      ASSERT_TRUE(ra && rb);
      const CanonicalAnswer ca{AnswerKind::kNormalizedValue, NormalizeMath(a)};
      const CanonicalAnswer cb{AnswerKind::kNormalizedValue, NormalizeMath(b)};
      EXPECT_EQ(AnswersEquivalent(ca, cb), oracle::RationalEqual(*ra, *rb))
          << a << " vs " << b;
    }
  }
}

TEST(NormalizeMathTest, Forms) {
  EXPECT_EQ(NormalizeMath("\\frac{1}{2}"), NormalizeMath("0.5"));
  EXPECT_EQ(NormalizeMath("9.18%"), NormalizeMath("9.18"));
  EXPECT_EQ(NormalizeMath("$1,000"), NormalizeMath("1000"));
  EXPECT_EQ(NormalizeMath("12 dollars"), NormalizeMath("12"));
  EXPECT_EQ(NormalizeMath("-0"), "0");
}

struct CorpusCase {
  std::string name;
  nlohmann::json want;
};

std::vector<CorpusCase> LoadCorpus(std::vector<Option>& defaults) {
  std::ifstream in(std::string(TARL_TEST_DATA_DIR) + "/parser_corpus.jsonl");
  std::vector<CorpusCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("default_options")) {
      for (const auto& o : j["default_options"]) {
        defaults.push_back({o[0].get<std::string>()[0], o[1].get<std::string>()});
      }
      continue;
    }
    cases.push_back({j["name"].get<std::string>(), j});
  }
  return cases;
}

TEST(ParserCorpusTest, AllCasesPass) {
  std::vector<Option> defaults;
  const std::vector<CorpusCase> cases = LoadCorpus(defaults);
  ASSERT_EQ(cases.size(), 30u);
  for (const CorpusCase& c : cases) {
    SCOPED_TRACE(c.name);
    const nlohmann::json& j = c.want;
    const ParsedOutput p = ParseOutput(j["text"].get<std::string>());
    EXPECT_EQ(p.format_valid, j["format_valid"].get<bool>());
    EXPECT_EQ(p.think_text, j["think"].get<std::string>());
    EXPECT_EQ(p.think_token_count, j["think_tokens"].get<size_t>());
    if (j["answer_raw"].is_null()) {
      EXPECT_FALSE(p.answer_raw.has_value());
    } else {
      ASSERT_TRUE(p.answer_raw.has_value());
      EXPECT_EQ(*p.answer_raw, j["answer_raw"].get<std::string>());
    }
    if (j["image_selection_raw"].is_null()) {
      EXPECT_FALSE(p.image_selection_raw.has_value());
    } else {
      ASSERT_TRUE(p.image_selection_raw.has_value());
      EXPECT_EQ(*p.image_selection_raw,
                j["image_selection_raw"].get<std::string>());
    }
    if (!j.contains("canonical")) continue;
    std::vector<Option> options = defaults;
    if (j.contains("options")) {
      options.clear();
      for (const auto& o : j["options"]) {
        options.push_back(
            {o[0].get<std::string>()[0], o[1].get<std::string>()});
      }
    }
    const NormalizeResult r = NormalizeAnswer(*p.answer_raw, options);
    const nlohmann::json& want = j["canonical"];
    if (want.contains("status")) {
      EXPECT_EQ(r.status, NormalizeStatus::kAmbiguous);
      continue;
    }
    ASSERT_TRUE(r.ok());
    const AnswerKind kind = want["kind"] == "letter"
                                ? AnswerKind::kChoiceLetter
                                : AnswerKind::kNormalizedValue;
    EXPECT_EQ(r.answer.kind, kind);
    EXPECT_EQ(r.answer.value, want["value"].get<std::string>());
  }
}

// Rendering a sampled rollout and parsing it back recovers the slots.
TEST(ParseOutputTest, RoundTripsRenderedRollouts) {
  PolicyConfig cfg;
  for (int stage : {1, 2}) {
    EnvConfig env_cfg;
    env_cfg.stage = stage;
    env_cfg.seed = 3;
    TaskEnvironment env(env_cfg);
    Rng rng(5);
    for (uint64_t id = 0; id < 40; ++id) {
      const TaskInstance task = env.Task(id);
      SlotChoices choices;
      choices.answer = rng.Below(task.options.size());
      choices.length_bucket = rng.Below(cfg.length_buckets.size());
      choices.quality = rng.Below(2);
      if (!task.images.empty()) choices.image = rng.Below(task.images.size());
      const ParsedOutput p = ParseOutput(Render(choices, task, cfg));
      EXPECT_TRUE(p.format_valid);
      ASSERT_TRUE(p.answer_raw.has_value());
      EXPECT_EQ(*p.answer_raw,
                std::string(1, task.options[choices.answer].label));
      EXPECT_EQ(p.think_token_count,
                cfg.length_buckets[choices.length_bucket]);
      if (choices.image) {
        ASSERT_TRUE(p.image_selection_raw.has_value());
        EXPECT_EQ(*p.image_selection_raw, std::to_string(*choices.image));
      } else {
        EXPECT_FALSE(p.image_selection_raw.has_value());
      }
    }
  }
}

}  // namespace
}  // namespace tarl
