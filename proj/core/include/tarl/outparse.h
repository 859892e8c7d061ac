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

#ifndef TARL_OUTPARSE_H_
#define TARL_OUTPARSE_H_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tarl {

// Fields recovered from a tagged model output of the form
//   <think>...</think><answer>...</answer>[<image_selection>...</image_selection>]
//
// Extraction takes the first well-formed span of each tag (an opening tag
// followed later by its closing tag). `format_valid` is stricter: it needs
// exactly one opening and one closing tag for think and answer, in that
// order, no malformed tag fragments, and, when image selection tags appear
// at all, exactly one image selection span after the answer. Text outside
// the spans is allowed.
struct ParsedOutput {
  std::string think_text;
  std::optional<std::string> answer_raw;
  std::optional<std::string> image_selection_raw;
  bool format_valid = false;
  size_t think_token_count = 0;
};

// Total: never throws, malformed input just yields format_valid == false.
ParsedOutput ParseOutput(std::string_view text);

struct Option {
  char label = 'A';
  std::string text;
};

enum class AnswerKind { kChoiceLetter, kNormalizedValue };

struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::kNormalizedValue;
  std::string value;

  friend bool operator==(const CanonicalAnswer&,
                         const CanonicalAnswer&) = default;
};

enum class NormalizeStatus {
  kOk,
  kEmpty,      // nothing left after trimming / normalization
  kAmbiguous,  // matched more than one option
};

struct NormalizeResult {
  NormalizeStatus status = NormalizeStatus::kEmpty;
  CanonicalAnswer answer;
  // Labels that matched, populated for kAmbiguous.
  std::vector<char> matched_labels;

  bool ok() const { return status == NormalizeStatus::kOk; }
};

// Maps a raw answer onto an option letter when possible: a bare label
// ("B", "(B)", "B."), the "B. content" form, the option content itself
// (case and whitespace insensitive), or a value that is numerically
// equal to exactly one option after math normalization. Anything else is
// returned as a normalized value.
NormalizeResult NormalizeAnswer(std::string_view raw,
                                std::span<const Option> options);

// Math normalization used for open-ended answers: lowercases, strips
// LaTeX wrappers, unit words and percent signs, thousands separators and
// whitespace. Numbers, including simple fractions a/b, are printed as a
// decimal with 12 significant digits.
std::string NormalizeMath(std::string_view raw);

// Numeric value of a normalized string: a plain decimal or a/b fraction.
std::optional<double> ParseNumeric(std::string_view normalized);

inline constexpr double kNumericTolerance = 1e-9;

bool AnswersEquivalent(const CanonicalAnswer& pred, const CanonicalAnswer& ref);

}  // namespace tarl

#endif  // TARL_OUTPARSE_H_
