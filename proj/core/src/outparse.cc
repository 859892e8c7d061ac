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

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "tarl/text.h"

namespace tarl {
namespace {

struct TagScan {
  std::string_view open_tag;
  std::string_view close_tag;
  std::vector<size_t> opens;
  std::vector<size_t> closes;
  size_t stray = 0;

  bool ExactlyOneOrdered() const {
    return opens.size() == 1 && closes.size() == 1 &&
           closes[0] >= opens[0] + open_tag.size();
  }
  size_t OpenEnd() const { return opens[0] + open_tag.size(); }
  size_t CloseEnd() const { return closes[0] + close_tag.size(); }
};

// Collects positions of "<name>" and "</name>". A "<name" or "</name"
// prefix not immediately followed by '>' counts as a stray fragment.
void FindTags(std::string_view text, std::string_view prefix,
              std::vector<size_t>& hits, size_t& stray) {
  size_t pos = text.find(prefix);
  while (pos != std::string_view::npos) {
    const size_t end = pos + prefix.size();
    if (end < text.size() && text[end] == '>') {
      hits.push_back(pos);
    } else {
      ++stray;
    }
    pos = text.find(prefix, pos + 1);
  }
}

TagScan ScanTag(std::string_view text, std::string_view open_tag,
                std::string_view close_tag) {
  TagScan scan{open_tag, close_tag, {}, {}, 0};
  FindTags(text, open_tag.substr(0, open_tag.size() - 1), scan.opens,
           scan.stray);
  FindTags(text, close_tag.substr(0, close_tag.size() - 1), scan.closes,
           scan.stray);
  return scan;
}

// First opening tag followed by a closing tag.
std::optional<std::string_view> FirstSpan(std::string_view text,
                                          const TagScan& scan) {
  if (scan.opens.empty()) return std::nullopt;
  const size_t content_begin = scan.opens.front() + scan.open_tag.size();
  for (size_t close : scan.closes) {
    if (close >= content_begin) {
      return text.substr(content_begin, close - content_begin);
    }
  }
  return std::nullopt;
}

bool IsUpperLabel(char c) { return c >= 'A' && c <= 'Z'; }

// "B", "(B)", "B.", "B)", "B:", "(B)."
std::optional<char> BareLabel(std::string_view s) {
  size_t i = 0;
  const bool paren = !s.empty() && s[0] == '(';
  if (paren) ++i;
  if (i >= s.size() || !IsUpperLabel(s[i])) return std::nullopt;
  const char label = s[i++];
  if (paren) {
    if (i >= s.size() || s[i] != ')') return std::nullopt;
    ++i;
  }
  if (i < s.size() && (s[i] == '.' || s[i] == ')' || s[i] == ':')) ++i;
  if (i != s.size()) return std::nullopt;
  return label;
}

// "B. content", "B) content", "B: content", "(B) content"
std::optional<char> PrefixedLabel(std::string_view s) {
  size_t i = 0;
  const bool paren = !s.empty() && s[0] == '(';
  if (paren) ++i;
  if (i >= s.size() || !IsUpperLabel(s[i])) return std::nullopt;
  const char label = s[i++];
  if (i >= s.size()) return std::nullopt;
  if (paren) {
    if (s[i] != ')') return std::nullopt;
    ++i;
    if (i < s.size() && (s[i] == '.' || s[i] == ':')) ++i;
  } else if (s[i] == '.' || s[i] == ')' || s[i] == ':') {
    ++i;
  } else {
    return std::nullopt;
  }
  if (i >= s.size() || !std::isspace(static_cast<unsigned char>(s[i]))) {
    return std::nullopt;
  }
  if (Trim(s.substr(i)).empty()) return std::nullopt;
  return label;
}

void ReplaceAll(std::string& s, std::string_view from, std::string_view to) {
  size_t pos = s.find(from);
  while (pos != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos = s.find(from, pos + to.size());
  }
}

// Reads a brace group starting at s[pos] == '{'. Returns the content and
// advances pos past the closing brace.
std::optional<std::string> BraceGroup(const std::string& s, size_t& pos) {
  if (pos >= s.size() || s[pos] != '{') return std::nullopt;
  int depth = 0;
  for (size_t i = pos; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) {
      std::string content = s.substr(pos + 1, i - pos - 1);
      pos = i + 1;
      return content;
    }
  }
  return std::nullopt;
}

void RewriteFractions(std::string& s) {
  ReplaceAll(s, "\\dfrac", "\\frac");
  ReplaceAll(s, "\\tfrac", "\\frac");
  size_t pos = s.find("\\frac");
  while (pos != std::string::npos) {
    size_t cursor = pos + 5;
    auto num = BraceGroup(s, cursor);
    auto den = num ? BraceGroup(s, cursor) : std::nullopt;
    if (!num || !den) break;
    const std::string rewritten = *num + "/" + *den;
    s.replace(pos, cursor - pos, rewritten);
    pos = s.find("\\frac", pos + rewritten.size());
  }
}

void UnwrapText(std::string& s) {
  for (std::string_view macro : {"\\text", "\\mathrm", "\\mbox"}) {
    size_t pos = s.find(macro);
    while (pos != std::string::npos) {
      size_t cursor = pos + macro.size();
      auto body = BraceGroup(s, cursor);
      if (!body) break;
      s.replace(pos, cursor - pos, " " + *body + " ");
      pos = s.find(macro, pos);
    }
  }
}

constexpr std::array<std::string_view, 22> kUnitWords = {
    "%",       "percent", "percentage", "pct",   "points", "pts",
    "usd",     "dollars", "dollar",     "yuan",  "rmb",    "eur",
    "euros",   "units",   "unit",       "cm",    "mm",     "km",
    "kg",      "degrees", "million",    "billion"};

bool IsUnitWord(std::string_view tok) {
  return std::find(kUnitWords.begin(), kUnitWords.end(), tok) !=
         kUnitWords.end();
}

bool IsNumericLiteral(std::string_view s) {
  if (s.empty()) return false;
  bool digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c != '+' && c != '-' && c != '.' && c != 'e') {
      return false;
    }
  }
  if (!digit) return false;
  std::string buf(s);
  char* end = nullptr;
  std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size();
}

// Strips a trailing unit from tokens such as "12kg" or "9.18%".
std::string StripUnitSuffix(std::string_view tok) {
  while (!tok.empty() && tok.back() == '%') tok.remove_suffix(1);
  for (std::string_view unit : kUnitWords) {
    if (tok.size() > unit.size() && tok.ends_with(unit) &&
        IsNumericLiteral(tok.substr(0, tok.size() - unit.size()))) {
      return std::string(tok.substr(0, tok.size() - unit.size()));
    }
  }
  return std::string(tok);
}

void RemoveThousandsSeparators(std::string& s) {
  std::string out;
  out.reserve(s.size());
  auto digit = [&](size_t i) {
    return i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]));
  };
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && digit(i - 1) && digit(i + 1) &&
        digit(i + 2) && digit(i + 3) && !digit(i + 4)) {
      continue;
    }
    out.push_back(s[i]);
  }
  s = std::move(out);
}

std::string FormatNumber(double v) {
  if (v == 0.0) return "0";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string_view StripParens(std::string_view s) {
  while (s.size() >= 2 && s.front() == '(' && s.back() == ')') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

ParsedOutput ParseOutput(std::string_view text) {
  const TagScan think = ScanTag(text, "<think>", "</think>");
  const TagScan answer = ScanTag(text, "<answer>", "</answer>");
  const TagScan image =
      ScanTag(text, "<image_selection>", "</image_selection>");

  ParsedOutput out;
  if (auto span = FirstSpan(text, think)) out.think_text = std::string(*span);
  if (auto span = FirstSpan(text, answer)) out.answer_raw = std::string(*span);
  if (auto span = FirstSpan(text, image)) {
    out.image_selection_raw = std::string(*span);
  }
  out.think_token_count = CountTokens(out.think_text);

  bool valid = think.stray == 0 && answer.stray == 0 && image.stray == 0 &&
               think.ExactlyOneOrdered() && answer.ExactlyOneOrdered();
  if (valid) valid = think.CloseEnd() <= answer.opens[0];
  if (valid && !(image.opens.empty() && image.closes.empty())) {
    valid = image.ExactlyOneOrdered() && answer.CloseEnd() <= image.opens[0];
  }
  out.format_valid = valid;
  return out;
}

std::optional<double> ParseNumeric(std::string_view normalized) {
  std::string_view s = StripParens(Trim(normalized));
  const size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    if (s.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    auto num = ParseNumeric(s.substr(0, slash));
    auto den = ParseNumeric(s.substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  if (!IsNumericLiteral(s)) return std::nullopt;
  const double v = std::strtod(std::string(s).c_str(), nullptr);
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::string NormalizeMath(std::string_view raw) {
  std::string s = ToLower(Trim(raw));
  RewriteFractions(s);
  UnwrapText(s);
  for (std::string_view junk :
       {"\\left", "\\right", "\\!", "\\,", "\\;", "\\ ", "$"}) {
    ReplaceAll(s, junk, " ");
  }
  ReplaceAll(s, "\\%", "%");
  ReplaceAll(s, "\\cdot", "*");
  ReplaceAll(s, "\\times", "*");

  std::string joined;
  for (std::string_view tok : SplitWhitespace(s)) {
    if (IsUnitWord(tok)) continue;
    joined += StripUnitSuffix(tok);
  }
  RemoveThousandsSeparators(joined);
  while (!joined.empty() && joined.back() == '.') joined.pop_back();

  if (auto v = ParseNumeric(joined)) return FormatNumber(*v);
  return joined;
}

bool AnswersEquivalent(const CanonicalAnswer& pred,
                       const CanonicalAnswer& ref) {
  if (pred.kind != ref.kind) return false;
  if (pred.kind == AnswerKind::kChoiceLetter) return pred.value == ref.value;
  auto a = ParseNumeric(pred.value);
  auto b = ParseNumeric(ref.value);
  if (a && b) return std::fabs(*a - *b) <= kNumericTolerance;
  return pred.value == ref.value;
}

NormalizeResult NormalizeAnswer(std::string_view raw,
                                std::span<const Option> options) {
  NormalizeResult result;
  const std::string_view trimmed = Trim(raw);
  if (trimmed.empty()) return result;

  auto has_label = [&](char label) {
    return std::any_of(options.begin(), options.end(),
                       [&](const Option& o) { return o.label == label; });
  };
  auto choose = [&](char label) {
    result.status = NormalizeStatus::kOk;
    result.answer = {AnswerKind::kChoiceLetter, std::string(1, label)};
    return result;
  };
  auto resolve = [&](const std::vector<char>& matches) {
    if (matches.size() == 1) return choose(matches[0]);
    result.status = NormalizeStatus::kAmbiguous;
    result.matched_labels = matches;
    return result;
  };

  if (auto label = BareLabel(trimmed); label && has_label(*label)) {
    return choose(*label);
  }
  if (auto label = PrefixedLabel(trimmed); label && has_label(*label)) {
    return choose(*label);
  }

  const std::string collapsed = CollapseLower(trimmed);
  std::vector<char> matches;
  for (const Option& o : options) {
    if (CollapseLower(o.text) == collapsed) matches.push_back(o.label);
  }
  if (!matches.empty()) return resolve(matches);

  const CanonicalAnswer value{AnswerKind::kNormalizedValue,
                              NormalizeMath(trimmed)};
  if (value.value.empty()) return result;
  for (const Option& o : options) {
    const CanonicalAnswer option_value{AnswerKind::kNormalizedValue,
                                       NormalizeMath(o.text)};
    if (!option_value.value.empty() && AnswersEquivalent(value, option_value)) {
      matches.push_back(o.label);
    }
  }
  if (!matches.empty()) return resolve(matches);

  result.status = NormalizeStatus::kOk;
  result.answer = value;
  return result;
}

}  // namespace tarl
