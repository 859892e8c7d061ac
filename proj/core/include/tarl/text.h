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

#ifndef TARL_TEXT_H_
#define TARL_TEXT_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tarl {

// Whitespace-delimited tokens. Views point into `text`.
std::vector<std::string_view> SplitWhitespace(std::string_view text);
size_t CountTokens(std::string_view text);

std::string_view Trim(std::string_view text);
std::string ToLower(std::string_view text);
// Lowercases and collapses runs of whitespace to one space.
std::string CollapseLower(std::string_view text);

// Seeded FNV-1a; stable across platforms and standard libraries.
uint64_t HashToken(std::string_view token, uint64_t seed);

std::string Join(const std::vector<std::string>& parts, std::string_view sep);

// Shortest "%.*g" rendering that parses back to the same double.
std::string FormatDouble(double value);

}  // namespace tarl

#endif  // TARL_TEXT_H_
