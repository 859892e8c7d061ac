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

#ifndef TARL_CONFIG_H_
#define TARL_CONFIG_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tarl/trainkit.h"

namespace tarl {

// Trainer config files are flat `key = value` lines. Blank lines and text
// after '#' are ignored. Every key may be overridden by an environment
// variable named kConfigEnvPrefix + the key in upper case, e.g.
// TARL_KL_COEF=0.05.
inline constexpr std::string_view kConfigEnvPrefix = "TARL_";

struct ConfigEntry {
  std::string key;
  std::string value;
  size_t line = 0;
};

// Throws ValidationError on malformed lines, unknown keys and duplicates.
std::vector<ConfigEntry> ParseConfigText(std::string_view text);

const std::vector<std::string>& KnownConfigKeys();
std::string EnvVarForKey(std::string_view key);

using EnvLookup =
    std::function<std::optional<std::string>(const std::string& name)>;
std::optional<std::string> ProcessEnv(const std::string& name);

// Values that command-line flags supply on top of the file and the
// environment.
struct ConfigOverrides {
  std::optional<int> stage;
  std::optional<uint64_t> seed;
  std::optional<size_t> steps;
  std::optional<size_t> threads;
};

// Precedence, lowest first: built-in defaults, file, environment, flags.
// A --stage flag that disagrees with a stage key in the file is an error.
// Reward weights default by stage: (0.5, 0.5) in stage 1 and
// (0.1, 0.5, 0.05, 0.15, 0.2) in stage 2. The result is validated.
TrainerConfig BuildTrainerConfig(std::span<const ConfigEntry> entries,
                                 const ConfigOverrides& overrides = {},
                                 const EnvLookup& env = ProcessEnv);

// Reads and builds in one go. Throws ValidationError when the file is
// missing or invalid.
TrainerConfig LoadTrainerConfig(const std::string& path,
                                const ConfigOverrides& overrides = {},
                                const EnvLookup& env = ProcessEnv,
                                std::string* raw_text = nullptr);

}  // namespace tarl

#endif  // TARL_CONFIG_H_
