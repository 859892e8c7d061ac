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

#include "tarl/config.h"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "tarl/errors.h"
#include "tarl/text.h"

namespace tarl {
namespace {

[[noreturn]] void BadValue(const std::string& key, const std::string& value,
                           std::string_view expected) {
  throw ValidationError("invalid value '" + value + "' for " + key +
                        " (expected " + std::string(expected) + ")");
}

uint64_t ToUnsigned(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    BadValue(key, value, "a non-negative integer");
  }
  return out;
}

size_t ToSize(const std::string& key, const std::string& value) {
  return static_cast<size_t>(ToUnsigned(key, value));
}

double ToDouble(const std::string& key, const std::string& value) {
  if (value.empty()) BadValue(key, value, "a number");
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || errno == ERANGE) {
    BadValue(key, value, "a number");
  }
  return out;
}

bool ToBool(const std::string& key, const std::string& value) {
  const std::string v = ToLower(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  BadValue(key, value, "true or false");
}

std::vector<size_t> ToSizeList(const std::string& key,
                               const std::string& value) {
  std::vector<size_t> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = std::string(Trim(item));
    if (item.empty()) BadValue(key, value, "a comma-separated integer list");
    out.push_back(ToSize(key, item));
  }
  if (out.empty()) BadValue(key, value, "a comma-separated integer list");
  return out;
}

using Setter = void (*)(TrainerConfig&, const std::string&, const std::string&);

const std::map<std::string, Setter, std::less<>>& Setters() {
  static const auto* table = new std::map<std::string, Setter, std::less<>>{
      {"stage", [](TrainerConfig& c, const std::string& k,
                   const std::string& v) {
         c.stage = static_cast<int>(ToUnsigned(k, v));
       }},
      {"steps", [](TrainerConfig& c, const std::string& k,
                   const std::string& v) { c.steps = ToSize(k, v); }},
      {"train_batch_size",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.train_batch_size = ToSize(k, v);
       }},
      {"n_samples_per_prompt",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.samples_per_prompt = ToSize(k, v);
       }},
      {"temperature", [](TrainerConfig& c, const std::string& k,
                         const std::string& v) {
         c.temperature = ToDouble(k, v);
       }},
      {"seed", [](TrainerConfig& c, const std::string& k,
                  const std::string& v) { c.seed = ToUnsigned(k, v); }},
      {"threads", [](TrainerConfig& c, const std::string& k,
                     const std::string& v) { c.threads = ToSize(k, v); }},
      {"record_wall_time",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.record_wall_time = ToBool(k, v);
       }},
      // One on-policy pass per batch is the only supported schedule.
      {"num_epochs", [](TrainerConfig&, const std::string& k,
                        const std::string& v) {
         if (ToUnsigned(k, v) != 1) {
           throw ValidationError("num_epochs must be 1");
         }
       }},
      {"step_granularity", [](TrainerConfig&, const std::string&,
                              const std::string& v) {
         if (v != "slot") {
           throw ValidationError("step_granularity must be 'slot'");
         }
       }},
      {"kl_coef", [](TrainerConfig& c, const std::string& k,
                     const std::string& v) {
         c.grpo.kl_coef = ToDouble(k, v);
       }},
      {"clip_epsilon", [](TrainerConfig& c, const std::string& k,
                          const std::string& v) {
         c.grpo.clip_epsilon = ToDouble(k, v);
       }},
      {"actor_learning_rate",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.grpo.learning_rate = ToDouble(k, v);
       }},
      {"std_floor", [](TrainerConfig& c, const std::string& k,
                       const std::string& v) {
         c.grpo.std_floor = ToDouble(k, v);
       }},
      {"format_weight", [](TrainerConfig& c, const std::string& k,
                           const std::string& v) {
         c.weights.format = ToDouble(k, v);
       }},
      {"accuracy_weight", [](TrainerConfig& c, const std::string& k,
                             const std::string& v) {
         c.weights.accuracy = ToDouble(k, v);
       }},
      {"length_weight", [](TrainerConfig& c, const std::string& k,
                           const std::string& v) {
         c.weights.length = ToDouble(k, v);
       }},
      {"bert_reward_weight",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.weights.adversarial = ToDouble(k, v);
       }},
      {"image_selection_weight",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.weights.image = ToDouble(k, v);
       }},
      {"minimum_target_lengths",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.length.l_min = ToSize(k, v);
       }},
      {"optimal_target_lengths",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.length.l_opt = ToSize(k, v);
       }},
      {"maximum_target_lengths",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.length.l_max = ToSize(k, v);
       }},
      {"r_min", [](TrainerConfig& c, const std::string& k,
                   const std::string& v) { c.length.r_min = ToDouble(k, v); }},
      {"r_pen", [](TrainerConfig& c, const std::string& k,
                   const std::string& v) { c.length.r_pen = ToDouble(k, v); }},
      {"gamma", [](TrainerConfig& c, const std::string& k,
                   const std::string& v) { c.length.gamma = ToDouble(k, v); }},
      {"bert_train_interval",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.discriminator.interval = ToSize(k, v);
       }},
      {"bert_training_epochs",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.discriminator.train.epochs = ToSize(k, v);
       }},
      {"bert_batch_size",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.discriminator.train.batch_size = ToSize(k, v);
       }},
      {"bert_learning_rate",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.discriminator.train.learning_rate = ToDouble(k, v);
       }},
      {"bert_vocab_hash_dim",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.discriminator.vocab_hash_dim = ToSize(k, v);
       }},
      {"bert_dim", [](TrainerConfig& c, const std::string& k,
                      const std::string& v) {
         c.discriminator.dim = ToSize(k, v);
       }},
      {"bert_hash_seed", [](TrainerConfig& c, const std::string& k,
                            const std::string& v) {
         c.discriminator.hash_seed = ToUnsigned(k, v);
       }},
      {"bert_init_scale", [](TrainerConfig& c, const std::string& k,
                             const std::string& v) {
         c.discriminator.init_scale = ToDouble(k, v);
       }},
      {"f", [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.policy.feature_dim = ToSize(k, v);
       }},
      {"length_buckets", [](TrainerConfig& c, const std::string& k,
                            const std::string& v) {
         c.policy.length_buckets = ToSizeList(k, v);
       }},
      {"hash_seed", [](TrainerConfig& c, const std::string& k,
                       const std::string& v) {
         c.policy.hash_seed = ToUnsigned(k, v);
       }},
      {"image_pool_size", [](TrainerConfig& c, const std::string& k,
                             const std::string& v) {
         c.image_pool_size = ToSize(k, v);
       }},
  };
  return *table;
}

}  // namespace

const std::vector<std::string>& KnownConfigKeys() {
  static const auto* keys = [] {
    auto* out = new std::vector<std::string>;
    for (const auto& [key, setter] : Setters()) out->push_back(key);
    return out;
  }();
  return *keys;
}

std::string EnvVarForKey(std::string_view key) {
  std::string name(kConfigEnvPrefix);
  for (char c : key) {
    name.push_back(static_cast<char>(
        std::toupper(static_cast<unsigned char>(c))));
  }
  return name;
}

std::optional<std::string> ProcessEnv(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  if (value == nullptr) return std::nullopt;
  return std::string(value);
}

std::vector<ConfigEntry> ParseConfigText(std::string_view text) {
  std::vector<ConfigEntry> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    const std::string line(Trim(raw));
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) {
      throw ValidationError(where + ": expected key = value");
    }
    ConfigEntry e;
    e.key = Trim(line.substr(0, eq));
    e.value = Trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty()) throw ValidationError(where + ": empty key");
    if (Setters().find(e.key) == Setters().end()) {
      throw ValidationError(where + ": unknown config key '" + e.key + "'");
    }
    for (const ConfigEntry& prev : entries) {
      if (prev.key == e.key) {
        throw ValidationError(where + ": duplicate config key '" + e.key +
                              "'");
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

TrainerConfig BuildTrainerConfig(std::span<const ConfigEntry> entries,
                                 const ConfigOverrides& overrides,
                                 const EnvLookup& env) {
  std::map<std::string, std::string, std::less<>> values;
  for (const ConfigEntry& e : entries) values[e.key] = e.value;
  if (env) {
    for (const std::string& key : KnownConfigKeys()) {
      if (std::optional<std::string> v = env(EnvVarForKey(key))) {
        values[key] = Trim(*v);
      }
    }
  }

  TrainerConfig cfg;
  if (auto it = values.find("stage"); it != values.end()) {
    Setters().at("stage")(cfg, it->first, it->second);
    if (overrides.stage && *overrides.stage != cfg.stage) {
      throw ValidationError("config stage " + std::to_string(cfg.stage) +
                            " does not match requested stage " +
                            std::to_string(*overrides.stage));
    }
  }
  if (overrides.stage) cfg.stage = *overrides.stage;
  if (cfg.stage != 1 && cfg.stage != 2) {
    throw ValidationError("stage must be 1 or 2");
  }
  cfg.weights = cfg.stage == 1
                    ? RewardWeights::Stage1(0.5)
                    : RewardWeights::Stage2(0.1, 0.5, 0.05, 0.15, 0.2);

  for (const auto& [key, value] : values) {
    if (key == "stage") continue;
    Setters().at(key)(cfg, key, value);
  }
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.steps) cfg.steps = *overrides.steps;
  if (overrides.threads) cfg.threads = *overrides.threads;
  cfg.Validate();
  return cfg;
}

TrainerConfig LoadTrainerConfig(const std::string& path,
                                const ConfigOverrides& overrides,
                                const EnvLookup& env, std::string* raw_text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (raw_text != nullptr) *raw_text = text;
  const std::vector<ConfigEntry> entries = ParseConfigText(text);
  return BuildTrainerConfig(entries, overrides, env);
}

}  // namespace tarl
