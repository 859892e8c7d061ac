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

#include "cli.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tarl/adversary.h"
#include "tarl/config.h"
#include "tarl/errors.h"
#include "tarl/policy.h"
#include "tarl/rewards.h"
#include "tarl/synthenv.h"
#include "tarl/text.h"
#include "tarl/trainkit.h"

#ifndef TARL_VERSION
#define TARL_VERSION "unknown"
#endif

namespace tarl::cli {
namespace {

namespace fs = std::filesystem;

std::string UtcNow() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WriteJsonFile(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed to write " + path.string());
}

std::ofstream OpenOutput(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

struct TrainArgs {
  std::string config_path;
  std::optional<int> stage;
  std::optional<uint64_t> seed;
  std::optional<size_t> steps;
  std::optional<size_t> threads;
  std::string out_dir = "run";
  std::string init_policy;
  std::string init_discriminator;
};

int CmdTrain(const TrainArgs& a, std::ostream& out) {
  ConfigOverrides overrides;
  overrides.stage = a.stage;
  overrides.seed = a.seed;
  overrides.steps = a.steps;
  overrides.threads = a.threads;
  std::string raw;
  TrainerConfig cfg = LoadTrainerConfig(a.config_path, overrides, ProcessEnv,
                                        &raw);

  SlotPolicyParams policy = SlotPolicyParams::ForConfig(cfg.policy);
  if (!a.init_policy.empty()) {
    std::ifstream in(a.init_policy);
    if (!in) throw ValidationError("cannot open policy " + a.init_policy);
    PolicyConfig loaded_cfg;
    policy = LoadPolicy(in, loaded_cfg);
    if (loaded_cfg.feature_dim != cfg.policy.feature_dim ||
        loaded_cfg.n_options != cfg.policy.n_options ||
        loaded_cfg.max_images != cfg.policy.max_images ||
        loaded_cfg.length_buckets != cfg.policy.length_buckets ||
        loaded_cfg.hash_seed != cfg.policy.hash_seed) {
      throw ValidationError(
          "initial policy was saved with a different policy config");
    }
  }
  std::optional<DiscriminatorModel> disc;
  if (!a.init_discriminator.empty()) {
    std::ifstream in(a.init_discriminator);
    if (!in) {
      throw ValidationError("cannot open discriminator " +
                            a.init_discriminator);
    }
    disc = DiscriminatorModel::Load(in);
  }

  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  cfg.checkpoint_dir = dir.string();

  nlohmann::ordered_json manifest;
  manifest["version"] = TARL_VERSION;
  manifest["config_path"] = a.config_path;
  manifest["config_snapshot"] = raw;
  manifest["stage"] = cfg.stage;
  manifest["seed"] = cfg.seed;
  manifest["steps"] = cfg.steps;
  manifest["started_at"] = UtcNow();
  manifest["finished_at"] = nullptr;
  manifest["outputs"] = {
      {"metrics_jsonl", (dir / "metrics.jsonl").string()},
      {"metrics_csv", (dir / "metrics.csv").string()},
      {"policy_checkpoint", (dir / "policy.ckpt").string()},
      {"discriminator_checkpoint",
       cfg.stage == 2 ? nlohmann::ordered_json((dir / "discriminator.ckpt")
                                                   .string())
                      : nlohmann::ordered_json(nullptr)}};
  WriteJsonFile(dir / "manifest.json", manifest);

  TaskEnvironment env(cfg.Env());
  std::ofstream jsonl = OpenOutput(dir / "metrics.jsonl");
  std::ofstream csv = OpenOutput(dir / "metrics.csv");
  StreamMetricsSink sink(&jsonl, &csv);
  DiscriminatorModel* disc_ptr = disc ? &*disc : nullptr;
  DiscriminatorModel fresh;
  if (disc_ptr == nullptr && cfg.stage == 2) {
    const DiscriminatorSettings& d = cfg.discriminator;
    fresh = DiscriminatorModel(d.vocab_hash_dim, d.dim, d.hash_seed,
                               StreamSeed(cfg.seed, {0x64697363ULL}),
                               d.init_scale);
    disc_ptr = &fresh;
  }
  TrainingLog log = RunStage(cfg, env, policy, disc_ptr, &sink);

  manifest["finished_at"] = UtcNow();
  WriteJsonFile(dir / "manifest.json", manifest);

  if (!log.records.empty()) {
    const StepRecord& last = log.records.back();
    out << "stage " << cfg.stage << " finished " << log.records.size()
        << " steps: accuracy " << FormatDouble(last.r_accuracy_mean)
        << " format " << FormatDouble(last.r_format_mean);
    if (cfg.stage == 2) {
      out << " image " << FormatDouble(last.r_img_mean) << " think_len "
          << FormatDouble(last.think_len_mean);
    }
    out << '\n';
  } else {
    out << "stage " << cfg.stage << " finished 0 steps\n";
  }
  out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

struct GenArgs {
  int stage = 1;
  size_t count = 10;
  uint64_t seed = 0;
  size_t pool_size = 64;
  uint64_t first_id = 0;
  std::string out_path = "-";
};

int CmdGen(const GenArgs& a, std::ostream& out) {
  EnvConfig cfg;
  cfg.stage = a.stage;
  cfg.seed = a.seed;
  cfg.image_pool_size = a.pool_size;
  cfg.Validate();
  TaskEnvironment env(cfg);
  std::vector<TaskInstance> tasks;
  tasks.reserve(a.count);
  for (size_t i = 0; i < a.count; ++i) tasks.push_back(env.Task(a.first_id + i));
  if (a.out_path == "-") {
    WriteTaskDump(out, tasks);
    return kExitOk;
  }
  std::ofstream file = OpenOutput(a.out_path);
  WriteTaskDump(file, tasks);
  if (!file) throw IoError("failed to write " + a.out_path);
  return kExitOk;
}

struct InspectArgs {
  std::string grid = "0,75,300,375,450,600,900,1800";
  std::string config_path;
  std::optional<size_t> l_min, l_opt, l_max;
  std::optional<double> r_min, r_pen, gamma;
  bool table = false;
};

std::vector<size_t> ParseGrid(const std::string& text) {
  std::vector<size_t> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t(Trim(item));
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) {
          return c >= '0' && c <= '9';
        })) {
      throw ValidationError("grid entries must be non-negative integers, got '" +
                            t + "'");
    }
    grid.push_back(std::stoull(t));
  }
  if (grid.empty()) throw ValidationError("grid must not be empty");
  for (size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw ValidationError("grid must be strictly ascending");
    }
  }
  return grid;
}

int CmdInspectReward(const InspectArgs& a, std::ostream& out) {
  LengthRewardConfig cfg;
  if (!a.config_path.empty()) cfg = LoadTrainerConfig(a.config_path).length;
  if (a.l_min) cfg.l_min = *a.l_min;
  if (a.l_opt) cfg.l_opt = *a.l_opt;
  if (a.l_max) cfg.l_max = *a.l_max;
  if (a.r_min) cfg.r_min = *a.r_min;
  if (a.r_pen) cfg.r_pen = *a.r_pen;
  if (a.gamma) cfg.gamma = *a.gamma;
  cfg.Validate();
  const std::vector<size_t> grid = ParseGrid(a.grid);
  if (a.table) {
    out << "  length  reward\n";
    for (size_t l : grid) {
      char line[64];
      std::snprintf(line, sizeof(line), "%8zu  %.6f\n", l,
                    LengthReward(l, cfg));
      out << line;
    }
    return kExitOk;
  }
  out << "length,reward\n";
  for (size_t l : grid) {
    out << l << ',' << FormatDouble(LengthReward(l, cfg)) << '\n';
  }
  return kExitOk;
}

struct EvalArgs {
  std::string policy_path;
  std::string tasks_path;
};

int CmdEval(const EvalArgs& a, std::ostream& out) {
  std::ifstream pin(a.policy_path);
  if (!pin) throw ValidationError("cannot open policy " + a.policy_path);
  PolicyConfig pcfg;
  SlotPolicyParams params = LoadPolicy(pin, pcfg);
  std::ifstream tin(a.tasks_path);
  if (!tin) throw ValidationError("cannot open task dump " + a.tasks_path);
  const std::vector<TaskInstance> tasks = ReadTaskDump(tin);
  const EvalSummary s = EvaluateGreedy(params, tasks, pcfg);
  nlohmann::ordered_json j;
  j["tasks"] = s.tasks;
  j["accuracy"] = s.accuracy;
  j["format"] = s.format;
  j["image_selection"] = s.image_selection;
  j["think_len_mean"] = s.think_len_mean;
  out << j.dump() << '\n';
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Toy two-stage GRPO trainer with adversarial reasoning reward",
               "tarl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TARL_VERSION);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Run one training stage");
  train_cmd->add_option("--config", train.config_path, "Trainer config file")
      ->required();
  train_cmd->add_option("--stage", train.stage, "Stage (1 or 2)");
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--steps", train.steps, "Override the step count");
  train_cmd->add_option("--threads", train.threads, "Worker threads");
  train_cmd->add_option("--out", train.out_dir, "Output directory")
      ->capture_default_str();
  train_cmd->add_option("--init-policy", train.init_policy,
                        "Start from a saved policy checkpoint");
  train_cmd->add_option("--init-discriminator", train.init_discriminator,
                        "Start from a saved discriminator checkpoint");

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Write a seeded task dump");
  gen_cmd->add_option("--stage", gen.stage, "Stage (1 or 2)")
      ->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Number of tasks")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--pool-size", gen.pool_size, "Distractor pool size")
      ->capture_default_str();
  gen_cmd->add_option("--first-id", gen.first_id, "First task id")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out_path, "Output file, - for stdout")
      ->capture_default_str();

  InspectArgs inspect;
  CLI::App* inspect_cmd = app.add_subcommand(
      "inspect-reward", "Print the length reward over a grid of lengths");
  inspect_cmd->add_option("--grid", inspect.grid,
                          "Comma-separated ascending think lengths")
      ->capture_default_str();
  inspect_cmd->add_option("--config", inspect.config_path,
                          "Read length settings from a trainer config");
  inspect_cmd->add_option("--l-min", inspect.l_min, "Minimum target length");
  inspect_cmd->add_option("--l-opt", inspect.l_opt, "Optimal target length");
  inspect_cmd->add_option("--l-max", inspect.l_max, "Maximum target length");
  inspect_cmd->add_option("--r-min", inspect.r_min, "Reward at l_min");
  inspect_cmd->add_option("--r-pen", inspect.r_pen, "Overlength floor");
  inspect_cmd->add_option("--gamma", inspect.gamma, "Overlength decay rate");
  inspect_cmd->add_flag("--table", inspect.table,
                        "Aligned table instead of CSV");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Greedy-policy accuracy over a task dump");
  eval_cmd->add_option("--policy", eval.policy_path, "Policy checkpoint")
      ->required();
  eval_cmd->add_option("--tasks", eval.tasks_path, "Task dump (JSONL)")
      ->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << TARL_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (train_cmd->parsed()) return CmdTrain(train, out);
    if (gen_cmd->parsed()) return CmdGen(gen, out);
    if (inspect_cmd->parsed()) return CmdInspectReward(inspect, out);
    if (eval_cmd->parsed()) return CmdEval(eval, out);
  } catch (const ValidationError& e) {
    err << "invalid: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace tarl::cli
