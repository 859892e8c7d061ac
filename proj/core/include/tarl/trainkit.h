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

#ifndef TARL_TRAINKIT_H_
#define TARL_TRAINKIT_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tarl/adversary.h"
#include "tarl/grpo.h"
#include "tarl/policy.h"
#include "tarl/rewards.h"
#include "tarl/synthenv.h"

namespace tarl {

struct DiscriminatorSettings {
  size_t vocab_hash_dim = 4096;
  size_t dim = 32;
  uint64_t hash_seed = 0x626572742d6864ULL;
  double init_scale = 0.5;
  DiscriminatorTrainOptions train;
  // Retrain every `interval` steps on the samples collected since the
  // previous retraining.
  size_t interval = 10;
};

struct TrainerConfig {
  int stage = 1;
  size_t steps = 100;
  size_t train_batch_size = 8;    // prompts per step
  size_t samples_per_prompt = 16; // G
  double temperature = 1.0;
  GrpoConfig grpo;
  RewardWeights weights;
  LengthRewardConfig length;
  DiscriminatorSettings discriminator;
  PolicyConfig policy;
  size_t image_pool_size = 64;
  uint64_t seed = 0;
  size_t threads = 1;
  // Off by default so that metrics files are reproducible byte for byte;
  // when off, wall_ms is written as 0.
  bool record_wall_time = false;
  // When non-empty, RunStage writes policy.ckpt (and discriminator.ckpt in
  // stage 2) here after the last step.
  std::string checkpoint_dir;

  EnvConfig Env() const;
  // Throws ValidationError naming the first violated constraint.
  void Validate() const;
};

struct StepRecord {
  size_t step = 0;
  double r_format_mean = 0.0;
  double r_accuracy_mean = 0.0;
  double r_length_mean = 0.0;
  double r_adv_mean = 0.0;
  double r_img_mean = 0.0;
  double r_total_mean = 0.0;
  double think_len_mean = 0.0;
  double objective = 0.0;
  double kl_mean = 0.0;
  std::optional<double> disc_loss;
  double wall_ms = 0.0;
};

struct TrainingLog {
  std::vector<StepRecord> records;
};

// Field order: step, r_format_mean, r_accuracy_mean, r_length_mean,
// r_adv_mean, r_img_mean, r_total_mean, think_len_mean, objective,
// kl_mean, disc_loss (null when the discriminator did not train), wall_ms.
std::string MetricsJsonLine(const StepRecord& record);
std::string MetricsCsvHeader();
std::string MetricsCsvRow(const StepRecord& record);
void WriteMetricsCsv(std::ostream& out, const TrainingLog& log);

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void Write(const StepRecord& record) = 0;
};

// Writes one JSON line per record (and optionally a CSV row), flushing
// after each. Throws IoError when a stream goes bad.
class StreamMetricsSink : public MetricsSink {
 public:
  explicit StreamMetricsSink(std::ostream* jsonl, std::ostream* csv = nullptr);
  void Write(const StepRecord& record) override;

 private:
  std::ostream* jsonl_;
  std::ostream* csv_;
};

// How many times each reward component was evaluated.
struct RewardCounters {
  uint64_t format = 0;
  uint64_t accuracy = 0;
  uint64_t length = 0;
  uint64_t adversarial = 0;
  uint64_t image = 0;
};

class Trainer {
 public:
  // Validates the config. In stage 2 a discriminator is created from the
  // config when none is passed.
  Trainer(TrainerConfig cfg, const TaskEnvironment& env,
          SlotPolicyParams initial,
          std::optional<DiscriminatorModel> discriminator = std::nullopt);

  // One iteration: sample a group per prompt, score, compute advantages,
  // take an ascent step and, in stage 2 on interval boundaries, retrain
  // the discriminator. Appends to and returns the log record.
  const StepRecord& Step();

  // Runs the remaining configured steps, writing each record to `sink` as
  // it is produced. If the sink throws, the records so far stay in log().
  const TrainingLog& Run(MetricsSink* sink = nullptr);

  const TrainerConfig& config() const { return cfg_; }
  const SlotPolicyParams& params() const { return params_; }
  const PolicySnapshot& reference() const { return reference_; }
  const SharedDiscriminator* discriminator() const { return disc_.get(); }
  const RewardCounters& counters() const { return counters_; }
  const TrainingLog& log() const { return log_; }
  size_t steps_done() const { return log_.records.size(); }

  // Rollouts of the most recent step, with rewards and advantages.
  const std::vector<RolloutGroup>& last_groups() const { return groups_; }

 private:
  TrainerConfig cfg_;
  const TaskEnvironment& env_;
  SlotPolicyParams params_;
  PolicySnapshot reference_;
  std::unique_ptr<SharedDiscriminator> disc_;
  std::vector<LabeledThink> pending_labels_;
  std::vector<RolloutGroup> groups_;
  RewardCounters counters_;
  TrainingLog log_;
};

// Validates, runs config.steps iterations and writes checkpoints when
// config.checkpoint_dir is set. `policy` and `discriminator` (if given)
// are updated in place.
TrainingLog RunStage(const TrainerConfig& config, const TaskEnvironment& env,
                     SlotPolicyParams& policy,
                     DiscriminatorModel* discriminator = nullptr,
                     MetricsSink* sink = nullptr);

struct EvalSummary {
  size_t tasks = 0;
  double accuracy = 0.0;
  double format = 0.0;
  double image_selection = 0.0;  // over tasks with images
  double think_len_mean = 0.0;
};

// Greedy (argmax) decoding over a task list.
EvalSummary EvaluateGreedy(const SlotPolicyParams& params,
                           std::span<const TaskInstance> tasks,
                           const PolicyConfig& cfg);

}  // namespace tarl

#endif  // TARL_TRAINKIT_H_
