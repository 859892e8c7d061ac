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

#include "tarl/trainkit.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "parallel.h"
#include "tarl/errors.h"
#include "tarl/random.h"
#include "tarl/text.h"

namespace tarl {
namespace {

constexpr uint64_t kSampleStream = 0x73616d70ULL;
constexpr uint64_t kDiscInitStream = 0x64697363ULL;

struct GroupOutcome {
  RewardCounters counters;
  std::vector<LabeledThink> labels;
};

void AddCounters(RewardCounters& into, const RewardCounters& c) {
  into.format += c.format;
  into.accuracy += c.accuracy;
  into.length += c.length;
  into.adversarial += c.adversarial;
  into.image += c.image;
}

void Require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

EnvConfig TrainerConfig::Env() const {
  EnvConfig env;
  env.stage = stage;
  env.seed = seed;
  env.image_pool_size = image_pool_size;
  return env;
}

void TrainerConfig::Validate() const {
  Require(stage == 1 || stage == 2, "stage must be 1 or 2");
  Require(train_batch_size > 0, "train_batch_size must be positive");
  Require(samples_per_prompt >= 2, "n_samples_per_prompt must be at least 2");
  Require(std::isfinite(temperature) && temperature > 0.0,
          "temperature must be positive");
  Require(threads > 0, "threads must be positive");
  Require(weights.stage == stage,
          "reward weights are for stage " + std::to_string(weights.stage) +
              " but training stage is " + std::to_string(stage));
  grpo.Validate();
  weights.Validate();
  length.Validate();
  policy.Validate();
  Env().Validate();
  if (stage == 2) {
    Require(discriminator.vocab_hash_dim > 0,
            "bert_vocab_hash_dim must be positive");
    Require(discriminator.dim > 0, "bert_dim must be positive");
    Require(discriminator.interval > 0,
            "bert_train_interval must be positive");
    Require(discriminator.train.epochs > 0,
            "bert_training_epochs must be positive");
    Require(discriminator.train.batch_size > 0,
            "bert_batch_size must be positive");
    Require(std::isfinite(discriminator.train.learning_rate) &&
                discriminator.train.learning_rate > 0.0,
            "bert_learning_rate must be positive");
    Require(std::isfinite(discriminator.init_scale) &&
                discriminator.init_scale >= 0.0,
            "bert_init_scale must be non-negative");
  }
}

std::string MetricsJsonLine(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["r_format_mean"] = r.r_format_mean;
  j["r_accuracy_mean"] = r.r_accuracy_mean;
  j["r_length_mean"] = r.r_length_mean;
  j["r_adv_mean"] = r.r_adv_mean;
  j["r_img_mean"] = r.r_img_mean;
  j["r_total_mean"] = r.r_total_mean;
  j["think_len_mean"] = r.think_len_mean;
  j["objective"] = r.objective;
  j["kl_mean"] = r.kl_mean;
  if (r.disc_loss) {
    j["disc_loss"] = *r.disc_loss;
  } else {
    j["disc_loss"] = nullptr;
  }
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

std::string MetricsCsvHeader() {
  return "step,r_format_mean,r_accuracy_mean,r_length_mean,r_adv_mean,"
         "r_img_mean,r_total_mean,think_len_mean,objective,kl_mean,disc_loss,"
         "wall_ms";
}

std::string MetricsCsvRow(const StepRecord& r) {
  std::vector<std::string> cells = {
      std::to_string(r.step),         FormatDouble(r.r_format_mean),
      FormatDouble(r.r_accuracy_mean), FormatDouble(r.r_length_mean),
      FormatDouble(r.r_adv_mean),     FormatDouble(r.r_img_mean),
      FormatDouble(r.r_total_mean),   FormatDouble(r.think_len_mean),
      FormatDouble(r.objective),      FormatDouble(r.kl_mean),
      r.disc_loss ? FormatDouble(*r.disc_loss) : std::string(),
      FormatDouble(r.wall_ms)};
  return Join(cells, ",");
}

void WriteMetricsCsv(std::ostream& out, const TrainingLog& log) {
  out << MetricsCsvHeader() << '\n';
  for (const StepRecord& r : log.records) out << MetricsCsvRow(r) << '\n';
}

StreamMetricsSink::StreamMetricsSink(std::ostream* jsonl, std::ostream* csv)
    : jsonl_(jsonl), csv_(csv) {
  if (csv_ != nullptr) {
    *csv_ << MetricsCsvHeader() << '\n';
    csv_->flush();
    if (!*csv_) throw IoError("failed to write metrics CSV header");
  }
}

void StreamMetricsSink::Write(const StepRecord& record) {
  if (jsonl_ != nullptr) {
    *jsonl_ << MetricsJsonLine(record) << '\n';
    jsonl_->flush();
    if (!*jsonl_) {
      throw IoError("failed to write metrics for step " +
                    std::to_string(record.step));
    }
  }
  if (csv_ != nullptr) {
    *csv_ << MetricsCsvRow(record) << '\n';
    csv_->flush();
    if (!*csv_) {
      throw IoError("failed to write CSV metrics for step " +
                    std::to_string(record.step));
    }
  }
}

Trainer::Trainer(TrainerConfig cfg, const TaskEnvironment& env,
                 SlotPolicyParams initial,
                 std::optional<DiscriminatorModel> discriminator)
    : cfg_(std::move(cfg)),
      env_(env),
      params_(std::move(initial)),
      reference_(params_, SnapshotRole::kReference) {
  cfg_.Validate();
  if (env_.config().stage != cfg_.stage) {
    throw ValidationError("environment stage does not match training stage");
  }
  SlotPolicyParams expected = SlotPolicyParams::ForConfig(cfg_.policy);
  if (!params_.SameShape(expected)) {
    throw ValidationError("initial policy shape does not match policy config");
  }
  if (cfg_.stage == 2) {
    if (!discriminator) {
      const DiscriminatorSettings& d = cfg_.discriminator;
      discriminator.emplace(d.vocab_hash_dim, d.dim, d.hash_seed,
                            StreamSeed(cfg_.seed, {kDiscInitStream}),
                            d.init_scale);
    }
    disc_ = std::make_unique<SharedDiscriminator>(std::move(*discriminator));
  }
}

const StepRecord& Trainer::Step() {
  using Clock = std::chrono::steady_clock;
  const Clock::time_point start = Clock::now();
  const size_t step = log_.records.size() + 1;
  const size_t batch = cfg_.train_batch_size;

  std::vector<TaskInstance> tasks(batch);
  groups_.assign(batch, RolloutGroup{});
  std::vector<GroupOutcome> outcomes(batch);

  internal::ParallelFor(batch, cfg_.threads, [&](size_t b) {
    const uint64_t task_id = static_cast<uint64_t>((step - 1) * batch + b);
    tasks[b] = env_.Task(task_id);
    const TaskInstance& task = tasks[b];
    Rng rng(StreamSeed(cfg_.seed, {kSampleStream,
                                   static_cast<uint64_t>(cfg_.stage), task_id}));
    RolloutGroup group = SampleGroup(params_, task, cfg_.samples_per_prompt,
                                     cfg_.temperature, rng, cfg_.policy);
    GroupOutcome& out = outcomes[b];
    std::vector<double> totals;
    totals.reserve(group.rollouts.size());
    for (Rollout& r : group.rollouts) {
      RewardVector& rv = r.rewards;
      rv.format = FormatReward(r.parsed);
      rv.accuracy = AccuracyReward(r.parsed, task);
      out.counters.format++;
      out.counters.accuracy++;
      if (cfg_.stage == 2) {
        rv.length = LengthReward(r.parsed.think_token_count, cfg_.length);
        rv.adversarial = disc_->Score(r.parsed.think_text);
        rv.image = ImageSelectionReward(r.parsed, task);
        out.counters.length++;
        out.counters.adversarial++;
        out.counters.image++;
      }
      rv.total = Compose(rv, cfg_.weights);
      totals.push_back(rv.total);
    }
    AdvantageSet adv = GroupAdvantages(totals, cfg_.grpo.std_floor);
    for (size_t i = 0; i < group.rollouts.size(); ++i) {
      group.rollouts[i].advantage = adv.advantages[i];
    }
    if (cfg_.stage == 2) out.labels = CollectLabels(group, task);
    groups_[b] = std::move(group);
  });

  StepRecord rec;
  rec.step = step;
  size_t n = 0;
  for (size_t b = 0; b < batch; ++b) {
    AddCounters(counters_, outcomes[b].counters);
    for (const Rollout& r : groups_[b].rollouts) {
      rec.r_format_mean += r.rewards.format;
      rec.r_accuracy_mean += r.rewards.accuracy;
      rec.r_length_mean += r.rewards.length;
      rec.r_adv_mean += r.rewards.adversarial;
      rec.r_img_mean += r.rewards.image;
      rec.r_total_mean += r.rewards.total;
      rec.think_len_mean += static_cast<double>(r.parsed.think_token_count);
      ++n;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  rec.r_format_mean *= inv;
  rec.r_accuracy_mean *= inv;
  rec.r_length_mean *= inv;
  rec.r_adv_mean *= inv;
  rec.r_img_mean *= inv;
  rec.r_total_mean *= inv;
  rec.think_len_mean *= inv;

  ObjectiveResult res = GrpoObjectiveAndGrad(params_, reference_, groups_,
                                             cfg_.grpo, cfg_.threads);
  ApplyUpdate(params_, res.gradient, cfg_.grpo.learning_rate);
  if (!params_.AllFinite()) {
    throw NumericalError("policy parameters became non-finite at step " +
                         std::to_string(step));
  }
  rec.objective = res.objective;
  rec.kl_mean = res.kl_mean;

  if (cfg_.stage == 2) {
    for (GroupOutcome& out : outcomes) {
      for (LabeledThink& l : out.labels) {
        pending_labels_.push_back(std::move(l));
      }
    }
    if (step % cfg_.discriminator.interval == 0) {
      rec.disc_loss = disc_->Train(pending_labels_, cfg_.discriminator.train);
      pending_labels_.clear();
    }
  }

  if (cfg_.record_wall_time) {
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  }
  log_.records.push_back(rec);
  return log_.records.back();
}

const TrainingLog& Trainer::Run(MetricsSink* sink) {
  while (log_.records.size() < cfg_.steps) {
    const StepRecord& rec = Step();
    if (sink != nullptr) sink->Write(rec);
  }
  return log_;
}

TrainingLog RunStage(const TrainerConfig& config, const TaskEnvironment& env,
                     SlotPolicyParams& policy,
                     DiscriminatorModel* discriminator, MetricsSink* sink) {
  std::optional<DiscriminatorModel> disc;
  if (discriminator != nullptr && config.stage == 2) disc = *discriminator;
  Trainer trainer(config, env, policy, std::move(disc));
  try {
    trainer.Run(sink);
  } catch (...) {
    policy = trainer.params();
    throw;
  }
  policy = trainer.params();
  if (discriminator != nullptr && trainer.discriminator() != nullptr) {
    *discriminator = trainer.discriminator()->model();
  }
  if (!config.checkpoint_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(config.checkpoint_dir, ec);
    if (ec) {
      throw IoError("cannot create checkpoint directory " +
                    config.checkpoint_dir + ": " + ec.message());
    }
    const fs::path dir(config.checkpoint_dir);
    {
      std::ofstream out(dir / "policy.ckpt");
      SavePolicy(out, policy, config.policy);
      if (!out) throw IoError("failed to write policy checkpoint");
    }
    if (trainer.discriminator() != nullptr) {
      std::ofstream out(dir / "discriminator.ckpt");
      trainer.discriminator()->model().Save(out);
      if (!out) throw IoError("failed to write discriminator checkpoint");
    }
  }
  return trainer.log();
}

EvalSummary EvaluateGreedy(const SlotPolicyParams& params,
                           std::span<const TaskInstance> tasks,
                           const PolicyConfig& cfg) {
  EvalSummary s;
  s.tasks = tasks.size();
  if (tasks.empty()) return s;
  size_t with_images = 0;
  for (const TaskInstance& task : tasks) {
    const SlotChoices choices = GreedyChoices(params, task, cfg);
    const ParsedOutput parsed = ParseOutput(Render(choices, task, cfg));
    s.accuracy += AccuracyReward(parsed, task);
    s.format += FormatReward(parsed);
    s.think_len_mean += static_cast<double>(parsed.think_token_count);
    if (!task.images.empty()) {
      ++with_images;
      s.image_selection += ImageSelectionReward(parsed, task);
    }
  }
  const double n = static_cast<double>(tasks.size());
  s.accuracy /= n;
  s.format /= n;
  s.think_len_mean /= n;
  if (with_images > 0) s.image_selection /= static_cast<double>(with_images);
  return s;
}

}  // namespace tarl
