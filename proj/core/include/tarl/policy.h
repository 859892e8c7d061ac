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

#ifndef TARL_POLICY_H_
#define TARL_POLICY_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tarl/outparse.h"
#include "tarl/random.h"
#include "tarl/rewards.h"
#include "tarl/synthenv.h"

namespace tarl {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Decision slots of the structured policy. Storage order follows the
// checkpoint layout (answer, image, length bucket, quality).
enum class Slot { kAnswer = 0, kImage = 1, kLength = 2, kQuality = 3 };
inline constexpr size_t kNumSlots = 4;
const char* SlotName(Slot slot);

struct PolicyConfig {
  size_t feature_dim = 512;
  size_t n_options = 5;
  size_t max_images = 5;
  // Think lengths (whitespace tokens) the length slot chooses between.
  std::vector<size_t> length_buckets = {75, 300, 450, 900};
  uint64_t hash_seed = 0x7461726c2d706fULL;

  void Validate() const;
};

// Positions inside the prompt feature vector:
//   [bias | hashed question tokens | per-image block | reasoning context]
// Each candidate image k owns kImageFeatures entries: present, Jaccard
// similarity to the question, similarity relative to the best candidate.
// The reasoning context is only filled for the answer step and holds one
// evidence entry per option plus "grounded" and "no match" flags.
struct FeatureLayout {
  static constexpr size_t kImageFeatures = 3;
  static constexpr size_t kContextFlags = 2;

  size_t bias = 0;
  size_t question_begin = 1;
  size_t question_size = 0;
  size_t image_begin = 0;
  size_t context_begin = 0;

  static FeatureLayout For(const PolicyConfig& cfg);
  static size_t MinFeatureDim(const PolicyConfig& cfg);
};

// Per-slot linear weights; slot logits are W_slot * features.
class SlotPolicyParams {
 public:
  SlotPolicyParams() = default;
  SlotPolicyParams(size_t feature_dim, size_t n_options, size_t max_images,
                   size_t n_length_buckets);
  static SlotPolicyParams ForConfig(const PolicyConfig& cfg);

  RowMatrix& slot(Slot s) { return w_[static_cast<size_t>(s)]; }
  const RowMatrix& slot(Slot s) const { return w_[static_cast<size_t>(s)]; }

  size_t feature_dim() const { return static_cast<size_t>(w_[0].cols()); }
  // Total number of entries across all slots; flat indices run over the
  // slots in storage order, row-major within each.
  size_t size() const;
  double& at(size_t flat);
  double at(size_t flat) const;

  SlotPolicyParams ZerosLike() const;
  bool SameShape(const SlotPolicyParams& other) const;
  // this += scale * other. Throws ValidationError on shape mismatch.
  void AddScaled(const SlotPolicyParams& other, double scale);
  bool AllFinite() const;
  double SquaredNorm() const;

  friend bool operator==(const SlotPolicyParams& a, const SlotPolicyParams& b);

 private:
  std::array<RowMatrix, kNumSlots> w_;
};

enum class SnapshotRole { kOld, kReference };

// Frozen copy of the parameters (the sampling policy or the KL anchor).
class PolicySnapshot {
 public:
  PolicySnapshot(const SlotPolicyParams& params, SnapshotRole role)
      : params_(std::make_shared<const SlotPolicyParams>(params)),
        role_(role) {}

  const SlotPolicyParams& params() const { return *params_; }
  SnapshotRole role() const { return role_; }

 private:
  std::shared_ptr<const SlotPolicyParams> params_;
  SnapshotRole role_;
};

struct SlotChoices {
  size_t answer = 0;
  std::optional<size_t> image;
  size_t length_bucket = 0;
  size_t quality = 0;  // 1 = grounded reasoning, 0 = filler

  friend bool operator==(const SlotChoices&, const SlotChoices&) = default;
};

// One decision of a rollout. Features are cached so the log-probability
// can be re-evaluated under other parameters without the task.
struct PolicyStep {
  Slot slot = Slot::kAnswer;
  size_t n_active = 0;
  Eigen::VectorXd features;
  size_t choice = 0;
  double logprob_old = 0.0;
};

struct Rollout {
  SlotChoices choices;
  std::vector<PolicyStep> steps;
  double temperature = 1.0;
  std::string rendered_text;
  ParsedOutput parsed;
  RewardVector rewards;
  double advantage = 0.0;

  std::vector<double> step_logprobs_old() const;
};

struct RolloutGroup {
  uint64_t task_id = 0;
  std::vector<Rollout> rollouts;
};

Eigen::VectorXd FeaturizePrompt(const TaskInstance& task,
                                const PolicyConfig& cfg);

// What the chosen image and quality make the reasoning say. Grounded
// reasoning works the question against the chosen image (stage 2) or the
// operands (stage 1) and reports which option, if any, it supports.
struct ReasoningTrace {
  std::vector<std::string> tokens;
  std::optional<size_t> supported_option;
};

ReasoningTrace Reason(const TaskInstance& task, std::optional<size_t> image,
                      size_t quality);

// Answer-step features: the prompt features plus the reasoning context.
Eigen::VectorXd AnswerFeatures(const Eigen::VectorXd& prompt_features,
                               const ReasoningTrace& trace, size_t quality,
                               const PolicyConfig& cfg);

// Think text of exactly length_buckets[choices.length_bucket] tokens.
std::string RenderThink(const SlotChoices& choices, const TaskInstance& task,
                        const PolicyConfig& cfg);
std::string Render(const SlotChoices& choices, const TaskInstance& task,
                   const PolicyConfig& cfg);

// Log-softmax of W_slot * features / temperature over the active rows.
Eigen::VectorXd SlotLogProbs(const SlotPolicyParams& params, Slot slot,
                             const Eigen::VectorXd& features, size_t n_active,
                             double temperature);

RolloutGroup SampleGroup(const SlotPolicyParams& params,
                         const TaskInstance& task, size_t g,
                         double temperature, Rng& rng,
                         const PolicyConfig& cfg);

// Argmax decision at every slot.
SlotChoices GreedyChoices(const SlotPolicyParams& params,
                          const TaskInstance& task, const PolicyConfig& cfg);

// Per-step log-probabilities under `params`, recomputing the features
// from the task.
std::vector<double> LogProb(const SlotPolicyParams& params,
                            const TaskInstance& task, const Rollout& rollout,
                            const PolicyConfig& cfg);
// Same, from the features cached in the rollout.
std::vector<double> StepLogProbs(const SlotPolicyParams& params,
                                 const Rollout& rollout);

// grad += weight * d(log pi(step.choice)) / d(params).
void AccumulateStepGradient(const SlotPolicyParams& params,
                            const PolicyStep& step, double temperature,
                            double weight, SlotPolicyParams& grad);

// Gradient of the summed step log-probabilities. Each slot appears at most
// once per rollout, so each slot block holds that step's gradient.
SlotPolicyParams GradLogProb(const SlotPolicyParams& params,
                             const TaskInstance& task, const Rollout& rollout,
                             const PolicyConfig& cfg);

// Text checkpoint: header (dimensions, buckets, hash seed) followed by
// each slot matrix in row-major order.
void SavePolicy(std::ostream& out, const SlotPolicyParams& params,
                const PolicyConfig& cfg);
SlotPolicyParams LoadPolicy(std::istream& in, PolicyConfig& cfg);

}  // namespace tarl

#endif  // TARL_POLICY_H_
