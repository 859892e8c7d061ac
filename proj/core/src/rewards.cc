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

#include "tarl/rewards.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "tarl/errors.h"
#include "tarl/text.h"

namespace tarl {
namespace {

bool InUnit(double w) { return w >= 0.0 && w <= 1.0; }

}  // namespace

void LengthRewardConfig::Validate() const {
  if (l_min == 0) throw ValidationError("minimum_target_lengths must be > 0");
  if (!(l_min < l_opt && l_opt < l_max)) {
    throw ValidationError(
        "target lengths must satisfy minimum < optimal < maximum");
  }
  if (!(r_min > 0.0 && r_min < 1.0)) {
    throw ValidationError("r_min must lie in (0, 1)");
  }
  if (!(r_pen > 0.0 && r_pen <= 1.0)) {
    throw ValidationError("r_pen must lie in (0, 1]");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("gamma must be a finite non-negative number");
  }
}

double LengthReward(size_t length, const LengthRewardConfig& cfg) {
  const double l = static_cast<double>(length);
  const double l_min = static_cast<double>(cfg.l_min);
  const double l_opt = static_cast<double>(cfg.l_opt);
  const double l_max = static_cast<double>(cfg.l_max);
  if (length < cfg.l_min) return cfg.r_min * std::sqrt(l / l_min);
  if (length <= cfg.l_opt) {
    return cfg.r_min + (1.0 - cfg.r_min) * (l - l_min) / (l_opt - l_min);
  }
  if (length <= cfg.l_max) return 1.0;
  return std::max(cfg.r_pen, 1.0 - cfg.gamma * (l - l_max) / l_max);
}

RewardWeights RewardWeights::Stage1(double lambda) {
  RewardWeights w;
  w.stage = 1;
  w.accuracy = lambda;
  w.format = 1.0 - lambda;
  return w;
}

RewardWeights RewardWeights::Stage2(double format, double accuracy,
                                    double length, double adversarial,
                                    double image) {
  return {2, format, accuracy, length, adversarial, image};
}

void RewardWeights::Validate() const {
  for (double w : {format, accuracy, length, adversarial, image}) {
    if (!InUnit(w)) throw ValidationError("reward weights must lie in [0, 1]");
  }
  if (stage == 1) {
    if (length != 0.0 || adversarial != 0.0 || image != 0.0) {
      throw ValidationError(
          "stage 1 forbids length_weight, bert_reward_weight and "
          "image_selection_weight > 0");
    }
    const double sum = format + accuracy;
    if (std::fabs(sum - 1.0) > kWeightSumTolerance) {
      throw ValidationError(
          "stage 1 weights must satisfy accuracy_weight + format_weight = 1 "
          "(got " + FormatDouble(sum) + ")");
    }
    return;
  }
  if (stage != 2) throw ValidationError("stage must be 1 or 2");
  const double sum = format + accuracy + length + adversarial + image;
  if (std::fabs(sum - 1.0) > kWeightSumTolerance) {
    throw ValidationError(
        "stage 2 weights must sum to 1 (format + accuracy + length + "
        "adversarial + image_selection; got " + FormatDouble(sum) + ")");
  }
}

double FormatReward(const ParsedOutput& parsed) {
  return parsed.format_valid ? 1.0 : 0.0;
}

double AccuracyReward(const ParsedOutput& parsed, const TaskInstance& task) {
  if (!parsed.answer_raw) return 0.0;
  const NormalizeResult norm = NormalizeAnswer(*parsed.answer_raw, task.options);
  if (!norm.ok()) return 0.0;
  return VerifyAnswer(task, norm.answer) ? 1.0 : 0.0;
}

double ImageSelectionReward(const ParsedOutput& parsed,
                            const TaskInstance& task) {
  if (!parsed.image_selection_raw || !task.correct_image_index) return 0.0;
  const std::string_view s = Trim(*parsed.image_selection_raw);
  if (s.empty() || s.size() > 9) return 0.0;
  if (!std::all_of(s.begin(), s.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) != 0;
      })) {
    return 0.0;
  }
  return std::stoul(std::string(s)) == *task.correct_image_index ? 1.0 : 0.0;
}

double Compose(const RewardVector& c, const RewardWeights& w) {
  w.Validate();
  return w.format * c.format + w.accuracy * c.accuracy + w.length * c.length +
         w.adversarial * c.adversarial + w.image * c.image;
}

}  // namespace tarl
