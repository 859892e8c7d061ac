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

#ifndef TARL_REWARDS_H_
#define TARL_REWARDS_H_

#include <cstddef>

#include "tarl/outparse.h"
#include "tarl/synthenv.h"

namespace tarl {

// Piecewise length schedule over the thinking length L:
//   L < l_min            r_min * sqrt(L / l_min)
//   l_min <= L <= l_opt  linear from r_min up to 1
//   l_opt < L <= l_max   1
//   L > l_max            max(r_pen, 1 - gamma * (L - l_max) / l_max)
struct LengthRewardConfig {
  size_t l_min = 300;
  size_t l_opt = 450;
  size_t l_max = 600;
  double r_min = 0.5;
  double r_pen = 0.5;
  double gamma = 0.5;

  void Validate() const;
};

double LengthReward(size_t length, const LengthRewardConfig& cfg);

// Stage 1 uses (format, accuracy) = (1 - lambda, lambda) and zero for the
// rest; stage 2 uses all five weights, which must sum to one.
struct RewardWeights {
  int stage = 1;
  double format = 0.5;
  double accuracy = 0.5;
  double length = 0.0;
  double adversarial = 0.0;
  double image = 0.0;

  static RewardWeights Stage1(double lambda);
  static RewardWeights Stage2(double format, double accuracy, double length,
                              double adversarial, double image);

  void Validate() const;
};

inline constexpr double kWeightSumTolerance = 1e-9;

struct RewardVector {
  double format = 0.0;
  double accuracy = 0.0;
  double length = 0.0;
  double adversarial = 0.0;
  double image = 0.0;
  double total = 0.0;
};

double FormatReward(const ParsedOutput& parsed);
double AccuracyReward(const ParsedOutput& parsed, const TaskInstance& task);
// 1 iff the image selection span holds a plain integer equal to the
// correct 0-based index. Missing or unparseable spans score 0.
double ImageSelectionReward(const ParsedOutput& parsed,
                            const TaskInstance& task);

// Weighted sum of the components; validates the weights first.
double Compose(const RewardVector& components, const RewardWeights& weights);

}  // namespace tarl

#endif  // TARL_REWARDS_H_
