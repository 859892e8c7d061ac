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

#ifndef TARL_GRPO_H_
#define TARL_GRPO_H_

#include <span>
#include <vector>

#include "tarl/policy.h"

namespace tarl {

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double kl_coef = 1e-2;
  double learning_rate = 1e-2;
  double std_floor = 1e-8;

  void Validate() const;
};

struct AdvantageSet {
  std::vector<double> advantages;
  std::vector<double> raw_scores;
};

// (s_i - mean) / population std, or all zeros when the std does not
// exceed std_floor. Throws ValidationError for fewer than 2 scores.
AdvantageSet GroupAdvantages(std::span<const double> scores, double std_floor);

// Per-step KL estimate exp(d) - d - 1 with d = logp_ref - logp_current.
double KlStep(double logp_current, double logp_ref);

struct ObjectiveResult {
  double objective = 0.0;
  SlotPolicyParams gradient;
  double kl_mean = 0.0;         // mean per-step KL over all steps
  double clip_fraction = 0.0;   // fraction of steps on a binding clip
};

// Clipped, KL-regularized group objective
//   J = mean_i (1/|o_i|) sum_t [ min(rho A_i, clip(rho, 1-eps, 1+eps) A_i)
//                                - beta * KL_t ]
// with rho = exp(logp - logp_old), logp_old taken from the rollout steps
// (recorded under the sampling snapshot) and the KL anchored at
// `reference`. Each rollout's advantage is read from Rollout::advantage.
// Groups are reduced in index order, so the result does not depend on
// `threads`. Throws NumericalError naming the rollout on non-finite
// log-probabilities.
ObjectiveResult GrpoObjectiveAndGrad(const SlotPolicyParams& params,
                                     const PolicySnapshot& reference,
                                     std::span<const RolloutGroup> groups,
                                     const GrpoConfig& cfg,
                                     size_t threads = 1);

// Objective value only; used by finite-difference checks.
double GrpoObjective(const SlotPolicyParams& params,
                     const PolicySnapshot& reference,
                     std::span<const RolloutGroup> groups,
                     const GrpoConfig& cfg);

// Gradient ascent step: params += learning_rate * gradient.
void ApplyUpdate(SlotPolicyParams& params, const SlotPolicyParams& gradient,
                 double learning_rate);

}  // namespace tarl

#endif  // TARL_GRPO_H_
