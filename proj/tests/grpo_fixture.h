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

#ifndef TARL_TESTS_GRPO_FIXTURE_H_
#define TARL_TESTS_GRPO_FIXTURE_H_

#include <cstdint>
#include <vector>

#include "tarl/grpo.h"
#include "tarl/policy.h"

namespace tarl::testing {

// Rollout groups built directly from random step features, so the feature
// dimension can be as small as desired.
struct GrpoInstance {
  SlotPolicyParams params;
  SlotPolicyParams old_params;
  SlotPolicyParams ref_params;
  std::vector<RolloutGroup> groups;
};

// `n_groups` groups of `g` rollouts over feature dimension `f`. Old and
// reference parameters are perturbations of `params`, so ratios straddle
// the clip range.
GrpoInstance RandomGrpoInstance(uint64_t seed, size_t f, size_t g,
                                size_t n_groups, double perturbation = 0.3);

// Central-difference gradient of GrpoObjective with respect to params.
SlotPolicyParams FiniteDifferenceGradient(const GrpoInstance& instance,
                                          const GrpoConfig& cfg, double h);

// max over coordinates of |a - b| / max(|a|, |b|, floor).
double MaxRelativeError(const SlotPolicyParams& a, const SlotPolicyParams& b,
                        double floor);

}  // namespace tarl::testing

#endif  // TARL_TESTS_GRPO_FIXTURE_H_
