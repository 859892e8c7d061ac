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

#include "tarl/grpo.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.h"
#include "tarl/errors.h"

namespace tarl {
namespace {

struct GroupPartial {
  double objective = 0.0;
  double kl_sum = 0.0;
  size_t steps = 0;
  size_t clipped = 0;
  SlotPolicyParams gradient;
};

// Evaluates one group's contribution, already scaled by 1 / total_rollouts.
GroupPartial EvaluateGroup(const SlotPolicyParams& params,
                           const SlotPolicyParams& ref,
                           const RolloutGroup& group, size_t group_index,
                           double scale, const GrpoConfig& cfg,
                           bool want_gradient) {
  GroupPartial out;
  if (want_gradient) out.gradient = params.ZerosLike();
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;

  for (size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& r = group.rollouts[i];
    if (r.steps.empty()) continue;
    const double a = r.advantage;
    const double per_step = scale / static_cast<double>(r.steps.size());
    for (size_t t = 0; t < r.steps.size(); ++t) {
      const PolicyStep& step = r.steps[t];
      const auto c = static_cast<Eigen::Index>(step.choice);
      const double lp = SlotLogProbs(params, step.slot, step.features,
                                     step.n_active, r.temperature)[c];
      const double lp_ref = SlotLogProbs(ref, step.slot, step.features,
                                         step.n_active, r.temperature)[c];
      if (!std::isfinite(lp) || !std::isfinite(lp_ref) ||
          !std::isfinite(step.logprob_old)) {
        throw NumericalError("non-finite log-probability in group " +
                             std::to_string(group_index) + " (task " +
                             std::to_string(group.task_id) + "), rollout " +
                             std::to_string(i) + ", step " +
                             std::to_string(t) + " (" + SlotName(step.slot) +
                             ")");
      }
      const double rho = std::exp(lp - step.logprob_old);
      const double unclipped = rho * a;
      const double clipped = std::clamp(rho, lo, hi) * a;
      const bool binding = clipped < unclipped;
      const double delta = lp_ref - lp;
      const double kl = std::exp(delta) - delta - 1.0;

      out.objective += per_step * (std::min(unclipped, clipped) -
                                   cfg.kl_coef * kl);
      out.kl_sum += kl;
      ++out.steps;
      if (binding) ++out.clipped;

      if (want_gradient) {
        // d/dlp of the surrogate is rho * A off the binding clip; d/dlp of
        // KL is 1 - exp(delta).
        const double d_surrogate = binding ? 0.0 : rho * a;
        const double d_kl = 1.0 - std::exp(delta);
        const double coef = per_step * (d_surrogate - cfg.kl_coef * d_kl);
        if (coef != 0.0) {
          AccumulateStepGradient(params, step, r.temperature, coef,
                                 out.gradient);
        }
      }
    }
  }
  return out;
}

ObjectiveResult Evaluate(const SlotPolicyParams& params,
                         const PolicySnapshot& reference,
                         std::span<const RolloutGroup> groups,
                         const GrpoConfig& cfg, size_t threads,
                         bool want_gradient) {
  cfg.Validate();
  if (!reference.params().SameShape(params)) {
    throw ValidationError("reference snapshot shape differs from params");
  }
  size_t total = 0;
  for (const RolloutGroup& g : groups) total += g.rollouts.size();

  ObjectiveResult result;
  result.gradient = params.ZerosLike();
  if (total == 0) return result;
  const double scale = 1.0 / static_cast<double>(total);

  std::vector<GroupPartial> partials(groups.size());
  internal::ParallelFor(groups.size(), threads, [&](size_t k) {
    partials[k] = EvaluateGroup(params, reference.params(), groups[k], k,
                                scale, cfg, want_gradient);
  });

  size_t steps = 0, clipped = 0;
  double kl_sum = 0.0;
  for (const GroupPartial& p : partials) {
    result.objective += p.objective;
    kl_sum += p.kl_sum;
    steps += p.steps;
    clipped += p.clipped;
    if (want_gradient) result.gradient.AddScaled(p.gradient, 1.0);
  }
  if (steps > 0) {
    result.kl_mean = kl_sum / static_cast<double>(steps);
    result.clip_fraction =
        static_cast<double>(clipped) / static_cast<double>(steps);
  }
  return result;
}

}  // namespace

void GrpoConfig::Validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(clip_epsilon) || clip_epsilon <= 0.0) {
    throw ValidationError("clip_epsilon must be > 0");
  }
  if (!finite(kl_coef) || kl_coef < 0.0) {
    throw ValidationError("kl_coef must be >= 0");
  }
  if (!finite(learning_rate) || learning_rate <= 0.0) {
    throw ValidationError("actor_learning_rate must be > 0");
  }
  if (!finite(std_floor) || std_floor <= 0.0) {
    throw ValidationError("std_floor must be > 0");
  }
}

AdvantageSet GroupAdvantages(std::span<const double> scores,
                             double std_floor) {
  if (scores.size() < 2) {
    throw ValidationError("group advantages need at least 2 scores");
  }
  AdvantageSet set;
  set.raw_scores.assign(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  set.advantages.assign(scores.size(), 0.0);
  if (sd > std_floor) {
    for (size_t i = 0; i < scores.size(); ++i) {
      set.advantages[i] = (scores[i] - mean) / sd;
    }
  }
  return set;
}

double KlStep(double logp_current, double logp_ref) {
  const double delta = logp_ref - logp_current;
  return std::exp(delta) - delta - 1.0;
}

ObjectiveResult GrpoObjectiveAndGrad(const SlotPolicyParams& params,
                                     const PolicySnapshot& reference,
                                     std::span<const RolloutGroup> groups,
                                     const GrpoConfig& cfg, size_t threads) {
  return Evaluate(params, reference, groups, cfg, threads, true);
}

double GrpoObjective(const SlotPolicyParams& params,
                     const PolicySnapshot& reference,
                     std::span<const RolloutGroup> groups,
                     const GrpoConfig& cfg) {
  return Evaluate(params, reference, groups, cfg, 1, false).objective;
}

void ApplyUpdate(SlotPolicyParams& params, const SlotPolicyParams& gradient,
                 double learning_rate) {
  params.AddScaled(gradient, learning_rate);
}

}  // namespace tarl
