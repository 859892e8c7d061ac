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

#include "tarl/policy.h"

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "tarl/errors.h"
#include "tarl/outparse.h"
#include "tarl/random.h"
#include "tarl/synthenv.h"
#include "tarl/text.h"

namespace tarl {
namespace {

PolicyConfig SmallConfig() {
  PolicyConfig cfg;
  cfg.feature_dim = FeatureLayout::MinFeatureDim(cfg) + 8;
  return cfg;
}

SlotPolicyParams RandomParams(const PolicyConfig& cfg, uint64_t seed,
                              double scale) {
  SlotPolicyParams p = SlotPolicyParams::ForConfig(cfg);
  Rng rng(seed);
  for (size_t i = 0; i < p.size(); ++i) p.at(i) = scale * rng.Normal();
  return p;
}

TaskInstance Stage2Task(uint64_t id) {
  EnvConfig cfg;
  cfg.stage = 2;
  cfg.seed = 12;
  return TaskEnvironment(cfg).Task(id);
}

TaskInstance Stage1Task(uint64_t id) {
  EnvConfig cfg;
  cfg.seed = 12;
  return TaskEnvironment(cfg).Task(id);
}

TEST(FeaturizeTest, DeterministicWithImageBlock) {
  const PolicyConfig cfg;
  const TaskInstance task = Stage2Task(1);
  const Eigen::VectorXd a = FeaturizePrompt(task, cfg);
  const Eigen::VectorXd b = FeaturizePrompt(task, cfg);
  ASSERT_EQ(static_cast<size_t>(a.size()), cfg.feature_dim);
  EXPECT_EQ(a, b);
  const FeatureLayout layout = FeatureLayout::For(cfg);
  EXPECT_EQ(a[layout.bias], 1.0);
  for (size_t k = 0; k < cfg.max_images; ++k) {
    const double present =
        a[layout.image_begin + k * FeatureLayout::kImageFeatures];
    EXPECT_EQ(present, k < task.images.size() ? 1.0 : 0.0);
  }
  // The answer-context block stays empty until reasoning is attached.
  for (size_t i = layout.context_begin; i < cfg.feature_dim; ++i) {
    EXPECT_EQ(a[i], 0.0);
  }
}

TEST(FeaturizeTest, Stage1HasNoImageFeatures) {
  const PolicyConfig cfg;
  const Eigen::VectorXd f = FeaturizePrompt(Stage1Task(2), cfg);
  const FeatureLayout layout = FeatureLayout::For(cfg);
  for (size_t i = layout.image_begin; i < layout.context_begin; ++i) {
    EXPECT_EQ(f[i], 0.0);
  }
}

TEST(PolicyConfigTest, RejectsTooSmallFeatureDim) {
  PolicyConfig cfg;
  cfg.feature_dim = FeatureLayout::MinFeatureDim(cfg) - 1;
  EXPECT_THROW(cfg.Validate(), ValidationError);
}

TEST(SlotLogProbsTest, NormalizedOverActiveChoices) {
  const PolicyConfig cfg = SmallConfig();
  const SlotPolicyParams p = RandomParams(cfg, 1, 0.7);
  const Eigen::VectorXd x = FeaturizePrompt(Stage2Task(0), cfg);
  for (double temperature : {0.5, 1.0, 2.0}) {
    for (size_t n : {2u, 3u, 5u}) {
      const Eigen::VectorXd lp =
          SlotLogProbs(p, Slot::kAnswer, x, n, temperature);
      ASSERT_EQ(static_cast<size_t>(lp.size()), n);
      EXPECT_NEAR(lp.array().exp().sum(), 1.0, 1e-12);
    }
  }
}

TEST(SlotLogProbsTest, ZeroParamsAreUniform) {
  const PolicyConfig cfg;
  const SlotPolicyParams p = SlotPolicyParams::ForConfig(cfg);
  const Eigen::VectorXd x = FeaturizePrompt(Stage1Task(0), cfg);
  const Eigen::VectorXd lp = SlotLogProbs(p, Slot::kAnswer, x, 5, 1.0);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(lp[i], std::log(0.2), 1e-15);
}

TEST(SampleGroupTest, StepStructureAndCachedLogProbs) {
  const PolicyConfig cfg = SmallConfig();
  const SlotPolicyParams p = RandomParams(cfg, 3, 0.5);
  for (int stage : {1, 2}) {
    const TaskInstance task = stage == 1 ? Stage1Task(4) : Stage2Task(4);
    Rng rng(99);
    const RolloutGroup g = SampleGroup(p, task, 16, 1.0, rng, cfg);
    ASSERT_EQ(g.rollouts.size(), 16u);
    EXPECT_EQ(g.task_id, task.task_id);
    for (const Rollout& r : g.rollouts) {
      ASSERT_EQ(r.steps.size(), stage == 1 ? 3u : 4u);
      EXPECT_EQ(r.steps.back().slot, Slot::kAnswer);
      const std::vector<double> fresh = LogProb(p, task, r, cfg);
      const std::vector<double> cached = StepLogProbs(p, r);
      const std::vector<double> old = r.step_logprobs_old();
      ASSERT_EQ(fresh.size(), r.steps.size());
      for (size_t t = 0; t < fresh.size(); ++t) {
        EXPECT_NEAR(fresh[t], old[t], 1e-12);
        EXPECT_NEAR(cached[t], old[t], 1e-12);
      }
      EXPECT_EQ(r.parsed.think_token_count,
                cfg.length_buckets[r.choices.length_bucket]);
      EXPECT_EQ(r.choices.image.has_value(), stage == 2);
    }
  }
}

TEST(SampleGroupTest, SameRngSeedSameGroup) {
  const PolicyConfig cfg = SmallConfig();
  const SlotPolicyParams p = RandomParams(cfg, 3, 0.5);
  const TaskInstance task = Stage2Task(7);
  Rng r1(5), r2(5);
  const RolloutGroup a = SampleGroup(p, task, 8, 1.0, r1, cfg);
  const RolloutGroup b = SampleGroup(p, task, 8, 1.0, r2, cfg);
  for (size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(a.rollouts[i].choices, b.rollouts[i].choices);
    EXPECT_EQ(a.rollouts[i].rendered_text, b.rollouts[i].rendered_text);
  }
}

// Central differences of the summed log-probability of a fixed rollout.
TEST(GradLogProbTest, MatchesFiniteDifferences) {
  const PolicyConfig cfg = SmallConfig();
  for (uint64_t trial = 0; trial < 6; ++trial) {
    SlotPolicyParams p = RandomParams(cfg, 20 + trial, 0.4);
    const TaskInstance task = trial % 2 ? Stage2Task(trial) : Stage1Task(trial);
    Rng rng(trial);
    const double temperature = 0.7 + 0.2 * static_cast<double>(trial);
    const Rollout r = SampleGroup(p, task, 2, temperature, rng, cfg)
                          .rollouts.front();
    const SlotPolicyParams grad = GradLogProb(p, task, r, cfg);
    auto total = [&](const SlotPolicyParams& q) {
      double s = 0.0;
      for (double v : StepLogProbs(q, r)) s += v;
      return s;
    };
    const double h = 1e-6;
    for (size_t i = 0; i < p.size(); ++i) {
      const double keep = p.at(i);
      p.at(i) = keep + h;
      const double up = total(p);
      p.at(i) = keep - h;
      const double down = total(p);
      p.at(i) = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(grad.at(i), fd, 1e-6 + 1e-5 * std::fabs(fd)) << i;
    }
  }
}

TEST(RenderTest, ThinkLengthAndGrounding) {
  const PolicyConfig cfg;
  const TaskInstance task = Stage2Task(5);
  for (size_t bucket = 0; bucket < cfg.length_buckets.size(); ++bucket) {
    for (size_t quality : {0u, 1u}) {
      SlotChoices c;
      c.answer = 0;
      c.image = *task.correct_image_index;
      c.length_bucket = bucket;
      c.quality = quality;
      const std::string think = RenderThink(c, task, cfg);
      EXPECT_EQ(CountTokens(think), cfg.length_buckets[bucket]);
      const bool cites_image = think.find(task.metric) != std::string::npos;
      if (quality == 1 && cfg.length_buckets[bucket] >= 75) {
        EXPECT_TRUE(cites_image) << think.substr(0, 200);
      }
      if (quality == 0) {
        EXPECT_FALSE(cites_image);
      }
    }
  }
}

TEST(ReasonTest, GroundedOnCorrectImageSupportsCorrectOption) {
  for (uint64_t id = 0; id < 100; ++id) {
    const TaskInstance task = Stage2Task(id);
    const ReasoningTrace t = Reason(task, task.correct_image_index, 1);
    ASSERT_TRUE(t.supported_option.has_value()) << task.question;
    EXPECT_EQ(task.options[*t.supported_option].label, task.correct_option);
    EXPECT_FALSE(Reason(task, task.correct_image_index, 0)
                     .supported_option.has_value());
  }
  for (uint64_t id = 0; id < 100; ++id) {
    const TaskInstance task = Stage1Task(id);
    const ReasoningTrace t = Reason(task, std::nullopt, 1);
    ASSERT_TRUE(t.supported_option.has_value()) << task.question;
    EXPECT_EQ(task.options[*t.supported_option].label, task.correct_option);
  }
}

TEST(GreedyTest, ZeroParamsPickFirstOfEachSlot) {
  const PolicyConfig cfg;
  const SlotPolicyParams p = SlotPolicyParams::ForConfig(cfg);
  const SlotChoices c = GreedyChoices(p, Stage2Task(0), cfg);
  EXPECT_EQ(c.answer, 0u);
  EXPECT_EQ(c.length_bucket, 0u);
  EXPECT_EQ(c.quality, 0u);
  ASSERT_TRUE(c.image.has_value());
  EXPECT_EQ(*c.image, 0u);
}

TEST(SlotPolicyParamsTest, ShapeChecks) {
  const PolicyConfig cfg = SmallConfig();
  SlotPolicyParams a = SlotPolicyParams::ForConfig(cfg);
  PolicyConfig other = cfg;
  other.feature_dim += 1;
  const SlotPolicyParams b = SlotPolicyParams::ForConfig(other);
  EXPECT_FALSE(a.SameShape(b));
  EXPECT_THROW(a.AddScaled(b, 1.0), ValidationError);
  SlotPolicyParams c = RandomParams(cfg, 1, 1.0);
  a.AddScaled(c, 2.0);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.at(i), 2.0 * c.at(i));
  EXPECT_TRUE(a.AllFinite());
  a.at(3) = std::nan("");
  EXPECT_FALSE(a.AllFinite());
}

TEST(CheckpointTest, SaveLoadRoundTrip) {
  PolicyConfig cfg = SmallConfig();
  cfg.length_buckets = {75, 300, 450, 525, 900};
  const SlotPolicyParams p = RandomParams(cfg, 8, 1.3);
  std::stringstream buf;
  SavePolicy(buf, p, cfg);
  PolicyConfig loaded;
  const SlotPolicyParams q = LoadPolicy(buf, loaded);
  EXPECT_TRUE(p == q);
  EXPECT_EQ(loaded.feature_dim, cfg.feature_dim);
  EXPECT_EQ(loaded.length_buckets, cfg.length_buckets);
  EXPECT_EQ(loaded.hash_seed, cfg.hash_seed);
}

TEST(CheckpointTest, MalformedIsRejected) {
  PolicyConfig cfg;
  std::stringstream bad("tarl-policy 1\nfeature_dim banana\n");
  EXPECT_THROW(LoadPolicy(bad, cfg), ValidationError);
  std::stringstream wrong("something else\n");
  EXPECT_THROW(LoadPolicy(wrong, cfg), ValidationError);
}

}  // namespace
}  // namespace tarl
