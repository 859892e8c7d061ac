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

#ifndef TARL_ADVERSARY_H_
#define TARL_ADVERSARY_H_

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tarl/policy.h"
#include "tarl/synthenv.h"

namespace tarl {

// Correctness discriminator over thinking text. Each whitespace token is
// hashed to a row of a learned embedding table; the sequence is reduced by
// element-wise max and mean pooling, the two are concatenated and fed to a
// logistic head. Token order does not affect the score.
class DiscriminatorModel {
 public:
  DiscriminatorModel() = default;
  // Embeddings ~ N(0, init_scale^2) from init_seed; the head starts at zero
  // so a fresh model scores 0.5 everywhere.
  DiscriminatorModel(size_t vocab_hash_dim, size_t dim, uint64_t hash_seed,
                     uint64_t init_seed, double init_scale = 0.5);

  size_t vocab_hash_dim() const { return vocab_hash_dim_; }
  size_t dim() const { return dim_; }
  uint64_t hash_seed() const { return hash_seed_; }

  size_t TokenRow(std::string_view token) const;
  // max-pool (first dim entries) followed by mean-pool. Empty text gives
  // the zero vector.
  Eigen::VectorXd Featurize(std::string_view think_text) const;
  double Logit(std::string_view think_text) const;
  // Logistic of the head output; always strictly inside (0, 1) for
  // bounded parameters.
  double Score(std::string_view think_text) const;

  RowMatrix& token_embed() { return token_embed_; }
  const RowMatrix& token_embed() const { return token_embed_; }
  Eigen::VectorXd& head_weights() { return head_weights_; }
  const Eigen::VectorXd& head_weights() const { return head_weights_; }
  double& head_bias() { return head_bias_; }
  double head_bias() const { return head_bias_; }

  // Text checkpoint: "tarl-discriminator 1", then vocab_hash_dim, dim and
  // hash_seed, then the head and the embedding rows.
  void Save(std::ostream& out) const;
  static DiscriminatorModel Load(std::istream& in);

  friend bool operator==(const DiscriminatorModel& a,
                         const DiscriminatorModel& b);

 private:
  size_t vocab_hash_dim_ = 0;
  size_t dim_ = 0;
  uint64_t hash_seed_ = 0;
  RowMatrix token_embed_;
  Eigen::VectorXd head_weights_;
  double head_bias_ = 0.0;
};

struct LabeledThink {
  std::string think_text;
  int label = 0;  // 1 = the rollout's answer was correct
};

struct DiscriminatorGradient {
  RowMatrix token_embed;
  Eigen::VectorXd head_weights;
  double head_bias = 0.0;
};

// Mean binary cross-entropy of the model on the batch.
double BatchLoss(const DiscriminatorModel& model,
                 std::span<const LabeledThink> batch);

// Gradient of BatchLoss. For max pooling the gradient flows to the first
// token attaining the maximum in each coordinate.
DiscriminatorGradient BatchLossGradient(const DiscriminatorModel& model,
                                        std::span<const LabeledThink> batch);

struct DiscriminatorTrainOptions {
  size_t epochs = 1;
  size_t batch_size = 128;
  double learning_rate = 1e-2;
};

// Mini-batch gradient descent over the samples in their given order.
// Returns the mean loss over `samples` after training (epochs = 0 leaves
// the model untouched and reports the current loss). Throws
// ValidationError for an empty sample list.
double TrainDiscriminator(DiscriminatorModel& model,
                          std::span<const LabeledThink> samples,
                          const DiscriminatorTrainOptions& options);

// One labeled sample per rollout, labeled by its accuracy reward.
std::vector<LabeledThink> CollectLabels(const RolloutGroup& group,
                                        const TaskInstance& task);

// Shares one model between scoring workers and the periodic retraining.
// Scoring takes a shared lock, training an exclusive one; the counters
// record any interleaving that would have let a score observe a model
// mid-update.
class SharedDiscriminator {
 public:
  explicit SharedDiscriminator(DiscriminatorModel model)
      : model_(std::move(model)) {}

  double Score(std::string_view think_text) const;
  double Train(std::span<const LabeledThink> samples,
               const DiscriminatorTrainOptions& options);

  // Not synchronized; call only when no Train is running.
  const DiscriminatorModel& model() const { return model_; }

  uint64_t scores() const { return scores_.load(); }
  uint64_t updates() const { return updates_.load(); }
  uint64_t violations() const { return violations_.load(); }

 private:
  DiscriminatorModel model_;
  // Taken briefly by readers and held by a writer while it waits, so a
  // steady stream of scorers cannot starve an update.
  mutable std::mutex gate_;
  mutable std::shared_mutex mutex_;
  mutable std::atomic<int> active_scorers_{0};
  std::atomic<int> active_updates_{0};
  mutable std::atomic<uint64_t> scores_{0};
  std::atomic<uint64_t> updates_{0};
  mutable std::atomic<uint64_t> violations_{0};
};

}  // namespace tarl

#endif  // TARL_ADVERSARY_H_
