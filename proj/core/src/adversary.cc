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

#include "tarl/adversary.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>

#include "tarl/errors.h"
#include "tarl/rewards.h"
#include "tarl/text.h"

namespace tarl {
namespace {

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// -log sigmoid(z) for y = 1, -log(1 - sigmoid(z)) for y = 0.
double CrossEntropy(double z, int label) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
  return softplus - (label == 1 ? z : 0.0);
}

struct PooledTokens {
  std::vector<size_t> rows;
  Eigen::VectorXd features;
  std::vector<size_t> argmax_token;  // per coordinate, index into rows
};

PooledTokens Pool(const DiscriminatorModel& model, std::string_view text) {
  PooledTokens out;
  const auto d = static_cast<Eigen::Index>(model.dim());
  out.features = Eigen::VectorXd::Zero(2 * d);
  for (std::string_view tok : SplitWhitespace(text)) {
    out.rows.push_back(model.TokenRow(tok));
  }
  if (out.rows.empty()) return out;
  const RowMatrix& embed = model.token_embed();
  out.argmax_token.assign(model.dim(), 0);
  auto max_part = out.features.head(d);
  auto mean_part = out.features.tail(d);
  max_part = embed.row(static_cast<Eigen::Index>(out.rows[0])).transpose();
  mean_part.setZero();
  for (size_t t = 0; t < out.rows.size(); ++t) {
    const auto row = embed.row(static_cast<Eigen::Index>(out.rows[t]));
    mean_part += row.transpose();
    if (t == 0) continue;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (row[k] > max_part[k]) {
        max_part[k] = row[k];
        out.argmax_token[static_cast<size_t>(k)] = t;
      }
    }
  }
  mean_part /= static_cast<double>(out.rows.size());
  return out;
}

}  // namespace

DiscriminatorModel::DiscriminatorModel(size_t vocab_hash_dim, size_t dim,
                                       uint64_t hash_seed, uint64_t init_seed,
                                       double init_scale)
    : vocab_hash_dim_(vocab_hash_dim), dim_(dim), hash_seed_(hash_seed) {
  if (vocab_hash_dim == 0 || dim == 0) {
    throw ValidationError("discriminator dimensions must be positive");
  }
  token_embed_.resize(static_cast<Eigen::Index>(vocab_hash_dim),
                      static_cast<Eigen::Index>(dim));
  Rng rng(init_seed);
  for (Eigen::Index i = 0; i < token_embed_.size(); ++i) {
    token_embed_.data()[i] = init_scale * rng.Normal();
  }
  head_weights_ = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(dim));
}

size_t DiscriminatorModel::TokenRow(std::string_view token) const {
  return HashToken(token, hash_seed_) % vocab_hash_dim_;
}

Eigen::VectorXd DiscriminatorModel::Featurize(std::string_view text) const {
  return Pool(*this, text).features;
}

double DiscriminatorModel::Logit(std::string_view text) const {
  return head_weights_.dot(Featurize(text)) + head_bias_;
}

double DiscriminatorModel::Score(std::string_view text) const {
  // Saturated logits would otherwise round to exactly 0 or 1.
  constexpr double kEdge = 1e-15;
  return std::clamp(Sigmoid(Logit(text)), kEdge, 1.0 - kEdge);
}

void DiscriminatorModel::Save(std::ostream& out) const {
  out << "tarl-discriminator 1\n";
  out << "vocab_hash_dim " << vocab_hash_dim_ << '\n';
  out << "dim " << dim_ << '\n';
  out << "hash_seed " << hash_seed_ << '\n';
  out << "head_bias " << FormatDouble(head_bias_) << '\n';
  out << "head_weights";
  for (Eigen::Index i = 0; i < head_weights_.size(); ++i) {
    out << ' ' << FormatDouble(head_weights_[i]);
  }
  out << '\n';
  for (Eigen::Index r = 0; r < token_embed_.rows(); ++r) {
    for (Eigen::Index c = 0; c < token_embed_.cols(); ++c) {
      if (c > 0) out << ' ';
      out << FormatDouble(token_embed_(r, c));
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed to write discriminator checkpoint");
}

DiscriminatorModel DiscriminatorModel::Load(std::istream& in) {
  auto fail = [](const std::string& why) {
    throw ValidationError("malformed discriminator checkpoint: " + why);
  };
  std::string magic, key;
  int version = 0;
  in >> magic >> version;
  if (magic != "tarl-discriminator" || version != 1) fail("bad header");
  DiscriminatorModel m;
  auto read_double = [&]() {
    std::string tok;
    in >> tok;
    return std::strtod(tok.c_str(), nullptr);
  };
  in >> key >> m.vocab_hash_dim_;
  if (key != "vocab_hash_dim") fail("expected vocab_hash_dim");
  in >> key >> m.dim_;
  if (key != "dim") fail("expected dim");
  in >> key >> m.hash_seed_;
  if (key != "hash_seed") fail("expected hash_seed");
  in >> key;
  if (key != "head_bias") fail("expected head_bias");
  m.head_bias_ = read_double();
  in >> key;
  if (key != "head_weights") fail("expected head_weights");
  if (!in || m.vocab_hash_dim_ == 0 || m.dim_ == 0) fail("bad dimensions");
  m.head_weights_.resize(2 * static_cast<Eigen::Index>(m.dim_));
  for (Eigen::Index i = 0; i < m.head_weights_.size(); ++i) {
    m.head_weights_[i] = read_double();
  }
  m.token_embed_.resize(static_cast<Eigen::Index>(m.vocab_hash_dim_),
                        static_cast<Eigen::Index>(m.dim_));
  for (Eigen::Index i = 0; i < m.token_embed_.size(); ++i) {
    m.token_embed_.data()[i] = read_double();
  }
  if (!in) fail("truncated");
  return m;
}

bool operator==(const DiscriminatorModel& a, const DiscriminatorModel& b) {
  return a.vocab_hash_dim_ == b.vocab_hash_dim_ && a.dim_ == b.dim_ &&
         a.hash_seed_ == b.hash_seed_ && a.head_bias_ == b.head_bias_ &&
         a.head_weights_ == b.head_weights_ && a.token_embed_ == b.token_embed_;
}

double BatchLoss(const DiscriminatorModel& model,
                 std::span<const LabeledThink> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const LabeledThink& s : batch) {
    total += CrossEntropy(model.Logit(s.think_text), s.label);
  }
  return total / static_cast<double>(batch.size());
}

DiscriminatorGradient BatchLossGradient(const DiscriminatorModel& model,
                                        std::span<const LabeledThink> batch) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  DiscriminatorGradient g;
  g.token_embed = RowMatrix::Zero(model.token_embed().rows(),
                                  model.token_embed().cols());
  g.head_weights = Eigen::VectorXd::Zero(2 * d);
  if (batch.empty()) return g;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const LabeledThink& s : batch) {
    const PooledTokens pooled = Pool(model, s.think_text);
    const double z = model.head_weights().dot(pooled.features) +
                     model.head_bias();
    const double dz = (Sigmoid(z) - s.label) * inv_n;
    g.head_weights += dz * pooled.features;
    g.head_bias += dz;
    if (pooled.rows.empty()) continue;

    const Eigen::VectorXd dx = dz * model.head_weights();
    for (Eigen::Index k = 0; k < d; ++k) {
      const size_t row =
          pooled.rows[pooled.argmax_token[static_cast<size_t>(k)]];
      g.token_embed(static_cast<Eigen::Index>(row), k) += dx[k];
    }
    const Eigen::RowVectorXd mean_grad =
        dx.tail(d).transpose() / static_cast<double>(pooled.rows.size());
    for (size_t row : pooled.rows) {
      g.token_embed.row(static_cast<Eigen::Index>(row)) += mean_grad;
    }
  }
  return g;
}

double TrainDiscriminator(DiscriminatorModel& model,
                          std::span<const LabeledThink> samples,
                          const DiscriminatorTrainOptions& options) {
  if (samples.empty()) {
    throw ValidationError("discriminator training batch is empty");
  }
  if (options.batch_size == 0) {
    throw ValidationError("bert_batch_size must be positive");
  }
  for (size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (size_t start = 0; start < samples.size();
         start += options.batch_size) {
      const size_t len = std::min(options.batch_size, samples.size() - start);
      const DiscriminatorGradient g =
          BatchLossGradient(model, samples.subspan(start, len));
      model.token_embed() -= options.learning_rate * g.token_embed;
      model.head_weights() -= options.learning_rate * g.head_weights;
      model.head_bias() -= options.learning_rate * g.head_bias;
    }
  }
  return BatchLoss(model, samples);
}

std::vector<LabeledThink> CollectLabels(const RolloutGroup& group,
                                        const TaskInstance& task) {
  std::vector<LabeledThink> out;
  out.reserve(group.rollouts.size());
  for (const Rollout& r : group.rollouts) {
    out.push_back({r.parsed.think_text,
                   AccuracyReward(r.parsed, task) > 0.5 ? 1 : 0});
  }
  return out;
}

double SharedDiscriminator::Score(std::string_view think_text) const {
  std::unique_lock gate(gate_);
  std::shared_lock lock(mutex_);
  gate.unlock();
  active_scorers_.fetch_add(1);
  if (active_updates_.load() > 0) violations_.fetch_add(1);
  const double s = model_.Score(think_text);
  active_scorers_.fetch_sub(1);
  scores_.fetch_add(1);
  return s;
}

double SharedDiscriminator::Train(std::span<const LabeledThink> samples,
                                  const DiscriminatorTrainOptions& options) {
  std::unique_lock gate(gate_);
  std::unique_lock lock(mutex_);
  gate.unlock();
  active_updates_.fetch_add(1);
  if (active_scorers_.load() > 0) violations_.fetch_add(1);
  double loss = 0.0;
  try {
    loss = TrainDiscriminator(model_, samples, options);
  } catch (...) {
    active_updates_.fetch_sub(1);
    throw;
  }
  active_updates_.fetch_sub(1);
  updates_.fetch_add(1);
  return loss;
}

}  // namespace tarl
