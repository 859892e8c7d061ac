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

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tarl/errors.h"
#include "tarl/text.h"

namespace tarl {
namespace {

constexpr std::array<Slot, kNumSlots> kStorageOrder = {
    Slot::kAnswer, Slot::kImage, Slot::kLength, Slot::kQuality};

constexpr std::array<std::string_view, 21> kFiller = {
    "let",  "me",       "think", "about", "this",     ".",  "hmm",
    ",",    "i",        "should", "consider", "the", "options", "carefully",
    ".",    "maybe",    "it",    "is",    "one",      "of", "them"};

void Append(std::vector<std::string>& tokens, std::string_view text) {
  for (std::string_view tok : SplitWhitespace(text)) tokens.emplace_back(tok);
}

std::optional<size_t> OptionSupporting(const TaskInstance& task,
                                       const std::string& result) {
  const CanonicalAnswer value{AnswerKind::kNormalizedValue,
                              NormalizeMath(result)};
  for (size_t i = 0; i < task.options.size(); ++i) {
    const CanonicalAnswer option{AnswerKind::kNormalizedValue,
                                 NormalizeMath(task.options[i].text)};
    if (AnswersEquivalent(value, option)) return i;
  }
  return std::nullopt;
}

void AppendConclusion(std::vector<std::string>& tokens,
                      const TaskInstance& task, const std::string& result,
                      std::optional<size_t> supported) {
  if (supported) {
    const std::string label(1, task.options[*supported].label);
    Append(tokens, "so the result is " + result + " , which is option " +
                       label + " . answer " + label + " .");
  } else {
    Append(tokens, "so the result is " + result +
                       " , which matches no option .");
  }
}

std::string Stage1Expression(const TaskInstance& task) {
  const std::string a = std::to_string(task.operands[0]);
  const std::string b = std::to_string(task.operands[1]);
  switch (task.kind) {
    case QuestionKind::kSum:
      return a + " + " + b;
    case QuestionKind::kDifference:
      return a + " - " + b;
    default:
      return "( " + b + " - " + a + " ) / " + a + " * 100";
  }
}

std::string Stage2Ask(const TaskInstance& task) {
  const std::string scope = task.metric + " " + std::to_string(task.year);
  switch (task.kind) {
    case QuestionKind::kSeriesSum:
      return "combined " + scope + " of " + task.segments.at(0) + " and " +
             task.segments.at(1);
    case QuestionKind::kMaxSeries:
      return "highest " + scope;
    case QuestionKind::kMinSeries:
      return "lowest " + scope;
    default:
      return scope + " of " + task.segments.at(0);
  }
}

size_t SampleIndex(const Eigen::VectorXd& logprobs, Rng& rng) {
  const double u = rng.Uniform();
  double cumulative = 0.0;
  for (Eigen::Index j = 0; j < logprobs.size(); ++j) {
    cumulative += std::exp(logprobs[j]);
    if (u < cumulative) return static_cast<size_t>(j);
  }
  Eigen::Index best;
  logprobs.maxCoeff(&best);
  return static_cast<size_t>(best);
}

size_t ArgMax(const Eigen::VectorXd& v) {
  Eigen::Index best;
  v.maxCoeff(&best);
  return static_cast<size_t>(best);
}

std::string BuildThink(const ReasoningTrace& trace, size_t quality,
                       size_t length) {
  std::vector<std::string> tokens;
  tokens.reserve(length + 16);
  if (quality == 1) {
    tokens = trace.tokens;
    while (tokens.size() < length) {
      Append(tokens, "double-checking :");
      tokens.insert(tokens.end(), trace.tokens.begin(), trace.tokens.end());
    }
  } else {
    for (size_t i = 0; tokens.size() < length; ++i) {
      tokens.emplace_back(kFiller[i % kFiller.size()]);
    }
  }
  tokens.resize(length);
  return Join(tokens, " ");
}

void CheckTaskFits(const TaskInstance& task, const PolicyConfig& cfg) {
  if (task.options.size() > cfg.n_options || task.options.size() < 2) {
    throw ValidationError("task option count does not fit the policy");
  }
  if (task.images.size() > cfg.max_images) {
    throw ValidationError("task has more images than the policy supports");
  }
}

}  // namespace

const char* SlotName(Slot slot) {
  switch (slot) {
    case Slot::kAnswer:
      return "answer";
    case Slot::kImage:
      return "image";
    case Slot::kLength:
      return "length";
    case Slot::kQuality:
      return "quality";
  }
  return "unknown";
}

void PolicyConfig::Validate() const {
  if (n_options < 2) throw ValidationError("policy needs at least 2 options");
  if (max_images < 1) throw ValidationError("max_images must be positive");
  if (length_buckets.empty()) {
    throw ValidationError("length_buckets must not be empty");
  }
  if (feature_dim < FeatureLayout::MinFeatureDim(*this)) {
    throw ValidationError("f must be at least " +
                          std::to_string(FeatureLayout::MinFeatureDim(*this)));
  }
}

size_t FeatureLayout::MinFeatureDim(const PolicyConfig& cfg) {
  return 2 + cfg.max_images * kImageFeatures + cfg.n_options + kContextFlags;
}

FeatureLayout FeatureLayout::For(const PolicyConfig& cfg) {
  FeatureLayout layout;
  const size_t tail =
      cfg.max_images * kImageFeatures + cfg.n_options + kContextFlags;
  layout.question_size = cfg.feature_dim - 1 - tail;
  layout.image_begin = layout.question_begin + layout.question_size;
  layout.context_begin = layout.image_begin + cfg.max_images * kImageFeatures;
  return layout;
}

SlotPolicyParams::SlotPolicyParams(size_t feature_dim, size_t n_options,
                                   size_t max_images,
                                   size_t n_length_buckets) {
  const auto f = static_cast<Eigen::Index>(feature_dim);
  slot(Slot::kAnswer) = RowMatrix::Zero(static_cast<Eigen::Index>(n_options), f);
  slot(Slot::kImage) = RowMatrix::Zero(static_cast<Eigen::Index>(max_images), f);
  slot(Slot::kLength) =
      RowMatrix::Zero(static_cast<Eigen::Index>(n_length_buckets), f);
  slot(Slot::kQuality) = RowMatrix::Zero(2, f);
}

SlotPolicyParams SlotPolicyParams::ForConfig(const PolicyConfig& cfg) {
  return SlotPolicyParams(cfg.feature_dim, cfg.n_options, cfg.max_images,
                          cfg.length_buckets.size());
}

size_t SlotPolicyParams::size() const {
  size_t n = 0;
  for (const RowMatrix& m : w_) n += static_cast<size_t>(m.size());
  return n;
}

double& SlotPolicyParams::at(size_t flat) {
  for (RowMatrix& m : w_) {
    if (flat < static_cast<size_t>(m.size())) return m.data()[flat];
    flat -= static_cast<size_t>(m.size());
  }
  throw ValidationError("parameter index out of range");
}

double SlotPolicyParams::at(size_t flat) const {
  return const_cast<SlotPolicyParams*>(this)->at(flat);
}

SlotPolicyParams SlotPolicyParams::ZerosLike() const {
  SlotPolicyParams z;
  for (size_t i = 0; i < kNumSlots; ++i) {
    z.w_[i] = RowMatrix::Zero(w_[i].rows(), w_[i].cols());
  }
  return z;
}

bool SlotPolicyParams::SameShape(const SlotPolicyParams& other) const {
  for (size_t i = 0; i < kNumSlots; ++i) {
    if (w_[i].rows() != other.w_[i].rows() ||
        w_[i].cols() != other.w_[i].cols()) {
      return false;
    }
  }
  return true;
}

void SlotPolicyParams::AddScaled(const SlotPolicyParams& other, double scale) {
  if (!SameShape(other)) {
    throw ValidationError("parameter shape mismatch");
  }
  for (size_t i = 0; i < kNumSlots; ++i) w_[i] += scale * other.w_[i];
}

bool SlotPolicyParams::AllFinite() const {
  for (const RowMatrix& m : w_) {
    if (!m.allFinite()) return false;
  }
  return true;
}

double SlotPolicyParams::SquaredNorm() const {
  double s = 0.0;
  for (const RowMatrix& m : w_) s += m.squaredNorm();
  return s;
}

bool operator==(const SlotPolicyParams& a, const SlotPolicyParams& b) {
  if (!a.SameShape(b)) return false;
  for (size_t i = 0; i < kNumSlots; ++i) {
    if (a.w_[i] != b.w_[i]) return false;
  }
  return true;
}

std::vector<double> Rollout::step_logprobs_old() const {
  std::vector<double> out;
  for (const PolicyStep& s : steps) out.push_back(s.logprob_old);
  return out;
}

Eigen::VectorXd FeaturizePrompt(const TaskInstance& task,
                                const PolicyConfig& cfg) {
  const FeatureLayout layout = FeatureLayout::For(cfg);
  Eigen::VectorXd phi =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.feature_dim));
  phi[layout.bias] = 1.0;

  const std::string lowered = ToLower(task.question);
  const auto tokens = SplitWhitespace(lowered);
  if (!tokens.empty()) {
    const double w = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
    for (std::string_view tok : tokens) {
      const size_t h = HashToken(tok, cfg.hash_seed) % layout.question_size;
      phi[static_cast<Eigen::Index>(layout.question_begin + h)] += w;
    }
  }

  const size_t n_images = std::min(task.images.size(), cfg.max_images);
  std::vector<double> sims(n_images);
  double best = 0.0;
  for (size_t k = 0; k < n_images; ++k) {
    sims[k] = JaccardSimilarity(task.question, task.images[k].rendered_text);
    best = std::max(best, sims[k]);
  }
  for (size_t k = 0; k < n_images; ++k) {
    const auto base = static_cast<Eigen::Index>(
        layout.image_begin + k * FeatureLayout::kImageFeatures);
    phi[base] = 1.0;
    phi[base + 1] = sims[k];
    phi[base + 2] = best > 0.0 ? sims[k] / best : 0.0;
  }
  return phi;
}

ReasoningTrace Reason(const TaskInstance& task, std::optional<size_t> image,
                      size_t quality) {
  ReasoningTrace trace;
  if (quality == 0) return trace;

  if (task.stage == 1) {
    const std::optional<std::string> result = DeriveAnswer(task, nullptr);
    Append(trace.tokens, "the question asks : " + ToLower(task.question));
    if (!result) {
      Append(trace.tokens, "i cannot evaluate this .");
      return trace;
    }
    Append(trace.tokens, "working : " + Stage1Expression(task) + " = " +
                             *result + " .");
    trace.supported_option = OptionSupporting(task, *result);
    AppendConclusion(trace.tokens, task, *result, trace.supported_option);
    return trace;
  }

  const SyntheticImage* chosen =
      image && *image < task.images.size() ? &task.images[*image] : nullptr;
  if (chosen != nullptr) {
    Append(trace.tokens, "reading image " + std::to_string(*image) + " : " +
                             chosen->rendered_text);
  }
  Append(trace.tokens, "asked : " + Stage2Ask(task) + " .");
  const std::optional<std::string> result = DeriveAnswer(task, chosen);
  if (!result) {
    Append(trace.tokens, "this image has no " + task.metric + " " +
                             std::to_string(task.year) +
                             " rows , so no option is supported .");
    return trace;
  }
  trace.supported_option = OptionSupporting(task, *result);
  AppendConclusion(trace.tokens, task, *result, trace.supported_option);
  return trace;
}

Eigen::VectorXd AnswerFeatures(const Eigen::VectorXd& prompt_features,
                               const ReasoningTrace& trace, size_t quality,
                               const PolicyConfig& cfg) {
  const FeatureLayout layout = FeatureLayout::For(cfg);
  Eigen::VectorXd phi = prompt_features;
  const auto ctx = static_cast<Eigen::Index>(layout.context_begin);
  const auto n = static_cast<Eigen::Index>(cfg.n_options);
  if (quality == 1) {
    if (trace.supported_option) {
      phi[ctx + static_cast<Eigen::Index>(*trace.supported_option)] = 1.0;
    }
    phi[ctx + n] = 1.0;
    phi[ctx + n + 1] = trace.supported_option ? 0.0 : 1.0;
  }
  return phi;
}

std::string RenderThink(const SlotChoices& choices, const TaskInstance& task,
                        const PolicyConfig& cfg) {
  const ReasoningTrace trace = Reason(task, choices.image, choices.quality);
  return BuildThink(trace, choices.quality,
                    cfg.length_buckets.at(choices.length_bucket));
}

std::string Render(const SlotChoices& choices, const TaskInstance& task,
                   const PolicyConfig& cfg) {
  std::string text = "<think>" + RenderThink(choices, task, cfg) +
                     "</think><answer>";
  text.push_back(task.options.at(choices.answer).label);
  text += "</answer>";
  if (!task.images.empty()) {
    text += "<image_selection>" +
            (choices.image ? std::to_string(*choices.image) : std::string()) +
            "</image_selection>";
  }
  return text;
}

Eigen::VectorXd SlotLogProbs(const SlotPolicyParams& params, Slot slot,
                             const Eigen::VectorXd& features, size_t n_active,
                             double temperature) {
  const auto n = static_cast<Eigen::Index>(n_active);
  const Eigen::VectorXd z =
      params.slot(slot).topRows(n) * features / temperature;
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

RolloutGroup SampleGroup(const SlotPolicyParams& params,
                         const TaskInstance& task, size_t g,
                         double temperature, Rng& rng,
                         const PolicyConfig& cfg) {
  if (g < 2) throw ValidationError("group size must be at least 2");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  CheckTaskFits(task, cfg);

  const Eigen::VectorXd phi = FeaturizePrompt(task, cfg);
  RolloutGroup group;
  group.task_id = task.task_id;
  group.rollouts.reserve(g);

  auto decide = [&](Rollout& r, Slot slot, const Eigen::VectorXd& features,
                    size_t n_active) {
    const Eigen::VectorXd lp =
        SlotLogProbs(params, slot, features, n_active, temperature);
    const size_t choice = SampleIndex(lp, rng);
    r.steps.push_back({slot, n_active, features, choice,
                       lp[static_cast<Eigen::Index>(choice)]});
    return choice;
  };

  for (size_t i = 0; i < g; ++i) {
    Rollout r;
    r.temperature = temperature;
    if (!task.images.empty()) {
      r.choices.image = decide(r, Slot::kImage, phi, task.images.size());
    }
    r.choices.length_bucket =
        decide(r, Slot::kLength, phi, cfg.length_buckets.size());
    r.choices.quality = decide(r, Slot::kQuality, phi, 2);
    const ReasoningTrace trace =
        Reason(task, r.choices.image, r.choices.quality);
    r.choices.answer =
        decide(r, Slot::kAnswer,
               AnswerFeatures(phi, trace, r.choices.quality, cfg),
               task.options.size());
    r.rendered_text = Render(r.choices, task, cfg);
    r.parsed = ParseOutput(r.rendered_text);
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

SlotChoices GreedyChoices(const SlotPolicyParams& params,
                          const TaskInstance& task, const PolicyConfig& cfg) {
  CheckTaskFits(task, cfg);
  const Eigen::VectorXd phi = FeaturizePrompt(task, cfg);
  SlotChoices c;
  if (!task.images.empty()) {
    c.image = ArgMax(params.slot(Slot::kImage)
                         .topRows(static_cast<Eigen::Index>(task.images.size())) *
                     phi);
  }
  c.length_bucket = ArgMax(params.slot(Slot::kLength) * phi);
  c.quality = ArgMax(params.slot(Slot::kQuality) * phi);
  const ReasoningTrace trace = Reason(task, c.image, c.quality);
  const Eigen::VectorXd answer_phi = AnswerFeatures(phi, trace, c.quality, cfg);
  c.answer = ArgMax(params.slot(Slot::kAnswer)
                        .topRows(static_cast<Eigen::Index>(task.options.size())) *
                    answer_phi);
  return c;
}

std::vector<double> LogProb(const SlotPolicyParams& params,
                            const TaskInstance& task, const Rollout& rollout,
                            const PolicyConfig& cfg) {
  CheckTaskFits(task, cfg);
  const Eigen::VectorXd phi = FeaturizePrompt(task, cfg);
  std::vector<double> out;
  for (const PolicyStep& step : rollout.steps) {
    Eigen::VectorXd features = phi;
    if (step.slot == Slot::kAnswer) {
      const ReasoningTrace trace =
          Reason(task, rollout.choices.image, rollout.choices.quality);
      features = AnswerFeatures(phi, trace, rollout.choices.quality, cfg);
    }
    const Eigen::VectorXd lp = SlotLogProbs(params, step.slot, features,
                                            step.n_active, rollout.temperature);
    out.push_back(lp[static_cast<Eigen::Index>(step.choice)]);
  }
  return out;
}

std::vector<double> StepLogProbs(const SlotPolicyParams& params,
                                 const Rollout& rollout) {
  std::vector<double> out;
  out.reserve(rollout.steps.size());
  for (const PolicyStep& step : rollout.steps) {
    const Eigen::VectorXd lp = SlotLogProbs(
        params, step.slot, step.features, step.n_active, rollout.temperature);
    out.push_back(lp[static_cast<Eigen::Index>(step.choice)]);
  }
  return out;
}

void AccumulateStepGradient(const SlotPolicyParams& params,
                            const PolicyStep& step, double temperature,
                            double weight, SlotPolicyParams& grad) {
  const Eigen::VectorXd lp = SlotLogProbs(params, step.slot, step.features,
                                          step.n_active, temperature);
  // d log p_c / d z_j = onehot_c - p, z = W x / temperature.
  Eigen::VectorXd coef = -lp.array().exp();
  coef[static_cast<Eigen::Index>(step.choice)] += 1.0;
  coef *= weight / temperature;
  grad.slot(step.slot).topRows(static_cast<Eigen::Index>(step.n_active)) +=
      coef * step.features.transpose();
}

SlotPolicyParams GradLogProb(const SlotPolicyParams& params,
                             const TaskInstance& task, const Rollout& rollout,
                             const PolicyConfig& cfg) {
  CheckTaskFits(task, cfg);
  const Eigen::VectorXd phi = FeaturizePrompt(task, cfg);
  SlotPolicyParams grad = params.ZerosLike();
  for (const PolicyStep& cached : rollout.steps) {
    PolicyStep step = cached;
    step.features = phi;
    if (step.slot == Slot::kAnswer) {
      const ReasoningTrace trace =
          Reason(task, rollout.choices.image, rollout.choices.quality);
      step.features = AnswerFeatures(phi, trace, rollout.choices.quality, cfg);
    }
    AccumulateStepGradient(params, step, rollout.temperature, 1.0, grad);
  }
  return grad;
}

void SavePolicy(std::ostream& out, const SlotPolicyParams& params,
                const PolicyConfig& cfg) {
  out << "tarl-policy 1\n";
  out << "feature_dim " << params.feature_dim() << '\n';
  out << "n_options " << params.slot(Slot::kAnswer).rows() << '\n';
  out << "max_images " << params.slot(Slot::kImage).rows() << '\n';
  out << "length_buckets";
  for (size_t b : cfg.length_buckets) out << ' ' << b;
  out << '\n';
  out << "hash_seed " << cfg.hash_seed << '\n';
  for (Slot s : kStorageOrder) {
    const RowMatrix& m = params.slot(s);
    out << SlotName(s) << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c > 0) out << ' ';
        out << FormatDouble(m(r, c));
      }
      out << '\n';
    }
  }
  out.flush();
  if (!out) throw IoError("failed to write policy checkpoint");
}

SlotPolicyParams LoadPolicy(std::istream& in, PolicyConfig& cfg) {
  auto fail = [](const std::string& why) -> void {
    throw ValidationError("malformed policy checkpoint: " + why);
  };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "tarl-policy" || version != 1) fail("bad header");

  auto expect_key = [&](const char* key) {
    std::string k;
    in >> k;
    if (k != key) fail(std::string("expected ") + key);
  };
  size_t feature_dim = 0, n_options = 0, max_images = 0;
  expect_key("feature_dim");
  in >> feature_dim;
  expect_key("n_options");
  in >> n_options;
  expect_key("max_images");
  in >> max_images;
  expect_key("length_buckets");
  std::string line;
  std::getline(in, line);
  std::vector<size_t> buckets;
  std::istringstream bucket_stream(line);
  for (size_t b; bucket_stream >> b;) buckets.push_back(b);
  expect_key("hash_seed");
  uint64_t hash_seed = 0;
  in >> hash_seed;
  if (!in) fail("truncated header");

  SlotPolicyParams params(feature_dim, n_options, max_images, buckets.size());
  for (Slot s : kStorageOrder) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    RowMatrix& m = params.slot(s);
    if (name != SlotName(s) || rows != m.rows() || cols != m.cols()) {
      fail(std::string("bad block header for ") + SlotName(s));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::string tok;
      in >> tok;
      m.data()[i] = std::strtod(tok.c_str(), nullptr);
    }
    if (!in) fail("truncated parameters");
  }
  cfg.feature_dim = feature_dim;
  cfg.n_options = n_options;
  cfg.max_images = max_images;
  cfg.length_buckets = std::move(buckets);
  cfg.hash_seed = hash_seed;
  return params;
}

}  // namespace tarl
