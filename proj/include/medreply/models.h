/*
 * Copyright (C) 2026 The medreply Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MEDREPLY_MODELS_H_
#define MEDREPLY_MODELS_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/random.h"

namespace medreply {

enum class TriggerKind {
  kLinearLogistic,
  kKnnTfidf,
  kKnnWeighted,
  kFrequency,
  kExternal,
};

enum class ResponseKind {
  kSoftmaxLinear,
  kKnnTfidf,
  kKnnWeighted,
  kFrequency,
  kExternal,
};

std::string_view TriggerKindName(TriggerKind kind);
std::string_view ResponseKindName(ResponseKind kind);
TriggerKind ParseTriggerKind(std::string_view name);
ResponseKind ParseResponseKind(std::string_view name);

// Message lengths are scaled by this before becoming a feature.
inline constexpr double kLengthScale = 200.0;

struct TrainConfig {
  double learning_rate = 2.0;
  int epochs = 50;
  double l2 = 1e-4;
  int early_stop_patience = 5;
  uint64_t seed = 0;
  bool include_length_feature = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

// A cleaned message with its precomputed representations.
struct Query {
  std::string raw_text;
  std::string text;
  Tokens tokens;
  std::vector<double> embedding;
  size_t word_count = 0;
};

class Featurizer {
 public:
  Featurizer(const EmbeddingTable& table, const TfIdfStats& stats)
      : table_(&table), stats_(&stats) {}

  // `cleaned_text` must already have gone through the text cleaner.
  Query MakeQuery(std::string_view cleaned_text,
                  std::string_view raw_text = {}) const;

  const EmbeddingTable& table() const { return *table_; }
  const TfIdfStats& stats() const { return *stats_; }

 private:
  const EmbeddingTable* table_;
  const TfIdfStats* stats_;
};

// Sentence embedding, optionally followed by word_count / 200.
std::vector<double> Featurize(std::string_view patient_text,
                              const EmbeddingTable& table,
                              const TfIdfStats& stats, bool include_length);
std::vector<double> Featurize(const Query& query, bool include_length);

struct ScoredResponse {
  std::string response_id;
  double score = 0.0;
};

class TriggerModel {
 public:
  virtual ~TriggerModel() = default;
  virtual TriggerKind kind() const = 0;
  // Probability that the message should trigger suggestions.
  virtual double Score(const Query& query) const = 0;
  virtual nlohmann::json ToJson() const = 0;
};

class ResponseModel {
 public:
  explicit ResponseModel(std::vector<std::string> label_space)
      : label_space_(std::move(label_space)) {}
  virtual ~ResponseModel() = default;
  virtual ResponseKind kind() const = 0;
  // Probability per label_space entry; non-negative, sums to one.
  virtual std::vector<double> Distribution(const Query& query) const = 0;
  virtual nlohmann::json ToJson() const = 0;

  const std::vector<std::string>& label_space() const { return label_space_; }

 private:
  std::vector<std::string> label_space_;
};

// Scores sorted descending, ties by response id; covers the whole label space.
std::vector<ScoredResponse> RankResponses(const ResponseModel& model,
                                          const Query& query);
std::vector<ScoredResponse> PredictTopK(const ResponseModel& model,
                                        const Query& query, size_t k);
// 1-based rank of `truth`, 0 when absent.
size_t RankOf(const std::vector<ScoredResponse>& ranking,
              const std::string& truth);

// ---------------------------------------------------------------------------
// Linear models

// Row-major weights (rows x dim) with a per-feature standardization applied
// to inputs before the affine map.
struct LinearParams {
  size_t rows = 0;
  size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  std::vector<double> Standardize(std::span<const double> features) const;
  std::vector<double> Logits(std::span<const double> features) const;
};

// Flattened parameter vector layout used by the loss functions:
// [weights (rows*dim), bias (rows)].
struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Mean logistic loss plus (l2/2)*|w|^2 over rows of `x` (n x dim).
LossAndGradient LogisticLoss(std::span<const double> x, size_t dim,
                             std::span<const int> labels,
                             std::span<const double> params, double l2);

// Mean softmax cross-entropy plus (l2/2)*|W|^2; labels index classes.
LossAndGradient SoftmaxLoss(std::span<const double> x, size_t dim,
                            std::span<const int> labels, size_t n_classes,
                            std::span<const double> params, double l2);

double Sigmoid(double z);
std::vector<double> Softmax(std::span<const double> logits);

struct TrainingTrace {
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> validation_metric;  // index = epoch, 0 = zero weights
};

class LinearLogisticTrigger : public TriggerModel {
 public:
  LinearLogisticTrigger(LinearParams params, TrainConfig config,
                        std::string train_fingerprint);
  TriggerKind kind() const override { return TriggerKind::kLinearLogistic; }
  double Score(const Query& query) const override;
  // Throws kDimMismatch when the feature count is wrong.
  double PredictFeatures(std::span<const double> features) const;
  nlohmann::json ToJson() const override;

  const LinearParams& params() const { return params_; }
  const TrainConfig& config() const { return config_; }

 private:
  LinearParams params_;
  TrainConfig config_;
  std::string train_fingerprint_;
};

class SoftmaxLinearResponder : public ResponseModel {
 public:
  SoftmaxLinearResponder(std::vector<std::string> label_space,
                         LinearParams params, TrainConfig config,
                         std::string train_fingerprint);
  ResponseKind kind() const override { return ResponseKind::kSoftmaxLinear; }
  std::vector<double> Distribution(const Query& query) const override;
  std::vector<double> PredictFeatures(std::span<const double> features) const;
  nlohmann::json ToJson() const override;

  const LinearParams& params() const { return params_; }

 private:
  LinearParams params_;
  TrainConfig config_;
  std::string train_fingerprint_;
};

std::string DatasetFingerprint(const Dataset& ds);

// Full-batch gradient descent from zero weights; keeps the epoch with the best
// validation AUC (validation log-likelihood breaks AUC ties) and stops after
// `early_stop_patience` epochs without gain.
// Throws kSingleClass when the training split lacks a class.
std::unique_ptr<LinearLogisticTrigger> TrainTrigger(
    const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const TrainConfig& config,
    TrainingTrace* trace = nullptr);

// Multinomial logistic regression over feasible pairs; validation metric is
// mean log-likelihood of the true label. Throws kEmptyFeasible or
// kSingleClass.
std::unique_ptr<SoftmaxLinearResponder> TrainResponse(
    const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const TrainConfig& config,
    TrainingTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Similarity baselines

enum class KnnKind { kTfidf, kWeighted };

// Training messages with their representations for 1-NN lookup.
class KnnIndex {
 public:
  // Throws kEmptyIndex for an empty training set.
  KnnIndex(KnnKind kind, const Dataset& train, const Featurizer& featurizer);

  KnnKind kind() const { return kind_; }
  size_t size() const { return labels_.size(); }
  const std::vector<std::string>& label_space() const { return label_space_; }

  // Cosine similarity of the query to every training message.
  std::vector<double> Similarities(const Query& query) const;

  // 1-NN feasibility label (ties to the lowest index).
  double TriggerScore(const Query& query) const;
  // Per-label score: best-matching instance similarity (floored at zero)
  // plus 1e-6 x training frequency, normalized to sum to one.
  std::vector<double> ResponseDistribution(const Query& query) const;

  nlohmann::json ToJson() const;
  static std::shared_ptr<const KnnIndex> FromJson(const nlohmann::json& j,
                                                  const Featurizer& featurizer);

 private:
  KnnKind kind_;
  std::vector<std::string> texts_;
  std::vector<std::optional<std::string>> labels_;
  std::vector<std::string> label_space_;
  std::vector<double> label_frequency_;
  std::vector<int> label_of_;  // index into label_space_, -1 if infeasible
  const TfIdfStats* stats_;
  // kTfidf: inverted index token -> (doc, normalized weight)
  std::unordered_map<std::string, std::vector<std::pair<uint32_t, double>>>
      postings_;
  // kWeighted: unit-normalized sentence vectors, row-major
  std::vector<double> unit_vectors_;
  size_t dim_ = 0;
};

struct KnnPrediction {
  double trigger_score = 0.0;
  std::vector<ScoredResponse> ranking;
};

KnnPrediction KnnBaselinePredict(const KnnIndex& index, const Query& query);

class KnnTrigger : public TriggerModel {
 public:
  explicit KnnTrigger(std::shared_ptr<const KnnIndex> index)
      : index_(std::move(index)) {}
  TriggerKind kind() const override {
    return index_->kind() == KnnKind::kTfidf ? TriggerKind::kKnnTfidf
                                             : TriggerKind::kKnnWeighted;
  }
  double Score(const Query& query) const override {
    return index_->TriggerScore(query);
  }
  nlohmann::json ToJson() const override;

 private:
  std::shared_ptr<const KnnIndex> index_;
};

class KnnResponder : public ResponseModel {
 public:
  explicit KnnResponder(std::shared_ptr<const KnnIndex> index)
      : ResponseModel(index->label_space()), index_(std::move(index)) {}
  ResponseKind kind() const override {
    return index_->kind() == KnnKind::kTfidf ? ResponseKind::kKnnTfidf
                                             : ResponseKind::kKnnWeighted;
  }
  std::vector<double> Distribution(const Query& query) const override {
    return index_->ResponseDistribution(query);
  }
  nlohmann::json ToJson() const override;

 private:
  std::shared_ptr<const KnnIndex> index_;
};

class FrequencyTrigger : public TriggerModel {
 public:
  explicit FrequencyTrigger(double positive_rate)
      : positive_rate_(positive_rate) {}
  TriggerKind kind() const override { return TriggerKind::kFrequency; }
  // Deterministic mode: the expected value of the sampled decision.
  double Score(const Query&) const override { return positive_rate_; }
  // Sampling mode: 1 with probability positive_rate, else 0.
  double Sample(Rng& rng) const { return rng.Bernoulli(positive_rate_) ? 1 : 0; }
  double positive_rate() const { return positive_rate_; }
  nlohmann::json ToJson() const override;

 private:
  double positive_rate_;
};

class FrequencyResponder : public ResponseModel {
 public:
  FrequencyResponder(std::vector<std::string> label_space,
                     std::vector<double> probabilities);
  ResponseKind kind() const override { return ResponseKind::kFrequency; }
  std::vector<double> Distribution(const Query&) const override {
    return probabilities_;
  }
  // Sampling mode: one label index drawn from the distribution.
  size_t Sample(Rng& rng) const;
  nlohmann::json ToJson() const override;

 private:
  std::vector<double> probabilities_;
};

struct FrequencyModels {
  std::unique_ptr<FrequencyTrigger> trigger;
  std::unique_ptr<FrequencyResponder> responder;
};

// Throws kEmptyDataset.
FrequencyModels FrequencyBaseline(const Dataset& train);

// Precomputed scores for models trained elsewhere, keyed by message text
// (raw or cleaned).
class ExternalScores {
 public:
  struct Entry {
    double trigger_score = 0.0;
    std::vector<double> response_scores;
  };

  // JSONL: first line {"label_space": [...]}, then one
  // {"text", "trigger_score", "response_scores"} per instance.
  static std::shared_ptr<const ExternalScores> Parse(std::string_view jsonl);
  static std::shared_ptr<const ExternalScores> Load(
      const std::filesystem::path& path);

  const std::vector<std::string>& label_space() const { return label_space_; }
  // Throws kInvalidArgument when the query has no entry.
  const Entry& Lookup(const Query& query) const;

 private:
  std::vector<std::string> label_space_;
  std::unordered_map<std::string, Entry> entries_;
};

class ExternalTrigger : public TriggerModel {
 public:
  explicit ExternalTrigger(std::shared_ptr<const ExternalScores> scores,
                           std::string source = {})
      : scores_(std::move(scores)), source_(std::move(source)) {}
  TriggerKind kind() const override { return TriggerKind::kExternal; }
  double Score(const Query& query) const override;
  nlohmann::json ToJson() const override;

 private:
  std::shared_ptr<const ExternalScores> scores_;
  std::string source_;
};

class ExternalResponder : public ResponseModel {
 public:
  explicit ExternalResponder(std::shared_ptr<const ExternalScores> scores,
                             std::string source = {})
      : ResponseModel(scores->label_space()),
        scores_(std::move(scores)),
        source_(std::move(source)) {}
  ResponseKind kind() const override { return ResponseKind::kExternal; }
  std::vector<double> Distribution(const Query& query) const override;
  nlohmann::json ToJson() const override;

 private:
  std::shared_ptr<const ExternalScores> scores_;
  std::string source_;
};

// Model artifacts. kNN artifacts embed their training texts and are rebuilt
// against the given featurizer; external artifacts point at a scores file.
std::unique_ptr<TriggerModel> TriggerFromJson(const nlohmann::json& j,
                                              const Featurizer& featurizer);
std::unique_ptr<ResponseModel> ResponseFromJson(const nlohmann::json& j,
                                                const Featurizer& featurizer);

}  // namespace medreply

#endif  // MEDREPLY_MODELS_H_
