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

#ifndef MEDREPLY_PIPELINE_H_
#define MEDREPLY_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "medreply/canned.h"
#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/eval.h"
#include "medreply/models.h"
#include "medreply/textprep.h"

namespace medreply {

struct PipelineConfig {
  TriggerKind trigger_kind = TriggerKind::kLinearLogistic;
  ResponseKind response_kind = ResponseKind::kSoftmaxLinear;
  double threshold_p = kDefaultThreshold;
  size_t k = 3;
  int max_words = 200;
  uint64_t seed = 42;

  CleanConfig clean;
  TrainConfig train;
  CannedBuildOptions canned;

  // Experiment protocol.
  int folds = 5;
  double val_fraction = 0.2;
  // Tokens seen at least this often in training text form the spell lexicon
  // when no lexicon file is given.
  int64_t lexicon_min_count = 2;

  // Artifact paths; empty means "not provided".
  std::filesystem::path embeddings;
  std::filesystem::path abbreviations;
  std::filesystem::path lexicon;
  std::filesystem::path canned_set;
  std::filesystem::path external_scores;

  // Throws kInvalidArgument.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; relative paths resolve against
  // `base_dir`.
  static PipelineConfig FromJson(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
  static PipelineConfig Load(const std::filesystem::path& path);
};

struct SuggestionItem {
  size_t rank = 0;
  std::string response_id;
  std::string display_text;
  double score = 0.0;
  int cluster_id = 0;
};

struct Suggestion {
  bool triggered = false;
  double trigger_score = 0.0;
  std::vector<SuggestionItem> items;
  double latency_ms = 0.0;
};

// Everything `Suggest` needs, immutable once models are attached. Models hold
// references into the table and TF-IDF statistics owned here, so the object
// is neither copyable nor movable.
class Artifacts {
 public:
  Artifacts(std::shared_ptr<const EmbeddingTable> table, TfIdfStats stats,
            TextCleaner cleaner, CannedSet canned);
  Artifacts(const Artifacts&) = delete;
  Artifacts& operator=(const Artifacts&) = delete;

  // Canned responses missing from the responder's label space are never
  // suggested; labels missing from the canned set are skipped.
  void SetModels(std::unique_ptr<TriggerModel> trigger,
                 std::unique_ptr<ResponseModel> responder);

  // Directory layout: pipeline.json, embeddings.txt, tfidf.json,
  // abbreviations.tsv, lexicon.tsv, canned.json, trigger.json,
  // responder.json. Throws kArtifactsMissing when a file is absent.
  static std::unique_ptr<Artifacts> LoadDir(const std::filesystem::path& dir,
                                            PipelineConfig* config = nullptr);
  void SaveDir(const std::filesystem::path& dir,
               const PipelineConfig& config) const;

  const EmbeddingTable& table() const { return *table_; }
  const TfIdfStats& stats() const { return stats_; }
  const TextCleaner& cleaner() const { return cleaner_; }
  const CannedSet& canned() const { return canned_; }
  const Featurizer& featurizer() const { return featurizer_; }
  const TriggerModel* trigger() const { return trigger_.get(); }
  const ResponseModel* responder() const { return responder_.get(); }
  bool ready() const { return trigger_ && responder_; }

  // Content hash per artifact, keyed by file name.
  const std::map<std::string, std::string>& fingerprints() const {
    return fingerprints_;
  }

  // Index into canned().responses for each responder label, or -1.
  const std::vector<int>& label_to_canned() const { return label_to_canned_; }

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  TfIdfStats stats_;
  TextCleaner cleaner_;
  CannedSet canned_;
  Featurizer featurizer_;
  std::unique_ptr<TriggerModel> trigger_;
  std::unique_ptr<ResponseModel> responder_;
  std::vector<int> label_to_canned_;
  size_t distinct_clusters_ = 0;
  std::map<std::string, std::string> fingerprints_;

  friend Suggestion Suggest(std::string_view, const PipelineConfig&,
                            const Artifacts&);
};

// clean -> length gate -> trigger at threshold_p -> rank -> one response per
// cluster -> diversity rules -> top k. Read-only over `artifacts`; safe to
// call concurrently. Throws kArtifactsMissing when models are not attached.
Suggestion Suggest(std::string_view raw_patient_text,
                   const PipelineConfig& config, const Artifacts& artifacts);

// ---------------------------------------------------------------------------
// Training

// Spell lexicon from training text: normalized, abbreviation-expanded
// tokens of patient messages and doctor replies.
SpellLexicon FitLexicon(const std::vector<MessagePair>& pairs,
                        const AbbrevDict& dict, int64_t min_count);

// Cleans every pair; pairs dropped by the length gate are omitted.
// `kept` receives the surviving input indices.
Dataset CleanDataset(const Dataset& raw, const TextCleaner& cleaner,
                     std::vector<size_t>* kept = nullptr);

// One document per patient message and per doctor reply.
TfIdfStats FitTfidfOnPairs(const Dataset& cleaned);

// Trains a serving pipeline on all labelled pairs, holding out
// val_fraction (stratified) for early stopping.
std::unique_ptr<Artifacts> TrainPipeline(
    const Dataset& raw, std::shared_ptr<const EmbeddingTable> table,
    const AbbrevDict& dict, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Experiments

struct ModelGrid {
  std::vector<TriggerKind> triggers;
  std::vector<ResponseKind> responders;

  // Every built-in kind; External is added when `with_external` is set.
  static ModelGrid All(bool with_external = false);
  // Just the configured trigger/responder pair.
  static ModelGrid Single(const PipelineConfig& config);
};

struct TriggerResult {
  BinaryReport report;
  std::optional<double> auc;  // absent when the test split has one class
};

struct ResponderResult {
  double precision_at_1 = 0.0;
  double precision_at_3 = 0.0;
  double precision_at_5 = 0.0;
  double mrr = 0.0;
  size_t n = 0;
};

struct FoldResult {
  size_t n_train = 0;
  size_t n_validation = 0;
  size_t n_test = 0;
  size_t n_canned = 0;
  std::string canned_fingerprint;
  std::map<std::string, TriggerResult> triggers;      // by kind name
  std::map<std::string, ResponderResult> responders;  // by kind name
  std::vector<SweepPoint> sweep;                      // configured pair
  // Pipeline precision@3 at threshold_p: matrix[trigger][responder].
  std::map<std::string, std::map<std::string, double>> matrix;
};

struct ExperimentReport {
  PipelineConfig config;
  size_t n_pairs = 0;
  double infeasible_fraction = 0.0;
  std::vector<std::string> trigger_names;
  std::vector<std::string> responder_names;
  std::vector<FoldResult> folds;

  nlohmann::json ToJson() const;
  // Aligned-column tables: trigger metrics, responder metrics, matrix.
  std::string ToText() const;
  // threshold + five rates + pipeline precision@3, fold means.
  std::string SweepCsv() const;
  // trigger,responder,mean,sd over folds.
  std::string MatrixCsv() const;
};

struct ExperimentOptions {
  ModelGrid grid;
  int jobs = 1;
  // When set, per-fold models and canned sets go to models/fold_i/.
  std::optional<std::filesystem::path> models_dir;
};

// Stratified k-fold run. Per fold, the lexicon, TF-IDF statistics and canned
// set come from the training split only.
ExperimentReport RunExperiment(const Dataset& raw,
                               std::shared_ptr<const EmbeddingTable> table,
                               const AbbrevDict& dict,
                               const PipelineConfig& config,
                               const ExperimentOptions& options);

// Single held-out evaluation of a trained pipeline, reported as one fold.
ExperimentReport EvaluateArtifacts(const Artifacts& artifacts,
                                   const Dataset& raw_test,
                                   const PipelineConfig& config);

// report.json, report.txt, sweep.csv, matrix.csv (atomic writes).
void WriteExperiment(const ExperimentReport& report,
                     const std::filesystem::path& out_dir);

}  // namespace medreply

#endif  // MEDREPLY_PIPELINE_H_
