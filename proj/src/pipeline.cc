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

#include "medreply/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "medreply/error.h"
#include "medreply/io.h"

namespace medreply {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kConfigFile[] = "pipeline.json";
constexpr char kEmbeddingsFile[] = "embeddings.txt";
constexpr char kTfidfFile[] = "tfidf.json";
constexpr char kAbbrevFile[] = "abbreviations.tsv";
constexpr char kLexiconFile[] = "lexicon.tsv";
constexpr char kCannedFile[] = "canned.json";
constexpr char kTriggerFile[] = "trigger.json";
constexpr char kResponderFile[] = "responder.json";

std::string PathString(const fs::path& p) { return p.empty() ? "" : p.string(); }

fs::path ResolvePath(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

CleanConfig EffectiveClean(const PipelineConfig& config) {
  CleanConfig clean = config.clean;
  clean.max_words = config.max_words;
  return clean;
}

json MeanSdJson(const std::vector<double>& values) {
  const MeanSd m = Summarize(values);
  return {{"mean", m.mean}, {"sd", m.sd}};
}

std::string Fixed(double value, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
  return buf;
}

std::string MeanSdText(const std::vector<double>& values) {
  if (values.empty()) return "n/a";
  const MeanSd m = Summarize(values);
  return Fixed(m.mean) + " +- " + Fixed(m.sd);
}

// Renders rows as left-aligned columns separated by two spaces.
std::string Table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += line + "\n";
  }
  return out;
}

// Non-owning view of the models evaluated on one split.
struct ModelSet {
  std::vector<std::pair<std::string, const TriggerModel*>> triggers;
  std::vector<std::pair<std::string, const ResponseModel*>> responders;
};

// Owned models trained on one fold.
struct TrainedModels {
  std::vector<std::unique_ptr<TriggerModel>> triggers;
  std::vector<std::unique_ptr<ResponseModel>> responders;

  ModelSet View() const {
    ModelSet set;
    for (const auto& t : triggers) {
      set.triggers.emplace_back(std::string(TriggerKindName(t->kind())), t.get());
    }
    for (const auto& r : responders) {
      set.responders.emplace_back(std::string(ResponseKindName(r->kind())),
                                  r.get());
    }
    return set;
  }
};

std::shared_ptr<const ExternalScores> LoadExternal(const PipelineConfig& config) {
  if (config.external_scores.empty()) {
    throw Error(ErrorCode::kArtifactsMissing,
                "External model requested without an external scores file");
  }
  return ExternalScores::Load(config.external_scores);
}

std::unique_ptr<TriggerModel> TrainOneTrigger(
    TriggerKind kind, const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const PipelineConfig& config,
    std::map<KnnKind, std::shared_ptr<const KnnIndex>>& knn,
    std::shared_ptr<const ExternalScores>& external) {
  auto index = [&](KnnKind k) {
    auto& slot = knn[k];
    if (!slot) slot = std::make_shared<KnnIndex>(k, train, featurizer);
    return slot;
  };
  switch (kind) {
    case TriggerKind::kLinearLogistic:
      return TrainTrigger(train, validation, featurizer, config.train);
    case TriggerKind::kKnnTfidf:
      return std::make_unique<KnnTrigger>(index(KnnKind::kTfidf));
    case TriggerKind::kKnnWeighted:
      return std::make_unique<KnnTrigger>(index(KnnKind::kWeighted));
    case TriggerKind::kFrequency:
      return std::move(FrequencyBaseline(train).trigger);
    case TriggerKind::kExternal:
      if (!external) external = LoadExternal(config);
      return std::make_unique<ExternalTrigger>(external,
                                               PathString(config.external_scores));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown trigger kind");
}

std::unique_ptr<ResponseModel> TrainOneResponder(
    ResponseKind kind, const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const PipelineConfig& config,
    std::map<KnnKind, std::shared_ptr<const KnnIndex>>& knn,
    std::shared_ptr<const ExternalScores>& external) {
  auto index = [&](KnnKind k) {
    auto& slot = knn[k];
    if (!slot) slot = std::make_shared<KnnIndex>(k, train, featurizer);
    return slot;
  };
  switch (kind) {
    case ResponseKind::kSoftmaxLinear: {
      // message length feeds the trigger only
      TrainConfig response_config = config.train;
      response_config.include_length_feature = false;
      return TrainResponse(train, validation, featurizer, response_config);
    }
    case ResponseKind::kKnnTfidf:
      return std::make_unique<KnnResponder>(index(KnnKind::kTfidf));
    case ResponseKind::kKnnWeighted:
      return std::make_unique<KnnResponder>(index(KnnKind::kWeighted));
    case ResponseKind::kFrequency:
      return std::move(FrequencyBaseline(train).responder);
    case ResponseKind::kExternal:
      if (!external) external = LoadExternal(config);
      return std::make_unique<ExternalResponder>(
          external, PathString(config.external_scores));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown response kind");
}

TrainedModels TrainModels(const ModelGrid& grid, const Dataset& train,
                          const Dataset& validation,
                          const Featurizer& featurizer,
                          const PipelineConfig& config) {
  TrainedModels models;
  std::map<KnnKind, std::shared_ptr<const KnnIndex>> knn;
  std::shared_ptr<const ExternalScores> external;
  for (TriggerKind kind : grid.triggers) {
    models.triggers.push_back(TrainOneTrigger(kind, train, validation,
                                              featurizer, config, knn, external));
  }
  for (ResponseKind kind : grid.responders) {
    models.responders.push_back(TrainOneResponder(
        kind, train, validation, featurizer, config, knn, external));
  }
  return models;
}

// Test instances after cleaning. Over-long messages stay in the test set as
// forced no-trigger decisions, which is how the pipeline treats them.
struct TestSplit {
  std::vector<Query> queries;
  std::vector<int> labels;  // 1 feasible, 0 infeasible
  std::vector<std::optional<std::string>> truths;
  std::vector<bool> too_long;
};

TestSplit PrepareTest(const std::vector<MessagePair>& raw_pairs,
                      const TextCleaner& cleaner, const Featurizer& featurizer) {
  TestSplit split;
  for (const MessagePair& pair : raw_pairs) {
    const bool too_long = cleaner.TooLong(pair.patient_text);
    const std::string cleaned = too_long ? "" : cleaner.CleanText(pair.patient_text);
    split.queries.push_back(featurizer.MakeQuery(cleaned, pair.patient_text));
    split.labels.push_back(pair.feasible ? 1 : 0);
    split.truths.push_back(pair.doctor_response_id);
    split.too_long.push_back(too_long);
  }
  return split;
}

FoldResult EvaluateModels(const ModelSet& models, const TestSplit& test,
                          const PipelineConfig& config) {
  FoldResult result;
  result.n_test = test.queries.size();
  const size_t n = test.queries.size();
  const bool both_classes =
      std::count(test.labels.begin(), test.labels.end(), 1) > 0 &&
      std::count(test.labels.begin(), test.labels.end(), 0) > 0;

  std::map<std::string, std::vector<double>> trigger_scores;
  for (const auto& [name, model] : models.triggers) {
    std::vector<double> scores(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (!test.too_long[i]) scores[i] = model->Score(test.queries[i]);
    }
    TriggerResult tr;
    if (n > 0) {
      tr.report = MakeBinaryReport(scores, test.labels, config.threshold_p);
    }
    if (both_classes) tr.auc = AucRoc(scores, test.labels);
    result.triggers[name] = tr;
    trigger_scores[name] = std::move(scores);
  }

  // Ranks over every test instance; 0 for infeasible ones and for truths
  // outside the responder's label space.
  std::map<std::string, std::vector<size_t>> truth_ranks;
  for (const auto& [name, model] : models.responders) {
    std::vector<size_t> ranks(n, 0);
    std::vector<size_t> feasible_ranks;
    for (size_t i = 0; i < n; ++i) {
      if (!test.labels[i] || !test.truths[i]) continue;
      const auto ranking = RankResponses(*model, test.queries[i]);
      ranks[i] = RankOf(ranking, *test.truths[i]);
      // a truth the model cannot rank sits just past the end of the ranking
      feasible_ranks.push_back(ranks[i] ? ranks[i] : ranking.size() + 1);
    }
    ResponderResult rr;
    rr.n = feasible_ranks.size();
    if (rr.n > 0) {
      rr.precision_at_1 = PrecisionAtKFromRanks(feasible_ranks, 1);
      rr.precision_at_3 = PrecisionAtKFromRanks(feasible_ranks, 3);
      rr.precision_at_5 = PrecisionAtKFromRanks(feasible_ranks, 5);
      rr.mrr = MeanReciprocalRank(feasible_ranks);
    }
    result.responders[name] = rr;
    truth_ranks[name] = std::move(ranks);
  }

  if (n == 0) return result;
  for (const auto& [tname, scores] : trigger_scores) {
    for (const auto& [rname, ranks] : truth_ranks) {
      result.matrix[tname][rname] =
          ClassifyAtThreshold(scores, test.labels, ranks, config.threshold_p)
              .PipelinePrecision();
    }
  }
  const std::string main_trigger(TriggerKindName(config.trigger_kind));
  const std::string main_responder(ResponseKindName(config.response_kind));
  if (trigger_scores.count(main_trigger) && truth_ranks.count(main_responder)) {
    const std::vector<double> grid = DefaultThresholdGrid();
    result.sweep = ThresholdSweep(trigger_scores[main_trigger], test.labels,
                                  truth_ranks[main_responder], grid);
  }
  return result;
}

void SaveFoldModels(const fs::path& dir, const TrainedModels& models,
                    const CannedSet& canned, const TfIdfStats& stats) {
  for (const auto& t : models.triggers) {
    WriteFileAtomic(dir / ("trigger_" + std::string(TriggerKindName(t->kind())) + ".json"),
                    t->ToJson().dump() + "\n");
  }
  for (const auto& r : models.responders) {
    WriteFileAtomic(
        dir / ("responder_" + std::string(ResponseKindName(r->kind())) + ".json"),
        r->ToJson().dump() + "\n");
  }
  WriteFileAtomic(dir / kCannedFile, canned.ToJson());
  WriteFileAtomic(dir / kTfidfFile, stats.ToJson());
}

FoldResult RunFold(const Dataset& raw, const FoldSplit& split,
                   const EmbeddingTable& table, const AbbrevDict& dict,
                   const PipelineConfig& config, const ExperimentOptions& options,
                   size_t fold_index) {
  const Dataset raw_train = raw.Subset(split.train);
  const Dataset raw_val = raw.Subset(split.validation);
  const SpellLexicon lexicon =
      config.lexicon.empty()
          ? FitLexicon(raw_train.pairs, dict, config.lexicon_min_count)
          : SpellLexicon::Load(config.lexicon);
  const TextCleaner cleaner(EffectiveClean(config), dict, lexicon);
  const Dataset train = CleanDataset(raw_train, cleaner);
  const Dataset validation = CleanDataset(raw_val, cleaner);
  const TfIdfStats stats = FitTfidfOnPairs(train);
  const CannedSet canned = CannedFromLabels(train, table, stats, config.canned);
  const Featurizer featurizer(table, stats);

  const TrainedModels models =
      TrainModels(options.grid, train, validation, featurizer, config);
  const TestSplit test =
      PrepareTest(raw.Subset(split.test).pairs, cleaner, featurizer);
  FoldResult result = EvaluateModels(models.View(), test, config);
  result.n_train = train.size();
  result.n_validation = validation.size();
  result.n_canned = canned.responses.size();
  result.canned_fingerprint = canned.Fingerprint();
  if (options.models_dir) {
    SaveFoldModels(*options.models_dir / ("fold_" + std::to_string(fold_index)),
                   models, canned, stats);
  }
  return result;
}

json ClassJson(const std::vector<const ClassMetrics*>& per_fold) {
  std::vector<double> p, r, f;
  for (const ClassMetrics* m : per_fold) {
    p.push_back(m->precision);
    r.push_back(m->recall);
    f.push_back(m->f1);
  }
  return {{"precision", MeanSdJson(p)}, {"recall", MeanSdJson(r)},
          {"f1", MeanSdJson(f)}};
}

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig

void PipelineConfig::Validate() const {
  if (!(threshold_p >= 0.0 && threshold_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold_p must lie in [0,1]");
  }
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  if (max_words < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_words must be at least 1");
  }
  if (folds < 2) throw Error(ErrorCode::kInvalidArgument, "folds must be >= 2");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "val_fraction must lie in [0,1)");
  }
  if (lexicon_min_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "lexicon_min_count must be >= 1");
  }
  if (!(canned.density_threshold >= 0.0 && canned.density_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "density_threshold must lie in [0,1]");
  }
  EffectiveClean(*this).Validate();
  train.Validate();
}

json PipelineConfig::ToJson() const {
  return {
      {"trigger_kind", TriggerKindName(trigger_kind)},
      {"response_kind", ResponseKindName(response_kind)},
      {"threshold_p", threshold_p},
      {"k", k},
      {"max_words", max_words},
      {"seed", seed},
      {"clean",
       {{"expand_abbrev", clean.expand_abbrev},
        {"spell_correct", clean.spell_correct},
        {"max_edit_distance", clean.max_edit_distance}}},
      {"train", train.ToJson()},
      {"canned",
       {{"k_min", canned.k_min},
        {"k_max", canned.k_max},
        {"density_threshold", canned.density_threshold}}},
      {"folds", folds},
      {"val_fraction", val_fraction},
      {"lexicon_min_count", lexicon_min_count},
      {"embeddings", PathString(embeddings)},
      {"abbreviations", PathString(abbreviations)},
      {"lexicon", PathString(lexicon)},
      {"canned_set", PathString(canned_set)},
      {"external_scores", PathString(external_scores)},
  };
}

PipelineConfig PipelineConfig::FromJson(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("trigger_kind")) {
      c.trigger_kind = ParseTriggerKind(j.at("trigger_kind").get<std::string>());
    }
    if (j.contains("response_kind")) {
      c.response_kind =
          ParseResponseKind(j.at("response_kind").get<std::string>());
    }
    c.threshold_p = j.value("threshold_p", c.threshold_p);
    c.k = j.value("k", c.k);
    c.max_words = j.value("max_words", c.max_words);
    c.seed = j.value("seed", c.seed);
    if (j.contains("clean")) {
      const json& cj = j.at("clean");
      c.clean.expand_abbrev = cj.value("expand_abbrev", c.clean.expand_abbrev);
      c.clean.spell_correct = cj.value("spell_correct", c.clean.spell_correct);
      c.clean.max_edit_distance =
          cj.value("max_edit_distance", c.clean.max_edit_distance);
    }
    if (j.contains("train")) c.train = TrainConfig::FromJson(j.at("train"));
    if (j.contains("canned")) {
      const json& cj = j.at("canned");
      c.canned.k_min = cj.value("k_min", c.canned.k_min);
      c.canned.k_max = cj.value("k_max", c.canned.k_max);
      c.canned.density_threshold =
          cj.value("density_threshold", c.canned.density_threshold);
    }
    c.folds = j.value("folds", c.folds);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.lexicon_min_count = j.value("lexicon_min_count", c.lexicon_min_count);
    c.embeddings = ResolvePath(j, "embeddings", base_dir);
    c.abbreviations = ResolvePath(j, "abbreviations", base_dir);
    c.lexicon = ResolvePath(j, "lexicon", base_dir);
    c.canned_set = ResolvePath(j, "canned_set", base_dir);
    c.external_scores = ResolvePath(j, "external_scores", base_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("pipeline config: ") + e.what());
  }
  c.clean.max_words = c.max_words;
  c.Validate();
  return c;
}

PipelineConfig PipelineConfig::Load(const fs::path& path) {
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + ": " + e.what());
  }
  return FromJson(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Artifacts

Artifacts::Artifacts(std::shared_ptr<const EmbeddingTable> table,
                     TfIdfStats stats, TextCleaner cleaner, CannedSet canned)
    : table_(std::move(table)),
      stats_(std::move(stats)),
      cleaner_(std::move(cleaner)),
      canned_(std::move(canned)),
      featurizer_(*table_, stats_) {
  canned_.Validate();
}

void Artifacts::SetModels(std::unique_ptr<TriggerModel> trigger,
                          std::unique_ptr<ResponseModel> responder) {
  if (!trigger || !responder) {
    throw Error(ErrorCode::kArtifactsMissing, "trigger and responder required");
  }
  trigger_ = std::move(trigger);
  responder_ = std::move(responder);
  std::unordered_map<std::string, int> by_id;
  for (size_t i = 0; i < canned_.responses.size(); ++i) {
    by_id.emplace(canned_.responses[i].id, static_cast<int>(i));
  }
  label_to_canned_.clear();
  std::set<int> clusters;
  for (const std::string& label : responder_->label_space()) {
    auto it = by_id.find(label);
    label_to_canned_.push_back(it == by_id.end() ? -1 : it->second);
    if (it != by_id.end()) clusters.insert(canned_.responses[it->second].cluster_id);
  }
  distinct_clusters_ = clusters.size();

  fingerprints_.clear();
  fingerprints_[kEmbeddingsFile] = Fingerprint(table_->ToText());
  fingerprints_[kTfidfFile] = Fingerprint(stats_.ToJson());
  fingerprints_[kAbbrevFile] = Fingerprint(cleaner_.dict().ToTsv());
  fingerprints_[kLexiconFile] = Fingerprint(cleaner_.lexicon().ToTsv());
  fingerprints_[kCannedFile] = canned_.Fingerprint();
  fingerprints_[kTriggerFile] = Fingerprint(trigger_->ToJson().dump() + "\n");
  fingerprints_[kResponderFile] = Fingerprint(responder_->ToJson().dump() + "\n");
}

void Artifacts::SaveDir(const fs::path& dir, const PipelineConfig& config) const {
  if (!ready()) throw Error(ErrorCode::kArtifactsMissing, "models not attached");
  json cj = config.ToJson();
  // the directory is self-contained; external paths are the only references
  for (const char* key : {"embeddings", "abbreviations", "lexicon", "canned_set"}) {
    cj[key] = "";
  }
  WriteFileAtomic(dir / kConfigFile, cj.dump(2) + "\n");
  WriteFileAtomic(dir / kEmbeddingsFile, table_->ToText());
  WriteFileAtomic(dir / kTfidfFile, stats_.ToJson());
  WriteFileAtomic(dir / kAbbrevFile, cleaner_.dict().ToTsv());
  WriteFileAtomic(dir / kLexiconFile, cleaner_.lexicon().ToTsv());
  WriteFileAtomic(dir / kCannedFile, canned_.ToJson());
  WriteFileAtomic(dir / kTriggerFile, trigger_->ToJson().dump() + "\n");
  WriteFileAtomic(dir / kResponderFile, responder_->ToJson().dump() + "\n");
}

std::unique_ptr<Artifacts> Artifacts::LoadDir(const fs::path& dir,
                                              PipelineConfig* config) {
  for (const char* name : {kConfigFile, kEmbeddingsFile, kTfidfFile, kAbbrevFile,
                           kLexiconFile, kCannedFile, kTriggerFile,
                           kResponderFile}) {
    if (!fs::exists(dir / name)) {
      throw Error(ErrorCode::kArtifactsMissing, (dir / name).string());
    }
  }
  const PipelineConfig loaded = PipelineConfig::Load(dir / kConfigFile);
  auto table = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::Load(dir / kEmbeddingsFile));
  TfIdfStats stats = TfIdfStats::FromJson(ReadFile(dir / kTfidfFile));
  TextCleaner cleaner(EffectiveClean(loaded), AbbrevDict::Load(dir / kAbbrevFile),
                      SpellLexicon::Load(dir / kLexiconFile));
  auto artifacts = std::make_unique<Artifacts>(
      std::move(table), std::move(stats), std::move(cleaner),
      CannedSet::Load(dir / kCannedFile));
  auto load_json = [&](const char* name) {
    try {
      return json::parse(ReadFile(dir / name));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord,
                  (dir / name).string() + ": " + e.what());
    }
  };
  artifacts->SetModels(
      TriggerFromJson(load_json(kTriggerFile), artifacts->featurizer()),
      ResponseFromJson(load_json(kResponderFile), artifacts->featurizer()));
  for (auto& [name, fp] : artifacts->fingerprints_) fp = FileFingerprint(dir / name);
  if (config) *config = loaded;
  return artifacts;
}

// ---------------------------------------------------------------------------
// Suggest

Suggestion Suggest(std::string_view raw_patient_text,
                   const PipelineConfig& config, const Artifacts& artifacts) {
  const auto start = std::chrono::steady_clock::now();
  if (!artifacts.ready()) {
    throw Error(ErrorCode::kArtifactsMissing, "models not attached");
  }
  Suggestion s;
  auto finish = [&] {
    s.latency_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    return s;
  };
  if (WordCount(raw_patient_text) > static_cast<size_t>(config.max_words)) {
    return finish();
  }
  const Query query = artifacts.featurizer().MakeQuery(
      artifacts.cleaner().CleanText(raw_patient_text), raw_patient_text);
  s.trigger_score = artifacts.trigger()->Score(query);
  if (s.trigger_score < config.threshold_p) return finish();
  s.triggered = true;

  const std::vector<double> dist = artifacts.responder()->Distribution(query);
  const std::vector<std::string>& labels = artifacts.responder()->label_space();
  const CannedSet& canned = artifacts.canned();
  struct Candidate {
    size_t label;
    int canned_index;
  };
  std::vector<Candidate> order;
  order.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (artifacts.label_to_canned_[i] >= 0) {
      order.push_back({i, artifacts.label_to_canned_[i]});
    }
  }
  std::sort(order.begin(), order.end(), [&](const Candidate& a, const Candidate& b) {
    if (dist[a.label] != dist[b.label]) return dist[a.label] > dist[b.label];
    return labels[a.label] < labels[b.label];
  });
  const size_t k = std::min(config.k, artifacts.distinct_clusters_);
  if (k == 0) return finish();
  std::vector<RankedCandidate> ranked;
  ranked.reserve(order.size());
  for (const Candidate& c : order) {
    ranked.push_back({labels[c.label], canned.responses[c.canned_index].cluster_id,
                      dist[c.label]});
  }
  const std::vector<RankedCandidate> top = DedupeTopK(ranked, k);
  for (size_t r = 0; r < top.size(); ++r) {
    const CannedResponse* response = canned.Find(top[r].response_id);
    SuggestionItem item;
    item.rank = r + 1;
    item.response_id = top[r].response_id;
    item.display_text =
        ApplyDiversityRules(*response, raw_patient_text, canned.rules);
    item.score = top[r].score;
    item.cluster_id = top[r].cluster_id;
    s.items.push_back(std::move(item));
  }
  return finish();
}

// ---------------------------------------------------------------------------
// Training

SpellLexicon FitLexicon(const std::vector<MessagePair>& pairs,
                        const AbbrevDict& dict, int64_t min_count) {
  std::vector<Tokens> docs;
  docs.reserve(pairs.size() * 2);
  for (const MessagePair& p : pairs) {
    docs.push_back(ExpandAbbreviations(Tokenize(Normalize(p.patient_text)), dict));
    if (p.raw_doctor_text) {
      docs.push_back(
          ExpandAbbreviations(Tokenize(Normalize(*p.raw_doctor_text)), dict));
    }
  }
  return SpellLexicon::FromCorpus(docs, min_count);
}

Dataset CleanDataset(const Dataset& raw, const TextCleaner& cleaner,
                     std::vector<size_t>* kept) {
  std::vector<MessagePair> pairs;
  if (kept) kept->clear();
  for (size_t i = 0; i < raw.pairs.size(); ++i) {
    if (auto cleaned = cleaner.CleanPair(raw.pairs[i])) {
      pairs.push_back(std::move(*cleaned));
      if (kept) kept->push_back(i);
    }
  }
  return Dataset::FromPairs(std::move(pairs));
}

TfIdfStats FitTfidfOnPairs(const Dataset& cleaned) {
  std::vector<Tokens> docs;
  for (const MessagePair& p : cleaned.pairs) {
    docs.push_back(Tokenize(p.patient_text));
    if (p.raw_doctor_text) docs.push_back(Tokenize(*p.raw_doctor_text));
  }
  return FitTfidf(docs);
}

std::unique_ptr<Artifacts> TrainPipeline(
    const Dataset& raw, std::shared_ptr<const EmbeddingTable> table,
    const AbbrevDict& dict, const PipelineConfig& config) {
  config.Validate();
  if (raw.pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "no pairs");
  const SpellLexicon lexicon =
      config.lexicon.empty()
          ? FitLexicon(raw.pairs, dict, config.lexicon_min_count)
          : SpellLexicon::Load(config.lexicon);
  TextCleaner cleaner(EffectiveClean(config), dict, lexicon);
  const Dataset cleaned = CleanDataset(raw, cleaner);
  if (cleaned.pairs.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "every pair was dropped by cleaning");
  }

  // Hold out a stratified validation share for early stopping; tiny data
  // validates on the training set itself.
  Dataset train = cleaned;
  Dataset validation = cleaned;
  if (config.val_fraction > 0.0) {
    const int parts = std::max(
        2, static_cast<int>(std::lround(1.0 / config.val_fraction)));
    if (cleaned.size() >= static_cast<size_t>(parts)) {
      const FoldSplit split = StratifiedKFold(cleaned, parts, 0.0, config.seed)[0];
      train = cleaned.Subset(split.train);
      validation = cleaned.Subset(split.test);
    }
  }

  TfIdfStats stats = FitTfidfOnPairs(cleaned);
  CannedSet canned = config.canned_set.empty()
                         ? CannedFromLabels(cleaned, *table, stats, config.canned)
                         : CannedSet::Load(config.canned_set);
  auto artifacts = std::make_unique<Artifacts>(
      std::move(table), std::move(stats), std::move(cleaner), std::move(canned));
  std::map<KnnKind, std::shared_ptr<const KnnIndex>> knn;
  std::shared_ptr<const ExternalScores> external;
  auto trigger = TrainOneTrigger(config.trigger_kind, train, validation,
                                 artifacts->featurizer(), config, knn, external);
  auto responder = TrainOneResponder(config.response_kind, train, validation,
                                     artifacts->featurizer(), config, knn,
                                     external);
  artifacts->SetModels(std::move(trigger), std::move(responder));
  return artifacts;
}

// ---------------------------------------------------------------------------
// Experiments

ModelGrid ModelGrid::All(bool with_external) {
  ModelGrid grid;
  grid.triggers = {TriggerKind::kLinearLogistic, TriggerKind::kKnnTfidf,
                   TriggerKind::kKnnWeighted, TriggerKind::kFrequency};
  grid.responders = {ResponseKind::kSoftmaxLinear, ResponseKind::kKnnTfidf,
                     ResponseKind::kKnnWeighted, ResponseKind::kFrequency};
  if (with_external) {
    grid.triggers.push_back(TriggerKind::kExternal);
    grid.responders.push_back(ResponseKind::kExternal);
  }
  return grid;
}

ModelGrid ModelGrid::Single(const PipelineConfig& config) {
  return {{config.trigger_kind}, {config.response_kind}};
}

ExperimentReport RunExperiment(const Dataset& raw,
                               std::shared_ptr<const EmbeddingTable> table,
                               const AbbrevDict& dict,
                               const PipelineConfig& config,
                               const ExperimentOptions& options) {
  config.Validate();
  if (options.grid.triggers.empty() || options.grid.responders.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model grid is empty");
  }
  const std::vector<FoldSplit> splits =
      StratifiedKFold(raw, config.folds, config.val_fraction, config.seed);

  ExperimentReport report;
  report.config = config;
  report.n_pairs = raw.size();
  report.infeasible_fraction = raw.infeasible_fraction;
  for (TriggerKind k : options.grid.triggers) {
    report.trigger_names.emplace_back(TriggerKindName(k));
  }
  for (ResponseKind k : options.grid.responders) {
    report.responder_names.emplace_back(ResponseKindName(k));
  }
  report.folds.resize(splits.size());

  // Folds are independent and deterministic; workers pick them up in order
  // and write into their own slot.
  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t f = next++; f < splits.size(); f = next++) {
      try {
        report.folds[f] =
            RunFold(raw, splits[f], *table, dict, config, options, f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const size_t jobs = std::clamp<size_t>(options.jobs, 1, splits.size());
  std::vector<std::thread> threads;
  for (size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

ExperimentReport EvaluateArtifacts(const Artifacts& artifacts,
                                   const Dataset& raw_test,
                                   const PipelineConfig& config) {
  if (!artifacts.ready()) {
    throw Error(ErrorCode::kArtifactsMissing, "models not attached");
  }
  ModelSet models;
  const std::string tname(TriggerKindName(artifacts.trigger()->kind()));
  const std::string rname(ResponseKindName(artifacts.responder()->kind()));
  models.triggers.emplace_back(tname, artifacts.trigger());
  models.responders.emplace_back(rname, artifacts.responder());
  PipelineConfig eval_config = config;
  eval_config.trigger_kind = artifacts.trigger()->kind();
  eval_config.response_kind = artifacts.responder()->kind();
  const TestSplit test =
      PrepareTest(raw_test.pairs, artifacts.cleaner(), artifacts.featurizer());
  ExperimentReport report;
  report.config = eval_config;
  report.n_pairs = raw_test.size();
  report.infeasible_fraction = raw_test.infeasible_fraction;
  report.trigger_names = {tname};
  report.responder_names = {rname};
  FoldResult fold = EvaluateModels(models, test, eval_config);
  fold.n_canned = artifacts.canned().responses.size();
  fold.canned_fingerprint = artifacts.canned().Fingerprint();
  report.folds.push_back(std::move(fold));
  return report;
}

json ExperimentReport::ToJson() const {
  json j;
  j["config"] = config.ToJson();
  j["n_pairs"] = n_pairs;
  j["infeasible_fraction"] = infeasible_fraction;
  j["n_folds"] = folds.size();

  json triggers = json::object();
  for (const std::string& name : trigger_names) {
    std::vector<double> accuracy, auc;
    std::vector<const ClassMetrics*> feasible, infeasible;
    for (const FoldResult& f : folds) {
      const TriggerResult& t = f.triggers.at(name);
      accuracy.push_back(t.report.accuracy);
      if (t.auc) auc.push_back(*t.auc);
      feasible.push_back(&t.report.feasible);
      infeasible.push_back(&t.report.infeasible);
    }
    triggers[name] = {{"accuracy", MeanSdJson(accuracy)},
                      {"auc_roc", auc.empty() ? json() : MeanSdJson(auc)},
                      {"feasible", ClassJson(feasible)},
                      {"infeasible", ClassJson(infeasible)}};
  }
  j["triggers"] = triggers;

  json responders = json::object();
  for (const std::string& name : responder_names) {
    std::vector<double> p1, p3, p5, mrr;
    for (const FoldResult& f : folds) {
      const ResponderResult& r = f.responders.at(name);
      p1.push_back(r.precision_at_1);
      p3.push_back(r.precision_at_3);
      p5.push_back(r.precision_at_5);
      mrr.push_back(r.mrr);
    }
    responders[name] = {{"precision_at_1", MeanSdJson(p1)},
                        {"precision_at_3", MeanSdJson(p3)},
                        {"precision_at_5", MeanSdJson(p5)},
                        {"mrr", MeanSdJson(mrr)}};
  }
  j["responders"] = responders;

  json matrix = json::object();
  for (const std::string& t : trigger_names) {
    for (const std::string& r : responder_names) {
      std::vector<double> cells;
      for (const FoldResult& f : folds) cells.push_back(f.matrix.at(t).at(r));
      matrix[t][r] = MeanSdJson(cells);
    }
  }
  j["matrix"] = matrix;

  json per_fold = json::array();
  for (const FoldResult& f : folds) {
    json fj = {{"n_train", f.n_train},
               {"n_validation", f.n_validation},
               {"n_test", f.n_test},
               {"n_canned", f.n_canned},
               {"canned_fingerprint", f.canned_fingerprint}};
    for (const auto& [name, t] : f.triggers) {
      fj["triggers"][name] = {{"accuracy", t.report.accuracy},
                              {"auc_roc", t.auc ? json(*t.auc) : json()}};
    }
    for (const auto& [name, r] : f.responders) {
      fj["responders"][name] = {{"precision_at_1", r.precision_at_1},
                                {"precision_at_3", r.precision_at_3},
                                {"precision_at_5", r.precision_at_5},
                                {"mrr", r.mrr},
                                {"n", r.n}};
    }
    per_fold.push_back(std::move(fj));
  }
  j["per_fold"] = per_fold;
  return j;
}

std::string ExperimentReport::ToText() const {
  std::ostringstream out;
  out << "pairs: " << n_pairs << "  infeasible: " << Fixed(infeasible_fraction)
      << "  folds: " << folds.size()
      << "  threshold: " << Fixed(config.threshold_p, 2) << "\n\n";

  out << "Triggering\n";
  std::vector<std::vector<std::string>> rows = {
      {"model", "accuracy", "auc_roc", "precision(feasible)", "recall(feasible)",
       "f1(feasible)", "precision(infeasible)", "recall(infeasible)",
       "f1(infeasible)"}};
  for (const std::string& name : trigger_names) {
    std::vector<double> acc, auc, fp, fr, ff, ip, ir, iff;
    for (const FoldResult& f : folds) {
      const TriggerResult& t = f.triggers.at(name);
      acc.push_back(t.report.accuracy);
      if (t.auc) auc.push_back(*t.auc);
      fp.push_back(t.report.feasible.precision);
      fr.push_back(t.report.feasible.recall);
      ff.push_back(t.report.feasible.f1);
      ip.push_back(t.report.infeasible.precision);
      ir.push_back(t.report.infeasible.recall);
      iff.push_back(t.report.infeasible.f1);
    }
    rows.push_back({name, MeanSdText(acc), MeanSdText(auc), MeanSdText(fp),
                    MeanSdText(fr), MeanSdText(ff), MeanSdText(ip),
                    MeanSdText(ir), MeanSdText(iff)});
  }
  out << Table(rows) << "\n";

  out << "Response ranking (feasible test pairs)\n";
  rows = {{"model", "precision@1", "precision@3", "precision@5", "mrr"}};
  for (const std::string& name : responder_names) {
    std::vector<double> p1, p3, p5, mrr;
    for (const FoldResult& f : folds) {
      const ResponderResult& r = f.responders.at(name);
      p1.push_back(r.precision_at_1);
      p3.push_back(r.precision_at_3);
      p5.push_back(r.precision_at_5);
      mrr.push_back(r.mrr);
    }
    rows.push_back({name, MeanSdText(p1), MeanSdText(p3), MeanSdText(p5),
                    MeanSdText(mrr)});
  }
  out << Table(rows) << "\n";

  out << "Pipeline precision@3 (trigger x responder)\n";
  std::vector<std::string> header = {"trigger"};
  header.insert(header.end(), responder_names.begin(), responder_names.end());
  rows = {header};
  for (const std::string& t : trigger_names) {
    std::vector<std::string> row = {t};
    for (const std::string& r : responder_names) {
      std::vector<double> cells;
      for (const FoldResult& f : folds) cells.push_back(f.matrix.at(t).at(r));
      row.push_back(MeanSdText(cells));
    }
    rows.push_back(std::move(row));
  }
  out << Table(rows);
  return out.str();
}

std::string ExperimentReport::SweepCsv() const {
  std::string out =
      "threshold,tn_rate,correct_top3_rate,fp_rate,fn_rate,miss_rate,"
      "pipeline_precision_at_3\n";
  if (folds.empty() || folds.front().sweep.empty()) return out;
  const size_t points = folds.front().sweep.size();
  for (size_t i = 0; i < points; ++i) {
    double rates[5] = {0, 0, 0, 0, 0};
    for (const FoldResult& f : folds) {
      const SweepPoint& p = f.sweep[i];
      rates[0] += p.tn_rate;
      rates[1] += p.correct_top3_rate;
      rates[2] += p.fp_rate;
      rates[3] += p.fn_rate;
      rates[4] += p.miss_rate;
    }
    out += FormatDouble(folds.front().sweep[i].threshold);
    for (double& r : rates) {
      r /= static_cast<double>(folds.size());
      out += "," + FormatDouble(r);
    }
    out += "," + FormatDouble(rates[0] + rates[1]) + "\n";
  }
  return out;
}

std::string ExperimentReport::MatrixCsv() const {
  std::string out = "trigger,responder,precision_at_3_mean,precision_at_3_sd\n";
  for (const std::string& t : trigger_names) {
    for (const std::string& r : responder_names) {
      std::vector<double> cells;
      for (const FoldResult& f : folds) cells.push_back(f.matrix.at(t).at(r));
      const MeanSd m = Summarize(cells);
      out += t + "," + r + "," + FormatDouble(m.mean) + "," +
             FormatDouble(m.sd) + "\n";
    }
  }
  return out;
}

void WriteExperiment(const ExperimentReport& report, const fs::path& out_dir) {
  WriteFileAtomic(out_dir / "report.json", report.ToJson().dump(2) + "\n");
  WriteFileAtomic(out_dir / "report.txt", report.ToText());
  WriteFileAtomic(out_dir / "sweep.csv", report.SweepCsv());
  WriteFileAtomic(out_dir / "matrix.csv", report.MatrixCsv());
}

}  // namespace medreply
