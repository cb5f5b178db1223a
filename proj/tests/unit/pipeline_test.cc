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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "medreply/error.h"
#include "medreply/io.h"
#include "medreply/pipeline.h"
#include "medreply/synth.h"
#include "support/toy_pipeline.h"

namespace medreply {
namespace {

namespace fs = std::filesystem;
using testing::ScratchDir;
using testing::TrainToyPipeline;

TEST_CASE("end-of-chat thanks gets the diversified farewell") {
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(ScratchDir("farewell"), &config);
  const Suggestion s = Suggest("thanks doctor bye", config, *artifacts);
  CHECK(s.triggered);
  REQUIRE(s.items.size() == 3);
  CHECK(s.items[0].response_id == "r_thanks");
  CHECK(s.items[0].display_text == "You are welcome. Take care. Bye.");
  CHECK(s.latency_ms >= 0.0);

  const Suggestion night = Suggest("Thanks, have a good night!", config, *artifacts);
  REQUIRE_FALSE(night.items.empty());
  CHECK(night.items[0].display_text == "You are welcome. Have a great night.");

  const Suggestion fever = Suggest("I have a high fever", config, *artifacts);
  REQUIRE_FALSE(fever.items.empty());
  CHECK(fever.items[0].response_id == "r_when");
}

TEST_CASE("length and threshold gates suppress suggestions") {
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(ScratchDir("gates"), &config);
  std::string long_text;
  for (int i = 0; i < 250; ++i) long_text += "fever ";
  const Suggestion too_long = Suggest(long_text, config, *artifacts);
  CHECK_FALSE(too_long.triggered);
  CHECK(too_long.items.empty());

  const Suggestion chatter = Suggest("lol ok", config, *artifacts);
  CHECK(chatter.trigger_score < 0.5);
  CHECK_FALSE(chatter.triggered);
  CHECK(chatter.items.empty());

  PipelineConfig strict = config;
  strict.threshold_p = 1.0;
  const Suggestion gated = Suggest("i have a fever", strict, *artifacts);
  CHECK(gated.trigger_score < 1.0);
  CHECK_FALSE(gated.triggered);
  CHECK(gated.items.empty());
}

TEST_CASE("suggestions respect k, rank order and distinct clusters") {
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(ScratchDir("shape"), &config);
  const std::vector<std::string> messages = {"thanks", "fever", "head hurts", "drink water",
                                             "thirsty and hot", "thank you doctor"};
  for (size_t k = 1; k <= 5; ++k) {
    PipelineConfig c = config;
    c.k = k;
    for (const std::string& m : messages) {
      const Suggestion s = Suggest(m, c, *artifacts);
      if (!s.triggered) continue;
      CHECK(s.items.size() == std::min<size_t>(k, 4));
      std::set<int> clusters;
      for (size_t i = 0; i < s.items.size(); ++i) {
        CHECK(s.items[i].rank == i + 1);
        CHECK(clusters.insert(s.items[i].cluster_id).second);
        if (i > 0) CHECK(s.items[i].score <= s.items[i - 1].score);
      }
    }
  }
}

TEST_CASE("triggered sets shrink as the threshold rises") {
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(ScratchDir("monotone"), &config);
  const std::vector<std::string> messages = {"thanks", "fever", "ok", "lol", "hmm fever",
                                             "drink", "sure thanks", "head"};
  std::set<std::string> previous(messages.begin(), messages.end());
  for (double p = 0.0; p <= 1.0; p += 0.1) {
    PipelineConfig c = config;
    c.threshold_p = p;
    std::set<std::string> fired;
    for (const std::string& m : messages) {
      if (Suggest(m, c, *artifacts).triggered) fired.insert(m);
    }
    for (const std::string& m : fired) CHECK(previous.count(m) == 1);
    previous = fired;
  }
}

TEST_CASE("artifacts round trip through a directory") {
  const fs::path dir = ScratchDir("roundtrip");
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(dir / "train", &config);
  artifacts->SaveDir(dir / "art", config);
  PipelineConfig loaded_config;
  const auto loaded = Artifacts::LoadDir(dir / "art", &loaded_config);
  CHECK(loaded_config.threshold_p == config.threshold_p);
  CHECK(loaded_config.k == config.k);
  for (const std::string& m : {"thanks doctor bye", "fever", "ok", "my head hurts"}) {
    const Suggestion a = Suggest(m, config, *artifacts);
    const Suggestion b = Suggest(m, loaded_config, *loaded);
    CHECK(a.trigger_score == b.trigger_score);
    REQUIRE(a.items.size() == b.items.size());
    for (size_t i = 0; i < a.items.size(); ++i) {
      CHECK(a.items[i].response_id == b.items[i].response_id);
      CHECK(a.items[i].display_text == b.items[i].display_text);
      CHECK(a.items[i].score == b.items[i].score);
    }
  }
  // Fingerprints are content hashes of the artifact files.
  for (const auto& [file, hash] : loaded->fingerprints()) {
    CHECK(hash == FileFingerprint(dir / "art" / file));
  }
}

TEST_CASE("loading an incomplete artifact directory fails") {
  const fs::path dir = ScratchDir("missing");
  try {
    Artifacts::LoadDir(dir);
    FAIL("expected ArtifactsMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArtifactsMissing);
  }
}

TEST_CASE("pipeline config validation and json round trip") {
  PipelineConfig config;
  config.threshold_p = 1.5;
  CHECK_THROWS_AS(config.Validate(), Error);
  config = PipelineConfig{};
  config.k = 0;
  CHECK_THROWS_AS(config.Validate(), Error);

  config = PipelineConfig{};
  config.trigger_kind = TriggerKind::kKnnWeighted;
  config.threshold_p = 0.35;
  config.embeddings = "vectors.txt";
  const PipelineConfig again = PipelineConfig::FromJson(config.ToJson(), "/data");
  CHECK(again.trigger_kind == TriggerKind::kKnnWeighted);
  CHECK(again.threshold_p == 0.35);
  CHECK(again.embeddings == fs::path("/data/vectors.txt"));
}

SynthCorpus SmallCorpus(uint64_t seed) {
  SynthSpec spec;
  spec.n_intents = 6;
  spec.pairs_per_intent = 40;
  spec.seed = seed;
  return SynthGenerate(spec);
}

TEST_CASE("experiments are reproducible and shaped like the grid") {
  const SynthCorpus corpus = SmallCorpus(3);
  auto table = std::make_shared<const EmbeddingTable>(corpus.embeddings);
  PipelineConfig config;
  ExperimentOptions options;
  options.grid = ModelGrid::All();
  options.jobs = 2;
  const ExperimentReport a =
      RunExperiment(corpus.dataset, table, corpus.abbreviations, config, options);
  options.jobs = 1;
  const ExperimentReport b =
      RunExperiment(corpus.dataset, table, corpus.abbreviations, config, options);
  CHECK(a.ToJson().dump() == b.ToJson().dump());
  CHECK(a.SweepCsv() == b.SweepCsv());
  CHECK(a.MatrixCsv() == b.MatrixCsv());

  REQUIRE(a.folds.size() == 5);
  for (const FoldResult& fold : a.folds) {
    CHECK(fold.matrix.size() == 4);
    for (const auto& [trigger, row] : fold.matrix) CHECK(row.size() == 4);
    CHECK(fold.sweep.size() == DefaultThresholdGrid().size());
    CHECK(fold.n_train + fold.n_validation + fold.n_test == corpus.dataset.size());
  }
  // Header plus one row per cell.
  const std::string matrix = a.MatrixCsv();
  CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 17);
  const std::string text = a.ToText();
  for (const char* column : {"precision@1", "precision@3", "precision@5", "mrr", "auc_roc"}) {
    CHECK(text.find(column) != std::string::npos);
  }

  const fs::path out = ScratchDir("experiment");
  WriteExperiment(a, out);
  for (const char* file : {"report.json", "report.txt", "sweep.csv", "matrix.csv"}) {
    CHECK(fs::exists(out / file));
  }
}

TEST_CASE("test-fold messages never influence that fold's canned set") {
  const SynthCorpus corpus = SmallCorpus(4);
  auto table = std::make_shared<const EmbeddingTable>(corpus.embeddings);
  PipelineConfig config;
  ExperimentOptions options;
  options.grid = ModelGrid::Single(config);
  const ExperimentReport base =
      RunExperiment(corpus.dataset, table, corpus.abbreviations, config, options);

  // Folds depend on labels only, so rewriting the texts of fold 0's test
  // instances leaves the splits intact.
  const auto splits = StratifiedKFold(corpus.dataset, config.folds, config.val_fraction, config.seed);
  Dataset altered = corpus.dataset;
  for (size_t i : splits[0].test) {
    altered.pairs[i].patient_text = "zzqx " + altered.pairs[i].patient_text;
    if (altered.pairs[i].raw_doctor_text) {
      altered.pairs[i].raw_doctor_text = "qqzz " + *altered.pairs[i].raw_doctor_text;
    }
  }
  const ExperimentReport changed =
      RunExperiment(altered, table, corpus.abbreviations, config, options);
  CHECK(changed.folds[0].canned_fingerprint == base.folds[0].canned_fingerprint);
  CHECK(changed.folds[0].n_canned == base.folds[0].n_canned);
  bool any_other_changed = false;
  for (size_t f = 1; f < base.folds.size(); ++f) {
    any_other_changed |= changed.folds[f].canned_fingerprint != base.folds[f].canned_fingerprint;
  }
  CHECK(any_other_changed);
}

TEST_CASE("held-out evaluation of trained artifacts") {
  PipelineConfig config;
  const auto artifacts = TrainToyPipeline(ScratchDir("heldout"), &config);
  const ExperimentReport report = EvaluateArtifacts(*artifacts, testing::ToyDataset(1), config);
  REQUIRE(report.folds.size() == 1);
  const auto& responder = report.folds[0].responders.begin()->second;
  CHECK(responder.precision_at_3 >= responder.precision_at_1);
  CHECK(responder.precision_at_5 >= responder.precision_at_3);
  CHECK(responder.mrr > 0.0);
  CHECK(responder.mrr <= 1.0);
}

}  // namespace
}  // namespace medreply
