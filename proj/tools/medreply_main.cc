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

// Command-line entry point: data preparation, canned-set building, training,
// evaluation, threshold sweeps, the model combination matrix, synthetic
// corpora, serving and one-shot suggestions.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "medreply/canned.h"
#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/error.h"
#include "medreply/io.h"
#include "medreply/pipeline.h"
#include "medreply/service.h"
#include "medreply/synth.h"
#include "medreply/textprep.h"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace medreply;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct GlobalOptions {
  std::string config;
  std::optional<uint64_t> seed;
  int jobs = 1;
  std::optional<double> threshold;
  std::optional<size_t> k;
  std::string out;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PipelineConfig LoadConfig(const GlobalOptions& g) {
  PipelineConfig config =
      g.config.empty() ? PipelineConfig{} : PipelineConfig::Load(g.config);
  if (g.seed) {
    config.seed = *g.seed;
    config.train.seed = *g.seed;
  }
  if (g.threshold) config.threshold_p = *g.threshold;
  if (g.k) config.k = *g.k;
  config.Validate();
  return config;
}

fs::path RequireOut(const GlobalOptions& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

fs::path ArtifactDir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kArtifactDirEnv); env && *env) return env;
  throw UsageError(std::string("--artifacts or ") + kArtifactDirEnv +
                   " is required");
}

fs::path EmbeddingsPath(const std::string& flag, const PipelineConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.embeddings.empty()) return config.embeddings;
  throw UsageError("--embeddings (or 'embeddings' in --config) is required");
}

AbbrevDict LoadAbbrev(const std::string& flag, const PipelineConfig& config) {
  if (!flag.empty()) return AbbrevDict::Load(flag);
  if (!config.abbreviations.empty()) return AbbrevDict::Load(config.abbreviations);
  return AbbrevDict{};
}

std::string Fixed(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------

struct CleanArgs {
  std::string chats;
  std::string abbrev;
  std::string lexicon;
  int lookback = kDefaultMaxLookback;
};

int RunClean(const GlobalOptions& g, const CleanArgs& a) {
  PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  std::vector<MessagePair> pairs;
  for (const Conversation& conv : LoadChats(a.chats)) {
    for (MessagePair& p : PairMessages(conv, a.lookback)) pairs.push_back(std::move(p));
  }
  const AbbrevDict dict = LoadAbbrev(a.abbrev, config);
  const SpellLexicon lexicon =
      !a.lexicon.empty() ? SpellLexicon::Load(a.lexicon)
      : !config.lexicon.empty()
          ? SpellLexicon::Load(config.lexicon)
          : FitLexicon(pairs, dict, config.lexicon_min_count);
  CleanConfig clean = config.clean;
  clean.max_words = config.max_words;
  const TextCleaner cleaner(clean, dict, lexicon);
  std::vector<MessagePair> cleaned;
  for (const MessagePair& p : pairs) {
    if (auto c = cleaner.CleanPair(p)) cleaned.push_back(std::move(*c));
  }
  WriteFileAtomic(out, SerializePairs(cleaned));
  std::cout << "pairs: " << pairs.size() << "  kept: " << cleaned.size()
            << "  dropped: " << pairs.size() - cleaned.size() << "\n";
  return kExitOk;
}

struct BuildCannedArgs {
  std::string pairs;
  std::string embeddings;
  std::string rules;
  std::string labeled_out;
};

int RunBuildCanned(const GlobalOptions& g, const BuildCannedArgs& a) {
  PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  const EmbeddingTable table = EmbeddingTable::Load(EmbeddingsPath(a.embeddings, config));
  const std::vector<MessagePair> pairs = LoadPairs(a.pairs);

  std::vector<size_t> with_reply;
  std::vector<std::string> texts;
  std::vector<Tokens> docs;
  for (size_t i = 0; i < pairs.size(); ++i) {
    docs.push_back(Tokenize(pairs[i].patient_text));
    if (pairs[i].raw_doctor_text && !pairs[i].raw_doctor_text->empty()) {
      with_reply.push_back(i);
      texts.push_back(*pairs[i].raw_doctor_text);
      docs.push_back(Tokenize(*pairs[i].raw_doctor_text));
    }
  }
  if (texts.empty()) throw Error(ErrorCode::kEmptyCorpus, "no doctor replies");
  const TfIdfStats stats = FitTfidf(docs);
  CannedBuild build = BuildCannedSet(texts, table, stats, config.canned);

  if (!a.rules.empty()) {
    json merged = json::parse(build.canned.ToJson());
    json rules = json::parse(ReadFile(a.rules));
    merged["rules"] = rules.is_object() ? rules.at("rules") : rules;
    build.canned = CannedSet::FromJson(merged.dump());
    build.canned.Finalize();
  }
  WriteFileAtomic(out, build.canned.ToJson());

  std::cout << "k_selected: " << build.canned.k_selected
            << "  silhouette: " << Fixed(build.silhouette)
            << "  kept: " << build.canned.responses.size() << "/"
            << build.clusters.size() << "\n";
  for (const ClusterReport& c : build.clusters) {
    std::cout << "  cluster " << c.cluster_id << "  size " << c.size
              << "  density " << Fixed(c.density) << (c.kept ? "  kept" : "")
              << "\n";
  }
  if (!a.labeled_out.empty()) {
    std::vector<MessagePair> labeled = pairs;
    for (MessagePair& p : labeled) {
      p.feasible = false;
      p.doctor_response_id.reset();
    }
    for (size_t j = 0; j < with_reply.size(); ++j) {
      if (const auto& id = build.assignment[j]) {
        labeled[with_reply[j]].doctor_response_id = *id;
        labeled[with_reply[j]].feasible = true;
      }
    }
    WriteFileAtomic(a.labeled_out, SerializePairs(labeled));
  }
  return kExitOk;
}

struct TrainArgs {
  std::string pairs;
  std::string embeddings;
  std::string abbrev;
  std::string canned;
  std::string trigger;
  std::string responder;
};

int RunTrain(const GlobalOptions& g, const TrainArgs& a) {
  PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  if (!a.trigger.empty()) config.trigger_kind = ParseTriggerKind(a.trigger);
  if (!a.responder.empty()) config.response_kind = ParseResponseKind(a.responder);
  if (!a.canned.empty()) config.canned_set = a.canned;
  auto table = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::Load(EmbeddingsPath(a.embeddings, config)));
  const Dataset ds = Dataset::FromPairs(LoadPairs(a.pairs));
  const auto artifacts =
      TrainPipeline(ds, table, LoadAbbrev(a.abbrev, config), config);
  artifacts->SaveDir(out, config);
  std::cout << "trained " << TriggerKindName(config.trigger_kind) << " + "
            << ResponseKindName(config.response_kind) << " on " << ds.size()
            << " pairs; " << artifacts->canned().responses.size()
            << " canned responses -> " << out.string() << "\n";
  return kExitOk;
}

struct ExperimentArgs {
  std::string pairs;
  std::string embeddings;
  std::string abbrev;
  std::string artifacts;
  std::string external;
  bool save_models = true;
};

enum class ExperimentKind { kEvaluate, kSweep, kMatrix };

int RunExperimentCommand(const GlobalOptions& g, const ExperimentArgs& a,
                         ExperimentKind kind) {
  PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  if (!a.external.empty()) config.external_scores = a.external;
  const Dataset ds = Dataset::FromPairs(LoadPairs(a.pairs));

  ExperimentReport report;
  if (kind == ExperimentKind::kEvaluate && !a.artifacts.empty()) {
    PipelineConfig stored;
    const auto artifacts = Artifacts::LoadDir(a.artifacts, &stored);
    if (g.threshold) stored.threshold_p = *g.threshold;
    if (g.k) stored.k = *g.k;
    report = EvaluateArtifacts(*artifacts, ds, stored);
  } else {
    auto table = std::make_shared<const EmbeddingTable>(
        EmbeddingTable::Load(EmbeddingsPath(a.embeddings, config)));
    ExperimentOptions options;
    options.grid = kind == ExperimentKind::kSweep
                       ? ModelGrid::Single(config)
                       : ModelGrid::All(!config.external_scores.empty());
    options.jobs = g.jobs;
    if (a.save_models) options.models_dir = out / "models";
    report = RunExperiment(ds, table, LoadAbbrev(a.abbrev, config), config, options);
  }
  WriteExperiment(report, out);
  switch (kind) {
    case ExperimentKind::kEvaluate:
      std::cout << report.ToText();
      break;
    case ExperimentKind::kSweep:
      std::cout << report.SweepCsv();
      break;
    case ExperimentKind::kMatrix:
      std::cout << report.MatrixCsv();
      break;
  }
  return kExitOk;
}

struct SynthArgs {
  int intents = SynthSpec{}.n_intents;
  int pairs = SynthSpec{}.pairs_per_intent;
  double infeasible = SynthSpec{}.infeasible_fraction;
  double typo = SynthSpec{}.typo_rate;
  double abbrev = SynthSpec{}.abbreviation_rate;
  int dim = SynthSpec{}.embedding_dim;
};

int RunSynth(const GlobalOptions& g, const SynthArgs& a) {
  const fs::path out = RequireOut(g);
  SynthSpec spec;
  spec.n_intents = a.intents;
  spec.pairs_per_intent = a.pairs;
  spec.infeasible_fraction = a.infeasible;
  spec.typo_rate = a.typo;
  spec.abbreviation_rate = a.abbrev;
  spec.embedding_dim = a.dim;
  if (g.seed) spec.seed = *g.seed;
  const SynthCorpus corpus = SynthGenerate(spec);
  WriteSynthCorpus(corpus, out);
  std::cout << "pairs: " << corpus.dataset.size()
            << "  infeasible: " << Fixed(corpus.dataset.infeasible_fraction)
            << "  chats: " << corpus.chats.size()
            << "  vocabulary: " << corpus.embeddings.size() << "\n";
  return kExitOk;
}

struct ServeArgs {
  std::string artifacts;
  std::string host = ServiceConfig{}.host;
  int port = ServiceConfig{}.port;
  std::string request_log;
  std::string selection_log;
  int threads = ServiceConfig{}.worker_threads;
};

int RunServe(const GlobalOptions& g, const ServeArgs& a) {
  ServiceConfig config;
  config.host = a.host;
  config.port = a.port;
  if (!a.artifacts.empty()) config.artifact_dir = a.artifacts;
  config.request_log = a.request_log;
  config.selection_log = a.selection_log;
  config.worker_threads = a.threads;
  config.threshold_p = g.threshold;
  config.k = g.k;
  config.ApplyEnvironment();
  if (config.artifact_dir.empty()) {
    throw UsageError(std::string("--artifacts or ") + kArtifactDirEnv +
                     " is required");
  }
  SuggestService service(config);
  service.Load();
  std::cerr << "serving " << config.artifact_dir.string() << " on "
            << config.host << ":" << config.port << "\n";
  if (!service.Listen()) {
    std::cerr << "error: cannot bind " << config.host << ":" << config.port
              << "\n";
    return kExitData;
  }
  return kExitOk;
}

struct SuggestArgs {
  std::string artifacts;
  std::string text;
  bool as_json = false;
};

int RunSuggest(const GlobalOptions& g, const SuggestArgs& a) {
  PipelineConfig config;
  const auto artifacts = Artifacts::LoadDir(ArtifactDir(a.artifacts), &config);
  if (g.threshold) config.threshold_p = *g.threshold;
  if (g.k) config.k = *g.k;
  config.Validate();
  const Suggestion s = Suggest(a.text, config, *artifacts);
  if (a.as_json) {
    json items = json::array();
    for (const SuggestionItem& item : s.items) {
      items.push_back({{"rank", item.rank},
                       {"response_id", item.response_id},
                       {"text", item.display_text},
                       {"score", item.score}});
    }
    std::cout << json{{"triggered", s.triggered},
                      {"trigger_score", s.trigger_score},
                      {"items", items}}
                     .dump()
              << "\n";
    return kExitOk;
  }
  std::cout << "trigger_score " << Fixed(s.trigger_score)
            << (s.triggered ? "  triggered" : "  not triggered") << "\n";
  for (const SuggestionItem& item : s.items) {
    std::cout << item.rank << ". [" << item.response_id << "] "
              << item.display_text << "  (" << Fixed(item.score) << ")\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medreply: smart-reply suggestions for doctor-patient chat"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Pipeline config (JSON)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--jobs", g.jobs, "Worker cap for parallel folds")
      ->check(CLI::PositiveNumber);
  app.add_option("--threshold", g.threshold, "Trigger threshold p")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--k", g.k, "Suggestions per message")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or directory");

  CleanArgs clean_args;
  auto* clean = app.add_subcommand("clean", "Chats JSONL -> cleaned pairs JSONL");
  clean->add_option("--chats", clean_args.chats, "Chat messages JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  clean->add_option("--abbrev", clean_args.abbrev, "Abbreviation TSV");
  clean->add_option("--lexicon", clean_args.lexicon, "Spell lexicon TSV");
  clean->add_option("--lookback", clean_args.lookback, "Pairing window")
      ->check(CLI::PositiveNumber);

  BuildCannedArgs bc_args;
  auto* build_canned = app.add_subcommand(
      "build-canned", "Cluster doctor replies into a canned-response set");
  build_canned->add_option("--pairs", bc_args.pairs, "Cleaned pairs JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  build_canned->add_option("--embeddings", bc_args.embeddings,
                           "word2vec text embeddings");
  build_canned->add_option("--rules", bc_args.rules,
                           "Diversity rules JSON")->check(CLI::ExistingFile);
  build_canned->add_option("--labeled-out", bc_args.labeled_out,
                           "Also write pairs labelled by cluster");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a serving pipeline");
  train->add_option("--pairs", train_args.pairs, "Labelled pairs JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--embeddings", train_args.embeddings, "Embeddings");
  train->add_option("--abbrev", train_args.abbrev, "Abbreviation TSV");
  train->add_option("--canned", train_args.canned,
                    "Curated canned set (default: built from the labels)");
  train->add_option("--trigger", train_args.trigger, "Trigger model kind");
  train->add_option("--responder", train_args.responder, "Response model kind");

  ExperimentArgs exp_args;
  auto add_experiment_flags = [&](CLI::App* cmd) {
    cmd->add_option("--pairs", exp_args.pairs, "Labelled pairs JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--embeddings", exp_args.embeddings, "Embeddings");
    cmd->add_option("--abbrev", exp_args.abbrev, "Abbreviation TSV");
    cmd->add_option("--external-scores", exp_args.external,
                    "Precomputed scores JSONL for the External kind");
    cmd->add_flag("!--no-models", exp_args.save_models,
                  "Skip writing per-fold models");
  };
  auto* evaluate = app.add_subcommand(
      "evaluate", "Cross-validated report, or held-out report for --artifacts");
  add_experiment_flags(evaluate);
  evaluate->add_option("--artifacts", exp_args.artifacts,
                       "Trained pipeline directory");
  auto* sweep = app.add_subcommand("sweep", "Trigger threshold sweep");
  add_experiment_flags(sweep);
  auto* matrix = app.add_subcommand("matrix", "Trigger x responder matrix");
  add_experiment_flags(matrix);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--intents", synth_args.intents, "Number of intents");
  synth->add_option("--pairs", synth_args.pairs, "Pairs per intent");
  synth->add_option("--infeasible-fraction", synth_args.infeasible)
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--typo-rate", synth_args.typo)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--abbreviation-rate", synth_args.abbrev)
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--dim", synth_args.dim, "Embedding dimension");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--artifacts", serve_args.artifacts, "Pipeline directory");
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port);
  serve->add_option("--request-log", serve_args.request_log);
  serve->add_option("--selection-log", serve_args.selection_log);
  serve->add_option("--threads", serve_args.threads)->check(CLI::PositiveNumber);

  SuggestArgs suggest_args;
  auto* suggest = app.add_subcommand("suggest", "One-shot local suggestion");
  suggest->add_option("--artifacts", suggest_args.artifacts, "Pipeline directory");
  suggest->add_option("text", suggest_args.text, "Patient message")->required();
  suggest->add_flag("--json", suggest_args.as_json, "Print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*clean) return RunClean(g, clean_args);
    if (*build_canned) return RunBuildCanned(g, bc_args);
    if (*train) return RunTrain(g, train_args);
    if (*evaluate) return RunExperimentCommand(g, exp_args, ExperimentKind::kEvaluate);
    if (*sweep) return RunExperimentCommand(g, exp_args, ExperimentKind::kSweep);
    if (*matrix) return RunExperimentCommand(g, exp_args, ExperimentKind::kMatrix);
    if (*synth) return RunSynth(g, synth_args);
    if (*serve) return RunServe(g, serve_args);
    if (*suggest) return RunSuggest(g, suggest_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
