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

// Acceptance suite: one PASS/FAIL line per release criterion. Exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "medreply/canned.h"
#include "medreply/embed.h"
#include "medreply/eval.h"
#include "medreply/io.h"
#include "medreply/models.h"
#include "medreply/pipeline.h"
#include "medreply/random.h"
#include "medreply/synth.h"
#include "medreply/textprep.h"
#include "support/oracles.h"

namespace medreply {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed condition; the first few reasons end up in the report.
  void Require(bool condition, const std::string& what) {
    if (condition) return;
    if (pass) detail << "failed: ";
    else detail << "; ";
    detail << what;
    pass = false;
  }
};

std::string Fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// At least four workers so the determinism check compares real parallel runs.
int Jobs() { return static_cast<int>(std::max(4u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------
// Metric oracle equivalence

struct MetricInstance {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<size_t> ranks;
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::string> truths;
};

MetricInstance RandomMetricInstance(Rng& rng) {
  MetricInstance inst;
  const size_t n = 2 + rng.UniformInt(60);
  const size_t n_labels = 1 + rng.UniformInt(10);
  const bool coarse = rng.Bernoulli(0.5);
  for (size_t i = 0; i < n; ++i) {
    inst.scores.push_back(coarse ? static_cast<double>(rng.UniformInt(11)) / 10.0
                                 : rng.Uniform());
    inst.labels.push_back(i < 2 ? static_cast<int>(i) : static_cast<int>(rng.UniformInt(2)));
    std::vector<std::string> ranking;
    for (size_t l = 0; l < n_labels; ++l) ranking.push_back("r" + std::to_string(l));
    rng.Shuffle(std::span<std::string>(ranking));
    inst.truths.push_back("r" + std::to_string(rng.UniformInt(n_labels)));
    size_t rank = 0;
    for (size_t j = 0; j < ranking.size(); ++j) {
      if (ranking[j] == inst.truths.back()) rank = j + 1;
    }
    inst.ranks.push_back(rank);
    inst.rankings.push_back(std::move(ranking));
  }
  return inst;
}

Outcome MetricOracleEquivalence() {
  Outcome out;
  const auto start = Clock::now();
  Rng rng(20260501);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 1000; ++trial) {
    const MetricInstance inst = RandomMetricInstance(rng);
    for (size_t k : {1, 3, 5}) {
      track(PrecisionAtK(inst.rankings, inst.truths, k),
            oracle::PrecisionAtK(inst.rankings, inst.truths, k));
    }
    track(MeanReciprocalRank(inst.ranks), oracle::Mrr(inst.ranks));
    track(AucRoc(inst.scores, inst.labels), oracle::Auc(inst.scores, inst.labels));

    const double t = rng.Uniform();
    const BinaryReport report = MakeBinaryReport(inst.scores, inst.labels, t);
    const oracle::Confusion c = oracle::ConfusionTable(inst.scores, inst.labels, t);
    const double n = static_cast<double>(inst.scores.size());
    const double p1 = oracle::SafeRatio(c.tp, c.tp + c.fp);
    const double r1 = oracle::SafeRatio(c.tp, c.tp + c.fn);
    const double p0 = oracle::SafeRatio(c.tn, c.tn + c.fn);
    const double r0 = oracle::SafeRatio(c.tn, c.tn + c.fp);
    track(report.accuracy, (c.tp + c.tn) / n);
    track(report.feasible.precision, p1);
    track(report.feasible.recall, r1);
    track(report.feasible.f1, oracle::F1(p1, r1));
    track(report.infeasible.precision, p0);
    track(report.infeasible.recall, r0);
    track(report.infeasible.f1, oracle::F1(p0, r0));
  }
  const std::vector<size_t> ranks = {1, 2, 4};
  const double mrr = MeanReciprocalRank(ranks);
  const std::vector<double> scores = {0.9, 0.4, 0.5, 0.1};
  const std::vector<int> labels = {1, 1, 0, 0};
  const double auc = AucRoc(scores, labels);
  const double seconds = Seconds(start);

  out.Require(worst <= 1e-12, "max diff " + std::to_string(worst));
  out.Require(std::abs(mrr - 0.583333) <= 5e-7, "MRR[1,2,4]=" + Fmt(mrr, 6));
  out.Require(std::abs(auc - 0.75) <= 1e-12, "AUC=" + Fmt(auc, 6));
  out.Require(seconds < 10.0, "runtime " + Fmt(seconds, 2) + " s");
  if (out.pass) {
    out.detail << "1000 instances, max |diff| " << worst << ", MRR[1,2,4] " << Fmt(mrr, 6)
               << ", AUC " << Fmt(auc, 2) << ", " << Fmt(seconds, 2) << " s";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic experiment shared by the learnability, sweep and determinism checks

SynthSpec AcceptanceSpec() {
  SynthSpec spec;
  spec.n_intents = 20;
  spec.pairs_per_intent = 250;  // 5,000 pairs in total
  spec.infeasible_fraction = 0.231;
  spec.typo_rate = 0.03;
  spec.seed = 42;
  return spec;
}

struct Experiment {
  SynthCorpus corpus;
  ExperimentReport report;
  double seconds = 0.0;
};

const Experiment& SharedExperiment() {
  static const Experiment experiment = [] {
    Experiment e;
    const auto start = Clock::now();
    e.corpus = SynthGenerate(AcceptanceSpec());
    auto table = std::make_shared<const EmbeddingTable>(e.corpus.embeddings);
    PipelineConfig config;
    config.seed = 42;
    ExperimentOptions options;
    options.grid = ModelGrid::All();
    options.jobs = Jobs();
    e.report = RunExperiment(e.corpus.dataset, table, e.corpus.abbreviations, config, options);
    e.seconds = Seconds(start);
    return e;
  }();
  return experiment;
}

double MeanOver(const ExperimentReport& report,
                const std::function<double(const FoldResult&)>& field) {
  std::vector<double> values;
  for (const FoldResult& fold : report.folds) values.push_back(field(fold));
  return Summarize(values).mean;
}

Outcome SyntheticLearnability() {
  Outcome out;
  const Experiment& e = SharedExperiment();
  const ExperimentReport& r = e.report;
  auto p3 = [&](const std::string& name) {
    return MeanOver(r, [&](const FoldResult& f) { return f.responders.at(name).precision_at_3; });
  };
  auto auc = [&](const std::string& name) {
    return MeanOver(r, [&](const FoldResult& f) { return f.triggers.at(name).auc.value_or(NAN); });
  };
  const double softmax = p3("SoftmaxLinear");
  const double weighted = p3("KnnWeighted");
  const double tfidf = p3("KnnTfidf");
  const double frequency = p3("Frequency");
  const double logistic_auc = auc("LinearLogistic");
  const double frequency_auc = auc("Frequency");

  out.Require(r.n_pairs == 5000, "corpus has " + std::to_string(r.n_pairs) + " pairs");
  out.Require(r.folds.size() == 5, "fold count");
  out.Require(softmax >= 0.85, "SoftmaxLinear p@3 " + Fmt(softmax));
  out.Require(softmax - weighted >= 0.02, "SoftmaxLinear-KnnWeighted gap");
  out.Require(weighted - tfidf >= 0.0, "KnnWeighted-KnnTfidf gap");
  out.Require(tfidf - frequency >= 0.02, "KnnTfidf-Frequency gap");
  out.Require(logistic_auc >= 0.90, "LinearLogistic AUC " + Fmt(logistic_auc));
  out.Require(std::abs(frequency_auc - 0.5) <= 0.03, "Frequency AUC " + Fmt(frequency_auc));
  out.Require(e.seconds < 300.0, "runtime " + Fmt(e.seconds, 1) + " s");
  if (out.pass) {
    out.detail << "p@3 SoftmaxLinear " << Fmt(softmax) << " > KnnWeighted " << Fmt(weighted)
               << " >= KnnTfidf " << Fmt(tfidf) << " > Frequency " << Fmt(frequency)
               << "; AUC LinearLogistic " << Fmt(logistic_auc) << ", Frequency "
               << Fmt(frequency_auc) << "; " << Fmt(e.seconds, 1) << " s";
  }
  return out;
}

Outcome ThresholdSweepInvariants() {
  Outcome out;
  const ExperimentReport& r = SharedExperiment().report;
  const std::vector<double> grid = DefaultThresholdGrid();
  out.Require(grid.size() == 21, "grid has " + std::to_string(grid.size()) + " thresholds");
  double worst_sum = 0.0;
  std::vector<double> mean_precision(grid.size(), 0.0);
  for (const FoldResult& fold : r.folds) {
    if (fold.sweep.size() != grid.size()) {
      out.Require(false, "sweep length");
      return out;
    }
    for (size_t i = 0; i < fold.sweep.size(); ++i) {
      const SweepPoint& p = fold.sweep[i];
      out.Require(std::abs(p.threshold - grid[i]) <= 1e-12, "threshold order");
      const double sum = p.tn_rate + p.correct_top3_rate + p.fp_rate + p.fn_rate + p.miss_rate;
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      if (i > 0) {
        out.Require(p.tn_rate >= fold.sweep[i - 1].tn_rate, "tn rate decreased");
        out.Require(p.fn_rate >= fold.sweep[i - 1].fn_rate, "fn rate decreased");
      }
      mean_precision[i] += p.PipelinePrecision() / static_cast<double>(r.folds.size());
    }
  }
  double lo = 1.0, hi = 0.0;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.3 - 1e-9 || grid[i] > 0.8 + 1e-9) continue;
    lo = std::min(lo, mean_precision[i]);
    hi = std::max(hi, mean_precision[i]);
  }
  out.Require(worst_sum <= 1e-9, "rates sum off by " + std::to_string(worst_sum));
  out.Require(hi - lo <= 0.10, "p@3 range " + Fmt(hi - lo));
  if (out.pass) {
    out.detail << "21 thresholds x 5 folds, max |sum-1| " << worst_sum
               << ", tn/fn monotone, pipeline p@3 in [" << Fmt(lo) << ", " << Fmt(hi)
               << "] over 0.30-0.80";
  }
  return out;
}

Outcome Determinism() {
  Outcome out;
  const Experiment& e = SharedExperiment();
  const fs::path root = fs::temp_directory_path() / "medreply_acceptance_determinism";
  fs::remove_all(root);
  WriteExperiment(e.report, root / "first");

  // Second run from scratch, on one worker this time.
  const SynthCorpus corpus = SynthGenerate(AcceptanceSpec());
  auto table = std::make_shared<const EmbeddingTable>(corpus.embeddings);
  PipelineConfig config;
  config.seed = 42;
  ExperimentOptions options;
  options.grid = ModelGrid::All();
  options.jobs = 1;
  WriteExperiment(
      RunExperiment(corpus.dataset, table, corpus.abbreviations, config, options),
      root / "second");
  for (const char* file : {"report.json", "sweep.csv", "matrix.csv"}) {
    out.Require(ReadFile(root / "first" / file) == ReadFile(root / "second" / file),
                std::string(file) + " differs");
  }
  fs::remove_all(root);
  if (out.pass) {
    out.detail << "report.json, sweep.csv, matrix.csv byte-identical (jobs " << Jobs()
               << " vs 1)";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering recovery

Outcome ClusteringRecovery() {
  Outcome out;
  const auto start = Clock::now();
  SynthSpec spec;
  spec.n_intents = 10;
  spec.pairs_per_intent = 40;
  spec.infeasible_fraction = 0.0;
  spec.typo_rate = 0.05;
  spec.seed = 42;
  const SynthCorpus corpus = SynthGenerate(spec);

  std::vector<MessagePair> pairs = corpus.dataset.pairs;
  const TextCleaner cleaner(CleanConfig{}, corpus.abbreviations,
                            FitLexicon(pairs, corpus.abbreviations, 2));
  std::vector<Tokens> docs;
  std::vector<int> planted;
  for (size_t i = 0; i < pairs.size(); ++i) {
    docs.push_back(cleaner.CleanTokens(pairs[i].raw_doctor_text.value_or("")));
    planted.push_back(corpus.truth.response_cluster[i]);
  }
  const TfIdfStats stats = FitTfidf(docs);
  std::vector<std::vector<double>> vectors;
  for (const Tokens& doc : docs) {
    vectors.push_back(EmbedSentence(doc, corpus.embeddings, stats).values);
  }
  const PointSet points = PointSet::FromVectors(vectors);
  const SilhouetteChoice choice = SilhouetteSelectK(points, 2, 30);
  const double ari = oracle::AdjustedRandIndex(choice.labels, planted);

  // Density filter over the planted clusters plus a noise cluster of
  // mutually near-orthogonal directions.
  Rng rng(7);
  std::vector<std::vector<double>> with_noise = vectors;
  std::vector<int> labels = planted;
  const size_t dim = corpus.embeddings.dim();
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.Normal();
    with_noise.push_back(std::move(v));
    labels.push_back(spec.n_intents);
  }
  const std::vector<Cluster> clusters =
      ClustersFromLabels(PointSet::FromVectors(with_noise), labels);
  const std::vector<Cluster> kept = DensityFilter(clusters, 0.8);
  double min_planted = 1.0, noise_density = 0.0;
  for (const Cluster& c : clusters) {
    const int label = labels[c.member_indices.front()];
    if (label == spec.n_intents) {
      noise_density = c.density;
    } else {
      min_planted = std::min(min_planted, c.density);
    }
  }
  std::set<int> kept_labels;
  for (const Cluster& c : kept) kept_labels.insert(labels[c.member_indices.front()]);
  const double seconds = Seconds(start);

  out.Require(pairs.size() == 400, "corpus has " + std::to_string(pairs.size()) + " replies");
  out.Require(choice.k >= 9 && choice.k <= 11, "selected k=" + std::to_string(choice.k));
  out.Require(ari >= 0.9, "ARI " + Fmt(ari));
  out.Require(kept_labels.size() == static_cast<size_t>(spec.n_intents) &&
                  !kept_labels.count(spec.n_intents),
              "density filter kept " + std::to_string(kept.size()) + " clusters");
  out.Require(seconds < 60.0, "runtime " + Fmt(seconds, 1) + " s");
  if (out.pass) {
    out.detail << "k=" << choice.k << ", ARI " << Fmt(ari) << ", planted density >= "
               << Fmt(min_planted) << ", noise density " << Fmt(noise_density) << ", "
               << Fmt(seconds, 1) << " s";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checks

double RelativeError(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

Outcome GradientChecks() {
  Outcome out;
  Rng rng(99);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    const size_t dim = 1 + rng.UniformInt(10);
    const size_t n = 5 + rng.UniformInt(20);
    const size_t classes = 2 + rng.UniformInt(5);
    std::vector<double> x(n * dim);
    for (double& v : x) v = rng.Normal();
    std::vector<int> binary(n), multi(n);
    for (size_t i = 0; i < n; ++i) {
      binary[i] = static_cast<int>(rng.UniformInt(2));
      multi[i] = static_cast<int>(rng.UniformInt(classes));
    }
    const double l2 = 1e-4;
    std::vector<double> lp(dim + 1);
    for (double& v : lp) v = rng.Normal();
    worst = std::max(worst, RelativeError(
        LogisticLoss(x, dim, binary, lp, l2).gradient,
        oracle::NumericGradient(
            [&](const std::vector<double>& p) { return LogisticLoss(x, dim, binary, p, l2).loss; },
            lp)));
    std::vector<double> sp(classes * (dim + 1));
    for (double& v : sp) v = rng.Normal();
    worst = std::max(worst, RelativeError(
        SoftmaxLoss(x, dim, multi, classes, sp, l2).gradient,
        oracle::NumericGradient(
            [&](const std::vector<double>& p) {
              return SoftmaxLoss(x, dim, multi, classes, p, l2).loss;
            },
            sp)));
  }
  out.Require(worst < 1e-5, "max relative error " + std::to_string(worst));
  if (out.pass) {
    out.detail << "20 points, logistic + softmax, dim <= 10, max relative error " << worst;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serving: latency over a large canned set, and diversity of top-3 lists

struct LargeServing {
  std::unique_ptr<Artifacts> artifacts;
  PipelineConfig config;
  std::vector<std::string> queries;
};

// 10,000 canned responses in clusters of four, a linear trigger and a softmax
// responder over all of them, on the synthetic vocabulary.
LargeServing MakeLargeServing() {
  const size_t n_responses = 10000;
  const SynthCorpus corpus = SynthGenerate(AcceptanceSpec());
  auto table = std::make_shared<const EmbeddingTable>(corpus.embeddings);
  const TextCleaner cleaner(CleanConfig{}, corpus.abbreviations,
                            FitLexicon(corpus.dataset.pairs, corpus.abbreviations, 2));
  const Dataset cleaned = CleanDataset(corpus.dataset, cleaner);
  TfIdfStats stats = FitTfidfOnPairs(cleaned);

  Rng rng(31);
  CannedSet canned;
  std::vector<std::string> ids;
  for (size_t i = 0; i < n_responses; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "r%05zu", i);
    ids.push_back(id);
    canned.responses.push_back({id, "Canned reply number " + std::to_string(i) + ".",
                                static_cast<int>(i / 4), {}});
  }
  canned.k_selected = static_cast<int>(n_responses / 4);

  const size_t dim = table->dim();
  auto random_params = [&](size_t rows, size_t features, double bias) {
    LinearParams p;
    p.rows = rows;
    p.dim = features;
    for (size_t i = 0; i < rows * features; ++i) p.weights.push_back(rng.Normal());
    p.bias.assign(rows, bias);
    p.feature_mean.assign(features, 0.0);
    p.feature_scale.assign(features, 1.0);
    return p;
  };
  TrainConfig trigger_config;
  TrainConfig responder_config;
  responder_config.include_length_feature = false;

  LargeServing s;
  s.artifacts = std::make_unique<Artifacts>(table, std::move(stats), cleaner, std::move(canned));
  s.artifacts->SetModels(
      std::make_unique<LinearLogisticTrigger>(random_params(1, dim + 1, 0.0), trigger_config,
                                              "random"),
      std::make_unique<SoftmaxLinearResponder>(ids, random_params(n_responses, dim, 0.0),
                                               responder_config, "random"));
  s.config.threshold_p = 0.0;  // every query goes through ranking
  s.config.k = 3;
  for (size_t i = 0; i < 1000; ++i) {
    s.queries.push_back(corpus.dataset.pairs[rng.UniformInt(corpus.dataset.size())].patient_text);
  }
  return s;
}

Outcome Latency(const LargeServing& s) {
  Outcome out;
  std::vector<double> ms;
  for (const std::string& q : s.queries) {
    const auto start = Clock::now();
    const Suggestion suggestion = Suggest(q, s.config, *s.artifacts);
    ms.push_back(Seconds(start) * 1000.0);
    out.Require(suggestion.items.size() == 3, "short suggestion list");
    if (!out.pass) return out;
  }
  std::sort(ms.begin(), ms.end());
  const double p50 = ms[ms.size() / 2];
  const double p99 = ms[static_cast<size_t>(std::ceil(0.99 * static_cast<double>(ms.size()))) - 1];
  out.Require(p99 < 50.0, "p99 " + Fmt(p99, 2) + " ms");
  if (out.pass) {
    out.detail << "10000 canned responses, 1000 queries on one thread, p50 " << Fmt(p50, 2)
               << " ms, p99 " << Fmt(p99, 2) << " ms";
  }
  return out;
}

Outcome Diversity(const LargeServing& s) {
  Outcome out;
  size_t triggered = 0;
  size_t duplicates = 0;
  auto check = [&](const Suggestion& suggestion) {
    if (!suggestion.triggered) return;
    ++triggered;
    std::set<int> clusters;
    for (const SuggestionItem& item : suggestion.items) {
      if (!clusters.insert(item.cluster_id).second) ++duplicates;
    }
  };
  // Responses share clusters four at a time, so the raw ranking is full of
  // same-cluster neighbours.
  for (const std::string& q : s.queries) check(Suggest(q, s.config, *s.artifacts));

  // A trained pipeline at its default threshold, on unseen messages.
  SynthSpec spec = AcceptanceSpec();
  spec.pairs_per_intent = 100;
  const SynthCorpus train = SynthGenerate(spec);
  PipelineConfig config;
  const auto artifacts =
      TrainPipeline(train.dataset, std::make_shared<const EmbeddingTable>(train.embeddings),
                    train.abbreviations, config);
  spec.seed = 4242;
  const size_t before = triggered;
  for (const MessagePair& p : SynthGenerate(spec).dataset.pairs) {
    if (triggered - before >= 1000) break;
    check(Suggest(p.patient_text, config, *artifacts));
  }
  out.Require(triggered >= 2000, "only " + std::to_string(triggered) + " triggered");
  out.Require(duplicates == 0, std::to_string(duplicates) + " duplicate clusters");
  if (out.pass) {
    out.detail << triggered << " triggered suggestions (1000 over the 10000-response set, "
               << triggered - 1000 << " from a trained pipeline), no repeated cluster_id";
  }
  return out;
}

int Run() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& check) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail << "exception: " << e.what();
    }
    failures += outcome.pass ? 0 : 1;
    std::printf("%s  %-28s %s\n", outcome.pass ? "PASS" : "FAIL", name,
                outcome.detail.str().c_str());
    std::fflush(stdout);
  };
  report("metric-oracle-equivalence", MetricOracleEquivalence);
  report("synthetic-learnability", SyntheticLearnability);
  report("clustering-recovery", ClusteringRecovery);
  report("threshold-sweep-invariants", ThresholdSweepInvariants);
  report("gradient-checks", GradientChecks);
  const LargeServing serving = MakeLargeServing();
  report("latency", [&] { return Latency(serving); });
  report("determinism", Determinism);
  report("pipeline-diversity", [&] { return Diversity(serving); });
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace medreply

int main() { return medreply::Run(); }
