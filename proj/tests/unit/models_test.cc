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
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/error.h"
#include "medreply/eval.h"
#include "medreply/models.h"
#include "medreply/random.h"
#include "support/oracles.h"

namespace medreply {
namespace {

MessagePair Pair(std::string text, std::optional<std::string> id) {
  MessagePair p;
  p.patient_text = std::move(text);
  p.feasible = id.has_value();
  p.doctor_response_id = std::move(id);
  return p;
}

// Three intents with their own words plus a chatter vocabulary for
// infeasible messages, all in a 6-dimensional embedding space.
struct ToyWorld {
  EmbeddingTable table{6};
  std::vector<std::vector<std::string>> intent_words;
  std::vector<std::string> chatter;
  Dataset train, validation, test;
  std::unique_ptr<TfIdfStats> stats;
  std::unique_ptr<Featurizer> featurizer;

  explicit ToyWorld(uint64_t seed, size_t per_intent = 30) {
    Rng rng(seed);
    for (int intent = 0; intent < 3; ++intent) {
      std::vector<std::string> words;
      for (int w = 0; w < 4; ++w) {
        std::vector<double> v(6, 0.0);
        v[intent] = 1.0;
        for (double& x : v) x += 0.15 * rng.Normal();
        const std::string token = "i" + std::to_string(intent) + "w" + std::to_string(w);
        table.Add(token, v);
        words.push_back(token);
      }
      intent_words.push_back(words);
    }
    for (int w = 0; w < 6; ++w) {
      std::vector<double> v(6, 0.0);
      v[3 + w % 3] = 1.0;
      for (double& x : v) x += 0.15 * rng.Normal();
      const std::string token = "c" + std::to_string(w);
      table.Add(token, v);
      chatter.push_back(token);
    }
    auto make = [&](size_t n) {
      std::vector<MessagePair> pairs;
      for (size_t i = 0; i < n; ++i) {
        for (int intent = 0; intent < 3; ++intent) {
          std::string text;
          for (int w = 0; w < 3; ++w) {
            text += intent_words[intent][rng.UniformInt(4)] + " ";
          }
          pairs.push_back(Pair(text + chatter[rng.UniformInt(6)], "r" + std::to_string(intent)));
        }
        std::string noise;
        for (int w = 0; w < 3; ++w) noise += chatter[rng.UniformInt(6)] + " ";
        pairs.push_back(Pair(noise, std::nullopt));
      }
      return Dataset::FromPairs(pairs);
    };
    train = make(per_intent);
    validation = make(per_intent / 3);
    test = make(per_intent / 3);
    std::vector<Tokens> docs;
    for (const MessagePair& p : train.pairs) docs.push_back(Tokenize(p.patient_text));
    stats = std::make_unique<TfIdfStats>(FitTfidf(docs));
    featurizer = std::make_unique<Featurizer>(table, *stats);
  }

  Query Q(const std::string& text) const { return featurizer->MakeQuery(text); }
};

double RelativeError(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

TEST_CASE("featurize examples") {
  EmbeddingTable table(200);
  std::vector<double> v(200, 0.1);
  table.Add("word", v);
  const TfIdfStats stats = FitTfidf({{"word"}});
  CHECK(Featurize("word", table, stats, true).size() == 201);
  CHECK(Featurize("word", table, stats, false).size() == 200);

  const std::vector<double> empty = Featurize("", table, stats, true);
  CHECK(std::all_of(empty.begin(), empty.end(), [](double x) { return x == 0.0; }));

  std::string hundred;
  for (int i = 0; i < 100; ++i) hundred += "word ";
  CHECK(Featurize(hundred, table, stats, true).back() == doctest::Approx(0.5));
}

TEST_CASE("logistic and softmax gradients match finite differences") {
  Rng rng(41);
  for (int point = 0; point < 20; ++point) {
    const size_t dim = 1 + rng.UniformInt(10);
    const size_t n = 5 + rng.UniformInt(10);
    const size_t classes = 2 + rng.UniformInt(4);
    std::vector<double> x(n * dim);
    for (double& v : x) v = rng.Normal();
    std::vector<int> binary(n), multi(n);
    for (size_t i = 0; i < n; ++i) {
      binary[i] = static_cast<int>(rng.UniformInt(2));
      multi[i] = static_cast<int>(rng.UniformInt(classes));
    }
    const double l2 = 0.01 * static_cast<double>(rng.UniformInt(3));

    std::vector<double> lp(dim + 1);
    for (double& v : lp) v = rng.Normal();
    const auto logistic = LogisticLoss(x, dim, binary, lp, l2);
    const auto numeric_logistic = oracle::NumericGradient(
        [&](const std::vector<double>& p) { return LogisticLoss(x, dim, binary, p, l2).loss; },
        lp);
    CHECK(RelativeError(logistic.gradient, numeric_logistic) < 1e-5);

    std::vector<double> sp(classes * (dim + 1));
    for (double& v : sp) v = rng.Normal();
    const auto softmax = SoftmaxLoss(x, dim, multi, classes, sp, l2);
    const auto numeric_softmax = oracle::NumericGradient(
        [&](const std::vector<double>& p) {
          return SoftmaxLoss(x, dim, multi, classes, p, l2).loss;
        },
        sp);
    CHECK(RelativeError(softmax.gradient, numeric_softmax) < 1e-5);
  }
}

TEST_CASE("zero-weight trigger scores one half") {
  LinearParams params;
  params.rows = 1;
  params.dim = 3;
  params.weights.assign(3, 0.0);
  params.bias.assign(1, 0.0);
  params.feature_mean.assign(3, 0.0);
  params.feature_scale.assign(3, 1.0);
  const LinearLogisticTrigger trigger(params, TrainConfig{}, "");
  CHECK(trigger.PredictFeatures(std::vector<double>{1, 2, 3}) == 0.5);
  try {
    trigger.PredictFeatures(std::vector<double>{1, 2});
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimMismatch);
  }
}

TEST_CASE("trigger training separates a separable toy set") {
  const ToyWorld world(42);
  TrainingTrace trace;
  TrainConfig cfg;
  cfg.epochs = 200;
  const auto trigger = TrainTrigger(world.train, world.validation, *world.featurizer, cfg, &trace);
  size_t correct = 0;
  for (const MessagePair& p : world.train.pairs) {
    const double s = trigger->Score(world.Q(p.patient_text));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    correct += (s >= 0.5) == p.feasible;
  }
  CHECK(correct == world.train.size());
  REQUIRE_FALSE(trace.validation_metric.empty());
  CHECK(trace.validation_metric[trace.best_epoch] >= trace.validation_metric[0]);
}

TEST_CASE("trigger training rejects a single class") {
  const ToyWorld world(1);
  std::vector<MessagePair> feasible;
  for (const MessagePair& p : world.train.pairs) {
    if (p.feasible) feasible.push_back(p);
  }
  try {
    TrainTrigger(Dataset::FromPairs(feasible), world.validation, *world.featurizer, TrainConfig{});
    FAIL("expected SingleClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingleClass);
  }
}

TEST_CASE("softmax responder beats or matches nearest centroid") {
  const ToyWorld world(7);
  TrainConfig cfg;
  cfg.include_length_feature = false;
  const auto responder =
      TrainResponse(world.train, world.validation, *world.featurizer, cfg);

  // Nearest-centroid oracle in sentence-embedding space.
  std::map<std::string, std::vector<double>> centroid;
  std::map<std::string, double> count;
  for (const MessagePair& p : world.train.pairs) {
    if (!p.feasible) continue;
    const Query q = world.Q(p.patient_text);
    auto& c = centroid[*p.doctor_response_id];
    c.resize(q.embedding.size());
    for (size_t i = 0; i < c.size(); ++i) c[i] += q.embedding[i];
    count[*p.doctor_response_id] += 1;
  }
  size_t softmax_hits = 0, centroid_hits = 0, n = 0;
  for (const MessagePair& p : world.train.pairs) {
    if (!p.feasible) continue;
    ++n;
    const Query q = world.Q(p.patient_text);
    const std::vector<double> dist = responder->Distribution(q);
    double sum = 0;
    for (double d : dist) {
      CHECK(d >= 0.0);
      sum += d;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    softmax_hits += PredictTopK(*responder, q, 1)[0].response_id == *p.doctor_response_id;
    std::string best;
    double best_cos = -2;
    for (const auto& [label, c] : centroid) {
      const double cos = oracle::Cosine(q.embedding, c);
      if (cos > best_cos) {
        best_cos = cos;
        best = label;
      }
    }
    centroid_hits += best == *p.doctor_response_id;
  }
  const double softmax_acc = static_cast<double>(softmax_hits) / static_cast<double>(n);
  CHECK(static_cast<double>(centroid_hits) / static_cast<double>(n) >= 0.95);
  CHECK(softmax_acc >= 0.95);
}

TEST_CASE("response training error paths") {
  const ToyWorld world(2);
  std::vector<MessagePair> infeasible, one_label;
  for (const MessagePair& p : world.train.pairs) {
    if (!p.feasible) infeasible.push_back(p);
    if (p.doctor_response_id == "r0") one_label.push_back(p);
  }
  try {
    TrainResponse(Dataset::FromPairs(infeasible), world.validation, *world.featurizer, TrainConfig{});
    FAIL("expected EmptyFeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyFeasible);
  }
  try {
    TrainResponse(Dataset::FromPairs(one_label), world.validation, *world.featurizer, TrainConfig{});
    FAIL("expected SingleClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingleClass);
  }
}

TEST_CASE("a vanishing learning rate leaves the weights at zero") {
  const ToyWorld world(3);
  TrainConfig cfg;
  cfg.learning_rate = 1e-12;
  cfg.early_stop_patience = 0;
  TrainingTrace trace;
  const auto responder =
      TrainResponse(world.train, world.validation, *world.featurizer, cfg, &trace);
  CHECK(trace.best_epoch <= trace.epochs_run);
  const auto& w = responder->params().weights;
  CHECK(std::all_of(w.begin(), w.end(), [](double x) { return std::abs(x) < 1e-9; }));
}

TEST_CASE("top-k ranking examples and total order") {
  const FrequencyResponder model({"a", "b", "c"}, {0.0, 1.0, 0.0});
  const Query q;
  const auto all = PredictTopK(model, q, 3);
  REQUIRE(all.size() == 3);
  CHECK(all[0].response_id == "b");
  CHECK(all[1].response_id == "a");  // ties by id
  CHECK(all[2].response_id == "c");
  CHECK(RankOf(RankResponses(model, q), "c") == 3);
  CHECK(RankOf(RankResponses(model, q), "zzz") == 0);
  CHECK_THROWS_AS(PredictTopK(model, q, 0), Error);
}

TEST_CASE("knn baselines") {
  const ToyWorld world(4);
  for (KnnKind kind : {KnnKind::kTfidf, KnnKind::kWeighted}) {
    const auto index = std::make_shared<const KnnIndex>(kind, world.train, *world.featurizer);
    // Self-retrieval: every training message finds its own label at rank 1.
    size_t hits = 0, feasible = 0;
    for (const MessagePair& p : world.train.pairs) {
      const KnnPrediction pred = KnnBaselinePredict(*index, world.Q(p.patient_text));
      if (!p.feasible) {
        continue;
      }
      ++feasible;
      hits += pred.ranking.front().response_id == *p.doctor_response_id;
    }
    // Identical texts with different labels are the only possible misses.
    CHECK(static_cast<double>(hits) / static_cast<double>(feasible) > 0.9);

    const MessagePair& first_feasible = world.train.pairs.front();
    CHECK(index->TriggerScore(world.Q(first_feasible.patient_text)) == 1.0);

    const KnnResponder responder(index);
    const std::vector<double> dist = responder.Distribution(world.Q("i1w0 c2"));
    double sum = 0;
    for (double d : dist) sum += d;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(KnnIndex(KnnKind::kTfidf, Dataset{}, *world.featurizer), Error);
}

TEST_CASE("tf-idf knn falls back to label frequency for disjoint queries") {
  const ToyWorld world(5);
  const KnnIndex index(KnnKind::kTfidf, world.train, *world.featurizer);
  const Query q = world.Q("unseenword anotherone");
  const auto sims = index.Similarities(q);
  CHECK(std::all_of(sims.begin(), sims.end(), [](double s) { return s == 0.0; }));
  const FrequencyModels freq = FrequencyBaseline(world.train);
  const std::vector<double> knn = index.ResponseDistribution(q);
  const std::vector<double> expected = freq.responder->Distribution(q);
  REQUIRE(knn.size() == expected.size());
  for (size_t i = 0; i < knn.size(); ++i) CHECK(knn[i] == doctest::Approx(expected[i]));
}

TEST_CASE("weighted knn relates synonyms that tf-idf treats as unrelated") {
  EmbeddingTable table(2);
  table.Add("disease", std::vector<double>{1.0, 0.2});
  table.Add("illness", std::vector<double>{0.9, 0.3});
  const Dataset train = Dataset::FromPairs({Pair("disease", "r0"), Pair("other", std::nullopt)});
  const TfIdfStats stats = FitTfidf({{"disease"}, {"other"}});
  const Featurizer featurizer(table, stats);
  const Query q = featurizer.MakeQuery("illness");
  CHECK(KnnIndex(KnnKind::kTfidf, train, featurizer).Similarities(q)[0] == 0.0);
  CHECK(KnnIndex(KnnKind::kWeighted, train, featurizer).Similarities(q)[0] > 0.0);
}

TEST_CASE("frequency baseline examples") {
  std::vector<MessagePair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back(Pair("a", "A"));
  for (int i = 0; i < 2; ++i) pairs.push_back(Pair("b", "B"));
  const FrequencyModels m = FrequencyBaseline(Dataset::FromPairs(pairs));
  const std::vector<double> dist = m.responder->Distribution(Query{});
  CHECK(dist[0] == doctest::Approx(0.8));
  CHECK(dist[1] == doctest::Approx(0.2));
  CHECK(m.trigger->positive_rate() == 1.0);
  CHECK_THROWS_AS(FrequencyBaseline(Dataset{}), Error);

  const FrequencyTrigger trigger(0.8);
  Rng rng(6);
  double fired = 0;
  for (int i = 0; i < 20000; ++i) fired += trigger.Sample(rng);
  CHECK(fired / 20000 == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("frequency trigger has chance-level auc") {
  const ToyWorld world(8);
  const FrequencyModels m = FrequencyBaseline(world.train);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const MessagePair& p : world.test.pairs) {
    scores.push_back(m.trigger->Score(world.Q(p.patient_text)));
    labels.push_back(p.feasible);
  }
  CHECK(AucRoc(scores, labels) == 0.5);
}

TEST_CASE("trained models survive serialization") {
  const ToyWorld world(9);
  const auto trigger = TrainTrigger(world.train, world.validation, *world.featurizer, TrainConfig{});
  TrainConfig cfg;
  cfg.include_length_feature = false;
  const auto responder = TrainResponse(world.train, world.validation, *world.featurizer, cfg);
  const auto trigger2 = TriggerFromJson(nlohmann::json::parse(trigger->ToJson().dump()), *world.featurizer);
  const auto responder2 =
      ResponseFromJson(nlohmann::json::parse(responder->ToJson().dump()), *world.featurizer);
  for (const MessagePair& p : world.test.pairs) {
    const Query q = world.Q(p.patient_text);
    CHECK(trigger2->Score(q) == trigger->Score(q));
    CHECK(responder2->Distribution(q) == responder->Distribution(q));
    // Same input twice ranks identically.
    const auto r1 = RankResponses(*responder, q);
    const auto r2 = RankResponses(*responder, q);
    for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i].response_id == r2[i].response_id);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS(cfg.Validate());
  cfg = TrainConfig{};
  cfg.early_stop_patience = -1;
  CHECK_THROWS(cfg.Validate());
  cfg = TrainConfig{};
  CHECK(TrainConfig::FromJson(cfg.ToJson()).learning_rate == cfg.learning_rate);
}

}  // namespace
}  // namespace medreply
