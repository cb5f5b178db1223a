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

#include "medreply/models.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "medreply/error.h"
#include "medreply/eval.h"
#include "medreply/io.h"

namespace medreply {
namespace {

using json = nlohmann::json;

constexpr double kFrequencyTieBreak = 1e-6;

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
};

Standardizer FitStandardizer(const Matrix& x) {
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.scale.assign(x.cols, 1.0);
  if (x.rows == 0) return s;
  for (size_t i = 0; i < x.rows; ++i) {
    for (size_t d = 0; d < x.cols; ++d) s.mean[d] += x.data[i * x.cols + d];
  }
  for (double& m : s.mean) m /= static_cast<double>(x.rows);
  std::vector<double> var(x.cols, 0.0);
  for (size_t i = 0; i < x.rows; ++i) {
    for (size_t d = 0; d < x.cols; ++d) {
      const double c = x.data[i * x.cols + d] - s.mean[d];
      var[d] += c * c;
    }
  }
  for (size_t d = 0; d < x.cols; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(x.rows));
    s.scale[d] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Matrix Apply(const Standardizer& s, const Matrix& x) {
  Matrix out = x;
  for (size_t i = 0; i < x.rows; ++i) {
    for (size_t d = 0; d < x.cols; ++d) {
      double& v = out.data[i * x.cols + d];
      v = (v - s.mean[d]) / s.scale[d];
    }
  }
  return out;
}

Matrix BuildFeatures(const Dataset& ds, const Featurizer& featurizer,
                     bool include_length, bool feasible_only) {
  Matrix x;
  x.cols = featurizer.table().dim() + (include_length ? 1 : 0);
  for (const MessagePair& p : ds.pairs) {
    if (feasible_only && !p.feasible) continue;
    const auto f = Featurize(featurizer.MakeQuery(p.patient_text), include_length);
    x.data.insert(x.data.end(), f.begin(), f.end());
    ++x.rows;
  }
  return x;
}

json LinearToJson(std::string_view kind, const std::vector<std::string>& labels,
                  const LinearParams& p, const TrainConfig& config,
                  const std::string& fingerprint) {
  return {{"kind", kind},
          {"dim", p.dim},
          {"rows", p.rows},
          {"label_space", labels},
          {"weights", p.weights},
          {"bias", p.bias},
          {"feature_mean", p.feature_mean},
          {"feature_scale", p.feature_scale},
          {"config", config.ToJson()},
          {"train_fingerprint", fingerprint}};
}

LinearParams LinearFromJson(const json& j) {
  LinearParams p;
  p.dim = j.at("dim").get<size_t>();
  p.rows = j.at("rows").get<size_t>();
  p.weights = j.at("weights").get<std::vector<double>>();
  p.bias = j.at("bias").get<std::vector<double>>();
  p.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  p.feature_scale = j.at("feature_scale").get<std::vector<double>>();
  if (p.weights.size() != p.rows * p.dim || p.bias.size() != p.rows ||
      p.feature_mean.size() != p.dim || p.feature_scale.size() != p.dim) {
    throw Error(ErrorCode::kMalformedRecord, "linear model shapes disagree");
  }
  return p;
}

LinearParams Unflatten(std::span<const double> params, size_t rows, size_t dim,
                       const Standardizer& s) {
  LinearParams p;
  p.rows = rows;
  p.dim = dim;
  p.weights.assign(params.begin(), params.begin() + rows * dim);
  p.bias.assign(params.begin() + rows * dim, params.end());
  p.feature_mean = s.mean;
  p.feature_scale = s.scale;
  return p;
}

// Gradient descent with best-checkpoint early stopping. `metric` scores a
// flattened parameter vector on validation data as (primary, secondary),
// compared lexicographically, higher is better. The secondary score only
// separates checkpoints whose primary scores are equal, e.g. a validation AUC
// that has already saturated at 1.
template <typename LossFn, typename MetricFn>
std::vector<double> Descend(size_t n_params, const TrainConfig& config,
                            LossFn&& loss, MetricFn&& metric,
                            TrainingTrace* trace) {
  std::vector<double> params(n_params, 0.0);
  std::vector<double> best = params;
  std::pair<double, double> best_metric = metric(params);
  TrainingTrace local;
  local.validation_metric.push_back(best_metric.first);
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const LossAndGradient lg = loss(params);
    for (size_t i = 0; i < n_params; ++i) {
      params[i] -= config.learning_rate * lg.gradient[i];
    }
    const std::pair<double, double> m = metric(params);
    local.validation_metric.push_back(m.first);
    local.epochs_run = epoch;
    if (m > best_metric) {
      best_metric = m;
      best = params;
      local.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  if (trace) *trace = std::move(local);
  return best;
}

double LogSumExp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

std::string_view TriggerKindName(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::kLinearLogistic: return "LinearLogistic";
    case TriggerKind::kKnnTfidf: return "KnnTfidf";
    case TriggerKind::kKnnWeighted: return "KnnWeighted";
    case TriggerKind::kFrequency: return "Frequency";
    case TriggerKind::kExternal: return "External";
  }
  return "Unknown";
}

std::string_view ResponseKindName(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::kSoftmaxLinear: return "SoftmaxLinear";
    case ResponseKind::kKnnTfidf: return "KnnTfidf";
    case ResponseKind::kKnnWeighted: return "KnnWeighted";
    case ResponseKind::kFrequency: return "Frequency";
    case ResponseKind::kExternal: return "External";
  }
  return "Unknown";
}

TriggerKind ParseTriggerKind(std::string_view name) {
  for (TriggerKind k :
       {TriggerKind::kLinearLogistic, TriggerKind::kKnnTfidf,
        TriggerKind::kKnnWeighted, TriggerKind::kFrequency,
        TriggerKind::kExternal}) {
    if (TriggerKindName(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown trigger kind '" + std::string(name) + "'");
}

ResponseKind ParseResponseKind(std::string_view name) {
  for (ResponseKind k :
       {ResponseKind::kSoftmaxLinear, ResponseKind::kKnnTfidf,
        ResponseKind::kKnnWeighted, ResponseKind::kFrequency,
        ResponseKind::kExternal}) {
    if (ResponseKindName(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown response kind '" + std::string(name) + "'");
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  }
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (l2 < 0.0) throw Error(ErrorCode::kInvalidArgument, "l2 must be >= 0");
  if (early_stop_patience < 0) {
    throw Error(ErrorCode::kInvalidArgument, "patience must be >= 0");
  }
}

json TrainConfig::ToJson() const {
  return {{"learning_rate", learning_rate},
          {"epochs", epochs},
          {"l2", l2},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"include_length_feature", include_length_feature}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.l2 = j.value("l2", c.l2);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.include_length_feature =
      j.value("include_length_feature", c.include_length_feature);
  c.Validate();
  return c;
}

Query Featurizer::MakeQuery(std::string_view cleaned_text,
                            std::string_view raw_text) const {
  Query q;
  q.raw_text = std::string(raw_text.empty() ? cleaned_text : raw_text);
  q.text = std::string(cleaned_text);
  q.tokens = Tokenize(q.text);
  q.word_count = q.tokens.size();
  q.embedding = EmbedSentence(q.tokens, *table_, *stats_).values;
  return q;
}

std::vector<double> Featurize(const Query& query, bool include_length) {
  std::vector<double> f = query.embedding;
  if (include_length) {
    f.push_back(static_cast<double>(query.word_count) / kLengthScale);
  }
  return f;
}

std::vector<double> Featurize(std::string_view patient_text,
                              const EmbeddingTable& table,
                              const TfIdfStats& stats, bool include_length) {
  return Featurize(Featurizer(table, stats).MakeQuery(patient_text),
                   include_length);
}

std::vector<ScoredResponse> RankResponses(const ResponseModel& model,
                                          const Query& query) {
  const std::vector<double> dist = model.Distribution(query);
  const auto& labels = model.label_space();
  std::vector<ScoredResponse> ranking;
  ranking.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    ranking.push_back({labels[i], dist[i]});
  }
  std::sort(ranking.begin(), ranking.end(),
            [](const ScoredResponse& a, const ScoredResponse& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.response_id < b.response_id;
            });
  return ranking;
}

std::vector<ScoredResponse> PredictTopK(const ResponseModel& model,
                                        const Query& query, size_t k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<ScoredResponse> ranking = RankResponses(model, query);
  if (ranking.size() > k) ranking.resize(k);
  return ranking;
}

size_t RankOf(const std::vector<ScoredResponse>& ranking,
              const std::string& truth) {
  for (size_t i = 0; i < ranking.size(); ++i) {
    if (ranking[i].response_id == truth) return i + 1;
  }
  return 0;
}

std::vector<double> LinearParams::Standardize(
    std::span<const double> features) const {
  if (features.size() != dim) {
    throw Error(ErrorCode::kDimMismatch,
                "expected " + std::to_string(dim) + " features, got " +
                    std::to_string(features.size()));
  }
  std::vector<double> out(dim);
  for (size_t d = 0; d < dim; ++d) {
    out[d] = (features[d] - feature_mean[d]) / feature_scale[d];
  }
  return out;
}

std::vector<double> LinearParams::Logits(
    std::span<const double> features) const {
  const std::vector<double> x = Standardize(features);
  std::vector<double> z(rows);
  for (size_t r = 0; r < rows; ++r) {
    z[r] = bias[r] + Dot(std::span<const double>(weights).subspan(r * dim, dim), x);
  }
  return z;
}

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

LossAndGradient LogisticLoss(std::span<const double> x, size_t dim,
                             std::span<const int> labels,
                             std::span<const double> params, double l2) {
  const size_t n = labels.size();
  LossAndGradient out;
  out.gradient.assign(dim + 1, 0.0);
  const auto w = params.subspan(0, dim);
  const double b = params[dim];
  for (size_t i = 0; i < n; ++i) {
    const auto xi = x.subspan(i * dim, dim);
    const double z = Dot(w, xi) + b;
    const double y = labels[i] != 0 ? 1.0 : 0.0;
    // log(1 + e^z) - y z, computed stably
    out.loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) -
                y * z;
    const double r = Sigmoid(z) - y;
    for (size_t d = 0; d < dim; ++d) out.gradient[d] += r * xi[d];
    out.gradient[dim] += r;
  }
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  for (double& g : out.gradient) g *= inv_n;
  for (size_t d = 0; d < dim; ++d) {
    out.loss += 0.5 * l2 * w[d] * w[d];
    out.gradient[d] += l2 * w[d];
  }
  return out;
}

LossAndGradient SoftmaxLoss(std::span<const double> x, size_t dim,
                            std::span<const int> labels, size_t n_classes,
                            std::span<const double> params, double l2) {
  const size_t n = labels.size();
  const size_t n_weights = n_classes * dim;
  LossAndGradient out;
  out.gradient.assign(n_weights + n_classes, 0.0);
  std::vector<double> z(n_classes);
  for (size_t i = 0; i < n; ++i) {
    const auto xi = x.subspan(i * dim, dim);
    for (size_t c = 0; c < n_classes; ++c) {
      z[c] = params[n_weights + c] + Dot(params.subspan(c * dim, dim), xi);
    }
    out.loss += LogSumExp(z) - z[labels[i]];
    const std::vector<double> p = Softmax(z);
    for (size_t c = 0; c < n_classes; ++c) {
      const double r = p[c] - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0);
      double* g = out.gradient.data() + c * dim;
      for (size_t d = 0; d < dim; ++d) g[d] += r * xi[d];
      out.gradient[n_weights + c] += r;
    }
  }
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  for (double& g : out.gradient) g *= inv_n;
  for (size_t i = 0; i < n_weights; ++i) {
    out.loss += 0.5 * l2 * params[i] * params[i];
    out.gradient[i] += l2 * params[i];
  }
  return out;
}

LinearLogisticTrigger::LinearLogisticTrigger(LinearParams params,
                                             TrainConfig config,
                                             std::string train_fingerprint)
    : params_(std::move(params)),
      config_(config),
      train_fingerprint_(std::move(train_fingerprint)) {}

double LinearLogisticTrigger::PredictFeatures(
    std::span<const double> features) const {
  return Sigmoid(params_.Logits(features)[0]);
}

double LinearLogisticTrigger::Score(const Query& query) const {
  return PredictFeatures(Featurize(query, config_.include_length_feature));
}

json LinearLogisticTrigger::ToJson() const {
  return LinearToJson(TriggerKindName(kind()), {}, params_, config_,
                      train_fingerprint_);
}

SoftmaxLinearResponder::SoftmaxLinearResponder(
    std::vector<std::string> label_space, LinearParams params,
    TrainConfig config, std::string train_fingerprint)
    : ResponseModel(std::move(label_space)),
      params_(std::move(params)),
      config_(config),
      train_fingerprint_(std::move(train_fingerprint)) {}

std::vector<double> SoftmaxLinearResponder::PredictFeatures(
    std::span<const double> features) const {
  return Softmax(params_.Logits(features));
}

std::vector<double> SoftmaxLinearResponder::Distribution(
    const Query& query) const {
  return PredictFeatures(Featurize(query, config_.include_length_feature));
}

json SoftmaxLinearResponder::ToJson() const {
  return LinearToJson(ResponseKindName(kind()), label_space(), params_, config_,
                      train_fingerprint_);
}

std::string DatasetFingerprint(const Dataset& ds) {
  return Fingerprint(SerializePairs(ds.pairs));
}

std::unique_ptr<LinearLogisticTrigger> TrainTrigger(
    const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const TrainConfig& config,
    TrainingTrace* trace) {
  config.Validate();
  std::vector<int> y;
  for (const MessagePair& p : train.pairs) y.push_back(p.feasible ? 1 : 0);
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(y.size())) {
    throw Error(ErrorCode::kSingleClass, "trigger training needs both classes");
  }
  const bool use_length = config.include_length_feature;
  const Matrix raw = BuildFeatures(train, featurizer, use_length, false);
  const Standardizer standardizer = FitStandardizer(raw);
  const Matrix x = Apply(standardizer, raw);
  const size_t dim = x.cols;

  std::vector<int> val_y;
  for (const MessagePair& p : validation.pairs) val_y.push_back(p.feasible ? 1 : 0);
  const auto val_pos = std::count(val_y.begin(), val_y.end(), 1);
  const bool val_usable =
      val_pos > 0 && val_pos < static_cast<long>(val_y.size());
  const Matrix val_x =
      Apply(standardizer, BuildFeatures(validation, featurizer, use_length, false));

  auto loss = [&](std::span<const double> params) {
    return LogisticLoss(x.data, dim, y, params, config.l2);
  };
  auto metric = [&](std::span<const double> params) {
    if (!val_usable) {
      const double train_fit = -loss(params).loss;
      return std::make_pair(train_fit, train_fit);
    }
    std::vector<double> scores(val_x.rows);
    for (size_t i = 0; i < val_x.rows; ++i) {
      scores[i] = Dot(params.subspan(0, dim),
                      std::span<const double>(val_x.data).subspan(i * dim, dim)) +
                  params[dim];
    }
    // validation log-likelihood breaks ties between equal AUCs
    return std::make_pair(
        AucRoc(scores, val_y),
        -LogisticLoss(val_x.data, dim, val_y, params, 0.0).loss);
  };
  const std::vector<double> best = Descend(dim + 1, config, loss, metric, trace);
  return std::make_unique<LinearLogisticTrigger>(
      Unflatten(best, 1, dim, standardizer), config, DatasetFingerprint(train));
}

std::unique_ptr<SoftmaxLinearResponder> TrainResponse(
    const Dataset& train, const Dataset& validation,
    const Featurizer& featurizer, const TrainConfig& config,
    TrainingTrace* trace) {
  config.Validate();
  std::vector<std::string> labels(train.label_space.begin(),
                                  train.label_space.end());
  std::map<std::string, int> label_index;
  for (size_t i = 0; i < labels.size(); ++i) label_index[labels[i]] = static_cast<int>(i);
  std::vector<int> y;
  for (const MessagePair& p : train.pairs) {
    if (p.feasible) y.push_back(label_index.at(*p.doctor_response_id));
  }
  if (y.empty()) throw Error(ErrorCode::kEmptyFeasible, "no feasible pairs");
  if (labels.size() < 2) {
    throw Error(ErrorCode::kSingleClass, "response training needs >= 2 labels");
  }
  const bool use_length = config.include_length_feature;
  const Matrix raw = BuildFeatures(train, featurizer, use_length, true);
  const Standardizer standardizer = FitStandardizer(raw);
  const Matrix x = Apply(standardizer, raw);
  const size_t dim = x.cols;
  const size_t n_classes = labels.size();

  Matrix val_x;
  val_x.cols = dim;
  std::vector<int> val_y;
  for (const MessagePair& p : validation.pairs) {
    if (!p.feasible) continue;
    auto it = label_index.find(*p.doctor_response_id);
    if (it == label_index.end()) continue;
    const auto f = Featurize(featurizer.MakeQuery(p.patient_text), use_length);
    val_x.data.insert(val_x.data.end(), f.begin(), f.end());
    ++val_x.rows;
    val_y.push_back(it->second);
  }
  val_x = Apply(standardizer, val_x);

  auto loss = [&](std::span<const double> params) {
    return SoftmaxLoss(x.data, dim, y, n_classes, params, config.l2);
  };
  auto metric = [&](std::span<const double> params) {
    // mean log-likelihood of the true label, without the penalty term
    const double fit =
        val_y.empty()
            ? -loss(params).loss
            : -SoftmaxLoss(val_x.data, dim, val_y, n_classes, params, 0.0).loss;
    return std::make_pair(fit, 0.0);
  };
  const std::vector<double> best =
      Descend(n_classes * (dim + 1), config, loss, metric, trace);
  return std::make_unique<SoftmaxLinearResponder>(
      labels, Unflatten(best, n_classes, dim, standardizer), config,
      DatasetFingerprint(train));
}

KnnIndex::KnnIndex(KnnKind kind, const Dataset& train,
                   const Featurizer& featurizer)
    : kind_(kind), stats_(&featurizer.stats()) {
  if (train.pairs.empty()) throw Error(ErrorCode::kEmptyIndex, "no instances");
  label_space_.assign(train.label_space.begin(), train.label_space.end());
  std::map<std::string, int> index;
  for (size_t i = 0; i < label_space_.size(); ++i) {
    index[label_space_[i]] = static_cast<int>(i);
  }
  label_frequency_.assign(label_space_.size(), 0.0);
  size_t feasible = 0;
  dim_ = featurizer.table().dim();
  for (size_t doc = 0; doc < train.pairs.size(); ++doc) {
    const MessagePair& p = train.pairs[doc];
    texts_.push_back(p.patient_text);
    labels_.push_back(p.feasible ? p.doctor_response_id : std::nullopt);
    if (p.feasible) {
      const int l = index.at(*p.doctor_response_id);
      label_of_.push_back(l);
      label_frequency_[l] += 1.0;
      ++feasible;
    } else {
      label_of_.push_back(-1);
    }
    const Tokens tokens = Tokenize(p.patient_text);
    if (kind_ == KnnKind::kTfidf) {
      auto counts = CountTokens(tokens);
      double norm = 0.0;
      std::vector<double> weights;
      for (const auto& [token, count] : counts) {
        weights.push_back(TfidfWeight(token, count, *stats_));
        norm += weights.back() * weights.back();
      }
      norm = std::sqrt(norm);
      for (size_t t = 0; t < counts.size(); ++t) {
        postings_[counts[t].first].emplace_back(static_cast<uint32_t>(doc),
                                                weights[t] / norm);
      }
    } else {
      std::vector<double> v =
          EmbedSentence(tokens, featurizer.table(), *stats_).values;
      const double norm = Norm(v);
      if (norm > 0.0) {
        for (double& x : v) x /= norm;
      }
      unit_vectors_.insert(unit_vectors_.end(), v.begin(), v.end());
    }
  }
  for (double& f : label_frequency_) {
    f /= static_cast<double>(std::max<size_t>(feasible, 1));
  }
}

std::vector<double> KnnIndex::Similarities(const Query& query) const {
  std::vector<double> sims(labels_.size(), 0.0);
  if (kind_ == KnnKind::kTfidf) {
    const auto counts = CountTokens(query.tokens);
    double norm = 0.0;
    std::vector<double> weights;
    for (const auto& [token, count] : counts) {
      weights.push_back(TfidfWeight(token, count, *stats_));
      norm += weights.back() * weights.back();
    }
    if (norm == 0.0) return sims;
    norm = std::sqrt(norm);
    for (size_t t = 0; t < counts.size(); ++t) {
      auto it = postings_.find(counts[t].first);
      if (it == postings_.end()) continue;
      const double qw = weights[t] / norm;
      for (const auto& [doc, w] : it->second) sims[doc] += qw * w;
    }
  } else {
    std::vector<double> q = query.embedding;
    const double norm = Norm(q);
    if (norm == 0.0) return sims;
    for (double& x : q) x /= norm;
    for (size_t i = 0; i < labels_.size(); ++i) {
      sims[i] = Dot(q, std::span<const double>(unit_vectors_).subspan(i * dim_, dim_));
    }
  }
  return sims;
}

double KnnIndex::TriggerScore(const Query& query) const {
  const std::vector<double> sims = Similarities(query);
  const size_t best = std::max_element(sims.begin(), sims.end()) - sims.begin();
  return labels_[best].has_value() ? 1.0 : 0.0;
}

std::vector<double> KnnIndex::ResponseDistribution(const Query& query) const {
  const std::vector<double> sims = Similarities(query);
  std::vector<double> best(label_space_.size(), 0.0);
  for (size_t i = 0; i < sims.size(); ++i) {
    if (label_of_[i] >= 0) best[label_of_[i]] = std::max(best[label_of_[i]], sims[i]);
  }
  double total = 0.0;
  for (size_t l = 0; l < best.size(); ++l) {
    best[l] += kFrequencyTieBreak * label_frequency_[l];
    total += best[l];
  }
  for (double& v : best) v /= total;
  return best;
}

json KnnIndex::ToJson() const {
  json labels = json::array();
  for (const auto& l : labels_) labels.push_back(l ? json(*l) : json(nullptr));
  return {{"texts", texts_}, {"labels", labels}};
}

std::shared_ptr<const KnnIndex> KnnIndex::FromJson(
    const json& j, const Featurizer& featurizer) {
  const KnnKind kind = j.at("kind").get<std::string>() == "KnnTfidf"
                           ? KnnKind::kTfidf
                           : KnnKind::kWeighted;
  const json& index = j.at("index");
  const auto texts = index.at("texts").get<std::vector<std::string>>();
  const json& labels = index.at("labels");
  if (labels.size() != texts.size()) {
    throw Error(ErrorCode::kMalformedRecord, "knn index shapes disagree");
  }
  std::vector<MessagePair> pairs;
  for (size_t i = 0; i < texts.size(); ++i) {
    MessagePair p;
    p.patient_text = texts[i];
    if (!labels[i].is_null()) {
      p.doctor_response_id = labels[i].get<std::string>();
      p.feasible = true;
    }
    pairs.push_back(std::move(p));
  }
  return std::make_shared<const KnnIndex>(kind, Dataset::FromPairs(std::move(pairs)),
                                          featurizer);
}

KnnPrediction KnnBaselinePredict(const KnnIndex& index, const Query& query) {
  KnnPrediction out;
  out.trigger_score = index.TriggerScore(query);
  KnnResponder responder(std::shared_ptr<const KnnIndex>(&index, [](auto*) {}));
  out.ranking = RankResponses(responder, query);
  return out;
}

json KnnTrigger::ToJson() const {
  return {{"kind", TriggerKindName(kind())},
          {"dim", 0},
          {"label_space", index_->label_space()},
          {"index", index_->ToJson()}};
}

json KnnResponder::ToJson() const {
  return {{"kind", ResponseKindName(kind())},
          {"dim", 0},
          {"label_space", label_space()},
          {"index", index_->ToJson()}};
}

json FrequencyTrigger::ToJson() const {
  return {{"kind", TriggerKindName(kind())},
          {"dim", 0},
          {"positive_rate", positive_rate_}};
}

FrequencyResponder::FrequencyResponder(std::vector<std::string> label_space,
                                       std::vector<double> probabilities)
    : ResponseModel(std::move(label_space)),
      probabilities_(std::move(probabilities)) {
  if (probabilities_.size() != this->label_space().size()) {
    throw Error(ErrorCode::kLengthMismatch, "frequency distribution size");
  }
}

size_t FrequencyResponder::Sample(Rng& rng) const {
  const double u = rng.Uniform();
  double cumulative = 0.0;
  for (size_t i = 0; i < probabilities_.size(); ++i) {
    cumulative += probabilities_[i];
    if (u < cumulative) return i;
  }
  return probabilities_.empty() ? 0 : probabilities_.size() - 1;
}

json FrequencyResponder::ToJson() const {
  return {{"kind", ResponseKindName(kind())},
          {"dim", 0},
          {"label_space", label_space()},
          {"probabilities", probabilities_}};
}

FrequencyModels FrequencyBaseline(const Dataset& train) {
  if (train.pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "no pairs");
  std::map<std::string, double> counts;
  double feasible = 0.0;
  for (const MessagePair& p : train.pairs) {
    if (!p.feasible) continue;
    counts[*p.doctor_response_id] += 1.0;
    feasible += 1.0;
  }
  std::vector<std::string> labels;
  std::vector<double> probs;
  for (const auto& [label, count] : counts) {
    labels.push_back(label);
    probs.push_back(count / feasible);
  }
  FrequencyModels models;
  models.trigger = std::make_unique<FrequencyTrigger>(
      feasible / static_cast<double>(train.pairs.size()));
  models.responder =
      std::make_unique<FrequencyResponder>(std::move(labels), std::move(probs));
  return models;
}

std::shared_ptr<const ExternalScores> ExternalScores::Parse(
    std::string_view jsonl) {
  auto scores = std::make_shared<ExternalScores>();
  size_t line_no = 0;
  bool header = false;
  size_t start = 0;
  while (start < jsonl.size()) {
    size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw Error(ErrorCode::kMalformedRecord,
                  "external scores line " + std::to_string(line_no));
    }
    try {
      if (!header) {
        scores->label_space_ =
            record.at("label_space").get<std::vector<std::string>>();
        header = true;
        continue;
      }
      Entry entry;
      entry.trigger_score = record.at("trigger_score").get<double>();
      entry.response_scores =
          record.at("response_scores").get<std::vector<double>>();
      if (entry.response_scores.size() != scores->label_space_.size()) {
        throw Error(ErrorCode::kMalformedRecord,
                    "external scores line " + std::to_string(line_no) +
                        ": response_scores length");
      }
      scores->entries_[record.at("text").get<std::string>()] = std::move(entry);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord,
                  "external scores line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  if (!header) {
    throw Error(ErrorCode::kMalformedRecord, "external scores: missing header");
  }
  return scores;
}

std::shared_ptr<const ExternalScores> ExternalScores::Load(
    const std::filesystem::path& path) {
  return Parse(ReadFile(path));
}

const ExternalScores::Entry& ExternalScores::Lookup(const Query& query) const {
  if (auto it = entries_.find(query.raw_text); it != entries_.end()) {
    return it->second;
  }
  if (auto it = entries_.find(query.text); it != entries_.end()) {
    return it->second;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "no external score for '" + query.raw_text + "'");
}

double ExternalTrigger::Score(const Query& query) const {
  return std::clamp(scores_->Lookup(query).trigger_score, 0.0, 1.0);
}

json ExternalTrigger::ToJson() const {
  return {{"kind", TriggerKindName(kind())}, {"dim", 0}, {"source", source_}};
}

std::vector<double> ExternalResponder::Distribution(const Query& query) const {
  std::vector<double> p = scores_->Lookup(query).response_scores;
  double total = 0.0;
  for (double& v : p) {
    v = std::max(v, 0.0);
    total += v;
  }
  if (total == 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  } else {
    for (double& v : p) v /= total;
  }
  return p;
}

json ExternalResponder::ToJson() const {
  return {{"kind", ResponseKindName(kind())},
          {"dim", 0},
          {"label_space", label_space()},
          {"source", source_}};
}

std::unique_ptr<TriggerModel> TriggerFromJson(const json& j,
                                              const Featurizer& featurizer) {
  try {
    switch (ParseTriggerKind(j.at("kind").get<std::string>())) {
      case TriggerKind::kLinearLogistic:
        return std::make_unique<LinearLogisticTrigger>(
            LinearFromJson(j), TrainConfig::FromJson(j.at("config")),
            j.value("train_fingerprint", ""));
      case TriggerKind::kKnnTfidf:
      case TriggerKind::kKnnWeighted:
        return std::make_unique<KnnTrigger>(KnnIndex::FromJson(j, featurizer));
      case TriggerKind::kFrequency:
        return std::make_unique<FrequencyTrigger>(j.at("positive_rate").get<double>());
      case TriggerKind::kExternal: {
        const std::string source = j.at("source").get<std::string>();
        return std::make_unique<ExternalTrigger>(ExternalScores::Load(source),
                                                 source);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord,
                std::string("trigger model: ") + e.what());
  }
  throw Error(ErrorCode::kMalformedRecord, "trigger model: unknown kind");
}

std::unique_ptr<ResponseModel> ResponseFromJson(const json& j,
                                                const Featurizer& featurizer) {
  try {
    switch (ParseResponseKind(j.at("kind").get<std::string>())) {
      case ResponseKind::kSoftmaxLinear:
        return std::make_unique<SoftmaxLinearResponder>(
            j.at("label_space").get<std::vector<std::string>>(),
            LinearFromJson(j), TrainConfig::FromJson(j.at("config")),
            j.value("train_fingerprint", ""));
      case ResponseKind::kKnnTfidf:
      case ResponseKind::kKnnWeighted:
        return std::make_unique<KnnResponder>(KnnIndex::FromJson(j, featurizer));
      case ResponseKind::kFrequency:
        return std::make_unique<FrequencyResponder>(
            j.at("label_space").get<std::vector<std::string>>(),
            j.at("probabilities").get<std::vector<double>>());
      case ResponseKind::kExternal: {
        const std::string source = j.at("source").get<std::string>();
        return std::make_unique<ExternalResponder>(ExternalScores::Load(source),
                                                   source);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord,
                std::string("response model: ") + e.what());
  }
  throw Error(ErrorCode::kMalformedRecord, "response model: unknown kind");
}

}  // namespace medreply
