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

#include "medreply/canned.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "medreply/error.h"
#include "medreply/io.h"

namespace medreply {
namespace {

using json = nlohmann::json;

// Rejects inputs whose dense distance matrix would not fit comfortably.
constexpr size_t kMaxPoints = 20000;

std::vector<std::vector<double>> UnitVectors(const PointSet& points) {
  std::vector<std::vector<double>> unit = points.vectors;
  for (auto& v : unit) {
    const double norm = Norm(v);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
  }
  return unit;
}

bool ContainsPhrase(const Tokens& haystack, const Tokens& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), phrase.begin(),
                     phrase.end()) != haystack.end();
}

struct Clustering {
  PointSet points;
  std::vector<std::string> unique_texts;
  std::vector<size_t> text_to_unique;
  std::vector<int> labels;  // per unique text
  size_t k = 0;
  double silhouette = 0.0;
};

Clustering ClusterTexts(const std::vector<std::string>& texts,
                        const EmbeddingTable& table, const TfIdfStats& stats,
                        const CannedBuildOptions& options) {
  Clustering out;
  std::unordered_map<std::string, size_t> seen;
  for (const std::string& text : texts) {
    auto [it, inserted] = seen.try_emplace(text, out.unique_texts.size());
    if (inserted) {
      out.unique_texts.push_back(text);
      out.points.vectors.push_back(
          EmbedSentence(Tokenize(text), table, stats).values);
      out.points.weights.push_back(0);
    }
    ++out.points.weights[it->second];
    out.text_to_unique.push_back(it->second);
  }
  const size_t n = out.unique_texts.size();
  if (n < 3) {
    out.labels.resize(n);
    std::iota(out.labels.begin(), out.labels.end(), 0);
    out.k = n;
    return out;
  }
  const size_t k_max = std::min(options.k_max, n - 1);
  const size_t k_min = std::clamp<size_t>(options.k_min, 2, k_max);
  SilhouetteChoice choice = SilhouetteSelectK(out.points, k_min, k_max);
  out.labels = std::move(choice.labels);
  out.k = choice.k;
  out.silhouette = choice.score;
  return out;
}

json RuleToJson(const DiversityRule& rule) {
  json condition = {{"any_of", rule.condition.any_of}};
  if (rule.condition.regex) condition["regex"] = *rule.condition.regex;
  return {{"rule_id", rule.rule_id},
          {"base_response_id", rule.base_response_id},
          {"condition", condition},
          {"variant_text", rule.variant_text}};
}

}  // namespace

PointSet PointSet::FromVectors(const std::vector<SentenceVector>& vectors) {
  PointSet points;
  points.vectors.reserve(vectors.size());
  for (const SentenceVector& v : vectors) points.vectors.push_back(v.values);
  return points;
}

PointSet PointSet::FromVectors(std::vector<std::vector<double>> vectors) {
  PointSet points;
  points.vectors = std::move(vectors);
  return points;
}

std::vector<double> DistanceMatrix(const PointSet& points) {
  const size_t n = points.size();
  if (n > kMaxPoints) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(n) + " points exceed the clustering limit");
  }
  const auto unit = UnitVectors(points);
  std::vector<double> dist(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i; j < n; ++j) {
      const double d = 1.0 - std::clamp(Dot(unit[i], unit[j]), -1.0, 1.0);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
    // zero vectors have cosine 0 with everything, themselves included
    if (Norm(unit[i]) == 0.0) dist[i * n + i] = 1.0;
  }
  return dist;
}

Dendrogram::Dendrogram(const PointSet& points) : n_(points.size()) {
  if (n_ < 2) return;
  std::vector<double> d = DistanceMatrix(points);
  const size_t n = n_;
  std::vector<double> weight(n);
  for (size_t i = 0; i < n; ++i) weight[i] = static_cast<double>(points.Weight(i));
  std::vector<char> active(n, 1);
  std::vector<size_t> nn(n, 0);
  std::vector<double> nn_dist(n, 0.0);

  auto recompute = [&](size_t i) {
    bool found = false;
    for (size_t j = 0; j < n; ++j) {
      if (j == i || !active[j]) continue;
      const double dij = d[i * n + j];
      if (!found || dij < nn_dist[i]) {
        nn[i] = j;
        nn_dist[i] = dij;
        found = true;
      }
    }
  };
  for (size_t i = 0; i < n; ++i) recompute(i);

  merges_.reserve(n - 1);
  for (size_t step = 0; step + 1 < n; ++step) {
    size_t best = n;
    for (size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      if (best == n) {
        best = i;
        continue;
      }
      const size_t lo_i = std::min(i, nn[i]), hi_i = std::max(i, nn[i]);
      const size_t lo_b = std::min(best, nn[best]),
                   hi_b = std::max(best, nn[best]);
      if (nn_dist[i] < nn_dist[best] ||
          (nn_dist[i] == nn_dist[best] &&
           (lo_i < lo_b || (lo_i == lo_b && hi_i < hi_b)))) {
        best = i;
      }
    }
    const size_t a = std::min(best, nn[best]);
    const size_t b = std::max(best, nn[best]);
    merges_.push_back({a, b, nn_dist[best]});

    const double wa = weight[a], wb = weight[b];
    for (size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double merged = (wa * d[a * n + k] + wb * d[b * n + k]) / (wa + wb);
      d[a * n + k] = merged;
      d[k * n + a] = merged;
    }
    weight[a] = wa + wb;
    active[b] = 0;

    for (size_t k = 0; k < n; ++k) {
      if (!active[k]) continue;
      if (k == a || nn[k] == a || nn[k] == b) {
        recompute(k);
      } else {
        const double dka = d[k * n + a];
        if (dka < nn_dist[k] || (dka == nn_dist[k] && a < nn[k])) {
          nn[k] = a;
          nn_dist[k] = dka;
        }
      }
    }
  }
}

std::vector<int> Dendrogram::Cut(size_t k) const {
  std::vector<size_t> parent(n_);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  const size_t n_merges = k >= n_ ? 0 : n_ - k;
  for (size_t m = 0; m < n_merges && m < merges_.size(); ++m) {
    const size_t ra = find(merges_[m].left);
    const size_t rb = find(merges_[m].right);
    // the smaller index stays the root, so roots are lowest member indices
    if (ra < rb) {
      parent[rb] = ra;
    } else {
      parent[ra] = rb;
    }
  }
  std::vector<int> labels(n_, -1);
  std::vector<int> root_label(n_, -1);
  int next = 0;
  for (size_t i = 0; i < n_; ++i) {
    const size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

double ClusterDensity(const PointSet& points, std::span<const size_t> members) {
  int64_t total_weight = 0;
  for (size_t i : members) total_weight += points.Weight(i);
  if (total_weight <= 1) return 1.0;
  std::vector<std::vector<double>> unit;
  unit.reserve(members.size());
  for (size_t i : members) {
    std::vector<double> v = points.vectors[i];
    const double norm = Norm(v);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    unit.push_back(std::move(v));
  }
  double sum = 0.0;
  for (size_t p = 0; p < members.size(); ++p) {
    const double wp = static_cast<double>(points.Weight(members[p]));
    const double self = Norm(unit[p]) > 0.0 ? 1.0 : 0.0;
    sum += wp * (wp - 1.0) / 2.0 * self;
    for (size_t q = p + 1; q < members.size(); ++q) {
      const double wq = static_cast<double>(points.Weight(members[q]));
      sum += wp * wq * std::clamp(Dot(unit[p], unit[q]), -1.0, 1.0);
    }
  }
  const double w = static_cast<double>(total_weight);
  return sum / (w * (w - 1.0) / 2.0);
}

std::vector<Cluster> ClustersFromLabels(const PointSet& points,
                                        const std::vector<int>& labels) {
  int n_clusters = 0;
  for (int label : labels) n_clusters = std::max(n_clusters, label + 1);
  std::vector<Cluster> clusters(n_clusters);
  for (size_t i = 0; i < labels.size(); ++i) {
    clusters[labels[i]].member_indices.push_back(i);
  }
  const size_t dim = points.vectors.empty() ? 0 : points.vectors[0].size();
  for (int c = 0; c < n_clusters; ++c) {
    Cluster& cluster = clusters[c];
    cluster.id = c;
    cluster.centroid.assign(dim, 0.0);
    double total = 0.0;
    for (size_t i : cluster.member_indices) {
      const double w = static_cast<double>(points.Weight(i));
      total += w;
      for (size_t d = 0; d < dim; ++d) {
        cluster.centroid[d] += w * points.vectors[i][d];
      }
    }
    for (double& x : cluster.centroid) x /= total;
    cluster.density = ClusterDensity(points, cluster.member_indices);
  }
  return clusters;
}

std::vector<Cluster> AgglomerativeCluster(
    const std::vector<SentenceVector>& vectors, size_t k) {
  return AgglomerativeCluster(PointSet::FromVectors(vectors), k);
}

std::vector<Cluster> AgglomerativeCluster(const PointSet& points, size_t k) {
  if (k < 2 || k > points.size()) {
    throw Error(ErrorCode::kBadK, "k=" + std::to_string(k) + " for " +
                                      std::to_string(points.size()) +
                                      " vectors");
  }
  Dendrogram tree(points);
  return ClustersFromLabels(points, tree.Cut(k));
}

double MeanSilhouette(const PointSet& points, const std::vector<double>& dist,
                      const std::vector<int>& labels) {
  const size_t n = points.size();
  int n_clusters = 0;
  for (int label : labels) n_clusters = std::max(n_clusters, label + 1);
  std::vector<double> cluster_weight(n_clusters, 0.0);
  for (size_t i = 0; i < n; ++i) {
    cluster_weight[labels[i]] += static_cast<double>(points.Weight(i));
  }
  std::vector<double> sums(n_clusters);
  double total = 0.0;
  double weighted = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double wi = static_cast<double>(points.Weight(i));
    total += wi;
    const int own = labels[i];
    if (cluster_weight[own] <= 1.0) continue;  // singleton scores 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[labels[j]] += static_cast<double>(points.Weight(j)) * dist[i * n + j];
    }
    // copies of point i sit at distance zero from it
    const double a = sums[own] / (cluster_weight[own] - 1.0);
    double b = 0.0;
    bool have_b = false;
    for (int c = 0; c < n_clusters; ++c) {
      if (c == own) continue;
      const double mean = sums[c] / cluster_weight[c];
      if (!have_b || mean < b) {
        b = mean;
        have_b = true;
      }
    }
    if (!have_b) continue;
    const double denom = std::max(a, b);
    const double s = denom > 0.0 ? (b - a) / denom : 0.0;
    weighted += wi * s;
  }
  return total > 0.0 ? weighted / total : 0.0;
}

SilhouetteChoice SilhouetteSelectK(const std::vector<SentenceVector>& vectors,
                                   size_t k_min, size_t k_max) {
  return SilhouetteSelectK(PointSet::FromVectors(vectors), k_min, k_max);
}

SilhouetteChoice SilhouetteSelectK(const PointSet& points, size_t k_min,
                                   size_t k_max) {
  if (k_min < 2 || k_min > k_max || k_max + 1 > points.size()) {
    throw Error(ErrorCode::kBadRange,
                "[" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                    "] for " + std::to_string(points.size()) + " vectors");
  }
  const std::vector<double> dist = DistanceMatrix(points);
  Dendrogram tree(points);
  SilhouetteChoice choice;
  for (size_t k = k_min; k <= k_max; ++k) {
    std::vector<int> labels = tree.Cut(k);
    const double score = MeanSilhouette(points, dist, labels);
    choice.scores.emplace_back(k, score);
    if (choice.k == 0 || score > choice.score) {
      choice.k = k;
      choice.score = score;
      choice.labels = std::move(labels);
    }
  }
  return choice;
}

std::vector<Cluster> DensityFilter(const std::vector<Cluster>& clusters,
                                   double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be in [0,1]");
  }
  std::vector<Cluster> kept;
  for (const Cluster& c : clusters) {
    if (c.density > threshold) kept.push_back(c);
  }
  return kept;
}

size_t MedoidIndex(const Cluster& cluster, const PointSet& points,
                   const std::vector<std::string>& texts) {
  const auto& members = cluster.member_indices;
  if (members.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty cluster");
  }
  std::vector<std::vector<double>> unit;
  for (size_t i : members) {
    std::vector<double> v = points.vectors[i];
    const double norm = Norm(v);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    unit.push_back(std::move(v));
  }
  size_t best = 0;
  double best_sum = 0.0;
  for (size_t p = 0; p < members.size(); ++p) {
    const double wp = static_cast<double>(points.Weight(members[p]));
    double sum = (wp - 1.0) * (Norm(unit[p]) > 0.0 ? 1.0 : 0.0);
    for (size_t q = 0; q < members.size(); ++q) {
      if (q == p) continue;
      sum += static_cast<double>(points.Weight(members[q])) *
             Dot(unit[p], unit[q]);
    }
    const std::string& text = texts[members[p]];
    const std::string& best_text = texts[members[best]];
    if (p == 0 || sum > best_sum ||
        (sum == best_sum &&
         (text.size() < best_text.size() ||
          (text.size() == best_text.size() && text < best_text)))) {
      best = p;
      best_sum = sum;
    }
  }
  return members[best];
}

std::string Representative(const Cluster& cluster, const PointSet& points,
                           const std::vector<std::string>& texts) {
  return texts[MedoidIndex(cluster, points, texts)];
}

bool DiversityRule::Matches(std::string_view patient_text) const {
  const std::string normalized = Normalize(patient_text);
  const Tokens tokens = Tokenize(normalized);
  for (const std::string& keyword : condition.any_of) {
    if (ContainsPhrase(tokens, Tokenize(Normalize(keyword)))) return true;
  }
  if (condition.regex) {
    const std::regex pattern(*condition.regex, std::regex::ECMAScript);
    if (std::regex_search(normalized, pattern)) return true;
  }
  return false;
}

std::string ApplyDiversityRules(const CannedResponse& base,
                                std::string_view patient_text,
                                const std::vector<DiversityRule>& rules) {
  for (const DiversityRule& rule : rules) {
    if (rule.base_response_id == base.id && rule.Matches(patient_text)) {
      return rule.variant_text;
    }
  }
  return base.text;
}

const CannedResponse* CannedSet::Find(const std::string& id) const {
  for (const CannedResponse& r : responses) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

void CannedSet::Finalize() {
  for (CannedResponse& r : responses) {
    r.variants.clear();
    for (const DiversityRule& rule : rules) {
      if (rule.base_response_id == r.id) {
        r.variants.push_back({rule.rule_id, rule.variant_text});
      }
    }
  }
  Validate();
}

void CannedSet::Validate() const {
  std::set<std::string> ids;
  for (const CannedResponse& r : responses) {
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate response id " + r.id);
    }
    if (r.text.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty text for " + r.id);
    }
    for (const ResponseVariant& v : r.variants) {
      if (v.text.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "empty variant " + v.rule_id + " for " + r.id);
      }
    }
  }
  std::set<std::pair<std::string, std::string>> rule_keys;
  for (const DiversityRule& rule : rules) {
    if (!ids.count(rule.base_response_id)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "rule " + rule.rule_id + " targets unknown response " +
                      rule.base_response_id);
    }
    if (!rule_keys.emplace(rule.base_response_id, rule.rule_id).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate rule " + rule.rule_id + " for " +
                      rule.base_response_id);
    }
    if (rule.variant_text.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "rule " + rule.rule_id + " has empty variant text");
    }
  }
  if (k_selected < 2) {
    throw Error(ErrorCode::kInvalidArgument, "k_selected must be >= 2");
  }
}

std::string CannedSet::ToJson() const {
  json out;
  out["responses"] = json::array();
  for (const CannedResponse& r : responses) {
    json variants = json::array();
    for (const ResponseVariant& v : r.variants) {
      variants.push_back({{"rule_id", v.rule_id}, {"text", v.text}});
    }
    out["responses"].push_back({{"id", r.id},
                                {"text", r.text},
                                {"cluster_id", r.cluster_id},
                                {"variants", variants}});
  }
  out["rules"] = json::array();
  for (const DiversityRule& rule : rules) out["rules"].push_back(RuleToJson(rule));
  out["k_selected"] = k_selected;
  out["density_threshold"] = density_threshold;
  return out.dump(2) + "\n";
}

CannedSet CannedSet::FromJson(std::string_view text) {
  json in = json::parse(text, nullptr, false);
  if (in.is_discarded() || !in.is_object()) {
    throw Error(ErrorCode::kMalformedRecord, "canned set is not a JSON object");
  }
  CannedSet set;
  try {
    for (const json& r : in.at("responses")) {
      CannedResponse response;
      response.id = r.at("id").get<std::string>();
      response.text = r.at("text").get<std::string>();
      response.cluster_id = r.at("cluster_id").get<int>();
      if (auto v = r.find("variants"); v != r.end()) {
        for (const json& variant : *v) {
          response.variants.push_back({variant.at("rule_id").get<std::string>(),
                                       variant.at("text").get<std::string>()});
        }
      }
      set.responses.push_back(std::move(response));
    }
    if (auto rules = in.find("rules"); rules != in.end()) {
      for (const json& r : *rules) {
        DiversityRule rule;
        rule.rule_id = r.at("rule_id").get<std::string>();
        rule.base_response_id = r.at("base_response_id").get<std::string>();
        const json& condition = r.at("condition");
        if (auto any = condition.find("any_of"); any != condition.end()) {
          rule.condition.any_of = any->get<std::vector<std::string>>();
        }
        if (auto re = condition.find("regex");
            re != condition.end() && re->is_string()) {
          rule.condition.regex = re->get<std::string>();
        }
        rule.variant_text = r.at("variant_text").get<std::string>();
        set.rules.push_back(std::move(rule));
      }
    }
    set.k_selected = in.value("k_selected", 2);
    set.density_threshold = in.value("density_threshold", 0.8);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord,
                std::string("canned set: ") + e.what());
  }
  // Variants are derived from the rules whenever rules are present.
  if (set.rules.empty()) {
    set.Validate();
  } else {
    set.Finalize();
  }
  return set;
}

CannedSet CannedSet::Load(const std::filesystem::path& path) {
  return FromJson(ReadFile(path));
}

std::string CannedSet::Fingerprint() const {
  return medreply::Fingerprint(ToJson());
}

std::vector<RankedCandidate> DedupeTopK(
    const std::vector<RankedCandidate>& candidates, size_t k) {
  std::vector<RankedCandidate> kept;
  std::set<int> clusters;
  for (const RankedCandidate& c : candidates) {
    if (kept.size() == k) break;
    if (clusters.insert(c.cluster_id).second) kept.push_back(c);
  }
  if (kept.size() < k) {
    throw Error(ErrorCode::kInsufficientDiversity,
                "only " + std::to_string(kept.size()) +
                    " distinct clusters for k=" + std::to_string(k));
  }
  return kept;
}

CannedBuild BuildCannedSet(const std::vector<std::string>& doctor_texts,
                           const EmbeddingTable& table, const TfIdfStats& stats,
                           const CannedBuildOptions& options) {
  if (doctor_texts.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "no doctor replies to cluster");
  }
  Clustering clustering = ClusterTexts(doctor_texts, table, stats, options);
  const std::vector<Cluster> clusters =
      ClustersFromLabels(clustering.points, clustering.labels);

  CannedBuild build;
  build.silhouette = clustering.silhouette;
  build.canned.k_selected = static_cast<int>(std::max<size_t>(2, clustering.k));
  build.canned.density_threshold = options.density_threshold;
  std::vector<std::optional<std::string>> cluster_response(clusters.size());
  for (const Cluster& c : clusters) {
    ClusterReport report;
    report.cluster_id = c.id;
    for (size_t i : c.member_indices) {
      report.size += static_cast<size_t>(clustering.points.Weight(i));
    }
    report.density = c.density;
    report.kept = c.density > options.density_threshold;
    report.representative =
        Representative(c, clustering.points, clustering.unique_texts);
    if (report.kept) {
      char id[32];
      std::snprintf(id, sizeof(id), "c%03d", c.id);
      cluster_response[c.id] = id;
      build.canned.responses.push_back(
          {id, report.representative, c.id, {}});
    }
    build.clusters.push_back(std::move(report));
  }
  for (size_t u : clustering.text_to_unique) {
    build.assignment.push_back(cluster_response[clustering.labels[u]]);
  }
  return build;
}

std::vector<MessagePair> LabelPairs(const std::vector<MessagePair>& pairs,
                                    const CannedBuild& build) {
  if (pairs.size() != build.assignment.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(pairs.size()) + " pairs vs " +
                    std::to_string(build.assignment.size()) + " assignments");
  }
  std::vector<MessagePair> labeled = pairs;
  for (size_t i = 0; i < labeled.size(); ++i) {
    labeled[i].doctor_response_id = build.assignment[i];
    labeled[i].feasible = build.assignment[i].has_value();
  }
  return labeled;
}

CannedSet CannedFromLabels(const Dataset& train, const EmbeddingTable& table,
                           const TfIdfStats& stats,
                           const CannedBuildOptions& options) {
  std::vector<std::string> texts;
  std::vector<std::string> text_label;
  for (const MessagePair& p : train.pairs) {
    if (p.feasible && p.raw_doctor_text && !p.raw_doctor_text->empty()) {
      texts.push_back(*p.raw_doctor_text);
      text_label.push_back(*p.doctor_response_id);
    }
  }
  CannedSet set;
  set.density_threshold = options.density_threshold;
  std::map<std::string, std::map<int, int64_t>> votes;
  std::map<std::string, std::map<std::string, int64_t>> label_texts;
  Clustering clustering;
  if (!texts.empty()) {
    clustering = ClusterTexts(texts, table, stats, options);
    for (size_t i = 0; i < texts.size(); ++i) {
      ++votes[text_label[i]][clustering.labels[clustering.text_to_unique[i]]];
      ++label_texts[text_label[i]][texts[i]];
    }
  }
  int next_cluster = static_cast<int>(clustering.k);
  for (const std::string& label : train.label_space) {
    CannedResponse response;
    response.id = label;
    auto v = votes.find(label);
    if (v == votes.end()) {
      response.cluster_id = next_cluster++;
      response.text = label;
    } else {
      int64_t best_votes = -1;
      for (const auto& [cluster, count] : v->second) {
        if (count > best_votes) {
          best_votes = count;
          response.cluster_id = cluster;
        }
      }
      // medoid of this label's own replies
      PointSet points;
      std::vector<std::string> own_texts;
      for (const auto& [text, count] : label_texts[label]) {
        own_texts.push_back(text);
        points.vectors.push_back(
            EmbedSentence(Tokenize(text), table, stats).values);
        points.weights.push_back(count);
      }
      Cluster all;
      all.member_indices.resize(own_texts.size());
      std::iota(all.member_indices.begin(), all.member_indices.end(), 0);
      response.text = Representative(all, points, own_texts);
    }
    set.responses.push_back(std::move(response));
  }
  set.k_selected = static_cast<int>(std::max<size_t>(2, clustering.k));
  set.Validate();
  return set;
}

}  // namespace medreply
