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

#ifndef MEDREPLY_CANNED_H_
#define MEDREPLY_CANNED_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medreply/corpus.h"
#include "medreply/embed.h"

namespace medreply {

struct Cluster {
  int id = 0;
  std::vector<size_t> member_indices;
  std::vector<double> centroid;
  double density = 1.0;
};

// A point set for clustering. `weights` are multiplicities of identical
// points collapsed into one row; all ones when empty.
struct PointSet {
  std::vector<std::vector<double>> vectors;
  std::vector<int64_t> weights;

  static PointSet FromVectors(const std::vector<SentenceVector>& vectors);
  static PointSet FromVectors(std::vector<std::vector<double>> vectors);
  size_t size() const { return vectors.size(); }
  int64_t Weight(size_t i) const { return weights.empty() ? 1 : weights[i]; }
};

// Full average-linkage merge history under cosine distance (1 - cosine).
// Each step merges the closest pair of active clusters; equal distances go
// to the pair with the smallest (lowest member index, lowest member index).
class Dendrogram {
 public:
  struct Merge {
    size_t left = 0;   // lowest member index of the surviving cluster
    size_t right = 0;  // lowest member index of the absorbed cluster
    double distance = 0.0;
  };

  explicit Dendrogram(const PointSet& points);

  // Cluster label (0..k-1, ordered by lowest member index) for each point.
  std::vector<int> Cut(size_t k) const;

  const std::vector<Merge>& merges() const { return merges_; }
  size_t size() const { return n_; }

 private:
  size_t n_ = 0;
  std::vector<Merge> merges_;
};

// Cosine distance matrix, row-major n x n.
std::vector<double> DistanceMatrix(const PointSet& points);

double ClusterDensity(const PointSet& points, std::span<const size_t> members);

std::vector<Cluster> ClustersFromLabels(const PointSet& points,
                                        const std::vector<int>& labels);

// Throws kBadK unless 2 <= k <= |vectors|.
std::vector<Cluster> AgglomerativeCluster(
    const std::vector<SentenceVector>& vectors, size_t k);
std::vector<Cluster> AgglomerativeCluster(const PointSet& points, size_t k);

// Mean silhouette width of a labelling; singleton clusters score 0.
double MeanSilhouette(const PointSet& points, const std::vector<double>& dist,
                      const std::vector<int>& labels);

struct SilhouetteChoice {
  size_t k = 0;
  double score = 0.0;
  std::vector<std::pair<size_t, double>> scores;  // every k evaluated
  std::vector<int> labels;                         // cut at the chosen k
};

// Throws kBadRange unless 2 <= k_min <= k_max <= |vectors| - 1.
SilhouetteChoice SilhouetteSelectK(const std::vector<SentenceVector>& vectors,
                                   size_t k_min, size_t k_max);
SilhouetteChoice SilhouetteSelectK(const PointSet& points, size_t k_min,
                                   size_t k_max);

// Keeps clusters with density strictly above `threshold`.
std::vector<Cluster> DensityFilter(const std::vector<Cluster>& clusters,
                                   double threshold);

// Medoid member index: largest summed cosine to the other members, then
// shortest text, then lexicographically smallest.
size_t MedoidIndex(const Cluster& cluster, const PointSet& points,
                   const std::vector<std::string>& texts);
std::string Representative(const Cluster& cluster, const PointSet& points,
                           const std::vector<std::string>& texts);

struct RuleCondition {
  std::vector<std::string> any_of;
  std::optional<std::string> regex;
};

struct DiversityRule {
  std::string rule_id;
  std::string base_response_id;
  RuleCondition condition;
  std::string variant_text;

  // Keywords match as whole-token phrases of the normalized patient text;
  // the regex is searched in the normalized text.
  bool Matches(std::string_view patient_text) const;
};

struct ResponseVariant {
  std::string rule_id;
  std::string text;
};

struct CannedResponse {
  std::string id;
  std::string text;
  int cluster_id = 0;
  std::vector<ResponseVariant> variants;
};

std::string ApplyDiversityRules(const CannedResponse& base,
                                std::string_view patient_text,
                                const std::vector<DiversityRule>& rules);

struct CannedSet {
  std::vector<CannedResponse> responses;
  std::vector<DiversityRule> rules;
  int k_selected = 2;
  double density_threshold = 0.8;

  const CannedResponse* Find(const std::string& id) const;
  // Fills each response's variants from the rules and checks invariants.
  void Finalize();
  void Validate() const;

  std::string ToJson() const;
  static CannedSet FromJson(std::string_view text);
  static CannedSet Load(const std::filesystem::path& path);
  std::string Fingerprint() const;
};

struct RankedCandidate {
  std::string response_id;
  int cluster_id = 0;
  double score = 0.0;
};

// Greedy scan keeping the first candidate of each cluster until k are kept.
// Throws kInsufficientDiversity when fewer than k clusters are present.
std::vector<RankedCandidate> DedupeTopK(
    const std::vector<RankedCandidate>& candidates, size_t k);

struct CannedBuildOptions {
  size_t k_min = 2;
  size_t k_max = 200;
  double density_threshold = 0.8;
};

struct ClusterReport {
  int cluster_id = 0;
  size_t size = 0;
  double density = 0.0;
  bool kept = false;
  std::string representative;
};

struct CannedBuild {
  CannedSet canned;
  // Response id per input text; empty when its cluster was filtered out.
  std::vector<std::optional<std::string>> assignment;
  std::vector<ClusterReport> clusters;
  double silhouette = 0.0;
};

// Clusters cleaned doctor replies, keeps dense clusters and names them
// c000, c001, ... in cluster order.
CannedBuild BuildCannedSet(const std::vector<std::string>& doctor_texts,
                           const EmbeddingTable& table, const TfIdfStats& stats,
                           const CannedBuildOptions& options);

// Labels feasible pairs from a build: replies in kept clusters get their
// cluster's response id, the rest become infeasible.
std::vector<MessagePair> LabelPairs(const std::vector<MessagePair>& pairs,
                                    const CannedBuild& build);

// Canned set for an already-labelled dataset: one response per label, with
// cluster ids taken from clustering the labels' doctor replies.
CannedSet CannedFromLabels(const Dataset& train, const EmbeddingTable& table,
                           const TfIdfStats& stats,
                           const CannedBuildOptions& options);

}  // namespace medreply

#endif  // MEDREPLY_CANNED_H_
