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

#include "medreply/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "medreply/error.h"

namespace medreply {
namespace {

void CheckLengths(size_t a, size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(a) + " vs " + std::to_string(b));
  }
}

ClassMetrics MakeClassMetrics(size_t tp, size_t fp, size_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

}  // namespace

double PrecisionAtK(const std::vector<std::vector<std::string>>& rankings,
                    const std::vector<std::string>& truths, size_t k) {
  CheckLengths(rankings.size(), truths.size());
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (rankings.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < rankings.size(); ++i) {
    const auto& ranking = rankings[i];
    const size_t limit = std::min(k, ranking.size());
    if (std::find(ranking.begin(), ranking.begin() + limit, truths[i]) !=
        ranking.begin() + limit) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double PrecisionAtKFromRanks(std::span<const size_t> ranks, size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                  [k](size_t r) { return r >= 1 && r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double MeanReciprocalRank(std::span<const size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorCode::kEmptyInput, "no ranks");
  double sum = 0.0;
  for (size_t r : ranks) {
    if (r < 1) throw Error(ErrorCode::kInvalidArgument, "rank must be >= 1");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

BinaryReport MakeBinaryReport(std::span<const double> scores,
                              std::span<const int> labels, double threshold) {
  CheckLengths(scores.size(), labels.size());
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++tp;
    if (predicted && !actual) ++fp;
    if (!predicted && !actual) ++tn;
    if (!predicted && actual) ++fn;
  }
  BinaryReport report;
  report.n = scores.size();
  report.accuracy = report.n == 0 ? 0.0
                                  : static_cast<double>(tp + tn) /
                                        static_cast<double>(report.n);
  report.feasible = MakeClassMetrics(tp, fp, fn);
  report.infeasible = MakeClassMetrics(tn, fn, fp);
  return report;
}

double AucRoc(std::span<const double> scores, std::span<const int> labels) {
  CheckLengths(scores.size(), labels.size());
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0.0, n_neg = 0.0;
  for (int label : labels) (label != 0 ? n_pos : n_neg) += 1.0;
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw Error(ErrorCode::kSingleClass, "AUC needs both classes");
  }
  // For each tie group: positives beat every lower negative and split ties.
  double correct = 0.0;
  double negatives_below = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    double group_pos = 0.0, group_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? group_pos : group_neg) += 1.0;
      ++j;
    }
    correct += group_pos * negatives_below + 0.5 * group_pos * group_neg;
    negatives_below += group_neg;
    i = j;
  }
  return correct / (n_pos * n_neg);
}

std::vector<double> DefaultThresholdGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

SweepPoint ClassifyAtThreshold(std::span<const double> trigger_scores,
                               std::span<const int> labels,
                               std::span<const size_t> truth_ranks,
                               double threshold, size_t top) {
  CheckLengths(trigger_scores.size(), labels.size());
  CheckLengths(trigger_scores.size(), truth_ranks.size());
  SweepPoint point;
  point.threshold = threshold;
  const size_t n = trigger_scores.size();
  if (n == 0) return point;
  size_t tn = 0, fp = 0, fn = 0, correct = 0, miss = 0;
  for (size_t i = 0; i < n; ++i) {
    const bool triggered = trigger_scores[i] >= threshold;
    if (labels[i] == 0) {
      (triggered ? fp : tn)++;
    } else if (!triggered) {
      ++fn;
    } else if (truth_ranks[i] >= 1 && truth_ranks[i] <= top) {
      ++correct;
    } else {
      ++miss;
    }
  }
  const double total = static_cast<double>(n);
  point.tn_rate = tn / total;
  point.fp_rate = fp / total;
  point.fn_rate = fn / total;
  point.correct_top3_rate = correct / total;
  point.miss_rate = miss / total;
  return point;
}

std::vector<SweepPoint> ThresholdSweep(std::span<const double> trigger_scores,
                                       std::span<const int> labels,
                                       std::span<const size_t> truth_ranks,
                                       std::span<const double> thresholds,
                                       size_t top) {
  std::vector<SweepPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    points.push_back(
        ClassifyAtThreshold(trigger_scores, labels, truth_ranks, t, top));
  }
  return points;
}

std::vector<SweepPoint> ThresholdSweep(
    std::span<const double> trigger_scores, std::span<const int> labels,
    const std::vector<std::vector<std::string>>& rankings,
    const std::vector<std::string>& truths,
    std::span<const double> thresholds) {
  CheckLengths(rankings.size(), truths.size());
  CheckLengths(rankings.size(), labels.size());
  std::vector<size_t> ranks(rankings.size(), 0);
  for (size_t i = 0; i < rankings.size(); ++i) {
    auto it = std::find(rankings[i].begin(), rankings[i].end(), truths[i]);
    if (it != rankings[i].end()) ranks[i] = (it - rankings[i].begin()) + 1;
  }
  return ThresholdSweep(trigger_scores, labels, ranks, thresholds, 3);
}

MeanSd Summarize(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace medreply
