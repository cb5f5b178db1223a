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

#ifndef MEDREPLY_EVAL_H_
#define MEDREPLY_EVAL_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace medreply {

// Fraction of instances whose truth is among the first k ids of its ranking.
// Throws kLengthMismatch or kInvalidArgument (k == 0).
double PrecisionAtK(const std::vector<std::vector<std::string>>& rankings,
                    const std::vector<std::string>& truths, size_t k);

// Same metric from 1-based truth ranks; rank 0 means "not ranked".
double PrecisionAtKFromRanks(std::span<const size_t> ranks, size_t k);

// Mean of 1/rank. Throws kEmptyInput for no ranks, kInvalidArgument for a
// rank below 1.
double MeanReciprocalRank(std::span<const size_t> ranks);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;
};

struct BinaryReport {
  double accuracy = 0.0;
  ClassMetrics feasible;    // label 1
  ClassMetrics infeasible;  // label 0
  size_t n = 0;
};

// Predicts feasible iff score >= threshold. A class never predicted gets
// precision 0.
BinaryReport MakeBinaryReport(std::span<const double> scores,
                              std::span<const int> labels, double threshold);

// Pairwise rank statistic with ties counted as one half. Throws kSingleClass.
double AucRoc(std::span<const double> scores, std::span<const int> labels);

struct SweepPoint {
  double threshold = 0.0;
  double tn_rate = 0.0;
  double correct_top3_rate = 0.0;
  double fp_rate = 0.0;
  double fn_rate = 0.0;
  double miss_rate = 0.0;

  // Correct outcomes: filtered infeasible plus triggered with truth in top 3.
  double PipelinePrecision() const { return tn_rate + correct_top3_rate; }
};

// Thresholds 0.00, 0.05, ..., 1.00.
std::vector<double> DefaultThresholdGrid();

inline constexpr double kDefaultThreshold = 0.5;

// `truth_ranks[i]` is the 1-based rank of the true response for feasible
// instances (0 if unranked) and is ignored for infeasible ones.
SweepPoint ClassifyAtThreshold(std::span<const double> trigger_scores,
                               std::span<const int> labels,
                               std::span<const size_t> truth_ranks,
                               double threshold, size_t top = 3);

std::vector<SweepPoint> ThresholdSweep(std::span<const double> trigger_scores,
                                       std::span<const int> labels,
                                       std::span<const size_t> truth_ranks,
                                       std::span<const double> thresholds,
                                       size_t top = 3);

// Ranking-based form: truths hold the response id for feasible instances.
std::vector<SweepPoint> ThresholdSweep(
    std::span<const double> trigger_scores, std::span<const int> labels,
    const std::vector<std::vector<std::string>>& rankings,
    const std::vector<std::string>& truths,
    std::span<const double> thresholds);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for fewer than two values
};

MeanSd Summarize(std::span<const double> values);

}  // namespace medreply

#endif  // MEDREPLY_EVAL_H_
