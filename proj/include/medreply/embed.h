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

#ifndef MEDREPLY_EMBED_H_
#define MEDREPLY_EMBED_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medreply/textprep.h"

namespace medreply {

// Word vectors in one contiguous row-major buffer.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(size_t dim = 1);

  // word2vec text format with an optional "V D" header line. Duplicate tokens
  // keep their first row.
  static EmbeddingTable Parse(std::string_view text);
  static EmbeddingTable Load(const std::filesystem::path& path);
  std::string ToText() const;

  // Returns false (and leaves the table unchanged) if the token exists.
  bool Add(const std::string& token, std::span<const double> vector);

  // Null when the token has no row.
  const double* Find(const std::string& token) const;
  bool Contains(const std::string& token) const { return Find(token); }

  size_t dim() const { return dim_; }
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<double> data_;
  std::unordered_map<std::string, size_t> index_;
};

class TfIdfStats {
 public:
  TfIdfStats() = default;
  TfIdfStats(int64_t n_docs, std::map<std::string, int64_t> doc_freq);

  int64_t n_docs() const { return n_docs_; }
  int64_t DocFreq(const std::string& token) const;
  const std::map<std::string, int64_t>& doc_freq() const { return doc_freq_; }
  bool InVocab(const std::string& token) const {
    return doc_freq_.count(token) > 0;
  }

  // ln((1 + N) / (1 + df)) + 1, with df = 0 for unseen tokens.
  double Idf(const std::string& token) const;

  std::string ToJson() const;
  static TfIdfStats FromJson(std::string_view text);

 private:
  int64_t n_docs_ = 0;
  std::map<std::string, int64_t> doc_freq_;
};

// One document per message. Throws kEmptyCorpus for no documents.
TfIdfStats FitTfidf(const std::vector<Tokens>& docs);

double TfidfWeight(const std::string& token, int64_t count_in_doc,
                   const TfIdfStats& stats);

struct SentenceVector {
  std::vector<double> values;
  double coverage = 0.0;
};

// Distinct tokens with their in-sentence counts, in first-seen order.
std::vector<std::pair<std::string, int64_t>> CountTokens(const Tokens& tokens);

// TF-IDF weighted mean of the in-table token vectors; tokens without a row
// are skipped. Empty or fully out-of-table input gives the zero vector.
SentenceVector EmbedSentence(const Tokens& tokens, const EmbeddingTable& table,
                             const TfIdfStats& stats);

// Zero when either input has zero norm. Throws kLengthMismatch.
double Cosine(std::span<const double> u, std::span<const double> v);

double Dot(std::span<const double> u, std::span<const double> v);
double Norm(std::span<const double> u);

}  // namespace medreply

#endif  // MEDREPLY_EMBED_H_
