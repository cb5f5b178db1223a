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

#include "medreply/embed.h"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "json.hpp"
#include "medreply/error.h"
#include "medreply/io.h"

namespace medreply {
namespace {

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    if (end > pos) fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

bool ParseInt(std::string_view s, int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool ParseDouble(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

EmbeddingTable::EmbeddingTable(size_t dim) : dim_(dim) {
  if (dim_ < 1) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
}

EmbeddingTable EmbeddingTable::Parse(std::string_view text) {
  std::vector<std::vector<std::string_view>> rows;
  std::vector<size_t> line_numbers;
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    start = end + 1;
    auto fields = SplitFields(line);
    if (fields.empty()) continue;
    rows.push_back(std::move(fields));
    line_numbers.push_back(line_no);
  }

  size_t first = 0;
  int64_t header_dim = 0;
  if (!rows.empty() && rows[0].size() == 2) {
    int64_t vocab = 0;
    if (ParseInt(rows[0][0], vocab) && ParseInt(rows[0][1], header_dim)) {
      first = 1;
    } else {
      header_dim = 0;
    }
  }
  if (first == rows.size()) {
    return EmbeddingTable(header_dim > 0 ? header_dim : 1);
  }
  const size_t dim =
      header_dim > 0 ? static_cast<size_t>(header_dim) : rows[first].size() - 1;
  if (dim < 1) {
    throw Error(ErrorCode::kMalformedVector,
                "line " + std::to_string(line_numbers[first]) + ": no values");
  }
  EmbeddingTable table(dim);
  std::vector<double> values(dim);
  for (size_t r = first; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    if (fields.size() - 1 != dim) {
      throw Error(ErrorCode::kDimMismatch,
                  "line " + std::to_string(line_numbers[r]) + ": expected " +
                      std::to_string(dim) + " values, got " +
                      std::to_string(fields.size() - 1));
    }
    for (size_t d = 0; d < dim; ++d) {
      if (!ParseDouble(fields[d + 1], values[d])) {
        throw Error(ErrorCode::kMalformedVector,
                    "line " + std::to_string(line_numbers[r]) +
                        ": bad value '" + std::string(fields[d + 1]) + "'");
      }
    }
    table.Add(std::string(fields[0]), values);
  }
  return table;
}

EmbeddingTable EmbeddingTable::Load(const std::filesystem::path& path) {
  return Parse(ReadFile(path));
}

std::string EmbeddingTable::ToText() const {
  std::string out =
      std::to_string(tokens_.size()) + " " + std::to_string(dim_) + "\n";
  for (size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    for (size_t d = 0; d < dim_; ++d) {
      out += ' ';
      out += FormatDouble(data_[i * dim_ + d]);
    }
    out += '\n';
  }
  return out;
}

bool EmbeddingTable::Add(const std::string& token,
                         std::span<const double> vector) {
  if (vector.size() != dim_) {
    throw Error(ErrorCode::kDimMismatch,
                "vector for '" + token + "' has " +
                    std::to_string(vector.size()) + " values");
  }
  auto [it, inserted] = index_.try_emplace(token, tokens_.size());
  if (!inserted) return false;
  tokens_.push_back(token);
  data_.insert(data_.end(), vector.begin(), vector.end());
  return true;
}

const double* EmbeddingTable::Find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? nullptr : data_.data() + it->second * dim_;
}

TfIdfStats::TfIdfStats(int64_t n_docs, std::map<std::string, int64_t> doc_freq)
    : n_docs_(n_docs), doc_freq_(std::move(doc_freq)) {
  for (const auto& [token, df] : doc_freq_) {
    if (df < 1 || df > n_docs_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "document frequency of '" + token + "' out of range");
    }
  }
}

int64_t TfIdfStats::DocFreq(const std::string& token) const {
  auto it = doc_freq_.find(token);
  return it == doc_freq_.end() ? 0 : it->second;
}

double TfIdfStats::Idf(const std::string& token) const {
  return std::log(static_cast<double>(1 + n_docs_) /
                  static_cast<double>(1 + DocFreq(token))) +
         1.0;
}

std::string TfIdfStats::ToJson() const {
  nlohmann::json j = {{"n_docs", n_docs_}, {"doc_freq", doc_freq_}};
  return j.dump();
}

TfIdfStats TfIdfStats::FromJson(std::string_view text) {
  auto j = nlohmann::json::parse(text);
  return TfIdfStats(j.at("n_docs").get<int64_t>(),
                    j.at("doc_freq").get<std::map<std::string, int64_t>>());
}

TfIdfStats FitTfidf(const std::vector<Tokens>& docs) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyCorpus, "no documents");
  std::map<std::string, int64_t> df;
  for (const Tokens& doc : docs) {
    for (const auto& [token, count] : CountTokens(doc)) ++df[token];
  }
  return TfIdfStats(static_cast<int64_t>(docs.size()), std::move(df));
}

double TfidfWeight(const std::string& token, int64_t count_in_doc,
                   const TfIdfStats& stats) {
  return static_cast<double>(count_in_doc) * stats.Idf(token);
}

std::vector<std::pair<std::string, int64_t>> CountTokens(const Tokens& tokens) {
  std::vector<std::pair<std::string, int64_t>> counts;
  std::unordered_map<std::string_view, size_t> position;
  for (const std::string& t : tokens) {
    auto [it, inserted] = position.try_emplace(t, counts.size());
    if (inserted) {
      counts.emplace_back(t, 1);
    } else {
      ++counts[it->second].second;
    }
  }
  return counts;
}

SentenceVector EmbedSentence(const Tokens& tokens, const EmbeddingTable& table,
                             const TfIdfStats& stats) {
  SentenceVector out;
  out.values.assign(table.dim(), 0.0);
  if (tokens.empty()) return out;
  double total_weight = 0.0;
  size_t covered = 0;
  for (const auto& [token, count] : CountTokens(tokens)) {
    const double* row = table.Find(token);
    if (row == nullptr) continue;
    covered += static_cast<size_t>(count);
    const double w = TfidfWeight(token, count, stats);
    total_weight += w;
    for (size_t d = 0; d < table.dim(); ++d) out.values[d] += w * row[d];
  }
  if (covered == 0) return out;
  for (double& v : out.values) v /= total_weight;
  out.coverage = static_cast<double>(covered) / static_cast<double>(tokens.size());
  return out;
}

double Dot(std::span<const double> u, std::span<const double> v) {
  double sum = 0.0;
  for (size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  return sum;
}

double Norm(std::span<const double> u) { return std::sqrt(Dot(u, u)); }

double Cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  const double nu = Norm(u);
  const double nv = Norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const double c = Dot(u, v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace medreply
