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

#include "medreply/textprep.h"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "medreply/error.h"
#include "medreply/io.h"

namespace medreply {
namespace {

bool IsAsciiAlnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9');
}

bool IsUrl(std::string_view token) {
  if (token.find("://") != std::string_view::npos) return true;
  if (token.size() >= 4) {
    std::string prefix;
    for (size_t i = 0; i < 4; ++i) {
      prefix += static_cast<char>(std::tolower(static_cast<unsigned char>(token[i])));
    }
    if (prefix == "www.") return true;
  }
  return false;
}

bool HasDigit(std::string_view token) {
  return std::any_of(token.begin(), token.end(),
                     [](unsigned char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::pair<std::string, std::string>> ReadTsv(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> rows;
  const auto lines = ReadLines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kMalformedRecord,
                  path.string() + ":" + std::to_string(i + 1) +
                      ": expected two tab-separated columns");
    }
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

}  // namespace

std::string Normalize(std::string_view text) {
  // Apostrophe-like characters are folded to ASCII first, everything else
  // outside ASCII is dropped.
  std::string ascii;
  ascii.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      ascii += static_cast<char>(c);
      continue;
    }
    // U+2019 RIGHT SINGLE QUOTATION MARK
    if (c == 0xE2 && i + 2 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        static_cast<unsigned char>(text[i + 2]) == 0x99) {
      ascii += '\'';
      i += 2;
    }
  }

  std::string out;
  out.reserve(ascii.size());
  size_t pos = 0;
  while (pos < ascii.size()) {
    while (pos < ascii.size() &&
           std::isspace(static_cast<unsigned char>(ascii[pos]))) {
      ++pos;
    }
    size_t end = pos;
    while (end < ascii.size() &&
           !std::isspace(static_cast<unsigned char>(ascii[end]))) {
      ++end;
    }
    if (end == pos) break;
    std::string_view raw(ascii.data() + pos, end - pos);
    pos = end;
    if (IsUrl(raw)) continue;

    std::string cleaned;
    for (size_t i = 0; i < raw.size(); ++i) {
      const unsigned char c = static_cast<unsigned char>(raw[i]);
      if (IsAsciiAlnum(c)) {
        cleaned += static_cast<char>(std::tolower(c));
      } else if (c == '\'' && i > 0 && i + 1 < raw.size() &&
                 IsAsciiAlnum(static_cast<unsigned char>(raw[i - 1])) &&
                 IsAsciiAlnum(static_cast<unsigned char>(raw[i + 1]))) {
        cleaned += '\'';
      } else {
        cleaned += ' ';
      }
    }
    for (const std::string& piece : Tokenize(cleaned)) {
      if (!out.empty()) out += ' ';
      out += piece;
    }
  }
  return out;
}

Tokens Tokenize(std::string_view normalized) {
  Tokens tokens;
  size_t pos = 0;
  while (pos < normalized.size()) {
    while (pos < normalized.size() && normalized[pos] == ' ') ++pos;
    size_t end = normalized.find(' ', pos);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > pos) tokens.emplace_back(normalized.substr(pos, end - pos));
    pos = end;
  }
  return tokens;
}

size_t WordCount(std::string_view text) {
  return Tokenize(Normalize(text)).size();
}

std::string JoinTokens(const Tokens& tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

AbbrevDict::AbbrevDict(const std::map<std::string, std::string>& entries) {
  for (const auto& [raw_key, raw_expansion] : entries) {
    const Tokens key_tokens = Tokenize(Normalize(raw_key));
    if (key_tokens.size() != 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "abbreviation key '" + raw_key + "' must be a single token");
    }
    Tokens expansion = Tokenize(Normalize(raw_expansion));
    if (expansion.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "empty expansion for '" + raw_key + "'");
    }
    entries_[key_tokens.front()] = std::move(expansion);
  }
  for (const auto& [key, expansion] : entries_) {
    for (const std::string& token : expansion) {
      if (entries_.count(token)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "expansion of '" + key + "' contains key '" + token + "'");
      }
    }
  }
}

AbbrevDict AbbrevDict::Load(const std::filesystem::path& path) {
  std::map<std::string, std::string> entries;
  for (auto& [key, expansion] : ReadTsv(path)) {
    entries.emplace(std::move(key), std::move(expansion));
  }
  return AbbrevDict(entries);
}

std::string AbbrevDict::ToTsv() const {
  std::string out;
  for (const auto& [key, expansion] : entries_) {
    out += key + '\t' + JoinTokens(expansion) + '\n';
  }
  return out;
}

const Tokens* AbbrevDict::Find(const std::string& token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

bool AbbrevDict::Contains(const std::string& token) const {
  return entries_.count(token) > 0;
}

SpellLexicon::SpellLexicon(const std::map<std::string, int64_t>& frequency)
    : frequency_(frequency) {
  for (const auto& [word, count] : frequency_) {
    if (count < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "lexicon count for '" + word + "' must be >= 1");
    }
    if (word.empty() || word.find(' ') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "bad lexicon word '" + word + "'");
    }
  }
  Index();
}

void SpellLexicon::Index() {
  by_length_.clear();
  for (const auto& [word, count] : frequency_) {
    if (by_length_.size() <= word.size()) by_length_.resize(word.size() + 1);
    by_length_[word.size()].emplace_back(word, count);
  }
}

SpellLexicon SpellLexicon::Load(const std::filesystem::path& path) {
  std::map<std::string, int64_t> freq;
  for (const auto& [word, count] : ReadTsv(path)) {
    int64_t value = 0;
    try {
      value = std::stoll(count);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedRecord,
                  "bad count for '" + word + "' in " + path.string());
    }
    freq[word] += value;
  }
  return SpellLexicon(freq);
}

std::string SpellLexicon::ToTsv() const {
  std::string out;
  for (const auto& [word, count] : frequency_) {
    out += word + '\t' + std::to_string(count) + '\n';
  }
  return out;
}

SpellLexicon SpellLexicon::FromCorpus(const std::vector<Tokens>& docs,
                                      int64_t min_count) {
  std::map<std::string, int64_t> counts;
  for (const Tokens& doc : docs) {
    for (const std::string& t : doc) {
      if (!HasDigit(t)) ++counts[t];
    }
  }
  std::map<std::string, int64_t> kept;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) kept.emplace(word, count);
  }
  return SpellLexicon(kept);
}

int64_t SpellLexicon::Frequency(const std::string& word) const {
  auto it = frequency_.find(word);
  return it == frequency_.end() ? 0 : it->second;
}

SpellLexicon SpellLexicon::Without(const AbbrevDict& dict) const {
  std::map<std::string, int64_t> kept;
  for (const auto& [word, count] : frequency_) {
    if (!dict.Contains(word)) kept.emplace(word, count);
  }
  return SpellLexicon(kept);
}

int EditDistance(std::string_view a, std::string_view b, int limit) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  if (std::abs(n - m) > limit) return limit + 1;
  std::vector<int> prev(m + 1), cur(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    int row_min = cur[0];
    for (int j = 1; j <= m; ++j) {
      const int substitute = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, substitute});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > limit) return limit + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[m], limit + 1);
}

std::optional<std::string> SpellLexicon::BestCandidate(
    const std::string& token, int max_edit_distance) const {
  const std::string* best = nullptr;  // points into by_length_
  int64_t best_freq = 0;
  int best_dist = 0;
  const size_t lo = token.size() > static_cast<size_t>(max_edit_distance)
                        ? token.size() - max_edit_distance
                        : 0;
  const size_t hi = token.size() + max_edit_distance;
  for (size_t len = lo; len <= hi && len < by_length_.size(); ++len) {
    for (const auto& [word, freq] : by_length_[len]) {
      const int dist = EditDistance(token, word, max_edit_distance);
      if (dist > max_edit_distance) continue;
      const bool better =
          best == nullptr || freq > best_freq ||
          (freq == best_freq &&
           (dist < best_dist || (dist == best_dist && word < *best)));
      if (better) {
        best = &word;
        best_freq = freq;
        best_dist = dist;
      }
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

Tokens ExpandAbbreviations(const Tokens& tokens, const AbbrevDict& dict) {
  Tokens out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) {
    if (const Tokens* expansion = dict.Find(t)) {
      out.insert(out.end(), expansion->begin(), expansion->end());
    } else {
      out.push_back(t);
    }
  }
  return out;
}

Tokens CorrectSpelling(const Tokens& tokens, const SpellLexicon& lexicon,
                       int max_edit_distance) {
  Tokens out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) {
    if (lexicon.Contains(t) || HasDigit(t)) {
      out.push_back(t);
      continue;
    }
    auto candidate = lexicon.BestCandidate(t, max_edit_distance);
    out.push_back(candidate ? *candidate : t);
  }
  return out;
}

void CleanConfig::Validate() const {
  if (max_words < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_words must be >= 1");
  }
  if (max_edit_distance < 1 || max_edit_distance > 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "max_edit_distance must be 1 or 2");
  }
}

TextCleaner::TextCleaner(CleanConfig config, AbbrevDict dict,
                         SpellLexicon lexicon)
    : config_(config),
      dict_(std::move(dict)),
      lexicon_(lexicon.Without(dict_)) {
  config_.Validate();
}

Tokens TextCleaner::CleanTokens(std::string_view text) const {
  Tokens tokens = Tokenize(Normalize(text));
  if (config_.expand_abbrev) tokens = ExpandAbbreviations(tokens, dict_);
  if (config_.spell_correct) {
    tokens = CorrectSpelling(tokens, lexicon_, config_.max_edit_distance);
  }
  return tokens;
}

std::string TextCleaner::CleanText(std::string_view text) const {
  return JoinTokens(CleanTokens(text));
}

bool TextCleaner::TooLong(std::string_view text) const {
  return WordCount(text) > static_cast<size_t>(config_.max_words);
}

std::optional<MessagePair> TextCleaner::CleanPair(
    const MessagePair& pair) const {
  if (TooLong(pair.patient_text)) return std::nullopt;
  if (pair.raw_doctor_text && TooLong(*pair.raw_doctor_text)) {
    return std::nullopt;
  }
  MessagePair cleaned = pair;
  cleaned.patient_text = CleanText(pair.patient_text);
  if (pair.raw_doctor_text) {
    cleaned.raw_doctor_text = CleanText(*pair.raw_doctor_text);
  }
  // a pair whose text was all punctuation/URLs has nothing left to learn from
  if (cleaned.patient_text.empty()) return std::nullopt;
  return cleaned;
}

std::optional<MessagePair> CleanPair(const MessagePair& pair,
                                     const CleanConfig& config,
                                     const AbbrevDict& dict,
                                     const SpellLexicon& lexicon) {
  return TextCleaner(config, dict, lexicon).CleanPair(pair);
}

}  // namespace medreply
