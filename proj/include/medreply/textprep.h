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

#ifndef MEDREPLY_TEXTPREP_H_
#define MEDREPLY_TEXTPREP_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medreply/corpus.h"

namespace medreply {

using Tokens = std::vector<std::string>;

// Lowercases, drops URLs, control characters and non-ASCII bytes, turns
// punctuation into spaces and collapses whitespace. Apostrophes survive only
// between two alphanumerics ("don't").
std::string Normalize(std::string_view text);

// Whitespace tokenization of already-normalized text.
Tokens Tokenize(std::string_view normalized);

// Token count of `text` after normalization.
size_t WordCount(std::string_view text);

std::string JoinTokens(const Tokens& tokens);

class AbbrevDict {
 public:
  AbbrevDict() = default;
  // Keys and expansions are normalized on insertion. Throws kInvalidArgument
  // when the key has internal whitespace or the map would become cyclic.
  explicit AbbrevDict(const std::map<std::string, std::string>& entries);

  // Two-column TSV: abbrev TAB expansion.
  static AbbrevDict Load(const std::filesystem::path& path);
  std::string ToTsv() const;

  const Tokens* Find(const std::string& token) const;
  bool Contains(const std::string& token) const;
  size_t size() const { return entries_.size(); }
  const std::map<std::string, Tokens>& entries() const { return entries_; }

 private:
  std::map<std::string, Tokens> entries_;
};

class SpellLexicon {
 public:
  SpellLexicon() = default;
  // Throws kInvalidArgument for counts < 1.
  explicit SpellLexicon(const std::map<std::string, int64_t>& frequency);

  // Two-column TSV: word TAB count.
  static SpellLexicon Load(const std::filesystem::path& path);
  std::string ToTsv() const;

  // Every token seen at least `min_count` times becomes a valid word.
  // Tokens with digits are excluded; they never need correcting.
  static SpellLexicon FromCorpus(const std::vector<Tokens>& docs,
                                 int64_t min_count);

  bool Contains(const std::string& word) const {
    return frequency_.count(word) > 0;
  }
  int64_t Frequency(const std::string& word) const;
  size_t size() const { return frequency_.size(); }
  const std::map<std::string, int64_t>& frequency() const {
    return frequency_;
  }

  // Copy without the given words.
  SpellLexicon Without(const AbbrevDict& dict) const;

  // Best in-lexicon replacement within `max_edit_distance`, if any.
  std::optional<std::string> BestCandidate(const std::string& token,
                                           int max_edit_distance) const;

 private:
  std::map<std::string, int64_t> frequency_;
  // (word, count) bucketed by length for pruning; holds copies so the
  // lexicon stays valid when copied
  std::vector<std::vector<std::pair<std::string, int64_t>>> by_length_;
  void Index();
};

// Levenshtein distance with unit costs; returns limit + 1 as soon as the
// distance is known to exceed `limit`.
int EditDistance(std::string_view a, std::string_view b, int limit);

Tokens ExpandAbbreviations(const Tokens& tokens, const AbbrevDict& dict);

Tokens CorrectSpelling(const Tokens& tokens, const SpellLexicon& lexicon,
                       int max_edit_distance);

struct CleanConfig {
  int max_words = 200;
  bool expand_abbrev = true;
  bool spell_correct = true;
  int max_edit_distance = 2;

  void Validate() const;
};

// Bundles the cleaning resources. The lexicon copy excludes abbreviation keys
// so a correction can never produce something the expander would rewrite,
// which keeps cleaning idempotent.
class TextCleaner {
 public:
  TextCleaner(CleanConfig config, AbbrevDict dict, SpellLexicon lexicon);

  // normalize -> expand -> correct. No length gate.
  Tokens CleanTokens(std::string_view text) const;
  std::string CleanText(std::string_view text) const;

  // Drops the pair when either side exceeds max_words.
  std::optional<MessagePair> CleanPair(const MessagePair& pair) const;

  bool TooLong(std::string_view text) const;

  const CleanConfig& config() const { return config_; }
  const AbbrevDict& dict() const { return dict_; }
  const SpellLexicon& lexicon() const { return lexicon_; }

 private:
  CleanConfig config_;
  AbbrevDict dict_;
  SpellLexicon lexicon_;
};

std::optional<MessagePair> CleanPair(const MessagePair& pair,
                                     const CleanConfig& config,
                                     const AbbrevDict& dict,
                                     const SpellLexicon& lexicon);

}  // namespace medreply

#endif  // MEDREPLY_TEXTPREP_H_
