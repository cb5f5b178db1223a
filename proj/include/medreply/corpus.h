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

#ifndef MEDREPLY_CORPUS_H_
#define MEDREPLY_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace medreply {

enum class Sender { kPatient, kDoctor };

struct ChatMessage {
  std::string chat_id;
  Sender sender = Sender::kPatient;
  int64_t turn_index = 0;
  std::string text;
  size_t word_count = 0;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct Conversation {
  std::string chat_id;
  std::vector<ChatMessage> messages;
  size_t n_turns = 0;
  size_t n_messages = 0;
};

// Builds a conversation from messages already sorted by turn index and
// fills in the derived counts.
Conversation MakeConversation(std::string chat_id,
                              std::vector<ChatMessage> messages);

struct MessagePair {
  std::string patient_text;
  std::optional<std::string> doctor_response_id;
  bool feasible = false;
  std::optional<std::string> source_chat_id;
  std::optional<std::string> raw_doctor_text;

  friend bool operator==(const MessagePair&, const MessagePair&) = default;
};

inline constexpr std::string_view kInfeasibleStratum = "<infeasible>";
inline constexpr std::string_view kRareStratum = "<rare>";

struct Dataset {
  std::vector<MessagePair> pairs;
  std::set<std::string> label_space;
  double infeasible_fraction = 0.0;

  // Derives label_space and infeasible_fraction from the pairs. Throws
  // kMalformedRecord when a pair breaks the feasible <=> label rule.
  static Dataset FromPairs(std::vector<MessagePair> pairs);

  Dataset Subset(const std::vector<size_t>& indices) const;
  size_t size() const { return pairs.size(); }
};

// Chat JSONL: {"chat_id", "sender": "patient"|"doctor", "turn", "text"}.
std::vector<Conversation> ParseChats(std::string_view jsonl);
std::vector<Conversation> LoadChats(const std::filesystem::path& path);
std::string SerializeChats(const std::vector<Conversation>& conversations);

// Labeled-pairs JSONL: {"patient_text", "response_id", "feasible"} plus the
// optional extension fields "raw_doctor_text" and "source_chat_id". Feasible
// records without a response_id are accepted when they carry raw_doctor_text
// (pairing output awaiting labels); Dataset::FromPairs still rejects them.
std::vector<MessagePair> ParsePairs(std::string_view jsonl);
std::vector<MessagePair> LoadPairs(const std::filesystem::path& path);
std::string SerializePairs(const std::vector<MessagePair>& pairs);

inline constexpr int kDefaultMaxLookback = 6;

// Pairs every doctor message with the closest preceding block of
// consecutive patient messages inside a window of `max_lookback` messages.
std::vector<MessagePair> PairMessages(const Conversation& conv,
                                      int max_lookback = kDefaultMaxLookback);

struct FoldSplit {
  std::vector<size_t> train;
  std::vector<size_t> validation;
  std::vector<size_t> test;
};

std::string StratumKey(const MessagePair& pair);

std::vector<FoldSplit> StratifiedKFold(const Dataset& dataset, int k,
                                       double val_fraction, uint64_t seed);

}  // namespace medreply

#endif  // MEDREPLY_CORPUS_H_
