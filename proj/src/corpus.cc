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

#include "medreply/corpus.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "json.hpp"
#include "medreply/error.h"
#include "medreply/io.h"
#include "medreply/random.h"
#include "medreply/textprep.h"

namespace medreply {
namespace {

using json = nlohmann::json;

std::string_view SenderName(Sender sender) {
  return sender == Sender::kPatient ? "patient" : "doctor";
}

[[noreturn]] void Malformed(size_t line_no, const std::string& what) {
  throw Error(ErrorCode::kMalformedRecord,
              "line " + std::to_string(line_no) + ": " + what);
}

json ParseLine(std::string_view line, size_t line_no) {
  json record = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (record.is_discarded() || !record.is_object()) {
    Malformed(line_no, "not a JSON object");
  }
  return record;
}

template <typename Fn>
void ForEachLine(std::string_view jsonl, Fn&& fn) {
  size_t line_no = 0;
  size_t start = 0;
  while (start < jsonl.size()) {
    size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      fn(line, line_no);
    }
    start = end + 1;
  }
}

}  // namespace

Conversation MakeConversation(std::string chat_id,
                              std::vector<ChatMessage> messages) {
  Conversation conv;
  conv.chat_id = std::move(chat_id);
  conv.messages = std::move(messages);
  conv.n_messages = conv.messages.size();
  conv.n_turns = conv.messages.empty() ? 0 : 1;
  for (size_t i = 1; i < conv.messages.size(); ++i) {
    if (conv.messages[i].sender != conv.messages[i - 1].sender) ++conv.n_turns;
  }
  return conv;
}

Dataset Dataset::FromPairs(std::vector<MessagePair> pairs) {
  Dataset ds;
  size_t infeasible = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const MessagePair& p = pairs[i];
    if (p.feasible != p.doctor_response_id.has_value()) {
      throw Error(ErrorCode::kMalformedRecord,
                  "pair " + std::to_string(i) +
                      ": feasible flag disagrees with response id");
    }
    if (p.feasible) {
      ds.label_space.insert(*p.doctor_response_id);
    } else {
      ++infeasible;
    }
  }
  ds.infeasible_fraction =
      pairs.empty() ? 0.0
                    : static_cast<double>(infeasible) /
                          static_cast<double>(pairs.size());
  ds.pairs = std::move(pairs);
  return ds;
}

Dataset Dataset::Subset(const std::vector<size_t>& indices) const {
  std::vector<MessagePair> subset;
  subset.reserve(indices.size());
  for (size_t i : indices) subset.push_back(pairs.at(i));
  return FromPairs(std::move(subset));
}

std::vector<Conversation> ParseChats(std::string_view jsonl) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<ChatMessage>> by_chat;
  ForEachLine(jsonl, [&](std::string_view line, size_t line_no) {
    json record = ParseLine(line, line_no);
    auto chat = record.find("chat_id");
    auto sender = record.find("sender");
    auto turn = record.find("turn");
    auto text = record.find("text");
    if (chat == record.end() || !chat->is_string()) {
      Malformed(line_no, "chat_id must be a string");
    }
    if (sender == record.end() || !sender->is_string()) {
      Malformed(line_no, "sender must be a string");
    }
    if (turn == record.end() || !turn->is_number_integer() ||
        turn->get<int64_t>() < 0) {
      Malformed(line_no, "turn must be a non-negative integer");
    }
    if (text == record.end() || !text->is_string()) {
      Malformed(line_no, "text must be a string");
    }
    ChatMessage msg;
    msg.chat_id = chat->get<std::string>();
    const std::string sender_name = sender->get<std::string>();
    if (sender_name == "patient") {
      msg.sender = Sender::kPatient;
    } else if (sender_name == "doctor") {
      msg.sender = Sender::kDoctor;
    } else {
      Malformed(line_no, "unknown sender '" + sender_name + "'");
    }
    msg.turn_index = turn->get<int64_t>();
    msg.text = text->get<std::string>();
    msg.word_count = WordCount(msg.text);
    auto [it, inserted] = by_chat.try_emplace(msg.chat_id);
    if (inserted) order.push_back(msg.chat_id);
    it->second.push_back(std::move(msg));
  });

  std::vector<Conversation> conversations;
  conversations.reserve(order.size());
  for (const std::string& id : order) {
    std::vector<ChatMessage>& messages = by_chat[id];
    std::stable_sort(messages.begin(), messages.end(),
                     [](const ChatMessage& a, const ChatMessage& b) {
                       return a.turn_index < b.turn_index;
                     });
    for (size_t i = 1; i < messages.size(); ++i) {
      if (messages[i].turn_index == messages[i - 1].turn_index) {
        throw Error(ErrorCode::kDuplicateTurn,
                    "chat " + id + " turn " +
                        std::to_string(messages[i].turn_index));
      }
    }
    conversations.push_back(MakeConversation(id, std::move(messages)));
  }
  return conversations;
}

std::vector<Conversation> LoadChats(const std::filesystem::path& path) {
  return ParseChats(ReadFile(path));
}

std::string SerializeChats(const std::vector<Conversation>& conversations) {
  std::string out;
  for (const Conversation& conv : conversations) {
    for (const ChatMessage& msg : conv.messages) {
      json record = {{"chat_id", msg.chat_id},
                     {"sender", SenderName(msg.sender)},
                     {"turn", msg.turn_index},
                     {"text", msg.text}};
      out += record.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<MessagePair> ParsePairs(std::string_view jsonl) {
  std::vector<MessagePair> pairs;
  ForEachLine(jsonl, [&](std::string_view line, size_t line_no) {
    json record = ParseLine(line, line_no);
    auto text = record.find("patient_text");
    auto response = record.find("response_id");
    auto feasible = record.find("feasible");
    if (text == record.end() || !text->is_string() ||
        text->get<std::string>().empty()) {
      Malformed(line_no, "patient_text must be a non-empty string");
    }
    if (feasible == record.end() || !feasible->is_boolean()) {
      Malformed(line_no, "feasible must be a boolean");
    }
    MessagePair pair;
    pair.patient_text = text->get<std::string>();
    pair.feasible = feasible->get<bool>();
    if (response != record.end() && !response->is_null()) {
      if (!response->is_string()) {
        Malformed(line_no, "response_id must be a string or null");
      }
      pair.doctor_response_id = response->get<std::string>();
    }
    if (auto raw = record.find("raw_doctor_text");
        raw != record.end() && raw->is_string()) {
      pair.raw_doctor_text = raw->get<std::string>();
    }
    // A feasible pair without a label is an unlabelled pairing result; it is
    // accepted only while it still carries the doctor reply to label from.
    const bool unlabelled = pair.feasible && !pair.doctor_response_id &&
                            pair.raw_doctor_text.has_value();
    if (pair.feasible != pair.doctor_response_id.has_value() && !unlabelled) {
      Malformed(line_no, "feasible pairs need a response_id and vice versa");
    }
    if (auto chat = record.find("source_chat_id");
        chat != record.end() && chat->is_string()) {
      pair.source_chat_id = chat->get<std::string>();
    }
    pairs.push_back(std::move(pair));
  });
  return pairs;
}

std::vector<MessagePair> LoadPairs(const std::filesystem::path& path) {
  return ParsePairs(ReadFile(path));
}

std::string SerializePairs(const std::vector<MessagePair>& pairs) {
  std::string out;
  for (const MessagePair& p : pairs) {
    json record = json::object();
    record["patient_text"] = p.patient_text;
    record["response_id"] =
        p.doctor_response_id ? json(*p.doctor_response_id) : json(nullptr);
    record["feasible"] = p.feasible;
    if (p.raw_doctor_text) record["raw_doctor_text"] = *p.raw_doctor_text;
    if (p.source_chat_id) record["source_chat_id"] = *p.source_chat_id;
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<MessagePair> PairMessages(const Conversation& conv,
                                      int max_lookback) {
  std::vector<MessagePair> pairs;
  const auto& msgs = conv.messages;
  for (size_t j = 0; j < msgs.size(); ++j) {
    if (msgs[j].sender != Sender::kDoctor) continue;
    const size_t window_start =
        j > static_cast<size_t>(max_lookback) ? j - max_lookback : 0;
    // Nearest patient message inside the window.
    size_t end = j;
    while (end > window_start && msgs[end - 1].sender != Sender::kPatient) {
      --end;
    }
    if (end == window_start) continue;
    size_t begin = end - 1;
    while (begin > window_start && msgs[begin - 1].sender == Sender::kPatient) {
      --begin;
    }
    std::string block;
    for (size_t i = begin; i < end; ++i) {
      if (!block.empty()) block += ' ';
      block += msgs[i].text;
    }
    if (block.empty()) continue;
    MessagePair pair;
    pair.patient_text = std::move(block);
    pair.feasible = true;
    pair.source_chat_id = conv.chat_id;
    pair.raw_doctor_text = msgs[j].text;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::string StratumKey(const MessagePair& pair) {
  if (!pair.feasible || !pair.doctor_response_id) {
    return std::string(kInfeasibleStratum);
  }
  return *pair.doctor_response_id;
}

std::vector<FoldSplit> StratifiedKFold(const Dataset& dataset, int k,
                                       double val_fraction, uint64_t seed) {
  if (k < 2) {
    throw Error(ErrorCode::kInvalidArgument, "k must be at least 2");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "val_fraction must be in [0,1)");
  }
  const size_t n = dataset.size();
  if (n < static_cast<size_t>(k)) {
    throw Error(ErrorCode::kTooFewInstances,
                std::to_string(n) + " instances for " + std::to_string(k) +
                    " folds");
  }

  std::map<std::string, std::vector<size_t>> strata;
  for (size_t i = 0; i < n; ++i) {
    strata[StratumKey(dataset.pairs[i])].push_back(i);
  }
  std::vector<size_t> rare;
  for (auto it = strata.begin(); it != strata.end();) {
    if (it->second.size() < static_cast<size_t>(k)) {
      rare.insert(rare.end(), it->second.begin(), it->second.end());
      it = strata.erase(it);
    } else {
      ++it;
    }
  }
  if (!rare.empty()) {
    std::sort(rare.begin(), rare.end());
    auto& bucket = strata[std::string(kRareStratum)];
    bucket.insert(bucket.end(), rare.begin(), rare.end());
    std::sort(bucket.begin(), bucket.end());
  }

  Rng rng(seed);
  std::vector<int> fold_of(n, 0);
  size_t cursor = 0;
  for (auto& [key, members] : strata) {
    rng.Shuffle(std::span<size_t>(members));
    for (size_t idx : members) {
      fold_of[idx] = static_cast<int>(cursor % k);
      ++cursor;
    }
  }

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    FoldSplit& split = folds[f];
    for (auto& [key, members] : strata) {
      std::vector<size_t> rest;
      for (size_t idx : members) {
        if (fold_of[idx] == f) {
          split.test.push_back(idx);
        } else {
          rest.push_back(idx);
        }
      }
      const size_t n_val = static_cast<size_t>(
          std::llround(val_fraction * static_cast<double>(rest.size())));
      // members are already shuffled, so a prefix is a random sample
      for (size_t i = 0; i < rest.size(); ++i) {
        (i < n_val ? split.validation : split.train).push_back(rest[i]);
      }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
  }
  return folds;
}

}  // namespace medreply
