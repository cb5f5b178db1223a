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

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "medreply/corpus.h"
#include "medreply/error.h"
#include "medreply/random.h"
#include "medreply/textprep.h"

namespace medreply {
namespace {

std::string Line(const std::string& chat, const std::string& sender, int turn,
                 const std::string& text) {
  return "{\"chat_id\":\"" + chat + "\",\"sender\":\"" + sender +
         "\",\"turn\":" + std::to_string(turn) + ",\"text\":\"" + text + "\"}\n";
}

ChatMessage Msg(Sender sender, int turn, std::string text) {
  ChatMessage m;
  m.chat_id = "c";
  m.sender = sender;
  m.turn_index = turn;
  m.text = std::move(text);
  m.word_count = WordCount(m.text);
  return m;
}

MessagePair Labelled(std::string text, std::optional<std::string> id) {
  MessagePair p;
  p.patient_text = std::move(text);
  p.feasible = id.has_value();
  p.doctor_response_id = std::move(id);
  return p;
}

TEST_CASE("load chats groups a minimal chat") {
  const auto convs =
      ParseChats(Line("c1", "patient", 0, "hi") + Line("c1", "doctor", 1, "hello"));
  REQUIRE(convs.size() == 1);
  CHECK(convs[0].n_messages == 2);
  CHECK(convs[0].n_turns == 2);
}

TEST_CASE("load chats of an empty file is empty") {
  CHECK(ParseChats("").empty());
}

TEST_CASE("consecutive messages from one sender form one turn") {
  const auto convs = ParseChats(Line("c", "patient", 0, "a") + Line("c", "patient", 1, "b") +
                                Line("c", "patient", 2, "c") + Line("c", "doctor", 3, "x"));
  REQUIRE(convs.size() == 1);
  CHECK(convs[0].n_messages == 4);
  CHECK(convs[0].n_turns == 2);
}

TEST_CASE("load chats sorts by turn and reports record errors") {
  const auto convs =
      ParseChats(Line("c", "doctor", 5, "later") + Line("c", "patient", 2, "first"));
  REQUIRE(convs[0].messages.size() == 2);
  CHECK(convs[0].messages[0].text == "first");

  try {
    ParseChats(Line("c", "patient", 1, "a") + Line("c", "doctor", 1, "b"));
    FAIL("expected DuplicateTurn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateTurn);
  }
  try {
    ParseChats(Line("c", "patient", 1, "a") + "{\"chat_id\":\"c\",\"sender\":\"nurse\"}\n");
    FAIL("expected MalformedRecord");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
    CHECK(std::string(e.what()).find('2') != std::string::npos);  // line number
  }
}

TEST_CASE("chat serialization round trips") {
  const std::string text = Line("a", "patient", 0, "I have a fever") +
                           Line("a", "doctor", 1, "Since when?") +
                           Line("b", "patient", 3, "thanks") + Line("b", "doctor", 4, "bye");
  const auto convs = ParseChats(text);
  const auto again = ParseChats(SerializeChats(convs));
  REQUIRE(again.size() == convs.size());
  for (size_t i = 0; i < convs.size(); ++i) {
    CHECK(again[i].messages == convs[i].messages);
  }
  for (const Conversation& c : convs) {
    for (const ChatMessage& m : c.messages) {
      CHECK(m.word_count == Tokenize(Normalize(m.text)).size());
    }
  }
}

TEST_CASE("pairing examples") {
  auto one = PairMessages(MakeConversation("c", {Msg(Sender::kPatient, 0, "hi"),
                                                 Msg(Sender::kDoctor, 1, "hello")}));
  REQUIRE(one.size() == 1);
  CHECK(one[0].patient_text == "hi");
  CHECK(one[0].raw_doctor_text == "hello");
  CHECK(one[0].feasible);
  CHECK_FALSE(one[0].doctor_response_id.has_value());

  auto block = PairMessages(MakeConversation(
      "c", {Msg(Sender::kPatient, 0, "a"), Msg(Sender::kPatient, 1, "b"),
            Msg(Sender::kDoctor, 2, "x")}));
  REQUIRE(block.size() == 1);
  CHECK(block[0].patient_text == "a b");

  CHECK(PairMessages(MakeConversation(
                         "c", {Msg(Sender::kDoctor, 0, "x"), Msg(Sender::kPatient, 1, "a")}))
            .empty());
}

TEST_CASE("pairing respects the lookback window") {
  std::vector<ChatMessage> msgs = {Msg(Sender::kPatient, 0, "far")};
  for (int i = 1; i <= 3; ++i) msgs.push_back(Msg(Sender::kDoctor, i, "d"));
  const Conversation conv = MakeConversation("c", msgs);
  CHECK(PairMessages(conv, 6).size() == 3);
  CHECK(PairMessages(conv, 2).size() == 2);  // the third doctor message is 3 back
}

TEST_CASE("pairs never precede their patient block") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ChatMessage> msgs;
    std::map<std::string, int> turn_of;
    for (int t = 0; t < 20; ++t) {
      const Sender s = rng.Bernoulli(0.5) ? Sender::kPatient : Sender::kDoctor;
      const std::string text = "m" + std::to_string(t);
      turn_of[text] = t;
      msgs.push_back(Msg(s, t, text));
    }
    for (const MessagePair& p : PairMessages(MakeConversation("c", msgs))) {
      const Tokens parts = Tokenize(p.patient_text);
      for (const std::string& part : parts) {
        CHECK(turn_of.at(part) < turn_of.at(*p.raw_doctor_text));
      }
    }
  }
}

TEST_CASE("pairs file round trips and enforces the feasibility contract") {
  std::vector<MessagePair> pairs = {Labelled("fever since monday", "r001"),
                                    Labelled("ok", std::nullopt)};
  pairs[0].raw_doctor_text = "How high?";
  CHECK(ParsePairs(SerializePairs(pairs)) == pairs);

  CHECK_THROWS_AS(ParsePairs("{\"patient_text\":\"a\",\"response_id\":null,\"feasible\":true}\n"),
                  Error);
  CHECK_THROWS_AS(ParsePairs("{\"patient_text\":\"a\",\"response_id\":\"r\",\"feasible\":false}\n"),
                  Error);
  // Pairing output awaiting labels keeps its doctor reply.
  const auto unlabelled = ParsePairs(
      "{\"patient_text\":\"a\",\"response_id\":null,\"feasible\":true,\"raw_doctor_text\":\"b\"}\n");
  REQUIRE(unlabelled.size() == 1);
  CHECK_THROWS_AS(Dataset::FromPairs(unlabelled), Error);
}

TEST_CASE("dataset records label space and infeasible fraction") {
  const Dataset ds = Dataset::FromPairs({Labelled("a", "r1"), Labelled("b", "r2"),
                                         Labelled("c", "r1"), Labelled("d", std::nullopt)});
  CHECK(ds.label_space == std::set<std::string>{"r1", "r2"});
  CHECK(ds.infeasible_fraction == 0.25);
}

Dataset BalancedDataset(size_t per_label, size_t labels, size_t infeasible) {
  std::vector<MessagePair> pairs;
  for (size_t l = 0; l < labels; ++l) {
    for (size_t i = 0; i < per_label; ++i) {
      pairs.push_back(Labelled("t" + std::to_string(pairs.size()), "r" + std::to_string(l)));
    }
  }
  for (size_t i = 0; i < infeasible; ++i) {
    pairs.push_back(Labelled("n" + std::to_string(i), std::nullopt));
  }
  return Dataset::FromPairs(pairs);
}

TEST_CASE("k-fold on 10 balanced pairs puts one of each label in each test fold") {
  const Dataset ds = BalancedDataset(5, 2, 0);
  const auto folds = StratifiedKFold(ds, 5, 0.0, 1);
  REQUIRE(folds.size() == 5);
  for (const FoldSplit& f : folds) {
    REQUIRE(f.test.size() == 2);
    std::set<std::string> labels;
    for (size_t i : f.test) labels.insert(*ds.pairs[i].doctor_response_id);
    CHECK(labels.size() == 2);
  }
}

TEST_CASE("k-fold rejects datasets smaller than k") {
  try {
    StratifiedKFold(BalancedDataset(2, 1, 0), 5, 0.0, 1);
    FAIL("expected TooFewInstances");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooFewInstances);
  }
}

TEST_CASE("k-fold partitions the data with balanced strata") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Dataset ds = BalancedDataset(1 + rng.UniformInt(12), 1 + rng.UniformInt(6),
                                       rng.UniformInt(20));
    if (ds.size() < 5) continue;
    const uint64_t seed = rng.Next();
    const auto folds = StratifiedKFold(ds, 5, 0.2, seed);
    CHECK(folds.size() == 5);

    std::vector<int> seen(ds.size(), 0);
    std::map<std::string, std::vector<int>> per_stratum;
    for (size_t f = 0; f < folds.size(); ++f) {
      std::vector<int> in_fold(ds.size(), 0);
      for (size_t i : folds[f].test) {
        ++seen[i];
        in_fold[i] = 1;
      }
      for (size_t i : folds[f].train) {
        CHECK(in_fold[i] == 0);
        in_fold[i] = 2;
      }
      for (size_t i : folds[f].validation) {
        CHECK(in_fold[i] == 0);
        in_fold[i] = 3;
      }
      CHECK(std::count(in_fold.begin(), in_fold.end(), 0) == 0);
      std::map<std::string, int> counts;
      for (size_t i : folds[f].test) {
        if (const auto& id = ds.pairs[i].doctor_response_id) ++counts[*id];
      }
      for (const std::string& label : ds.label_space) per_stratum[label].push_back(counts[label]);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    for (const auto& [label, counts] : per_stratum) {
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      const auto members = std::count_if(ds.pairs.begin(), ds.pairs.end(), [&](const auto& p) {
        return p.doctor_response_id == label;
      });
      if (members >= 5) CHECK(*hi - *lo <= 1);  // smaller strata are merged
    }
    CHECK(StratifiedKFold(ds, 5, 0.2, seed).front().test == folds.front().test);
  }
}

TEST_CASE("rare labels share a stratum") {
  CHECK(StratumKey(Labelled("a", std::nullopt)) == kInfeasibleStratum);
  CHECK(StratumKey(Labelled("a", "r7")) == "r7");
}

}  // namespace
}  // namespace medreply
