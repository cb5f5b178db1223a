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

#include "medreply/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <map>
#include <set>
#include <span>

#include "json.hpp"
#include "medreply/error.h"
#include "medreply/io.h"
#include "medreply/random.h"

namespace medreply {
namespace {

using Vec = std::vector<double>;

constexpr std::string_view kConsonants = "bdfghjklmnprstvwz";
constexpr std::string_view kVowels = "aeiou";

// Pronounceable pseudo-words. Words of four or more letters (the only ones
// that receive typos) stay at least 3 edits from every other such word, so a
// single injected edit remains closest to its source word.
class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {}

  std::string Make(int min_syllables, int max_syllables) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const int n = min_syllables +
                    static_cast<int>(rng_.UniformInt(max_syllables - min_syllables + 1));
      std::string word;
      for (int s = 0; s < n; ++s) {
        word += kConsonants[rng_.UniformInt(kConsonants.size())];
        word += kVowels[rng_.UniformInt(kVowels.size())];
      }
      if (Accept(word)) return word;
    }
    throw Error(ErrorCode::kInvalidSpec, "vocabulary too large for word shape");
  }

 private:
  bool Accept(const std::string& word) {
    if (!used_.insert(word).second) return false;
    if (word.size() < 4) return true;
    for (const std::string& other : long_words_) {
      if (EditDistance(word, other, 2) <= 2) {
        used_.erase(word);
        return false;
      }
    }
    long_words_.push_back(word);
    return true;
  }

  Rng& rng_;
  std::set<std::string> used_;
  std::vector<std::string> long_words_;
};

Vec RandomUnit(Rng& rng, size_t dim) {
  Vec v(dim);
  for (double& x : v) x = rng.Normal();
  const double n = Norm(v);
  for (double& x : v) x /= n;
  return v;
}

Vec Normalized(Vec v) {
  const double n = Norm(v);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
  return v;
}

// a + scale * b
Vec Axpy(const Vec& a, double scale, const Vec& b) {
  Vec out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] += scale * b[i];
  return out;
}

Vec Jitter(Rng& rng, const Vec& center, double amount) {
  return Normalized(Axpy(center, amount, RandomUnit(rng, center.size())));
}

struct Concept {
  std::vector<std::string> synonyms;
};

// Zipf-like sampler over a fixed vocabulary.
class ZipfSampler {
 public:
  ZipfSampler(size_t n, double exponent) {
    double total = 0.0;
    for (size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cumulative_.push_back(total);
    }
    for (double& c : cumulative_) c /= total;
  }
  size_t Sample(Rng& rng) const {
    const double u = rng.Uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<size_t>(it - cumulative_.begin(), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

std::string Typo(Rng& rng, const std::string& word) {
  std::string out = word;
  const size_t pos = rng.UniformInt(out.size());
  const char letter = static_cast<char>('a' + rng.UniformInt(26));
  // single-edit typos only: substitution, deletion or insertion
  switch (rng.UniformInt(3)) {
    case 0:
      out[pos] = letter == out[pos] ? (letter == 'z' ? 'a' : letter + 1) : letter;
      break;
    case 1:
      out.erase(pos, 1);
      break;
    default:
      out.insert(out.begin() + pos, letter);
  }
  return out;
}

bool Typoable(const std::string& token) {
  return token.size() >= 4 &&
         std::all_of(token.begin(), token.end(),
                     [](char c) { return c >= 'a' && c <= 'z'; });
}

Tokens AddTypos(Rng& rng, const Tokens& tokens, double rate) {
  Tokens out;
  for (const std::string& t : tokens) {
    out.push_back(Typoable(t) && rng.Bernoulli(rate) ? Typo(rng, t) : t);
  }
  return out;
}

struct Slot {
  enum Kind { kIntentConcept, kFamilyConcept, kFiller } kind;
  int index = 0;
};

}  // namespace

std::string ResponseId(int intent) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "r%03d", intent);
  return buf;
}

void SynthSpec::Validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (n_intents < 2) throw Error(ErrorCode::kInvalidSpec, "n_intents must be >= 2");
  if (pairs_per_intent < 1) {
    throw Error(ErrorCode::kInvalidSpec, "pairs_per_intent must be >= 1");
  }
  if (!rate_ok(infeasible_fraction) || !rate_ok(typo_rate) ||
      !rate_ok(abbreviation_rate) || !rate_ok(courtesy_rate)) {
    throw Error(ErrorCode::kInvalidSpec, "rates must lie in [0,1]");
  }
  if (mean_turns < 0 || sd_turns < 0 || mean_messages < 0 || sd_messages < 0) {
    throw Error(ErrorCode::kInvalidSpec, "chat shape must be non-negative");
  }
  if (embedding_dim < 2 || family_size < 1 || concepts_per_intent < 1 ||
      synonyms_per_concept < 1 || family_concepts < 0 || filler_vocab < 10 ||
      noise_vocab < 10 || min_fillers < 0 || max_fillers < min_fillers ||
      filler_scale < 0 || concept_spread < 0) {
    throw Error(ErrorCode::kInvalidSpec, "vocabulary shape out of range");
  }
}

SynthCorpus SynthGenerate(const SynthSpec& spec) {
  spec.Validate();
  Rng rng(spec.seed);
  WordFactory words(rng);
  const size_t dim = static_cast<size_t>(spec.embedding_dim);
  SynthCorpus corpus{{}, {}, {}, EmbeddingTable(dim), {}};
  EmbeddingTable& table = corpus.embeddings;

  const Vec medical = RandomUnit(rng, dim);
  const Vec chatter = RandomUnit(rng, dim);

  std::vector<std::string> fillers;
  for (int i = 0; i < spec.filler_vocab; ++i) {
    // the most frequent fillers are short function-like words
    fillers.push_back(i < 40 ? words.Make(1, 1) : words.Make(3, 4));
    table.Add(fillers.back(),
              Axpy(Vec(dim, 0.0), spec.filler_scale, RandomUnit(rng, dim)));
  }
  const ZipfSampler filler_sampler(fillers.size(), 0.9);

  auto make_concept = [&](const Vec& center) {
    Concept c;
    const Vec base = Jitter(rng, center, spec.concept_spread);
    for (int s = 0; s < spec.synonyms_per_concept; ++s) {
      c.synonyms.push_back(words.Make(3, 4));
      table.Add(c.synonyms.back(), Axpy(Jitter(rng, base, 0.2), 0.5, medical));
    }
    return c;
  };

  const int n_families = (spec.n_intents + spec.family_size - 1) / spec.family_size;
  std::vector<std::vector<Concept>> family_concepts(n_families);
  for (auto& family : family_concepts) {
    const Vec center = RandomUnit(rng, dim);
    for (int c = 0; c < spec.family_concepts; ++c) {
      family.push_back(make_concept(center));
    }
  }
  std::vector<std::vector<Concept>> intent_concepts(spec.n_intents);
  for (auto& intent : intent_concepts) {
    const Vec center = RandomUnit(rng, dim);
    for (int c = 0; c < spec.concepts_per_intent; ++c) {
      intent.push_back(make_concept(center));
    }
  }

  std::vector<std::string> noise;
  for (int i = 0; i < spec.noise_vocab; ++i) {
    noise.push_back(words.Make(3, 4));
    table.Add(noise.back(), Axpy(RandomUnit(rng, dim), 0.5, chatter));
  }

  // Doctor vocabulary: a few shared words plus three per intent.
  std::vector<std::string> doctor_common;
  for (int i = 0; i < 5; ++i) {
    doctor_common.push_back(words.Make(1, 1));
    table.Add(doctor_common.back(), Axpy(Vec(dim, 0.0), 0.8, RandomUnit(rng, dim)));
  }
  std::vector<std::string> courtesy;
  for (int i = 0; i < 4; ++i) {
    courtesy.push_back(words.Make(3, 4));
    table.Add(courtesy.back(), Axpy(Vec(dim, 0.0), 0.6, RandomUnit(rng, dim)));
  }
  for (int i = 0; i < spec.n_intents; ++i) {
    const Vec center = RandomUnit(rng, dim);
    Tokens reply;
    for (int w = 0; w < 3; ++w) {
      reply.push_back(words.Make(3, 4));
      table.Add(reply.back(), Jitter(rng, center, 0.2));
    }
    reply.insert(reply.begin() + 1, doctor_common[rng.UniformInt(doctor_common.size())]);
    reply.push_back(doctor_common[rng.UniformInt(doctor_common.size())]);
    corpus.truth.canonical_response.push_back(JoinTokens(reply));
  }

  // Abbreviations stand for frequent two- or three-word filler phrases.
  std::map<std::string, std::string> abbrev_entries;
  std::vector<std::pair<std::string, Tokens>> phrases;
  for (int i = 0; i < 8; ++i) {
    Tokens phrase;
    const int len = 2 + static_cast<int>(rng.UniformInt(2));
    for (int w = 0; w < len; ++w) phrase.push_back(fillers[rng.UniformInt(20)]);
    const std::string key = words.Make(2, 2) + "x";  // never a typo target
    abbrev_entries[key] = JoinTokens(phrase);
    phrases.emplace_back(key, phrase);
  }
  corpus.abbreviations = AbbrevDict(abbrev_entries);

  // Per-intent template family: slot sequences filled at sampling time.
  constexpr int kTemplatesPerIntent = 8;
  std::vector<std::vector<std::vector<Slot>>> templates(spec.n_intents);
  for (int i = 0; i < spec.n_intents; ++i) {
    for (int t = 0; t < kTemplatesPerIntent; ++t) {
      std::vector<Slot> slots;
      const int n_specific = 1 + static_cast<int>(rng.UniformInt(2));
      for (int s = 0; s < n_specific; ++s) {
        slots.push_back({Slot::kIntentConcept,
                         static_cast<int>(rng.UniformInt(spec.concepts_per_intent))});
      }
      if (spec.family_concepts > 0) {
        const int n_family = static_cast<int>(rng.UniformInt(3));
        for (int s = 0; s < n_family; ++s) {
          slots.push_back({Slot::kFamilyConcept,
                           static_cast<int>(rng.UniformInt(spec.family_concepts))});
        }
      }
      const int n_filler =
          spec.min_fillers +
          static_cast<int>(rng.UniformInt(spec.max_fillers - spec.min_fillers + 1));
      for (int s = 0; s < n_filler; ++s) slots.push_back({Slot::kFiller, 0});
      rng.Shuffle(std::span<Slot>(slots));
      templates[i].push_back(std::move(slots));
    }
  }

  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[rng.UniformInt(v.size())];
  };

  // Returns (clean tokens, noisy tokens).
  auto finish = [&](Tokens clean) {
    if (rng.Bernoulli(0.25)) {
      const auto& [key, phrase] = phrases[rng.UniformInt(phrases.size())];
      const size_t at = rng.UniformInt(clean.size() + 1);
      clean.insert(clean.begin() + at, phrase.begin(), phrase.end());
    }
    Tokens noisy;
    for (size_t p = 0; p < clean.size();) {
      bool replaced = false;
      for (const auto& [key, phrase] : phrases) {
        if (p + phrase.size() <= clean.size() &&
            std::equal(phrase.begin(), phrase.end(), clean.begin() + p) &&
            rng.Bernoulli(spec.abbreviation_rate)) {
          noisy.push_back(key);
          p += phrase.size();
          replaced = true;
          break;
        }
      }
      if (!replaced) noisy.push_back(clean[p++]);
    }
    return std::make_pair(clean, AddTypos(rng, noisy, spec.typo_rate));
  };

  const int total = spec.n_intents * spec.pairs_per_intent;
  const int n_infeasible =
      static_cast<int>(std::llround(spec.infeasible_fraction * total));
  const int n_feasible = total - n_infeasible;

  struct Draft {
    MessagePair pair;
    int intent = -1;
    std::string clean;
  };
  std::vector<Draft> drafts;
  for (int f = 0; f < n_feasible; ++f) {
    const int intent = f % spec.n_intents;
    const auto& slots = templates[intent][rng.UniformInt(kTemplatesPerIntent)];
    Tokens tokens;
    for (const Slot& slot : slots) {
      switch (slot.kind) {
        case Slot::kIntentConcept:
          tokens.push_back(pick(intent_concepts[intent][slot.index].synonyms));
          break;
        case Slot::kFamilyConcept:
          tokens.push_back(pick(
              family_concepts[intent / spec.family_size][slot.index].synonyms));
          break;
        case Slot::kFiller:
          tokens.push_back(fillers[filler_sampler.Sample(rng)]);
          break;
      }
    }
    auto [clean, noisy] = finish(std::move(tokens));
    Tokens reply = Tokenize(corpus.truth.canonical_response[intent]);
    if (rng.Bernoulli(spec.courtesy_rate)) reply.insert(reply.begin(), pick(courtesy));
    Draft d;
    d.intent = intent;
    d.clean = JoinTokens(clean);
    d.pair.patient_text = JoinTokens(noisy);
    d.pair.feasible = true;
    d.pair.doctor_response_id = ResponseId(intent);
    d.pair.raw_doctor_text = JoinTokens(AddTypos(rng, reply, spec.typo_rate));
    drafts.push_back(std::move(d));
  }
  for (int f = 0; f < n_infeasible; ++f) {
    Tokens tokens;
    const int n_noise = 2 + static_cast<int>(rng.UniformInt(4));
    const int n_filler = 2 + static_cast<int>(rng.UniformInt(4));
    for (int w = 0; w < n_noise; ++w) tokens.push_back(pick(noise));
    for (int w = 0; w < n_filler; ++w) {
      tokens.push_back(fillers[filler_sampler.Sample(rng)]);
    }
    rng.Shuffle(std::span<std::string>(tokens));
    auto [clean, noisy] = finish(std::move(tokens));
    Tokens reply;
    const int n_reply = 3 + static_cast<int>(rng.UniformInt(4));
    for (int w = 0; w < n_reply; ++w) reply.push_back(pick(noise));
    reply.push_back(pick(doctor_common));
    Draft d;
    d.clean = JoinTokens(clean);
    d.pair.patient_text = JoinTokens(noisy);
    d.pair.feasible = false;
    d.pair.raw_doctor_text = JoinTokens(AddTypos(rng, reply, spec.typo_rate));
    drafts.push_back(std::move(d));
  }
  rng.Shuffle(std::span<Draft>(drafts));

  // Pack pairs into chats: patient block (1-3 messages) then one doctor reply.
  std::vector<MessagePair> pairs;
  size_t next = 0;
  int chat_no = 0;
  while (next < drafts.size()) {
    const double turns = std::max(2.0, std::round(spec.mean_turns + spec.sd_turns * rng.Normal()));
    const size_t n_pairs = std::max<size_t>(1, static_cast<size_t>(turns) / 2);
    char id[32];
    std::snprintf(id, sizeof(id), "chat%05d", chat_no++);
    std::vector<ChatMessage> messages;
    int64_t turn = 0;
    for (size_t p = 0; p < n_pairs && next < drafts.size(); ++p, ++next) {
      Draft& d = drafts[next];
      d.pair.source_chat_id = id;
      const Tokens tokens = Tokenize(d.pair.patient_text);
      const double u = rng.Uniform();
      size_t parts = u < 0.3 ? 1 : (u < 0.63 ? 2 : 3);
      parts = std::max<size_t>(1, std::min(parts, tokens.size()));
      size_t begin = 0;
      for (size_t part = 0; part < parts; ++part) {
        const size_t end = part + 1 == parts
                               ? tokens.size()
                               : begin + std::max<size_t>(1, (tokens.size() - begin) / (parts - part));
        Tokens chunk(tokens.begin() + begin, tokens.begin() + end);
        begin = end;
        ChatMessage m{id, Sender::kPatient, turn++, JoinTokens(chunk), chunk.size()};
        messages.push_back(std::move(m));
      }
      ChatMessage reply{id, Sender::kDoctor, turn++, *d.pair.raw_doctor_text,
                        Tokenize(*d.pair.raw_doctor_text).size()};
      messages.push_back(std::move(reply));
      corpus.truth.intent.push_back(d.intent);
      corpus.truth.response_cluster.push_back(d.intent);
      corpus.truth.clean_patient_text.push_back(d.clean);
      pairs.push_back(d.pair);
    }
    corpus.chats.push_back(MakeConversation(id, std::move(messages)));
  }
  corpus.dataset = Dataset::FromPairs(std::move(pairs));
  return corpus;
}

void WriteSynthCorpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  using json = nlohmann::json;
  WriteFileAtomic(dir / "chats.jsonl", SerializeChats(corpus.chats));
  WriteFileAtomic(dir / "pairs.jsonl", SerializePairs(corpus.dataset.pairs));
  WriteFileAtomic(dir / "embeddings.txt", corpus.embeddings.ToText());
  WriteFileAtomic(dir / "abbreviations.tsv", corpus.abbreviations.ToTsv());
  std::string truth;
  for (size_t i = 0; i < corpus.truth.intent.size(); ++i) {
    truth += json{{"intent", corpus.truth.intent[i]},
                  {"clean_patient_text", corpus.truth.clean_patient_text[i]},
                  {"response_cluster", corpus.truth.response_cluster[i]}}
                 .dump() +
             "\n";
  }
  WriteFileAtomic(dir / "truth.jsonl", truth);
  json responses = json::array();
  for (size_t i = 0; i < corpus.truth.canonical_response.size(); ++i) {
    responses.push_back({{"response_id", ResponseId(static_cast<int>(i))},
                         {"text", corpus.truth.canonical_response[i]}});
  }
  WriteFileAtomic(dir / "responses.json", responses.dump(2) + "\n");
}

}  // namespace medreply
