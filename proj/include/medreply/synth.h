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

#ifndef MEDREPLY_SYNTH_H_
#define MEDREPLY_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/textprep.h"

namespace medreply {

// Parameters of the synthetic chat corpus. The chat-shape defaults follow
// the reference corpus statistics (15.5 +- 11.5 turns, 23.8 messages per
// chat, 23.1% infeasible pairs).
struct SynthSpec {
  int n_intents = 20;
  int pairs_per_intent = 250;
  double infeasible_fraction = 0.231;
  double typo_rate = 0.03;
  double abbreviation_rate = 0.05;
  double mean_turns = 15.5;
  double sd_turns = 11.5;
  double mean_messages = 23.8;
  double sd_messages = 17.0;
  uint64_t seed = 42;

  // Vocabulary shape.
  int embedding_dim = 48;
  int family_size = 4;              // intents sharing family words
  int concepts_per_intent = 3;
  int synonyms_per_concept = 8;
  int family_concepts = 3;
  int filler_vocab = 300;
  int noise_vocab = 200;
  // Filler tokens per feasible template and their embedding norm; fillers
  // carry no intent signal and blur nearest-neighbour matching.
  int min_fillers = 4;
  int max_fillers = 8;
  double filler_scale = 1.2;
  // Spread of concept directions around their intent (or family) center.
  double concept_spread = 0.9;
  // Fraction of doctor replies that carry a courtesy word.
  double courtesy_rate = 0.3;

  void Validate() const;
};

struct GroundTruth {
  // Intent per pair, -1 for infeasible pairs.
  std::vector<int> intent;
  // Patient text before typos and abbreviations were injected.
  std::vector<std::string> clean_patient_text;
  // Canonical doctor reply per intent; response id is ResponseId(intent).
  std::vector<std::string> canonical_response;
  // Planted doctor-reply cluster per pair (same as intent; -1 infeasible).
  std::vector<int> response_cluster;
};

struct SynthCorpus {
  Dataset dataset;
  GroundTruth truth;
  std::vector<Conversation> chats;
  EmbeddingTable embeddings;
  AbbrevDict abbreviations;
};

std::string ResponseId(int intent);

// Deterministic for a fixed spec. Throws kInvalidSpec.
SynthCorpus SynthGenerate(const SynthSpec& spec);

// chats.jsonl, pairs.jsonl, embeddings.txt, abbreviations.tsv, truth.jsonl
// (intent, clean text and planted cluster per pair) and responses.json
// (canonical reply per intent), written atomically under `dir`.
void WriteSynthCorpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace medreply

#endif  // MEDREPLY_SYNTH_H_
