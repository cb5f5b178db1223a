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

// Python bindings for the smart-reply engine: text cleaning, metrics,
// synthetic corpora, training, experiments and in-process suggestions.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "medreply/corpus.h"
#include "medreply/embed.h"
#include "medreply/error.h"
#include "medreply/eval.h"
#include "medreply/pipeline.h"
#include "medreply/synth.h"
#include "medreply/textprep.h"

namespace py = pybind11;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace medreply {
namespace {

// JSON values cross the boundary as Python objects via the json module, which
// keeps the bindings free of a hand-written converter.
py::object ToPython(const json& value) {
  return py::module_::import("json").attr("loads")(value.dump());
}

PipelineConfig ConfigFrom(const std::optional<fs::path>& path) {
  return path ? PipelineConfig::Load(*path) : PipelineConfig{};
}

AbbrevDict AbbrevFrom(const std::optional<fs::path>& path, const PipelineConfig& config) {
  if (path) return AbbrevDict::Load(*path);
  if (!config.abbreviations.empty()) return AbbrevDict::Load(config.abbreviations);
  return AbbrevDict();
}

json SuggestionJson(const Suggestion& s) {
  json items = json::array();
  for (const SuggestionItem& item : s.items) {
    items.push_back({{"rank", item.rank},
                     {"response_id", item.response_id},
                     {"text", item.display_text},
                     {"score", item.score},
                     {"cluster_id", item.cluster_id}});
  }
  return {{"triggered", s.triggered},
          {"trigger_score", s.trigger_score},
          {"items", items},
          {"latency_ms", s.latency_ms}};
}

json SweepJson(const std::vector<SweepPoint>& points) {
  json out = json::array();
  for (const SweepPoint& p : points) {
    out.push_back({{"threshold", p.threshold},
                   {"tn_rate", p.tn_rate},
                   {"correct_top3_rate", p.correct_top3_rate},
                   {"fp_rate", p.fp_rate},
                   {"fn_rate", p.fn_rate},
                   {"miss_rate", p.miss_rate},
                   {"pipeline_precision_at_3", p.PipelinePrecision()}});
  }
  return out;
}

// A loaded artifact directory.
class Pipeline {
 public:
  explicit Pipeline(const fs::path& artifact_dir)
      : artifacts_(Artifacts::LoadDir(artifact_dir, &config_)) {}

  py::object Suggest(const std::string& text, std::optional<double> threshold,
                     std::optional<size_t> k) const {
    PipelineConfig config = config_;
    if (threshold) config.threshold_p = *threshold;
    if (k) config.k = *k;
    config.Validate();
    Suggestion s;
    {
      py::gil_scoped_release release;
      s = medreply::Suggest(text, config, *artifacts_);
    }
    return ToPython(SuggestionJson(s));
  }

  py::object Canned() const { return ToPython(json::parse(artifacts_->canned().ToJson())); }
  py::object Config() const { return ToPython(config_.ToJson()); }
  std::map<std::string, std::string> Fingerprints() const { return artifacts_->fingerprints(); }

 private:
  PipelineConfig config_;
  std::unique_ptr<Artifacts> artifacts_;
};

}  // namespace
}  // namespace medreply

PYBIND11_MODULE(medreply, m) {
  using namespace medreply;
  m.doc() = "Smart-reply suggestions for doctor-patient chat.";

  // Errors surface as medreply.Error with the error code name in `.code`.
  static py::handle error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(ErrorCodeName(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  // Text preparation
  m.def("normalize", &Normalize, py::arg("text"),
        "Lowercase, strip URLs and punctuation, collapse whitespace.");
  m.def("edit_distance", &EditDistance, py::arg("a"), py::arg("b"), py::arg("limit") = 2,
        "Levenshtein distance, capped at limit + 1.");
  m.def(
      "clean_text",
      [](const std::string& text, const std::map<std::string, std::string>& abbreviations,
         const std::map<std::string, int64_t>& lexicon) {
        const TextCleaner cleaner(CleanConfig{}, AbbrevDict(abbreviations), SpellLexicon(lexicon));
        return cleaner.CleanText(text);
      },
      py::arg("text"), py::arg("abbreviations") = std::map<std::string, std::string>{},
      py::arg("lexicon") = std::map<std::string, int64_t>{},
      "normalize -> expand abbreviations -> correct spelling against the lexicon.");

  // Metrics
  m.def("precision_at_k", &PrecisionAtK, py::arg("rankings"), py::arg("truths"), py::arg("k"));
  m.def(
      "mean_reciprocal_rank",
      [](const std::vector<size_t>& ranks) { return MeanReciprocalRank(ranks); },
      py::arg("ranks"));
  m.def(
      "auc_roc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return AucRoc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "threshold_sweep",
      [](const std::vector<double>& scores, const std::vector<int>& labels,
         const std::vector<size_t>& truth_ranks, std::optional<std::vector<double>> thresholds) {
        const std::vector<double> grid = thresholds.value_or(DefaultThresholdGrid());
        return ToPython(SweepJson(ThresholdSweep(scores, labels, truth_ranks, grid)));
      },
      py::arg("scores"), py::arg("labels"), py::arg("truth_ranks"),
      py::arg("thresholds") = py::none(),
      "Five-way outcome rates per threshold; truth_ranks are 1-based, 0 when absent.");

  // Corpora, training and experiments
  m.def(
      "synth",
      [](const fs::path& out_dir, int n_intents, int pairs_per_intent, double infeasible_fraction,
         double typo_rate, uint64_t seed) {
        SynthSpec spec;
        spec.n_intents = n_intents;
        spec.pairs_per_intent = pairs_per_intent;
        spec.infeasible_fraction = infeasible_fraction;
        spec.typo_rate = typo_rate;
        spec.seed = seed;
        py::gil_scoped_release release;
        const SynthCorpus corpus = SynthGenerate(spec);
        WriteSynthCorpus(corpus, out_dir);
        return std::map<std::string, double>{
            {"pairs", static_cast<double>(corpus.dataset.size())},
            {"infeasible_fraction", corpus.dataset.infeasible_fraction},
            {"chats", static_cast<double>(corpus.chats.size())}};
      },
      py::arg("out_dir"), py::arg("n_intents") = SynthSpec{}.n_intents,
      py::arg("pairs_per_intent") = SynthSpec{}.pairs_per_intent,
      py::arg("infeasible_fraction") = SynthSpec{}.infeasible_fraction,
      py::arg("typo_rate") = SynthSpec{}.typo_rate, py::arg("seed") = SynthSpec{}.seed,
      "Writes a synthetic corpus (pairs, chats, embeddings, abbreviations, truth).");
  m.def(
      "train",
      [](const fs::path& pairs, const fs::path& embeddings, const fs::path& out_dir,
         std::optional<fs::path> abbreviations, std::optional<fs::path> config_path) {
        PipelineConfig config = ConfigFrom(config_path);
        py::gil_scoped_release release;
        const Dataset ds = Dataset::FromPairs(LoadPairs(pairs));
        auto table = std::make_shared<const EmbeddingTable>(EmbeddingTable::Load(embeddings));
        const auto artifacts = TrainPipeline(ds, table, AbbrevFrom(abbreviations, config), config);
        artifacts->SaveDir(out_dir, config);
      },
      py::arg("pairs"), py::arg("embeddings"), py::arg("out_dir"),
      py::arg("abbreviations") = py::none(), py::arg("config") = py::none(),
      "Trains a serving pipeline and saves its artifact directory.");
  m.def(
      "run_experiment",
      [](const fs::path& pairs, const fs::path& embeddings, std::optional<fs::path> out_dir,
         std::optional<fs::path> abbreviations, std::optional<fs::path> config_path, int jobs,
         std::optional<uint64_t> seed) {
        PipelineConfig config = ConfigFrom(config_path);
        if (seed) config.seed = *seed;
        ExperimentReport report;
        {
          py::gil_scoped_release release;
          const Dataset ds = Dataset::FromPairs(LoadPairs(pairs));
          auto table =
              std::make_shared<const EmbeddingTable>(EmbeddingTable::Load(embeddings));
          ExperimentOptions options;
          options.grid = ModelGrid::All();
          options.jobs = jobs;
          report = RunExperiment(ds, table, AbbrevFrom(abbreviations, config), config, options);
          if (out_dir) WriteExperiment(report, *out_dir);
        }
        return ToPython(report.ToJson());
      },
      py::arg("pairs"), py::arg("embeddings"), py::arg("out_dir") = py::none(),
      py::arg("abbreviations") = py::none(), py::arg("config") = py::none(),
      py::arg("jobs") = 1, py::arg("seed") = py::none(),
      "Stratified k-fold experiment over every model kind; returns report.json content.");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init<const fs::path&>(), py::arg("artifact_dir"))
      .def("suggest", &Pipeline::Suggest, py::arg("text"), py::arg("threshold") = py::none(),
           py::arg("k") = py::none())
      .def("canned", &Pipeline::Canned)
      .def("config", &Pipeline::Config)
      .def_property_readonly("fingerprints", &Pipeline::Fingerprints);
}
