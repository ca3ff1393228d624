// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tempadapt/corpus.hpp"
#include "tempadapt/diagnostics.hpp"
#include "tempadapt/evaluation.hpp"
#include "tempadapt/model.hpp"
#include "tempadapt/report.hpp"
#include "tempadapt/synthgen.hpp"

namespace tempadapt::orch {

enum class Adaptation { kNAda, kDAda, kTAda };
enum class Finetuning { kRFt, kTFt };

struct Strategy {
  Adaptation adaptation = Adaptation::kNAda;
  Finetuning finetuning = Finetuning::kRFt;

  /// Per-period models exist when either stage is temporal.
  bool per_period() const { return adaptation == Adaptation::kTAda || finetuning == Finetuning::kTFt; }
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

std::string to_string(Strategy s);
/// "TAda+TFt" style names.
Strategy parse_strategy(std::string_view name);
/// The six combinations in table order.
std::vector<Strategy> all_strategies();

/// How the base (NAda) model is obtained: pre-trained from scratch on
/// background text of a synthetic spec, or loaded from disk.
struct BaseSpec {
  std::size_t background_docs = 20000;
  int epochs = 2;
  double learning_rate = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;
  std::string checkpoint;  // directory; overrides pre-training
  std::string vocab;       // vocabulary file; required with checkpoint

  nlohmann::json to_json() const;
  static BaseSpec from_json(const nlohmann::json& j);
};

struct ExperimentPlan {
  /// {"synth": <generator spec>} or {"path": "<corpus dir>"}.
  nlohmann::json corpus;
  model::ModelConfig model;
  model::TrainConfig train;  // seed is replaced per run
  BaseSpec base;
  std::vector<std::string> strategies;
  std::vector<std::string> periods;  // empty: every corpus period
  std::size_t adaptation_size = 0;   // per TAda run and for the DAda control; 0 = all of one period
  std::size_t finetune_size = 0;     // per TFt run and for RFt; 0 = all of one period
  std::vector<std::string> matrix_strategies;  // classification matrices; default: per-period strategies
  std::vector<std::size_t> sweep_adaptation_sizes;
  std::vector<std::size_t> sweep_finetune_sizes;
  std::size_t sweep_test_per_period = 100;
  std::vector<std::size_t> compare_finetune_sizes;  // default: {finetune_size}
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t masking_seed = 1234;
  std::uint64_t data_seed = 99;
  /// Subset of mlm_matrix, cls_matrix, sweep, compare, diagnostics.
  std::vector<std::string> analyses;
  std::string output_dir = "runs";
  bool verbose = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentPlan from_json(const nlohmann::json& j);
  static ExperimentPlan load(const std::filesystem::path& path);
  /// SHA-256 of every field that can affect results (output_dir and
  /// verbosity excluded).
  std::string hash() const;
};

/// Checkpoints keyed by the hash of the request that produced them.
class CheckpointCache {
 public:
  explicit CheckpointCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  /// Returns the cached checkpoint for `request`, or trains it with `train`
  /// and stores it. A stored entry whose recorded request differs from
  /// `request` is an IntegrityError.
  model::Checkpoint get_or_train(const nlohmann::json& request,
                                 const std::function<model::Checkpoint(model::TrainStats&)>& train,
                                 bool* trained = nullptr, model::TrainStats* stats = nullptr);

  static std::string key(const nlohmann::json& request);

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::shared_ptr<const model::Checkpoint>> memory_;
};

/// Cache directory from TEMPADAPT_CACHE, else <fallback>.
std::filesystem::path cache_dir(const std::filesystem::path& fallback);

struct RunEntry {
  std::string name;
  std::string kind;
  std::string cache_key;
  std::string checkpoint_hash;
  bool trained = false;
  std::size_t steps = 0;
  double seconds = 0.0;
};

struct RunRecord {
  std::string plan_hash;
  std::filesystem::path artifact_dir;
  std::vector<RunEntry> runs;
  std::vector<std::string> outputs;  // files relative to artifact_dir
  std::size_t training_steps = 0;
  double wall_seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Equal per-period quotas summing to total; the remainder goes to the
/// earliest periods.
std::vector<std::size_t> even_quotas(std::size_t total, std::size_t parts);

/// Shuffles within each label and interleaves labels round-robin (sorted
/// label order), so any prefix is balanced to within one document.
std::vector<corpus::Document> balanced_order(std::vector<corpus::Document> docs, std::uint64_t seed);

/// Everything the analyses need about the loaded corpus.
struct Workspace {
  corpus::Corpus corpus;
  synth::GoldTags tags;
  std::optional<synth::EventLedger> ledger;
  std::optional<synth::GeneratorSpec> spec;
  std::vector<std::string> periods;
  std::vector<std::string> labels;
};

Workspace load_workspace(const ExperimentPlan& plan);

/// Results of the analyses, per seed and as medians over seeds.
struct PlanResults {
  std::vector<std::uint64_t> seeds;
  std::vector<eval::CrossTemporalMatrix> mlm_matrix;  // per seed
  std::map<std::string, std::vector<eval::CrossTemporalMatrix>> cls_matrix;  // by strategy, per seed
  std::vector<report::Table> sweep;        // per seed: rows adaptation sizes, cols ppl and f1@size
  std::vector<report::Table> compare;      // per seed: rows strategies, cols fine-tune sizes
  std::vector<nlohmann::json> diagnostics;  // per seed summaries

  static eval::CrossTemporalMatrix median(const std::vector<eval::CrossTemporalMatrix>& per_seed);
  static report::Table median(const std::vector<report::Table>& per_seed);
};

/// Runs every requested analysis, writing CSVs, heatmaps and a run record
/// under <output_dir>/<plan hash prefix>.
RunRecord run_plan(const ExperimentPlan& plan, PlanResults* results = nullptr);

/// run_plan restricted to the scale sweep / strategy comparison.
report::Table scale_sweep(const ExperimentPlan& plan, RunRecord* record = nullptr);
report::Table strategy_compare(const ExperimentPlan& plan, RunRecord* record = nullptr);

/// Inputs of the token-level comparison between a control and per-period
/// candidate models.
struct DiagnosticsInput {
  const tok::Vocabulary* vocab = nullptr;
  std::vector<eval::TestSet> tests;      // one per period; labels optional
  const synth::GoldTags* tags = nullptr;  // per-word POS; untagged when null
  std::vector<std::string> labels;        // class inventory for distinctiveness
  std::set<std::string> event_tokens;     // generator ledger cross-check
  std::uint64_t masking_seed = 1234;
  std::size_t max_len = tok::kDefaultMaxLen;
};

struct DiagnosticsOutput {
  nlohmann::json summary;
  std::map<std::string, std::string> files;  // file name -> contents
};

using CandidateForPeriod = std::function<model::Model(const std::string& period)>;

/// Per-token loss deltas, POS attribution, PROPN deciles, most-improved
/// tokens and class distinctiveness of the top PROPN decile.
DiagnosticsOutput token_diagnostics(const model::Model& control, const CandidateForPeriod& candidate,
                                    const DiagnosticsInput& in);

/// Mean metric over all matrix cells at each |row - column| distance.
std::vector<double> distance_profile(const eval::CrossTemporalMatrix& m);

}  // namespace tempadapt::orch
