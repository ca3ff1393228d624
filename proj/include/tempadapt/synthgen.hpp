// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "tempadapt/corpus.hpp"
#include "tempadapt/pos.hpp"

namespace tempadapt::synth {

/// A bursty topical token: zero before onset, peak_rate at onset, then
/// geometric decay by decay_factor per period.
struct EventSpec {
  std::string token;
  int onset_period = 0;
  double peak_rate = 30.0;  // expected occurrences per 1,000 documents at onset
  double decay_factor = 0.6;
  std::optional<std::string> single_class;  // nullopt: shared by all classes

  bool shared() const { return !single_class.has_value(); }
};

/// Class-discriminative vocabulary. Every class owns a fixed set of stable cue
/// words plus an active set of drifting cue words drawn from a pool shared by
/// all classes. Each period a fraction 1 - 2^(-1/half_life) of every class's
/// active drifting cues is retired to the pool and replaced by pool words,
/// which may previously have signalled a different class.
struct ClassCueConfig {
  int stable_per_class = 4;
  int drifting_per_class = 10;
  int drifting_pool = 80;
  double drift_half_life = 3.0;  // periods
  double stable_rate = 0.6;      // expected stable-cue tokens per document
  double drifting_rate = 1.0;    // expected drifting-cue tokens per document
  double confusion_rate = 0.3;   // expected cue tokens borrowed from another class
};

/// Class-independent document topics over the background vocabulary. Each
/// document picks one topic uniformly; every background token is drawn from
/// that topic's word list with probability `rate`, otherwise from the global
/// Zipf distribution. This gives masked-token prediction contextual signal.
struct TopicConfig {
  int count = 24;
  int words_per_topic = 40;
  double rate = 0.5;
};

struct GeneratorSpec {
  int n_periods = 12;
  std::string start_period = "2017-03";
  std::vector<std::string> classes{"c0", "c1", "c2", "c3", "c4"};
  std::map<corpus::SplitRole, std::size_t> docs_per_period_per_class{
      {corpus::SplitRole::kAdaptation, 1000}, {corpus::SplitRole::kFinetune, 200}, {corpus::SplitRole::kTest, 100}};
  std::size_t background_vocab_size = 1500;
  double zipf_exponent = 1.0;
  std::vector<EventSpec> events;
  ClassCueConfig class_cues;
  TopicConfig topics;
  int min_doc_tokens = 10;
  int max_doc_tokens = 22;
  std::uint64_t seed = 1;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  nlohmann::json to_json() const;
  /// Accepts an explicit "events" list and/or an "event_schedule" object
  /// {per_period, peak_rate, decay_factor, scope} that is expanded into one
  /// batch of events per period.
  static GeneratorSpec from_json(const nlohmann::json& j);
};

/// Appends `per_period` fresh events with onset at every period.
void add_event_schedule(GeneratorSpec& spec, int per_period, double peak_rate, double decay_factor,
                        bool single_class_round_robin = false);

/// The desk-scale default: 12 periods, 5 classes, 5,000 / 1,000 / 500
/// adaptation / fine-tune / test documents per period, five shared events
/// per period with Kavanaugh-like burst shape.
GeneratorSpec default_spec(std::uint64_t seed = 1);

/// Expected event rate per 1,000 documents in `period`. Throws DataError
/// when period is outside [0, n_periods).
double burst_profile(const EventSpec& event, int period, int n_periods);

/// Copy of the spec in which every shared event is confined to a single
/// class, assigned round-robin over classes in event order.
GeneratorSpec make_discriminative_variant(const GeneratorSpec& spec);

/// Realised event occurrences keyed (event token, period id, class).
class EventLedger {
 public:
  using Key = std::tuple<std::string, std::string, std::string>;

  void add(const std::string& token, const std::string& period, const std::string& cls, std::size_t n = 1);
  std::size_t count(const std::string& token, const std::string& period) const;
  std::set<std::string> classes(const std::string& token, const std::string& period) const;
  std::set<std::string> tokens() const;
  const std::map<Key, std::size_t>& entries() const { return counts_; }

  std::string to_csv() const;
  static EventLedger from_csv(const std::string& text);

  friend bool operator==(const EventLedger&, const EventLedger&) = default;

 private:
  std::map<Key, std::size_t> counts_;
};

/// Gold tag per word, keyed by document id.
using GoldTags = std::map<std::string, std::vector<Pos>>;

struct SyntheticCorpus {
  corpus::Corpus corpus;
  GoldTags tags;
  EventLedger ledger;
  GeneratorSpec spec;
};

/// Deterministic in spec.seed. Every period holds exactly the requested
/// number of documents per class and role, with no duplicate texts.
SyntheticCorpus generate_corpus(const GeneratorSpec& spec);

/// Background-only documents (no events, no cues) over the same vocabulary;
/// stands in for a general-domain pre-training corpus. Tags are returned in
/// `tags` when non-null.
std::vector<std::string> generate_background_texts(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed,
                                                   std::vector<std::vector<Pos>>* tags = nullptr);

/// Writes the corpus layout plus event_ledger.csv, gold_tags.jsonl and
/// generator_spec.json.
void write_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& synthetic);

/// Gold tags sidecar of a corpus directory (empty when absent).
GoldTags read_gold_tags(const std::filesystem::path& dir);
EventLedger read_ledger(const std::filesystem::path& dir);

/// Recount of event occurrences straight from the corpus text.
EventLedger recount_ledger(const corpus::Corpus& corpus, const std::set<std::string>& event_tokens);

}  // namespace tempadapt::synth
