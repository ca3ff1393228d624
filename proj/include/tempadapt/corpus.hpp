// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace tempadapt::corpus {

enum class SplitRole { kAdaptation, kFinetune, kTest };

std::string_view to_string(SplitRole role);
SplitRole parse_split_role(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  std::int64_t timestamp = 0;
  std::optional<std::string> source_label;
  SplitRole split_role = SplitRole::kAdaptation;
  // Only consulted by the bot filter; never written to slice files.
  std::optional<std::string> author;

  friend bool operator==(const Document&, const Document&) = default;
};

struct TimeSlice {
  std::string period_id;  // "YYYY-MM"
  std::vector<Document> documents;
};

struct FilterLogEntry {
  std::string filter;
  std::size_t removed = 0;
};

/// Counts keyed period -> split role -> label. Unlabelled documents are
/// counted under kUnlabelled.
using CountTable = std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>>;

inline constexpr std::string_view kUnlabelled = "_unlabelled";

struct CorpusManifest {
  std::string corpus_id;
  std::vector<std::string> periods;
  CountTable counts;
  std::vector<FilterLogEntry> preprocessing;
  std::uint64_t seed = 0;
  bool balanced = false;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Ingestion

/// Maps Document fields onto record keys. text and timestamp are required.
struct FieldMap {
  std::string text;
  std::string timestamp;
  std::optional<std::string> id;
  std::optional<std::string> source_label;
  std::optional<std::string> author;
  std::optional<std::string> split_role;
};

/// Parses "text=body,timestamp=created_utc,source_label=sub".
FieldMap parse_field_map(std::string_view spec);

/// Streams Documents out of a newline-delimited JSON file in file order.
/// Malformed records are skipped and counted.
class DocumentReader {
 public:
  DocumentReader(const std::filesystem::path& path, FieldMap field_map,
                 SplitRole default_role = SplitRole::kAdaptation);

  std::optional<Document> next();
  std::size_t malformed() const { return malformed_; }

 private:
  std::ifstream in_;
  FieldMap map_;
  SplitRole default_role_;
  std::size_t line_no_ = 0;
  std::size_t malformed_ = 0;
};

struct IngestResult {
  std::vector<Document> documents;
  std::size_t malformed = 0;
};

IngestResult ingest(const std::filesystem::path& path, const FieldMap& field_map,
                    SplitRole default_role = SplitRole::kAdaptation);

// ---------------------------------------------------------------------------
// Normalisation and filtering

/// Replaces URLs with [URL] and emoji with [EMOJI], turns line breaks into
/// spaces, collapses whitespace runs and trims. Idempotent.
std::string normalize_text(std::string_view raw);

class LanguageClassifier {
 public:
  virtual ~LanguageClassifier() = default;
  virtual bool accept(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

class PassThroughLanguage final : public LanguageClassifier {
 public:
  bool accept(std::string_view) const override { return true; }
  std::string name() const override { return "passthrough"; }
};

/// Accepts text whose letters are mostly ASCII; a crude English proxy.
class AsciiRatioLanguage final : public LanguageClassifier {
 public:
  explicit AsciiRatioLanguage(double min_ratio = 0.9) : min_ratio_(min_ratio) {}
  bool accept(std::string_view text) const override;
  std::string name() const override { return "ascii"; }

 private:
  double min_ratio_;
};

/// Resolves "passthrough" or "ascii"; unknown names are a configuration error.
std::shared_ptr<const LanguageClassifier> make_language_classifier(std::string_view name);

struct DeletedMarkerFilter {
  std::vector<std::string> markers{"[deleted]", "[removed]"};
};

/// Removes blocklisted authors, plus any author who posted the same
/// normalised text at least repeat_threshold times (0 disables the heuristic).
struct BotAuthorFilter {
  std::set<std::string> blocklist;
  std::size_t repeat_threshold = 0;
};

struct LanguageFilter {
  std::shared_ptr<const LanguageClassifier> classifier;
};

struct MinLengthFilter {
  std::size_t min_words = 1;
};

using Filter = std::variant<DeletedMarkerFilter, BotAuthorFilter, LanguageFilter, MinLengthFilter>;

std::string filter_name(const Filter& filter);

/// Parses "deleted,bots=a|b,bot-repeat=5,lang=ascii,min-words=3".
std::vector<Filter> parse_filters(std::string_view list);

struct FilterResult {
  std::vector<Document> kept;
  std::vector<FilterLogEntry> log;  // one entry per filter, in order
};

/// Applies the filters in order; a removed document is charged to the first
/// filter that rejects it.
FilterResult filter_documents(std::vector<Document> docs, const std::vector<Filter>& filters);

// ---------------------------------------------------------------------------
// Partitioning, deduplication, sampling

enum class Granularity { kMonth };

/// UTC month of a timestamp, "YYYY-MM".
std::string period_of(std::int64_t timestamp);

/// Half-open [first second, first second of next month) for a period id.
std::pair<std::int64_t, std::int64_t> period_bounds(std::string_view period_id);

/// Period id `offset` months after `period_id`.
std::string shift_period(std::string_view period_id, int offset);

std::vector<TimeSlice> partition_by_period(std::vector<Document> docs,
                                           Granularity granularity = Granularity::kMonth);

struct DedupResult {
  TimeSlice slice;
  std::size_t removed = 0;
};

/// Keeps one document per distinct normalised text: the earliest by
/// timestamp, ties broken by position. Survivors keep their input order.
DedupResult deduplicate(const TimeSlice& slice);

/// Uniform sample without replacement, permuted, deterministic in seed.
/// With by_label every label contributes exactly n / labels documents.
TimeSlice sample_balanced(const TimeSlice& slice, std::size_t n, bool by_label, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Vocabulary similarity

using WordSet = std::set<std::string>;

/// Case-folded whitespace word types.
WordSet extract_vocabulary(std::span<const Document> docs);
WordSet extract_vocabulary(std::span<const std::string> texts);

double jaccard_similarity(const WordSet& a, const WordSet& b);

// ---------------------------------------------------------------------------
// Persistence: DIR/manifest.json + DIR/slices/<period>.jsonl

nlohmann::json document_to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

void write_slice(const std::filesystem::path& path, const TimeSlice& slice);
TimeSlice read_slice(const std::filesystem::path& path);

struct Corpus {
  CorpusManifest manifest;
  std::vector<TimeSlice> slices;

  const TimeSlice& slice(std::string_view period_id) const;
};

/// Recounts slices into a table shaped like CorpusManifest::counts.
CountTable count_documents(std::span<const TimeSlice> slices);

/// Throws IntegrityError when manifest counts or balance claims disagree
/// with the materialised slices.
void verify_manifest(const CorpusManifest& manifest, std::span<const TimeSlice> slices);

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

/// Documents of one role, in slice order.
std::vector<Document> select_role(const TimeSlice& slice, SplitRole role);

// ---------------------------------------------------------------------------
// End-to-end ingestion

struct IngestOptions {
  FieldMap field_map;
  std::vector<Filter> filters;
  Granularity granularity = Granularity::kMonth;
  SplitRole default_role = SplitRole::kAdaptation;
  std::string corpus_id = "ingested";
  nlohmann::json provenance = nlohmann::json::object();
};

/// ingest -> normalize -> filter -> partition -> deduplicate, with every
/// removal logged in the manifest.
Corpus build_corpus(const std::filesystem::path& input, const IngestOptions& options);

}  // namespace tempadapt::corpus
