// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tempadapt/model.hpp"
#include "tempadapt/pos.hpp"
#include "tempadapt/tokenizer.hpp"

namespace tempadapt::diag {

/// Word-level tags keyed by document id.
using TagLookup = std::map<std::string, std::vector<Pos>>;

/// Each subword inherits the tag of its source word; special tokens get
/// Pos::kNone. A word index beyond the tag list is a DataError.
std::vector<Pos> align_pos_to_subwords(std::span<const Pos> word_tags, const tok::TokenSequence& seq);

struct MaskedTokenRecord {
  std::string doc_id;
  std::string period;
  tok::TokenId subword = 0;
  std::int32_t word_index = 0;
  std::int32_t position = 0;
  Pos pos = Pos::kNone;
  double loss_control = 0.0;
  double loss_candidate = 0.0;
  double delta = 0.0;  // control - candidate; positive when the candidate improved
};

/// Pairs per-token losses of two models evaluated on identical maskings.
/// Records must align one-to-one on (doc id, position, subword); the first
/// mismatch is reported in a DataError. Tags are looked up by doc id and word
/// index when `tags` is given.
std::vector<MaskedTokenRecord> loss_deltas(std::span<const model::TokenLossRecord> control,
                                           std::span<const model::TokenLossRecord> candidate,
                                           const TagLookup* tags = nullptr);

struct PosContribution {
  Pos pos = Pos::kNone;
  double contribution = 0.0;  // percent of the total delta
  double frequency = 0.0;     // percent of masked tokens
  double delta_sum = 0.0;
  std::size_t count = 0;
};

/// One entry per tag of the closed inventory; records tagged NONE are left
/// out. A zero total delta is a DataError.
std::vector<PosContribution> contribution_by_pos(std::span<const MaskedTokenRecord> records);

/// Records sorted by delta descending; ties by (period, doc id, position).
std::vector<MaskedTokenRecord> rank_by_delta(std::span<const MaskedTokenRecord> records);

/// Sizes of the ten near-equal bins, remainder going to the earliest bins.
std::array<std::size_t, 10> decile_sizes(std::size_t n);

struct DecileResult {
  std::array<double, 10> share{};  // percent of total delta per decile
  std::array<std::size_t, 10> size{};
};

/// Fewer than ten records, or a zero total delta, is a DataError.
DecileResult decile_contributions(std::span<const MaskedTokenRecord> records);

/// The first decile of the ranked records.
std::vector<MaskedTokenRecord> top_decile(std::span<const MaskedTokenRecord> records);

struct ImprovedToken {
  MaskedTokenRecord record;
  std::string subword;  // subword text
  std::string word;     // surrounding source word, empty when unknown
};

/// Top-k records by delta (see rank_by_delta). `texts` maps doc id to the
/// document text, used to recover the source word.
std::vector<ImprovedToken> top_improved_tokens(std::span<const MaskedTokenRecord> records, std::size_t k,
                                               const tok::Vocabulary& vocab,
                                               const std::map<std::string, std::string>* texts = nullptr);

struct LabelledDocument {
  std::string id;
  std::string period;
  std::string text;
  std::string label;
};

struct DistinctivenessRow {
  std::size_t classes = 0;  // bucket: number of classes the subword was used in
  std::size_t subwords = 0;
  std::size_t comments = 0;
  double avg_frequency() const {
    return subwords == 0 ? 0.0 : static_cast<double>(comments) / static_cast<double>(subwords) / static_cast<double>(classes);
  }
};

struct DistinctivenessEntry {
  tok::TokenId subword = 0;
  std::string period;
  Pos pos = Pos::kNone;
  std::size_t classes = 0;
  std::size_t comments = 0;
};

struct DistinctivenessTable {
  std::vector<DistinctivenessRow> rows;  // buckets 1..n_classes
  std::vector<DistinctivenessEntry> entries;
};

/// For every distinct (subword, period) of the records, counts the classes
/// and comments of that period's test documents in which the subword occurs
/// with the same tag as the improved usage; comments count once each.
/// Documents without a label are a DataError.
DistinctivenessTable distinctiveness_table(std::span<const MaskedTokenRecord> records,
                                           std::span<const LabelledDocument> docs, const tok::Vocabulary& vocab,
                                           const std::vector<std::string>& classes, const TagLookup* tags = nullptr,
                                           std::size_t max_len = tok::kDefaultMaxLen);

// CSV persistence.
std::string records_csv(std::span<const MaskedTokenRecord> records, const tok::Vocabulary& vocab);
std::vector<MaskedTokenRecord> parse_records_csv(const std::string& text, const tok::Vocabulary& vocab);
std::string contributions_csv(std::span<const PosContribution> rows);
std::string deciles_csv(const DecileResult& deciles);
std::string improved_csv(std::span<const ImprovedToken> tokens);
std::string distinctiveness_csv(const DistinctivenessTable& table);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);
/// Splits one CSV line honouring double-quoted fields.
std::vector<std::string> parse_csv_line(std::string_view line);

}  // namespace tempadapt::diag
