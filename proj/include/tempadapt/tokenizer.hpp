// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tempadapt::tok {

using TokenId = std::int32_t;

// Reserved ids; every vocabulary starts with these, in this order.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kUrl = 5;
inline constexpr TokenId kEmoji = 6;
inline constexpr TokenId kNumSpecial = 7;

inline constexpr std::string_view kSpecialTokens[kNumSpecial] = {"[PAD]",  "[UNK]", "[CLS]",  "[SEP]",
                                                                 "[MASK]", "[URL]", "[EMOJI]"};
inline constexpr std::string_view kContinuation = "##";

/// Immutable subword inventory. Continuation pieces carry a "##" prefix.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const { return id(token) >= 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecial; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Lower-cased whitespace words; [URL] and [EMOJI] placeholders are split out
/// as words of their own.
std::vector<std::string> pre_tokenize(std::string_view text);

/// Number of distinct word-initial and continuation character units in the
/// pre-tokenised texts (placeholders excluded).
std::size_t character_inventory(std::span<const std::string> texts);

/// Learns a subword vocabulary of exactly `size` entries (or fewer if the
/// corpus runs out of merges) by repeatedly merging the most frequent
/// adjacent pair. Throws ConfigError if size cannot hold the specials and
/// the character inventory.
Vocabulary train_vocabulary(std::span<const std::string> texts, std::size_t size);

struct TokenSequence {
  std::vector<TokenId> ids;
  /// Source word per position. CLS carries -1 and SEP one past the last
  /// encoded word, so the sequence is non-decreasing.
  std::vector<std::int32_t> word_index;
  bool truncated = false;

  std::size_t size() const { return ids.size(); }
};

inline constexpr std::size_t kDefaultMaxLen = 128;

/// Greedy longest-match-first segmentation with [CLS] ... [SEP] framing.
TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len = kDefaultMaxLen);

/// Joins subwords back into space-separated words (special framing dropped).
std::string decode(const TokenSequence& seq, const Vocabulary& vocab);

struct MaskingPolicy {
  double mask = 0.8;
  double random = 0.1;
  double keep = 0.1;
};

struct MaskedSequence {
  TokenSequence sequence;               // inputs after replacement
  std::vector<std::int32_t> positions;  // masked positions, ascending
  std::vector<TokenId> targets;         // original ids at those positions
};

/// Selects each non-special position with probability `rate` and replaces it
/// by [MASK] / a random non-special id / itself according to the policy.
MaskedSequence apply_mlm_masking(const TokenSequence& seq, std::size_t vocab_size, std::uint64_t seed,
                                 double rate = 0.15, MaskingPolicy policy = {});

}  // namespace tempadapt::tok
