// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::tok {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>(std::begin(kSpecialTokens), std::end(kSpecialTokens))) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecial) throw DataError("vocabulary is missing the reserved tokens");
  for (TokenId i = 0; i < kNumSpecial; ++i) {
    if (tokens_[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw DataError("vocabulary id " + std::to_string(i) + " must be " + std::string(kSpecialTokens[i]));
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  write_file_atomic(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw DataError("empty line in vocabulary file " + path.string());
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::string Vocabulary::hash() const {
  Sha256 h;
  for (const auto& t : tokens_) h.update(t).update(std::string_view("\n"));
  return h.hex();
}

// ---------------------------------------------------------------------------

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

// Code point strings of a word.
std::vector<std::string> characters(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto len = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

bool is_placeholder(std::string_view w) { return w == kSpecialTokens[kUrl] || w == kSpecialTokens[kEmoji]; }

}  // namespace

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    std::string_view chunk = text.substr(start, i - start);
    // Peel placeholders out of the chunk, e.g. "hi[URL]" -> "hi", "[URL]".
    while (!chunk.empty()) {
      std::size_t best = std::string_view::npos;
      std::string_view which;
      for (auto ph : {kSpecialTokens[kUrl], kSpecialTokens[kEmoji]}) {
        const auto pos = chunk.find(ph);
        if (pos < best) {
          best = pos;
          which = ph;
        }
      }
      const auto head = chunk.substr(0, std::min(best, chunk.size()));
      if (!head.empty()) {
        std::string w(head);
        for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        words.push_back(std::move(w));
      }
      if (best == std::string_view::npos) break;
      words.emplace_back(which);
      chunk.remove_prefix(best + which.size());
    }
  }
  return words;
}

std::size_t character_inventory(std::span<const std::string> texts) {
  std::set<std::string> units;
  for (const auto& t : texts) {
    for (const auto& w : pre_tokenize(t)) {
      if (is_placeholder(w)) continue;
      const auto chars = characters(w);
      for (std::size_t k = 0; k < chars.size(); ++k) units.insert(k == 0 ? chars[k] : std::string(kContinuation) + chars[k]);
    }
  }
  return units.size();
}

Vocabulary train_vocabulary(std::span<const std::string> texts, std::size_t size) {
  // Word frequencies, in a deterministic order.
  std::map<std::string, std::int64_t> freq;
  for (const auto& t : texts) {
    for (auto& w : pre_tokenize(t)) {
      if (!is_placeholder(w)) ++freq[w];
    }
  }

  std::vector<std::string> tokens(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  std::map<std::string, TokenId> index;
  for (TokenId i = 0; i < kNumSpecial; ++i) index[tokens[static_cast<std::size_t>(i)]] = i;

  std::set<std::string> initial, continuation;
  for (const auto& [w, _] : freq) {
    const auto chars = characters(w);
    for (std::size_t k = 0; k < chars.size(); ++k) {
      (k == 0 ? initial : continuation).insert(k == 0 ? chars[k] : std::string(kContinuation) + chars[k]);
    }
  }
  const std::size_t minimum = kNumSpecial + initial.size() + continuation.size();
  if (size < minimum) {
    throw ConfigError("vocabulary size " + std::to_string(size) + " is below the " + std::to_string(minimum) +
                      " entries needed for special tokens and the character inventory");
  }
  for (const auto* group : {&initial, &continuation}) {
    for (const auto& u : *group) {
      index[u] = static_cast<TokenId>(tokens.size());
      tokens.push_back(u);
    }
  }

  // Words as symbol sequences.
  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> counts;
  for (const auto& [w, n] : freq) {
    const auto chars = characters(w);
    std::vector<TokenId> syms;
    for (std::size_t k = 0; k < chars.size(); ++k) {
      syms.push_back(index.at(k == 0 ? chars[k] : std::string(kContinuation) + chars[k]));
    }
    words.push_back(std::move(syms));
    counts.push_back(n);
  }

  using Pair = std::pair<TokenId, TokenId>;
  std::map<Pair, std::int64_t> pair_count;
  std::map<Pair, std::set<std::size_t>> where;
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const auto& s = words[wi];
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      pair_count[{s[k], s[k + 1]}] += counts[wi];
      where[{s[k], s[k + 1]}].insert(wi);
    }
  }
  // Max-heap on count; ties prefer the smaller pair, which keeps training
  // deterministic. Stale entries are skipped on pop.
  struct Entry {
    std::int64_t count;
    Pair pair;
    bool operator<(const Entry& o) const { return count != o.count ? count < o.count : pair > o.pair; }
  };
  std::priority_queue<Entry> heap;
  for (const auto& [p, c] : pair_count) heap.push({c, p});

  auto merged_string = [&](TokenId a, TokenId b) {
    std::string right = tokens[static_cast<std::size_t>(b)];
    if (right.starts_with(kContinuation)) right.erase(0, kContinuation.size());
    return tokens[static_cast<std::size_t>(a)] + right;
  };

  while (tokens.size() < size && !heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    const auto it = pair_count.find(top.pair);
    if (it == pair_count.end() || it->second != top.count || top.count <= 0) continue;

    const auto merged = merged_string(top.pair.first, top.pair.second);
    TokenId new_id;
    if (auto existing = index.find(merged); existing != index.end()) {
      new_id = existing->second;
    } else {
      new_id = static_cast<TokenId>(tokens.size());
      tokens.push_back(merged);
      index[merged] = new_id;
    }

    std::map<Pair, std::int64_t> delta;
    const auto affected = where[top.pair];
    for (auto wi : affected) {
      auto& s = words[wi];
      const auto n = counts[wi];
      for (std::size_t k = 0; k + 1 < s.size(); ++k) delta[{s[k], s[k + 1]}] -= n;
      std::vector<TokenId> next;
      next.reserve(s.size());
      for (std::size_t k = 0; k < s.size();) {
        if (k + 1 < s.size() && s[k] == top.pair.first && s[k + 1] == top.pair.second) {
          next.push_back(new_id);
          k += 2;
        } else {
          next.push_back(s[k]);
          ++k;
        }
      }
      s = std::move(next);
      for (std::size_t k = 0; k + 1 < s.size(); ++k) delta[{s[k], s[k + 1]}] += n;
    }
    for (const auto& [p, d] : delta) {
      if (d == 0) continue;
      auto& c = pair_count[p];
      c += d;
      if (c > 0) heap.push({c, p});
    }
    // Refresh membership for the pairs these words now contain.
    for (auto wi : affected) {
      const auto& s = words[wi];
      for (std::size_t k = 0; k + 1 < s.size(); ++k) where[{s[k], s[k + 1]}].insert(wi);
    }
    pair_count.erase(top.pair);
    where.erase(top.pair);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------

TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw ConfigError("max_len must leave room for [CLS] and [SEP]");
  TokenSequence seq;
  seq.ids.push_back(kCls);
  seq.word_index.push_back(-1);
  const auto words = pre_tokenize(text);
  const std::size_t budget = max_len - 1;  // positions available before [SEP]
  std::int32_t last_word = -1;
  for (std::size_t wi = 0; wi < words.size() && !seq.truncated; ++wi) {
    const auto& word = words[wi];
    std::vector<TokenId> pieces;
    if (const auto ph = vocab.id(word); ph >= 0 && is_placeholder(word)) {
      pieces.push_back(ph);
    } else {
      const auto chars = characters(word);
      std::size_t start = 0;
      while (start < chars.size()) {
        TokenId found = -1;
        std::size_t end = chars.size();
        for (; end > start; --end) {
          std::string piece = start > 0 ? std::string(kContinuation) : std::string();
          for (std::size_t k = start; k < end; ++k) piece += chars[k];
          found = vocab.id(piece);
          if (found >= 0) break;
        }
        if (found < 0) {
          pieces.assign(1, kUnk);
          break;
        }
        pieces.push_back(found);
        start = end;
      }
    }
    for (auto id : pieces) {
      if (seq.ids.size() >= budget) {
        seq.truncated = true;
        break;
      }
      seq.ids.push_back(id);
      seq.word_index.push_back(static_cast<std::int32_t>(wi));
      last_word = static_cast<std::int32_t>(wi);
    }
  }
  seq.ids.push_back(kSep);
  seq.word_index.push_back(last_word + 1);
  return seq;
}

std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const auto id = seq.ids[i];
    if (id == kCls || id == kSep || id == kPad) continue;
    const auto& t = vocab.token(id);
    if (t.starts_with(kContinuation) && !out.empty() && i > 0 && seq.word_index[i] == seq.word_index[i - 1]) {
      out += t.substr(kContinuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += t.starts_with(kContinuation) ? t.substr(kContinuation.size()) : t;
    }
  }
  return out;
}

MaskedSequence apply_mlm_masking(const TokenSequence& seq, std::size_t vocab_size, std::uint64_t seed, double rate,
                                 MaskingPolicy policy) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("masking rate must lie in [0, 1]");
  if (policy.mask < 0 || policy.random < 0 || policy.keep < 0 ||
      std::abs(policy.mask + policy.random + policy.keep - 1.0) > 1e-9) {
    throw ConfigError("masking policy must be non-negative and sum to 1");
  }
  if (vocab_size <= static_cast<std::size_t>(kNumSpecial) && policy.random > 0) {
    throw ConfigError("random replacement needs non-special vocabulary entries");
  }
  Rng rng(seed);
  MaskedSequence out;
  out.sequence = seq;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (Vocabulary::is_special(seq.ids[i])) continue;
    if (!rng.bernoulli(rate)) continue;
    out.positions.push_back(static_cast<std::int32_t>(i));
    out.targets.push_back(seq.ids[i]);
    const double u = rng.uniform();
    if (u < policy.mask) {
      out.sequence.ids[i] = kMask;
    } else if (u < policy.mask + policy.random) {
      out.sequence.ids[i] = static_cast<TokenId>(kNumSpecial + rng.below(vocab_size - kNumSpecial));
    }
  }
  return out;
}

}  // namespace tempadapt::tok
