// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <boost/math/distributions/binomial.hpp>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "tempadapt/error.hpp"
#include "tempadapt/tokenizer.hpp"
#include "tempadapt/util.hpp"

using namespace tempadapt;
using namespace tempadapt::tok;

namespace {

std::vector<std::string> sample_texts() {
  return {"the quick brown fox jumps", "the lazy dog sleeps", "quick thinking saves the day",
          "brown bread and brown rice", "foxes and dogs are animals", "see [URL] and [EMOJI] here"};
}

}  // namespace

TEST_CASE("a dominant word becomes one subword") {
  const std::vector<std::string> texts(20, "abc abc abc");
  const auto v = train_vocabulary(texts, 40);
  const auto seq = encode("abc", v);
  REQUIRE(seq.size() == 3);
  CHECK(v.token(seq.ids[1]) == "abc");
  CHECK(seq.word_index == std::vector<std::int32_t>{-1, 0, 1});
}

TEST_CASE("minimal budget gives a character vocabulary; too small is rejected") {
  const auto texts = sample_texts();
  const auto chars = character_inventory(texts);
  const auto v = train_vocabulary(texts, chars + kNumSpecial);
  CHECK(v.size() == chars + kNumSpecial);
  for (TokenId id = kNumSpecial; id < static_cast<TokenId>(v.size()); ++id) {
    auto t = v.token(id);
    if (t.starts_with(kContinuation)) t = t.substr(kContinuation.size());
    CHECK(t.size() == 1);
  }
  CHECK_THROWS_AS(train_vocabulary(texts, chars + kNumSpecial - 1), ConfigError);
}

TEST_CASE("special tokens have fixed ids") {
  const auto v = train_vocabulary(sample_texts(), 80);
  for (TokenId i = 0; i < kNumSpecial; ++i) CHECK(v.token(i) == kSpecialTokens[i]);
  CHECK(v.id("[MASK]") == kMask);
}

TEST_CASE("training is deterministic and vocabularies persist") {
  const auto texts = sample_texts();
  const auto a = train_vocabulary(texts, 70), b = train_vocabulary(texts, 70);
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
  const auto p = std::filesystem::temp_directory_path() / "tempadapt_vocab.txt";
  a.save(p);
  CHECK(Vocabulary::load(p) == a);
  std::filesystem::remove(p);
}

TEST_CASE("segmentation shares word indices and respects the cap") {
  const auto v = train_vocabulary(sample_texts(), 60);
  const auto seq = encode("Quick quickly", v);
  CHECK(seq.ids.front() == kCls);
  CHECK(seq.ids.back() == kSep);
  // Unknown-but-segmentable word: several pieces, one word index.
  std::size_t pieces = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) pieces += seq.word_index[i] == 1;
  CHECK(pieces > 1);
  // Contiguous, non-decreasing word runs.
  for (std::size_t i = 1; i < seq.size(); ++i) {
    CHECK(seq.word_index[i] >= seq.word_index[i - 1]);
    CHECK(seq.word_index[i] - seq.word_index[i - 1] <= 1);
  }

  std::string long_text;
  for (int i = 0; i < 200; ++i) long_text += "fox ";
  const auto capped = encode(long_text, v, 128);
  CHECK(capped.truncated);
  CHECK(capped.size() == 128);
  CHECK(capped.ids.back() == kSep);
  CHECK_FALSE(encode("fox", v).truncated);
}

TEST_CASE("placeholders stay atomic and decode round-trips") {
  const auto v = train_vocabulary(sample_texts(), 90);
  const auto seq = encode("see [URL] and [EMOJI]", v);
  CHECK(std::count(seq.ids.begin(), seq.ids.end(), kUrl) == 1);
  CHECK(std::count(seq.ids.begin(), seq.ids.end(), kEmoji) == 1);
  CHECK(decode(encode("The  LAZY\tdog [URL]", v), v) == "the lazy dog [URL]");
  const auto again = encode("The  LAZY\tdog [URL]", v);
  CHECK(encode("The  LAZY\tdog [URL]", v).ids == again.ids);
}

TEST_CASE("masking: zero rate, determinism, specials") {
  const auto v = train_vocabulary(sample_texts(), 80);
  const auto seq = encode("the quick brown fox jumps over the lazy dog", v);
  const auto none = apply_mlm_masking(seq, v.size(), 1, 0.0);
  CHECK(none.positions.empty());
  CHECK(none.sequence.ids == seq.ids);
  const auto a = apply_mlm_masking(seq, v.size(), 9, 0.5), b = apply_mlm_masking(seq, v.size(), 9, 0.5);
  CHECK(a.positions == b.positions);
  CHECK(a.sequence.ids == b.sequence.ids);
  const auto all = apply_mlm_masking(seq, v.size(), 3, 1.0);
  const auto eligible = std::count_if(seq.ids.begin(), seq.ids.end(), [](TokenId id) { return !Vocabulary::is_special(id); });
  CHECK(all.positions.size() == static_cast<std::size_t>(eligible));
  for (auto p : all.positions) CHECK_FALSE(Vocabulary::is_special(seq.ids[static_cast<std::size_t>(p)]));
  for (std::size_t i = 0; i < all.positions.size(); ++i) {
    CHECK(all.targets[i] == seq.ids[static_cast<std::size_t>(all.positions[i])]);
  }
  CHECK_THROWS_AS(apply_mlm_masking(seq, v.size(), 1, 0.15, {0.5, 0.1, 0.1}), ConfigError);
  CHECK_THROWS_AS(apply_mlm_masking(seq, v.size(), 1, 1.5), ConfigError);
}

TEST_CASE("masked count follows the binomial sampling distribution") {
  // 100,000 candidate positions split over many sequences.
  TokenSequence seq;
  seq.ids.push_back(kCls);
  seq.word_index.push_back(-1);
  for (int i = 0; i < 1000; ++i) {
    seq.ids.push_back(kNumSpecial + i % 20);
    seq.word_index.push_back(i);
  }
  seq.ids.push_back(kSep);
  seq.word_index.push_back(1000);
  std::size_t selected = 0, masked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto m = apply_mlm_masking(seq, 40, s, 0.15);
    selected += m.positions.size();
    for (auto p : m.positions) masked += m.sequence.ids[static_cast<std::size_t>(p)] == kMask;
  }
  const boost::math::binomial_distribution<double> sel(100000, 0.15);
  CHECK(static_cast<double>(selected) >= boost::math::quantile(sel, 0.005));
  CHECK(static_cast<double>(selected) <= boost::math::quantile(sel, 0.995));
  const boost::math::binomial_distribution<double> msk(static_cast<double>(selected), 0.8);
  CHECK(static_cast<double>(masked) >= boost::math::quantile(msk, 0.005));
  CHECK(static_cast<double>(masked) <= boost::math::quantile(msk, 0.995));
}
