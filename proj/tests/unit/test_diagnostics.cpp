// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "tempadapt/diagnostics.hpp"
#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

using namespace tempadapt;
using namespace tempadapt::diag;

namespace {

std::vector<model::TokenLossRecord> random_losses(Rng& rng, std::size_t n) {
  std::vector<model::TokenLossRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    model::TokenLossRecord r;
    r.doc_id = "d" + std::to_string(i / 7);
    r.period = "2020-0" + std::to_string(1 + i % 3);
    r.position = static_cast<std::int32_t>(1 + i % 7);
    r.word_index = static_cast<std::int32_t>(i % 7);
    r.subword = static_cast<tok::TokenId>(10 + rng.below(50));
    r.loss = 6 * rng.uniform();
    out.push_back(r);
  }
  return out;
}

std::vector<MaskedTokenRecord> records_with(const std::vector<std::pair<Pos, double>>& spec) {
  std::vector<MaskedTokenRecord> out;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    MaskedTokenRecord r;
    r.doc_id = "d" + std::to_string(i);
    r.period = "p";
    r.position = static_cast<std::int32_t>(i);
    r.pos = spec[i].first;
    r.delta = spec[i].second;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("subwords inherit the source word tag") {
  std::vector<std::string> texts;
  for (int i = 0; i < 30; ++i) texts.push_back("the cat saw a dog");
  texts.push_back("kavanaugh");
  const auto vocab = tok::train_vocabulary(texts, tok::character_inventory(texts) + 20);
  const auto one = tok::encode("cat", vocab);
  const std::vector<Pos> noun{Pos::kNoun};
  const auto a = align_pos_to_subwords(noun, one);
  CHECK(a.front() == Pos::kNone);
  CHECK(a.back() == Pos::kNone);
  CHECK(std::count(a.begin(), a.end(), Pos::kNoun) == static_cast<long>(one.size() - 2));

  const auto name = tok::encode("kavanaugh", vocab);
  REQUIRE(name.size() > 3);  // split into several pieces
  const std::vector<Pos> propn{Pos::kPropn};
  const auto b = align_pos_to_subwords(propn, name);
  for (std::size_t i = 1; i + 1 < b.size(); ++i) CHECK(b[i] == Pos::kPropn);

  const auto two = tok::encode("cat dog", vocab);
  CHECK_THROWS_AS(align_pos_to_subwords(noun, two), DataError);
}

TEST_CASE("loss deltas: self-comparison, antisymmetry, aggregate consistency") {
  Rng rng(31);
  const auto a = random_losses(rng, 200);
  auto b = a;
  for (auto& r : b) r.loss = 6 * rng.uniform();

  for (const auto& r : loss_deltas(a, a)) CHECK(r.delta == 0.0);

  const auto ab = loss_deltas(a, b), ba = loss_deltas(b, a);
  REQUIRE(ab.size() == a.size());
  for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i].delta == -ba[i].delta);

  double sum = 0, ma = 0, mb = 0;
  for (const auto& r : ab) sum += r.delta;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i].loss / static_cast<double>(a.size());
    mb += b[i].loss / static_cast<double>(b.size());
  }
  CHECK(std::abs(sum - static_cast<double>(a.size()) * (ma - mb)) < 1e-6);
}

TEST_CASE("loss deltas attach tags and reject misaligned inputs") {
  Rng rng(32);
  const auto a = random_losses(rng, 14);
  TagLookup tags;
  tags["d0"] = std::vector<Pos>(7, Pos::kVerb);
  const auto d = loss_deltas(a, a, &tags);
  CHECK(d[0].pos == Pos::kVerb);
  CHECK(d[7].pos == Pos::kNone);

  auto shifted = a;
  shifted[5].position += 1;
  CHECK_THROWS_AS(loss_deltas(a, shifted), DataError);
  auto shorter = a;
  shorter.pop_back();
  CHECK_THROWS_AS(loss_deltas(a, shorter), DataError);
}

TEST_CASE("contribution shares") {
  const auto one = contribution_by_pos(records_with({{Pos::kNoun, 1}, {Pos::kNoun, 2}}));
  for (const auto& c : one) CHECK(c.contribution == (c.pos == Pos::kNoun ? 100.0 : 0.0));

  const auto two = contribution_by_pos(records_with({{Pos::kPropn, 2}, {Pos::kPropn, 1}, {Pos::kVerb, 1}}));
  for (const auto& c : two) {
    if (c.pos == Pos::kPropn) {
      CHECK(c.contribution == doctest::Approx(75.0));
      CHECK(c.frequency == doctest::Approx(200.0 / 3.0));
    }
    if (c.pos == Pos::kVerb) CHECK(c.contribution == doctest::Approx(25.0));
  }
  CHECK_THROWS_AS(contribution_by_pos(records_with({{Pos::kNoun, 1}, {Pos::kVerb, -1}})), DataError);
}

TEST_CASE("contributions decompose the total and ignore record order") {
  Rng rng(33);
  std::vector<std::pair<Pos, double>> spec;
  for (int i = 0; i < 500; ++i) spec.emplace_back(kAllPos[rng.below(8)], rng.uniform() - 0.3);
  auto records = records_with(spec);
  const auto before = contribution_by_pos(records);
  double total = 0, parts = 0, shares = 0;
  for (const auto& [p, d] : spec) total += d;
  for (const auto& c : before) {
    parts += c.delta_sum;
    shares += c.contribution;
  }
  CHECK(std::abs(parts - total) < 1e-9);
  CHECK(std::abs(shares - 100.0) < 1e-9);
  rng.shuffle(records);
  const auto after = contribution_by_pos(records);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i].contribution - before[i].contribution) < 1e-9);
}

TEST_CASE("decile bins and shares") {
  const auto s = decile_sizes(23);
  CHECK(std::vector<std::size_t>(s.begin(), s.end()) == std::vector<std::size_t>{3, 3, 3, 2, 2, 2, 2, 2, 2, 2});

  std::vector<std::pair<Pos, double>> spike(10, {Pos::kPropn, 0.0});
  spike[4].second = 10;
  const auto d = decile_contributions(records_with(spike));
  CHECK(d.share[0] == 100.0);
  for (std::size_t i = 1; i < 10; ++i) CHECK(d.share[i] == 0.0);

  const auto flat = decile_contributions(records_with(std::vector<std::pair<Pos, double>>(40, {Pos::kPropn, 0.5})));
  for (double x : flat.share) CHECK(x == doctest::Approx(10.0));

  CHECK_THROWS_AS(decile_contributions(records_with(std::vector<std::pair<Pos, double>>(9, {Pos::kNoun, 1}))),
                  DataError);
}

TEST_CASE("decile shares sum to 100 and are order invariant") {
  Rng rng(34);
  std::vector<std::pair<Pos, double>> spec;
  for (int i = 0; i < 137; ++i) spec.emplace_back(Pos::kPropn, rng.uniform() - 0.2);
  auto records = records_with(spec);
  const auto a = decile_contributions(records);
  CHECK(std::abs(std::accumulate(a.share.begin(), a.share.end(), 0.0) - 100.0) < 0.01);
  rng.shuffle(records);
  const auto b = decile_contributions(records);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a.share[i] - b.share[i]) < 1e-9);
  for (std::size_t i = 1; i < 10; ++i) CHECK(a.share[i - 1] >= a.share[i] - 1e-12);
}

TEST_CASE("top improved tokens are sorted with deterministic ties") {
  const auto vocab = tok::train_vocabulary(std::vector<std::string>{"alpha beta"}, 40);
  auto records = records_with({{Pos::kNoun, 1}, {Pos::kNoun, 3}, {Pos::kNoun, 2}, {Pos::kNoun, 3}});
  const auto all = top_improved_tokens(records, 10, vocab);
  REQUIRE(all.size() == 4);
  CHECK(all[0].record.delta == 3);
  CHECK(all[0].record.doc_id == "d1");
  CHECK(all[1].record.doc_id == "d3");
  CHECK(all[2].record.delta == 2);
  CHECK(all[3].record.delta == 1);
  CHECK(top_improved_tokens(records, 2, vocab).size() == 2);
  CHECK_THROWS_AS(top_improved_tokens(records, 0, vocab), ConfigError);

  std::map<std::string, std::string> texts{{"d1", "alpha beta"}};
  records[1].word_index = 1;
  CHECK(top_improved_tokens(records, 1, vocab, &texts)[0].word == "beta");
}

TEST_CASE("distinctiveness table matches a naive recount") {
  Rng rng(35);
  const std::vector<std::string> words{"ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen", "zanzibarian"};
  const std::vector<std::string> classes{"c0", "c1", "c2"};
  std::vector<LabelledDocument> docs;
  TagLookup tags;
  std::vector<std::string> texts;
  for (int i = 0; i < 120; ++i) {
    LabelledDocument d;
    d.id = "doc" + std::to_string(i);
    d.period = i % 2 ? "p1" : "p2";
    d.label = classes[rng.below(3)];
    std::vector<Pos> t;
    for (int w = 0; w < 5; ++w) {
      const auto k = rng.below(words.size());
      d.text += (w ? " " : "") + words[k];
      // The same word can appear under two tags.
      t.push_back(k % 2 && rng.bernoulli(0.3) ? Pos::kVerb : Pos::kNoun);
    }
    tags[d.id] = t;
    texts.push_back(d.text);
    docs.push_back(d);
  }
  const auto vocab = tok::train_vocabulary(texts, tok::character_inventory(texts) + 30);

  // Candidate records: every subword of a handful of docs.
  std::vector<MaskedTokenRecord> records;
  for (int i = 0; i < 12; ++i) {
    const auto& d = docs[static_cast<std::size_t>(i)];
    const auto seq = tok::encode(d.text, vocab);
    const auto pos = align_pos_to_subwords(tags[d.id], seq);
    for (std::size_t j = 1; j + 1 < seq.size(); ++j) {
      MaskedTokenRecord r;
      r.doc_id = d.id;
      r.period = d.period;
      r.subword = seq.ids[j];
      r.word_index = seq.word_index[j];
      r.position = static_cast<std::int32_t>(j);
      r.pos = pos[j];
      r.delta = rng.uniform();
      records.push_back(r);
    }
  }

  const auto table = distinctiveness_table(records, docs, vocab, classes, &tags);
  REQUIRE(table.rows.size() == 3);

  std::vector<std::size_t> subwords(3, 0), comments(3, 0);
  std::set<std::pair<tok::TokenId, std::string>> done;
  for (const auto& r : rank_by_delta(records)) {
    if (!done.insert({r.subword, r.period}).second) continue;
    std::set<std::string> used_in;
    std::size_t n = 0;
    for (const auto& d : docs) {
      if (d.period != r.period) continue;
      const auto seq = tok::encode(d.text, vocab);
      bool hit = false;
      for (std::size_t j = 0; j < seq.size(); ++j) {
        const auto w = seq.word_index[j];
        hit = hit || (seq.ids[j] == r.subword && w >= 0 && static_cast<std::size_t>(w) < tags[d.id].size() &&
                      tags[d.id][static_cast<std::size_t>(w)] == r.pos);
      }
      if (hit) {
        used_in.insert(d.label);
        ++n;
      }
    }
    REQUIRE(!used_in.empty());
    ++subwords[used_in.size() - 1];
    comments[used_in.size() - 1] += n;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(table.rows[k].classes == k + 1);
    CHECK(table.rows[k].subwords == subwords[k]);
    CHECK(table.rows[k].comments == comments[k]);
  }
}

TEST_CASE("distinctiveness average frequency") {
  DistinctivenessRow row{1, 1403, 1789};
  CHECK(std::abs(row.avg_frequency() - 1.28) < 0.005);
  DistinctivenessRow single{1, 1, 1};
  CHECK(single.avg_frequency() == 1.0);
  CHECK(DistinctivenessRow{2, 0, 0}.avg_frequency() == 0.0);
}

TEST_CASE("distinctiveness rejects unlabelled documents") {
  const auto vocab = tok::train_vocabulary(std::vector<std::string>{"ant bee"}, 40);
  auto records = records_with({{Pos::kNoun, 1}});
  records[0].subword = tok::encode("ant", vocab).ids[1];
  std::vector<LabelledDocument> docs{{"x", "p", "ant", ""}};
  CHECK_THROWS_AS(distinctiveness_table(records, docs, vocab, {"c0"}), DataError);
}

TEST_CASE("records CSV round trip") {
  const auto vocab = tok::train_vocabulary(std::vector<std::string>{"ant, bee \"cat\""}, 60);
  Rng rng(36);
  auto records = records_with({{Pos::kNoun, 0.125}, {Pos::kPropn, -2.5}, {Pos::kNone, 3}});
  for (auto& r : records) {
    r.subword = static_cast<tok::TokenId>(tok::encode("ant", vocab).ids[1]);
    r.loss_control = rng.uniform();
    r.loss_candidate = r.loss_control - r.delta;
    r.word_index = 2;
  }
  records[1].doc_id = "has,comma";
  const auto back = parse_records_csv(records_csv(records, vocab), vocab);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].doc_id == records[i].doc_id);
    CHECK(back[i].pos == records[i].pos);
    CHECK(back[i].subword == records[i].subword);
    CHECK(back[i].position == records[i].position);
    CHECK(std::abs(back[i].delta - records[i].delta) < 1e-9);
  }
  CHECK(parse_csv_line(csv_field("a\"b,c") + ",d") == std::vector<std::string>{"a\"b,c", "d"});
}
