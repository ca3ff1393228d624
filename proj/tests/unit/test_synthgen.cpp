// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <boost/math/distributions/poisson.hpp>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "tempadapt/error.hpp"
#include "tempadapt/synthgen.hpp"
#include "tempadapt/tokenizer.hpp"

using namespace tempadapt;
using namespace tempadapt::synth;
using corpus::SplitRole;

namespace {

GeneratorSpec small_spec(std::uint64_t seed = 5) {
  GeneratorSpec s;
  s.n_periods = 3;
  s.classes = {"a", "b"};
  s.docs_per_period_per_class = {{SplitRole::kAdaptation, 100}, {SplitRole::kFinetune, 40}, {SplitRole::kTest, 20}};
  s.background_vocab_size = 300;
  s.seed = seed;
  add_event_schedule(s, 2, 60, 0.5);
  return s;
}

std::size_t docs_in(const corpus::TimeSlice& slice, SplitRole role) { return corpus::select_role(slice, role).size(); }

}  // namespace

TEST_CASE("burst profile closed forms") {
  EventSpec e;
  e.onset_period = 2;
  e.peak_rate = 100;
  e.decay_factor = 0.6;
  CHECK(burst_profile(e, 1, 6) == 0.0);
  CHECK(burst_profile(e, 2, 6) == 100.0);
  CHECK(burst_profile(e, 4, 6) == doctest::Approx(36.0).epsilon(1e-12));
  CHECK_THROWS_AS(burst_profile(e, 6, 6), DataError);
  CHECK_THROWS_AS(burst_profile(e, -1, 6), DataError);
}

TEST_CASE("invalid specs are rejected") {
  auto s = small_spec();
  s.n_periods = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.classes = {"only"};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.events[0].onset_period = 3;
  CHECK_THROWS_AS(generate_corpus(s), ConfigError);
  s = small_spec();
  s.class_cues.drift_half_life = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("corpus cardinality comes straight from the spec") {
  auto s = small_spec();
  s.docs_per_period_per_class[SplitRole::kAdaptation] = 100;
  const auto c = generate_corpus(s);
  REQUIRE(c.corpus.slices.size() == 3);
  std::size_t adaptation = 0;
  for (const auto& [period, roles] : c.corpus.manifest.counts) {
    for (const auto& [label, n] : roles.at("adaptation")) adaptation += n;
  }
  CHECK(adaptation == 600);
  for (const auto& sl : c.corpus.slices) {
    CHECK(docs_in(sl, SplitRole::kAdaptation) == 200);
    CHECK(docs_in(sl, SplitRole::kTest) == 40);
  }
  CHECK_NOTHROW(corpus::verify_manifest(c.corpus.manifest, c.corpus.slices));
}

TEST_CASE("generation is deterministic in the seed") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = generate_corpus(small_spec()), b = generate_corpus(small_spec());
  write_synthetic(dir / "tempadapt_syn_a", a);
  write_synthetic(dir / "tempadapt_syn_b", b);
  for (const auto& sl : a.corpus.slices) {
    const auto rel = std::filesystem::path("slices") / (sl.period_id + ".jsonl");
    std::ifstream fa(dir / "tempadapt_syn_a" / rel), fb(dir / "tempadapt_syn_b" / rel);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }
  CHECK(read_ledger(dir / "tempadapt_syn_a") == a.ledger);
  CHECK(read_gold_tags(dir / "tempadapt_syn_a") == a.tags);
  CHECK(generate_corpus(small_spec(6)).corpus.slices[0].documents != a.corpus.slices[0].documents);
  std::filesystem::remove_all(dir / "tempadapt_syn_a");
  std::filesystem::remove_all(dir / "tempadapt_syn_b");
}

TEST_CASE("ledger matches a recount and events never precede onset") {
  const auto c = generate_corpus(small_spec());
  const auto tokens = c.ledger.tokens();
  CHECK(tokens.size() == 6);
  CHECK(recount_ledger(c.corpus, tokens) == c.ledger);
  for (const auto& e : c.spec.events) {
    for (int p = 0; p < e.onset_period; ++p) CHECK(c.ledger.count(e.token, c.corpus.slices[p].period_id) == 0);
    CHECK(c.ledger.count(e.token, c.corpus.slices[e.onset_period].period_id) > 0);
  }
}

TEST_CASE("realised burst count is within the Poisson 99% interval") {
  GeneratorSpec s = small_spec(11);
  s.events.clear();
  s.docs_per_period_per_class = {{SplitRole::kAdaptation, 400}, {SplitRole::kFinetune, 60}, {SplitRole::kTest, 40}};
  EventSpec e;
  e.token = "zorbleton";
  e.onset_period = 1;
  e.peak_rate = 100;
  e.decay_factor = 0.5;
  s.events.push_back(e);
  const auto c = generate_corpus(s);
  const auto& slice = c.corpus.slices[1];
  const double mean = 100.0 * static_cast<double>(slice.documents.size()) / 1000.0;  // 1,000 docs
  const boost::math::poisson_distribution<double> pois(mean);
  const auto n = static_cast<double>(c.ledger.count("zorbleton", slice.period_id));
  CHECK(n >= boost::math::quantile(pois, 0.005));
  CHECK(n <= boost::math::quantile(pois, 0.995));
}

TEST_CASE("shared events spread over classes; the discriminative variant confines them") {
  auto s = small_spec();
  s.events.clear();
  add_event_schedule(s, 2, 80, 0.5);
  REQUIRE(s.events.size() == 6);
  const auto shared = generate_corpus(s);
  for (const auto& [key, n] : shared.ledger.entries()) {
    const auto& [tok, period, cls] = key;
    if (shared.ledger.count(tok, period) >= 2 * s.classes.size()) CHECK(shared.ledger.classes(tok, period).size() >= 2);
  }

  const auto v = make_discriminative_variant(s);
  CHECK(v.seed == s.seed);
  std::map<std::string, int> per_class;
  for (const auto& e : v.events) {
    REQUIRE_FALSE(e.shared());
    ++per_class[*e.single_class];
  }
  CHECK(per_class["a"] == 3);
  CHECK(per_class["b"] == 3);
  const auto conf = generate_corpus(v);
  const auto recount = recount_ledger(conf.corpus, conf.ledger.tokens());
  for (const auto& e : v.events) {
    for (const auto& sl : conf.corpus.slices) {
      const auto cls = recount.classes(e.token, sl.period_id);
      CHECK(cls.size() <= 1);
      if (!cls.empty()) CHECK(*cls.begin() == *e.single_class);
    }
  }

  GeneratorSpec none = small_spec();
  none.events.clear();
  CHECK(make_discriminative_variant(none).to_json() == none.to_json());
}

TEST_CASE("event tokens are proper nouns outside the background vocabulary") {
  const auto c = generate_corpus(small_spec());
  const auto bg = generate_background_texts(c.spec, 500, 3);
  const auto bg_words = corpus::extract_vocabulary(bg);
  for (const auto& e : c.spec.events) CHECK_FALSE(bg_words.contains(e.token));
  for (const auto& sl : c.corpus.slices) {
    for (const auto& d : sl.documents) {
      const auto words = tok::pre_tokenize(d.text);
      const auto& tags = c.tags.at(d.id);
      REQUIRE(tags.size() == words.size());
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (c.ledger.tokens().contains(words[i])) CHECK(tags[i] == Pos::kPropn);
      }
    }
  }
}

TEST_CASE("background tag mix follows the stratum masses") {
  auto s = small_spec();
  s.topics.rate = 0;  // topic words are open-class only and would shift the mix
  std::vector<std::vector<Pos>> tags;
  generate_background_texts(s, 7000, 21, &tags);
  std::map<Pos, double> count;
  double total = 0;
  for (const auto& doc : tags) {
    for (auto p : doc) {
      count[p] += 1;
      total += 1;
    }
  }
  REQUIRE(total >= 1e5);
  const std::map<Pos, double> mass{{Pos::kDet, 0.12}, {Pos::kPron, 0.10}, {Pos::kConj, 0.08}, {Pos::kNoun, 0.28},
                                   {Pos::kVerb, 0.20}, {Pos::kAdj, 0.10},  {Pos::kAdv, 0.07},  {Pos::kPropn, 0.05}};
  for (const auto& [p, m] : mass) CHECK(std::abs(count[p] / total - m) <= 0.02);
}

TEST_CASE("spec JSON round trip") {
  auto s = small_spec();
  s.topics = {12, 20, 0.3};
  s.events[1].single_class = "b";
  const auto back = GeneratorSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.topics.count == 12);
  CHECK(back.events[1].single_class == "b");
}
