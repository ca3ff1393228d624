// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "tempadapt/corpus.hpp"
#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

using namespace tempadapt;
using namespace tempadapt::corpus;
namespace fs = std::filesystem;

namespace {

fs::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
  const auto p = fs::temp_directory_path() / ("tempadapt_corpus_" + name);
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
  return p;
}

Document doc(std::string id, std::string text, std::int64_t ts, std::optional<std::string> label = std::nullopt) {
  Document d;
  d.id = std::move(id);
  d.text = std::move(text);
  d.timestamp = ts;
  d.source_label = std::move(label);
  return d;
}

constexpr std::int64_t kMar2020 = 1583020800;  // 2020-03-01T00:00:00Z

}  // namespace

TEST_CASE("ingest maps fields and counts malformed records") {
  const auto p = write_lines("ingest.jsonl", {R"({"body":"hi","created_utc":1583020800,"sub":"x"})",
                                              R"({"body":"no time","sub":"x"})", "not json at all",
                                              R"({"body":"again","created_utc":1583020801,"sub":"y"})"});
  const auto map = parse_field_map("text=body,timestamp=created_utc,source_label=sub");
  const auto r = ingest(p, map);
  REQUIRE(r.documents.size() == 2);
  CHECK(r.malformed == 2);
  CHECK(r.documents[0].text == "hi");
  CHECK(r.documents[0].source_label == "x");
  CHECK(period_of(r.documents[0].timestamp) == "2020-03");
  fs::remove(p);
}

TEST_CASE("ingest of N well-formed records yields N documents") {
  std::vector<std::string> lines;
  for (int i = 0; i < 57; ++i) {
    lines.push_back(R"({"t":"doc )" + std::to_string(i) + R"(","ts":)" + std::to_string(kMar2020 + i * 86400) + "}");
  }
  const auto p = write_lines("many.jsonl", lines);
  const auto r = ingest(p, parse_field_map("text=t,timestamp=ts"));
  CHECK(r.documents.size() == 57);
  CHECK(r.malformed == 0);
  fs::remove(p);
}

TEST_CASE("field maps and missing inputs") {
  CHECK_THROWS_AS(parse_field_map("text=body"), ConfigError);
  CHECK_THROWS_AS(parse_field_map("timestamp=ts"), ConfigError);
  CHECK_THROWS_AS(parse_field_map("text=body,timestamp=ts,colour=c"), ConfigError);
  CHECK_THROWS_AS(ingest("/nonexistent/path.jsonl", parse_field_map("text=a,timestamp=b")), IoError);
}

TEST_CASE("normalisation") {
  CHECK(normalize_text("see https://a.b/c now") == "see [URL] now");
  CHECK(normalize_text("a\n\n  b") == "a b");
  CHECK(normalize_text("plain text") == "plain text");
  CHECK(normalize_text("nice \xF0\x9F\x98\x80 day") == "nice [EMOJI] day");
  const std::vector<std::string> samples{"  x\ty  ", "go www.example.org/x?y=1 ok", "\xF0\x9F\x91\x8D\xF0\x9F\x8F\xBD!",
                                         "caf\xC3\xA9  \n  bar", ""};
  for (const auto& s : samples) CHECK(normalize_text(normalize_text(s)) == normalize_text(s));
}

TEST_CASE("filters") {
  std::vector<Document> docs{doc("1", "[deleted]", kMar2020), doc("2", "hello there", kMar2020),
                             doc("3", "buy now", kMar2020), doc("4", "ok", kMar2020)};
  docs[2].author = "AutoModerator";
  const auto r = filter_documents(docs, parse_filters("deleted,bots=AutoModerator,min-words=2"));
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0] == docs[1]);
  REQUIRE(r.log.size() == 3);
  CHECK(r.log[0].removed == 1);
  CHECK(r.log[1].removed == 1);
  CHECK(r.log[2].removed == 1);
  CHECK_THROWS_AS(parse_filters("lang"), ConfigError);
  CHECK_THROWS_AS(parse_filters("sparkle"), ConfigError);
}

TEST_CASE("bot repeat heuristic removes authors posting the same text") {
  std::vector<Document> docs;
  for (int i = 0; i < 4; ++i) {
    auto d = doc(std::to_string(i), "I am a bot", kMar2020 + i);
    d.author = "spammer";
    docs.push_back(d);
  }
  docs.push_back(doc("h", "I am a bot", kMar2020));
  docs.back().author = "human";
  const auto r = filter_documents(docs, parse_filters("bot-repeat=3"));
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0].author == "human");
}

TEST_CASE("monthly partition is a disjoint cover with half-open bounds") {
  std::vector<Document> docs;
  const auto [start, end] = period_bounds("2017-03");
  docs.push_back(doc("a", "x", start));
  docs.push_back(doc("b", "x", end - 1));
  docs.push_back(doc("c", "x", end));
  docs.push_back(doc("d", "x", period_bounds("2017-05").first + 5));
  const auto slices = partition_by_period(docs);
  REQUIRE(slices.size() == 3);
  CHECK(slices[0].period_id == "2017-03");
  CHECK(slices[0].documents.size() == 2);
  CHECK(slices[1].period_id == "2017-04");
  CHECK(slices[2].period_id == "2017-05");
  std::size_t total = 0;
  for (const auto& s : slices) total += s.documents.size();
  CHECK(total == docs.size());
  CHECK(shift_period("2017-12", 1) == "2018-01");
  CHECK(shift_period("2018-01", -13) == "2016-12");
  CHECK(partition_by_period({doc("a", "x", kMar2020), doc("b", "y", kMar2020 + 9)}).size() == 1);
}

TEST_CASE("deduplication is per slice and keeps the earliest") {
  TimeSlice s{"2020-03", {doc("late", "same text", kMar2020 + 10), doc("early", "same  text", kMar2020),
                          doc("other", "different", kMar2020 + 5)}};
  const auto r = deduplicate(s);
  CHECK(r.removed == 1);
  REQUIRE(r.slice.documents.size() == 2);
  CHECK(std::any_of(r.slice.documents.begin(), r.slice.documents.end(), [](const Document& d) { return d.id == "early"; }));
  TimeSlice distinct{"2020-03", {doc("a", "one", kMar2020), doc("b", "two", kMar2020)}};
  CHECK(deduplicate(distinct).slice.documents == distinct.documents);

  // Identical text in two months survives in both.
  const auto slices = partition_by_period({doc("x", "repeat", kMar2020), doc("y", "repeat", kMar2020 + 40 * 86400)});
  REQUIRE(slices.size() == 2);
  for (const auto& sl : slices) CHECK(deduplicate(sl).slice.documents.size() == 1);
}

TEST_CASE("balanced sampling counts, determinism and shortfall") {
  TimeSlice s{"2020-03", {}};
  for (int i = 0; i < 500; ++i) {
    s.documents.push_back(doc("d" + std::to_string(i), "t" + std::to_string(i), kMar2020, "c" + std::to_string(i % 5)));
  }
  const auto a = sample_balanced(s, 250, true, 7);
  std::map<std::string, int> per;
  for (const auto& d : a.documents) ++per[*d.source_label];
  CHECK(per.size() == 5);
  for (const auto& [k, v] : per) CHECK(v == 50);
  CHECK(sample_balanced(s, 250, true, 7).documents == a.documents);
  CHECK(sample_balanced(s, 250, true, 8).documents != a.documents);

  const auto whole = sample_balanced(s, 500, false, 3);
  CHECK(whole.documents.size() == 500);
  auto ids = [](const TimeSlice& t) {
    std::vector<std::string> v;
    for (const auto& d : t.documents) v.push_back(d.id);
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(ids(whole) == ids(s));

  CHECK_THROWS_AS(sample_balanced(s, 1000, true, 1), DataError);
}

TEST_CASE("vocabulary extraction and jaccard") {
  const std::vector<std::string> two{"a b", "b c"};
  CHECK(extract_vocabulary(two) == WordSet{"a", "b", "c"});
  CHECK(extract_vocabulary(std::vector<std::string>{}).empty());
  CHECK(extract_vocabulary(std::vector<std::string>{"A a"}) == WordSet{"a"});
  const WordSet v{"x", "y"};
  CHECK(jaccard_similarity(v, v) == 1.0);
  CHECK(jaccard_similarity({"a"}, {"b"}) == 0.0);
  CHECK(jaccard_similarity({"a", "b", "c"}, {"b", "c", "d"}) == 0.5);
  CHECK(jaccard_similarity({"a", "b"}, {"b"}) == jaccard_similarity({"b"}, {"a", "b"}));
}

TEST_CASE("corpus directory round trip and manifest verification") {
  const auto dir = fs::temp_directory_path() / "tempadapt_corpus_rt";
  fs::remove_all(dir);
  Corpus c;
  c.slices = partition_by_period({doc("a", "one, \"two\"", kMar2020, "x"), doc("b", "three", kMar2020 + 40 * 86400)});
  c.slices[0].documents[0].split_role = SplitRole::kTest;
  c.manifest.corpus_id = "rt";
  for (const auto& s : c.slices) c.manifest.periods.push_back(s.period_id);
  c.manifest.counts = count_documents(c.slices);
  write_corpus(dir, c);
  const auto back = read_corpus(dir);
  REQUIRE(back.slices.size() == 2);
  CHECK(back.slices[0].documents == c.slices[0].documents);
  CHECK(back.slice("2020-04").documents.size() == 1);
  CHECK(select_role(back.slice("2020-03"), SplitRole::kTest).size() == 1);

  auto bad = c.manifest;
  bad.counts["2020-03"]["test"]["x"] = 9;
  CHECK_THROWS_AS(verify_manifest(bad, c.slices), IntegrityError);
  fs::remove_all(dir);
}
