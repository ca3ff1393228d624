// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::corpus {

using nlohmann::json;

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kAdaptation:
      return "adaptation";
    case SplitRole::kFinetune:
      return "finetune";
    case SplitRole::kTest:
      return "test";
  }
  return "adaptation";
}

SplitRole parse_split_role(std::string_view name) {
  if (name == "adaptation") return SplitRole::kAdaptation;
  if (name == "finetune") return SplitRole::kFinetune;
  if (name == "test") return SplitRole::kTest;
  throw DataError("unknown split role '" + std::string(name) + "'");
}

json CorpusManifest::to_json() const {
  json j;
  j["format"] = "tempadapt-corpus/1";
  j["corpus_id"] = corpus_id;
  j["periods"] = periods;
  j["counts"] = counts;
  json log = json::array();
  for (const auto& e : preprocessing) log.push_back({{"filter", e.filter}, {"removed", e.removed}});
  j["preprocessing"] = log;
  j["seed"] = seed;
  j["balanced"] = balanced;
  j["provenance"] = provenance;
  return j;
}

CorpusManifest CorpusManifest::from_json(const json& j) {
  CorpusManifest m;
  try {
    m.corpus_id = j.at("corpus_id").get<std::string>();
    m.periods = j.at("periods").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<CountTable>();
    for (const auto& e : j.at("preprocessing")) {
      m.preprocessing.push_back({e.at("filter").get<std::string>(), e.at("removed").get<std::size_t>()});
    }
    m.seed = j.value("seed", std::uint64_t{0});
    m.balanced = j.value("balanced", false);
    m.provenance = j.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed corpus manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ingestion

FieldMap parse_field_map(std::string_view spec) {
  FieldMap map;
  for (const auto& item : split(spec, ',')) {
    const auto entry = trim(item);
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ConfigError("field map entry '" + entry + "' is not key=value");
    const auto key = trim(entry.substr(0, eq));
    const auto value = trim(entry.substr(eq + 1));
    if (value.empty()) throw ConfigError("field map entry '" + key + "' has no source field");
    if (key == "text") {
      map.text = value;
    } else if (key == "timestamp") {
      map.timestamp = value;
    } else if (key == "id") {
      map.id = value;
    } else if (key == "source_label") {
      map.source_label = value;
    } else if (key == "author") {
      map.author = value;
    } else if (key == "split_role") {
      map.split_role = value;
    } else {
      throw ConfigError("unknown field map key '" + key + "'");
    }
  }
  if (map.text.empty()) throw ConfigError("field map lacks a 'text' entry");
  if (map.timestamp.empty()) throw ConfigError("field map lacks a 'timestamp' entry");
  return map;
}

namespace {

std::optional<std::string> scalar_as_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  return std::nullopt;
}

std::optional<std::int64_t> timestamp_of(const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) return static_cast<std::int64_t>(v.get<std::uint64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (!std::isfinite(d)) return std::nullopt;
    return static_cast<std::int64_t>(std::floor(d));
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.empty()) return std::nullopt;
    std::size_t pos = 0;
    try {
      const auto t = std::stoll(s, &pos);
      if (pos != s.size()) return std::nullopt;
      return t;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

DocumentReader::DocumentReader(const std::filesystem::path& path, FieldMap field_map, SplitRole default_role)
    : in_(path), map_(std::move(field_map)), default_role_(default_role) {
  if (!in_) throw IoError("cannot read " + path.string());
  if (map_.text.empty() || map_.timestamp.empty()) {
    throw ConfigError("field map must name the text and timestamp fields");
  }
}

std::optional<Document> DocumentReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (trim(line).empty()) continue;
    const json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded() || !rec.is_object()) {
      ++malformed_;
      continue;
    }
    const auto text_it = rec.find(map_.text);
    const auto ts_it = rec.find(map_.timestamp);
    if (text_it == rec.end() || !text_it->is_string() || ts_it == rec.end()) {
      ++malformed_;
      continue;
    }
    const auto ts = timestamp_of(*ts_it);
    if (!ts) {
      ++malformed_;
      continue;
    }
    Document doc;
    doc.text = text_it->get<std::string>();
    doc.timestamp = *ts;
    doc.split_role = default_role_;
    doc.id = "line-" + std::to_string(line_no_);
    if (map_.id) {
      if (auto it = rec.find(*map_.id); it != rec.end()) {
        if (auto s = scalar_as_string(*it)) doc.id = *s;
      }
    }
    if (map_.source_label) {
      if (auto it = rec.find(*map_.source_label); it != rec.end()) doc.source_label = scalar_as_string(*it);
    }
    if (map_.author) {
      if (auto it = rec.find(*map_.author); it != rec.end()) doc.author = scalar_as_string(*it);
    }
    if (map_.split_role) {
      if (auto it = rec.find(*map_.split_role); it != rec.end() && it->is_string()) {
        try {
          doc.split_role = parse_split_role(it->get<std::string>());
        } catch (const DataError&) {
          ++malformed_;
          continue;
        }
      }
    }
    return doc;
  }
  return std::nullopt;
}

IngestResult ingest(const std::filesystem::path& path, const FieldMap& field_map, SplitRole default_role) {
  DocumentReader reader(path, field_map, default_role);
  IngestResult result;
  while (auto doc = reader.next()) result.documents.push_back(std::move(*doc));
  result.malformed = reader.malformed();
  return result;
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

// Decodes one UTF-8 code point at text[i]; invalid bytes decode as themselves
// with length 1 so the function stays total.
char32_t decode_utf8(std::string_view text, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= text.size()) return -1;
    const auto b = static_cast<unsigned char>(text[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) {
      len = 2;
      return (char32_t(b0 & 0x1F) << 6) | char32_t(c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      len = 3;
      return (char32_t(b0 & 0x0F) << 12) | (char32_t(c1) << 6) | char32_t(c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      len = 4;
      return (char32_t(b0 & 0x07) << 18) | (char32_t(c1) << 12) | (char32_t(c2) << 6) | char32_t(c3);
    }
  }
  len = 1;
  return b0;
}

bool is_emoji_base(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) || cp == 0x231A ||
         cp == 0x231B || (cp >= 0x23E9 && cp <= 0x23FA) || cp == 0x2B50 || cp == 0x2B55 ||
         cp == 0x2B1B || cp == 0x2B1C || cp == 0x3030 || cp == 0x303D;
}

// Codepoints that only decorate a preceding emoji.
bool is_emoji_modifier(char32_t cp) {
  return cp == 0xFE0F || cp == 0xFE0E || cp == 0x20E3 || (cp >= 0x1F3FB && cp <= 0x1F3FF) ||
         (cp >= 0xE0020 && cp <= 0xE007F);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool starts_with_ci(std::string_view text, std::size_t i, std::string_view prefix) {
  if (text.size() - i < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(text[i + k])) != prefix[k]) return false;
  }
  return true;
}

bool url_starts_at(std::string_view text, std::size_t i) {
  if (starts_with_ci(text, i, "http://") || starts_with_ci(text, i, "https://")) return true;
  if (starts_with_ci(text, i, "www.") && i + 4 < text.size() && !is_space(text[i + 4])) {
    return i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
  }
  return false;
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  // First pass: placeholders, padded with spaces; second pass collapses.
  std::string staged;
  staged.reserve(raw.size() + 16);
  std::size_t i = 0;
  while (i < raw.size()) {
    if (url_starts_at(raw, i)) {
      while (i < raw.size() && !is_space(raw[i])) ++i;
      staged += " [URL] ";
      continue;
    }
    std::size_t len = 1;
    const char32_t cp = decode_utf8(raw, i, len);
    if (is_emoji_base(cp)) {
      const bool regional = cp >= 0x1F1E6 && cp <= 0x1F1FF;
      i += len;
      // Absorb modifiers, a paired regional indicator, and ZWJ-joined parts.
      while (i < raw.size()) {
        std::size_t nlen = 1;
        const char32_t next = decode_utf8(raw, i, nlen);
        if (is_emoji_modifier(next)) {
          i += nlen;
        } else if (regional && next >= 0x1F1E6 && next <= 0x1F1FF) {
          i += nlen;
        } else if (next == 0x200D && i + nlen < raw.size()) {
          std::size_t jlen = 1;
          const char32_t joined = decode_utf8(raw, i + nlen, jlen);
          if (!is_emoji_base(joined)) break;
          i += nlen + jlen;
        } else {
          break;
        }
      }
      staged += " [EMOJI] ";
      continue;
    }
    if (cp == 0xFE0F || cp == 0xFE0E || cp == 0x200D) {
      i += len;  // stray joiners and selectors are invisible; drop them
      continue;
    }
    staged.append(raw.substr(i, len));
    i += len;
  }

  std::string out;
  out.reserve(staged.size());
  bool pending_space = false;
  for (char c : staged) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering

bool AsciiRatioLanguage::accept(std::string_view text) const {
  std::size_t letters = 0, ascii = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = 1;
    const char32_t cp = decode_utf8(text, i, len);
    i += len;
    if (cp < 0x80) {
      if (std::isalpha(static_cast<int>(cp))) {
        ++letters;
        ++ascii;
      }
    } else if (cp >= 0xC0 && !is_emoji_base(cp)) {
      ++letters;
    }
  }
  if (letters == 0) return true;
  return static_cast<double>(ascii) / static_cast<double>(letters) >= min_ratio_;
}

std::shared_ptr<const LanguageClassifier> make_language_classifier(std::string_view name) {
  if (name == "passthrough") return std::make_shared<PassThroughLanguage>();
  if (name == "ascii") return std::make_shared<AsciiRatioLanguage>();
  throw ConfigError("unknown language classifier '" + std::string(name) + "'");
}

std::string filter_name(const Filter& filter) {
  struct Visitor {
    std::string operator()(const DeletedMarkerFilter&) const { return "deleted"; }
    std::string operator()(const BotAuthorFilter&) const { return "bots"; }
    std::string operator()(const LanguageFilter& f) const {
      return "language:" + (f.classifier ? f.classifier->name() : std::string("unset"));
    }
    std::string operator()(const MinLengthFilter& f) const { return "min-words:" + std::to_string(f.min_words); }
  };
  return std::visit(Visitor{}, filter);
}

std::vector<Filter> parse_filters(std::string_view list) {
  std::vector<Filter> filters;
  auto bot_filter = [&]() -> BotAuthorFilter& {
    for (auto& f : filters) {
      if (auto* b = std::get_if<BotAuthorFilter>(&f)) return *b;
    }
    filters.emplace_back(BotAuthorFilter{});
    return std::get<BotAuthorFilter>(filters.back());
  };
  auto to_count = [](const std::string& key, const std::string& v) -> std::size_t {
    try {
      std::size_t pos = 0;
      const auto n = std::stoull(v, &pos);
      if (pos == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError("filter '" + key + "' expects a count, got '" + v + "'");
  };
  for (const auto& raw : split(list, ',')) {
    const auto item = trim(raw);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    const auto key = eq == std::string::npos ? item : item.substr(0, eq);
    const auto value = eq == std::string::npos ? std::string() : item.substr(eq + 1);
    if (key == "deleted") {
      filters.emplace_back(DeletedMarkerFilter{});
    } else if (key == "bots") {
      for (const auto& a : split(value, '|')) {
        if (!trim(a).empty()) bot_filter().blocklist.insert(trim(a));
      }
    } else if (key == "bot-repeat") {
      bot_filter().repeat_threshold = to_count(key, value);
    } else if (key == "lang") {
      if (value.empty()) throw ConfigError("language filter requested without a classifier (use lang=NAME)");
      filters.emplace_back(LanguageFilter{make_language_classifier(value)});
    } else if (key == "min-words") {
      filters.emplace_back(MinLengthFilter{to_count(key, value)});
    } else {
      throw ConfigError("unknown filter '" + key + "'");
    }
  }
  return filters;
}

namespace {

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::string fold_case(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Decides per document whether the filter keeps it.
std::vector<bool> evaluate_filter(const Filter& filter, const std::vector<Document>& docs) {
  std::vector<bool> keep(docs.size(), true);
  if (const auto* f = std::get_if<DeletedMarkerFilter>(&filter)) {
    std::vector<std::string> markers;
    for (const auto& m : f->markers) markers.push_back(fold_case(trim(m)));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto t = fold_case(trim(docs[i].text));
      keep[i] = std::find(markers.begin(), markers.end(), t) == markers.end();
    }
  } else if (const auto* f = std::get_if<BotAuthorFilter>(&filter)) {
    std::set<std::string> bots = f->blocklist;
    if (f->repeat_threshold > 0) {
      std::map<std::pair<std::string, std::string>, std::size_t> repeats;
      for (const auto& d : docs) {
        if (!d.author) continue;
        if (++repeats[{*d.author, d.text}] >= f->repeat_threshold) bots.insert(*d.author);
      }
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
      keep[i] = !(docs[i].author && bots.contains(*docs[i].author));
    }
  } else if (const auto* f = std::get_if<LanguageFilter>(&filter)) {
    if (!f->classifier) throw ConfigError("language filter requested but no classifier is configured");
    for (std::size_t i = 0; i < docs.size(); ++i) keep[i] = f->classifier->accept(docs[i].text);
  } else if (const auto* f = std::get_if<MinLengthFilter>(&filter)) {
    for (std::size_t i = 0; i < docs.size(); ++i) keep[i] = word_count(docs[i].text) >= f->min_words;
  }
  return keep;
}

}  // namespace

FilterResult filter_documents(std::vector<Document> docs, const std::vector<Filter>& filters) {
  FilterResult result;
  for (const auto& filter : filters) {
    const auto keep = evaluate_filter(filter, docs);
    std::vector<Document> next;
    next.reserve(docs.size());
    std::size_t removed = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (keep[i]) {
        next.push_back(std::move(docs[i]));
      } else {
        ++removed;
      }
    }
    result.log.push_back({filter_name(filter), removed});
    docs = std::move(next);
  }
  result.kept = std::move(docs);
  return result;
}

// ---------------------------------------------------------------------------
// Periods

std::string period_of(std::int64_t timestamp) {
  using namespace std::chrono;
  const sys_seconds t{seconds{timestamp}};
  const year_month_day ymd{floor<days>(t)};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()));
  return buf;
}

namespace {

std::chrono::year_month parse_period(std::string_view period_id) {
  int y = 0;
  unsigned m = 0;
  char tail = 0;
  const std::string s(period_id);
  if (s.size() != 7 || std::sscanf(s.c_str(), "%4d-%2u%c", &y, &m, &tail) != 2 || m < 1 || m > 12) {
    throw DataError("malformed period id '" + s + "' (expected YYYY-MM)");
  }
  return std::chrono::year{y} / std::chrono::month{m};
}

std::string format_period(std::chrono::year_month ym) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u", static_cast<int>(ym.year()), static_cast<unsigned>(ym.month()));
  return buf;
}

}  // namespace

std::pair<std::int64_t, std::int64_t> period_bounds(std::string_view period_id) {
  using namespace std::chrono;
  const auto ym = parse_period(period_id);
  const auto start = sys_days{ym / 1};
  const auto end = sys_days{(ym + months{1}) / 1};
  return {duration_cast<seconds>(start.time_since_epoch()).count(),
          duration_cast<seconds>(end.time_since_epoch()).count()};
}

std::string shift_period(std::string_view period_id, int offset) {
  return format_period(parse_period(period_id) + std::chrono::months{offset});
}

std::vector<TimeSlice> partition_by_period(std::vector<Document> docs, Granularity) {
  std::map<std::string, TimeSlice> by_period;  // "YYYY-MM" sorts chronologically for years 0..9999
  for (auto& d : docs) {
    const auto p = period_of(d.timestamp);
    auto& slice = by_period[p];
    slice.period_id = p;
    slice.documents.push_back(std::move(d));
  }
  std::vector<TimeSlice> out;
  out.reserve(by_period.size());
  for (auto& [_, s] : by_period) out.push_back(std::move(s));
  return out;
}

DedupResult deduplicate(const TimeSlice& slice) {
  const auto& docs = slice.documents;
  std::vector<std::string> keys;
  keys.reserve(docs.size());
  for (const auto& d : docs) keys.push_back(normalize_text(d.text));
  // normalized text -> index of the earliest (timestamp, position) occurrence
  std::unordered_map<std::string_view, std::size_t> winner;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto [it, inserted] = winner.try_emplace(keys[i], i);
    if (!inserted && docs[i].timestamp < docs[it->second].timestamp) it->second = i;
  }
  DedupResult result;
  result.slice.period_id = slice.period_id;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (winner.at(keys[i]) == i) {
      result.slice.documents.push_back(docs[i]);
    } else {
      ++result.removed;
    }
  }
  return result;
}

TimeSlice sample_balanced(const TimeSlice& slice, std::size_t n, bool by_label, std::uint64_t seed) {
  Rng rng(seed);
  const auto& docs = slice.documents;
  auto draw = [&](std::vector<std::size_t> pool, std::size_t k) {
    // Partial Fisher-Yates: the first k entries become the sample.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  };

  std::vector<std::size_t> chosen;
  if (by_label) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (!docs[i].source_label) throw DataError("document '" + docs[i].id + "' has no label for balanced sampling");
      groups[*docs[i].source_label].push_back(i);
    }
    if (groups.empty()) {
      if (n == 0) return TimeSlice{slice.period_id, {}};
      throw DataError("cannot sample " + std::to_string(n) + " labelled documents from an empty slice");
    }
    if (n % groups.size() != 0) {
      throw ConfigError("sample size " + std::to_string(n) + " is not divisible by " +
                        std::to_string(groups.size()) + " labels");
    }
    const std::size_t per_label = n / groups.size();
    for (const auto& [label, members] : groups) {
      if (members.size() < per_label) {
        throw DataError("label '" + label + "' in period " + slice.period_id + " is short by " +
                        std::to_string(per_label - members.size()) + " documents");
      }
    }
    for (const auto& [label, members] : groups) {
      const auto picked = draw(members, per_label);
      chosen.insert(chosen.end(), picked.begin(), picked.end());
    }
    rng.shuffle(chosen);
  } else {
    if (n > docs.size()) {
      throw DataError("cannot sample " + std::to_string(n) + " documents from a slice of " +
                      std::to_string(docs.size()));
    }
    std::vector<std::size_t> all(docs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    chosen = draw(std::move(all), n);
  }
  TimeSlice out{slice.period_id, {}};
  out.documents.reserve(chosen.size());
  for (auto i : chosen) out.documents.push_back(docs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {

void add_words(std::string_view text, WordSet& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.insert(fold_case(text.substr(start, i - start)));
  }
}

}  // namespace

WordSet extract_vocabulary(std::span<const Document> docs) {
  WordSet out;
  for (const auto& d : docs) add_words(d.text, out);
  return out;
}

WordSet extract_vocabulary(std::span<const std::string> texts) {
  WordSet out;
  for (const auto& t : texts) add_words(t, out);
  return out;
}

double jaccard_similarity(const WordSet& a, const WordSet& b) {
  if (a.empty() && b.empty()) throw DataError("Jaccard similarity of two empty vocabularies is undefined");
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Persistence

json document_to_json(const Document& doc) {
  json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["timestamp"] = doc.timestamp;
  j["source_label"] = doc.source_label ? json(*doc.source_label) : json(nullptr);
  j["split_role"] = to_string(doc.split_role);
  return j;
}

Document document_from_json(const json& j) {
  try {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    d.timestamp = j.at("timestamp").get<std::int64_t>();
    if (const auto it = j.find("source_label"); it != j.end() && !it->is_null()) {
      d.source_label = it->get<std::string>();
    }
    d.split_role = parse_split_role(j.at("split_role").get<std::string>());
    return d;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed document record: ") + e.what());
  }
}

void write_slice(const std::filesystem::path& path, const TimeSlice& slice) {
  std::string out;
  for (const auto& d : slice.documents) {
    out += document_to_json(d).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

TimeSlice read_slice(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  TimeSlice slice;
  slice.period_id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    slice.documents.push_back(document_from_json(j));
  }
  return slice;
}

const TimeSlice& Corpus::slice(std::string_view period_id) const {
  for (const auto& s : slices) {
    if (s.period_id == period_id) return s;
  }
  throw ConfigError("corpus has no period '" + std::string(period_id) + "'");
}

CountTable count_documents(std::span<const TimeSlice> slices) {
  CountTable table;
  for (const auto& s : slices) {
    auto& per_period = table[s.period_id];
    for (const auto& d : s.documents) {
      ++per_period[std::string(to_string(d.split_role))][d.source_label.value_or(std::string(kUnlabelled))];
    }
  }
  return table;
}

void verify_manifest(const CorpusManifest& manifest, std::span<const TimeSlice> slices) {
  std::vector<std::string> periods;
  for (const auto& s : slices) periods.push_back(s.period_id);
  if (periods != manifest.periods) throw IntegrityError("manifest period list differs from the slices on disk");
  if (count_documents(slices) != manifest.counts) {
    throw IntegrityError("manifest document counts differ from the slices on disk");
  }
  if (manifest.balanced) {
    for (const auto& [period, roles] : manifest.counts) {
      for (const auto& [role, labels] : roles) {
        if (role == to_string(SplitRole::kAdaptation)) continue;
        std::set<std::size_t> distinct;
        for (const auto& [_, n] : labels) distinct.insert(n);
        if (distinct.size() > 1) {
          throw IntegrityError("manifest declares balanced labels but period " + period + " role " + role +
                               " is unbalanced");
        }
      }
    }
  }
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "slices");
  for (const auto& s : corpus.slices) write_slice(dir / "slices" / (s.period_id + ".jsonl"), s);
  write_file_atomic(dir / "manifest.json", corpus.manifest.to_json().dump(2) + "\n");
}

Corpus read_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw ConfigError("no corpus manifest at " + manifest_path.string());
  const json mj = json::parse(read_file(manifest_path), nullptr, false);
  if (mj.is_discarded()) throw DataError("corpus manifest is not valid JSON: " + manifest_path.string());
  Corpus corpus;
  corpus.manifest = CorpusManifest::from_json(mj);
  for (const auto& p : corpus.manifest.periods) {
    corpus.slices.push_back(read_slice(dir / "slices" / (p + ".jsonl")));
  }
  verify_manifest(corpus.manifest, corpus.slices);
  return corpus;
}

std::vector<Document> select_role(const TimeSlice& slice, SplitRole role) {
  std::vector<Document> out;
  for (const auto& d : slice.documents) {
    if (d.split_role == role) out.push_back(d);
  }
  return out;
}

Corpus build_corpus(const std::filesystem::path& input, const IngestOptions& options) {
  auto ingested = ingest(input, options.field_map, options.default_role);
  Corpus corpus;
  auto& log = corpus.manifest.preprocessing;
  log.push_back({"malformed", ingested.malformed});

  std::vector<Document> docs;
  docs.reserve(ingested.documents.size());
  std::size_t empty = 0;
  for (auto& d : ingested.documents) {
    d.text = normalize_text(d.text);
    if (d.text.empty()) {
      ++empty;
      continue;
    }
    docs.push_back(std::move(d));
  }
  log.push_back({"empty-after-normalization", empty});

  auto filtered = filter_documents(std::move(docs), options.filters);
  log.insert(log.end(), filtered.log.begin(), filtered.log.end());

  std::size_t duplicates = 0;
  for (auto& slice : partition_by_period(std::move(filtered.kept), options.granularity)) {
    auto dedup = deduplicate(slice);
    duplicates += dedup.removed;
    corpus.slices.push_back(std::move(dedup.slice));
  }
  log.push_back({"duplicates", duplicates});

  corpus.manifest.corpus_id = options.corpus_id;
  for (const auto& s : corpus.slices) corpus.manifest.periods.push_back(s.period_id);
  corpus.manifest.counts = count_documents(corpus.slices);
  corpus.manifest.provenance = options.provenance;
  corpus.manifest.provenance["source"] = input.filename().string();
  return corpus;
}

}  // namespace tempadapt::corpus
