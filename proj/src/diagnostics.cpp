// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/diagnostics.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "tempadapt/error.hpp"
#include "tempadapt/evaluation.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::diag {

std::vector<Pos> align_pos_to_subwords(std::span<const Pos> word_tags, const tok::TokenSequence& seq) {
  std::vector<Pos> out(seq.ids.size(), Pos::kNone);
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (tok::Vocabulary::is_special(seq.ids[i])) continue;
    const auto w = seq.word_index[i];
    if (w < 0 || static_cast<std::size_t>(w) >= word_tags.size()) {
      throw DataError("alignment error: word index " + std::to_string(w) + " outside " +
                      std::to_string(word_tags.size()) + " tags");
    }
    out[i] = word_tags[static_cast<std::size_t>(w)];
  }
  return out;
}

std::vector<MaskedTokenRecord> loss_deltas(std::span<const model::TokenLossRecord> control,
                                           std::span<const model::TokenLossRecord> candidate, const TagLookup* tags) {
  const auto n = std::min(control.size(), candidate.size());
  std::vector<MaskedTokenRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = control[i];
    const auto& b = candidate[i];
    if (a.doc_id != b.doc_id || a.position != b.position || a.subword != b.subword) {
      throw DataError("pairing error at record " + std::to_string(i) + ": control (" + a.doc_id + ", " +
                      std::to_string(a.position) + ") vs candidate (" + b.doc_id + ", " + std::to_string(b.position) +
                      ")");
    }
    MaskedTokenRecord r;
    r.doc_id = a.doc_id;
    r.period = a.period;
    r.subword = a.subword;
    r.word_index = a.word_index;
    r.position = a.position;
    r.loss_control = a.loss;
    r.loss_candidate = b.loss;
    r.delta = a.loss - b.loss;
    if (tags) {
      const auto it = tags->find(a.doc_id);
      if (it != tags->end() && a.word_index >= 0 && static_cast<std::size_t>(a.word_index) < it->second.size()) {
        r.pos = it->second[static_cast<std::size_t>(a.word_index)];
      }
    }
    out.push_back(std::move(r));
  }
  if (control.size() != candidate.size()) {
    throw DataError("pairing error: control has " + std::to_string(control.size()) + " records, candidate " +
                    std::to_string(candidate.size()));
  }
  return out;
}

std::vector<PosContribution> contribution_by_pos(std::span<const MaskedTokenRecord> records) {
  std::map<Pos, std::vector<double>> deltas;
  std::size_t tagged = 0;
  std::vector<double> all;
  for (const auto& r : records) {
    if (r.pos == Pos::kNone) continue;
    deltas[r.pos].push_back(r.delta);
    all.push_back(r.delta);
    ++tagged;
  }
  if (all.empty()) throw DataError("no tagged records to attribute");
  const double total = eval::pairwise_sum(all);
  if (total == 0.0) throw DataError("total delta is zero; contribution shares are undefined");
  std::vector<PosContribution> out;
  for (auto p : kAllPos) {
    PosContribution c;
    c.pos = p;
    const auto it = deltas.find(p);
    if (it != deltas.end()) {
      c.delta_sum = eval::pairwise_sum(it->second);
      c.count = it->second.size();
    }
    c.contribution = c.delta_sum / total * 100.0;
    c.frequency = static_cast<double>(c.count) / static_cast<double>(tagged) * 100.0;
    out.push_back(c);
  }
  return out;
}

std::vector<MaskedTokenRecord> rank_by_delta(std::span<const MaskedTokenRecord> records) {
  std::vector<MaskedTokenRecord> out(records.begin(), records.end());
  std::sort(out.begin(), out.end(), [](const MaskedTokenRecord& a, const MaskedTokenRecord& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return std::tie(a.period, a.doc_id, a.position) < std::tie(b.period, b.doc_id, b.position);
  });
  return out;
}

std::array<std::size_t, 10> decile_sizes(std::size_t n) {
  std::array<std::size_t, 10> s{};
  for (std::size_t i = 0; i < 10; ++i) s[i] = n / 10 + (i < n % 10 ? 1 : 0);
  return s;
}

DecileResult decile_contributions(std::span<const MaskedTokenRecord> records) {
  if (records.size() < 10) throw DataError("decile analysis needs at least 10 records");
  const auto ranked = rank_by_delta(records);
  std::vector<double> all;
  for (const auto& r : ranked) all.push_back(r.delta);
  const double total = eval::pairwise_sum(all);
  if (total == 0.0) throw DataError("total delta is zero; decile shares are undefined");
  DecileResult d;
  d.size = decile_sizes(ranked.size());
  std::size_t start = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    d.share[i] = eval::pairwise_sum(std::span<const double>(all).subspan(start, d.size[i])) / total * 100.0;
    start += d.size[i];
  }
  return d;
}

std::vector<MaskedTokenRecord> top_decile(std::span<const MaskedTokenRecord> records) {
  auto ranked = rank_by_delta(records);
  ranked.resize(decile_sizes(ranked.size())[0]);
  return ranked;
}

std::vector<ImprovedToken> top_improved_tokens(std::span<const MaskedTokenRecord> records, std::size_t k,
                                               const tok::Vocabulary& vocab,
                                               const std::map<std::string, std::string>* texts) {
  if (k < 1) throw ConfigError("k must be at least 1");
  auto ranked = rank_by_delta(records);
  if (ranked.size() > k) ranked.resize(k);
  std::vector<ImprovedToken> out;
  for (auto& r : ranked) {
    ImprovedToken t;
    t.subword = vocab.token(r.subword);
    if (texts) {
      const auto it = texts->find(r.doc_id);
      if (it != texts->end()) {
        const auto words = tok::pre_tokenize(it->second);
        if (r.word_index >= 0 && static_cast<std::size_t>(r.word_index) < words.size()) {
          t.word = words[static_cast<std::size_t>(r.word_index)];
        }
      }
    }
    t.record = std::move(r);
    out.push_back(std::move(t));
  }
  return out;
}

DistinctivenessTable distinctiveness_table(std::span<const MaskedTokenRecord> records,
                                           std::span<const LabelledDocument> docs, const tok::Vocabulary& vocab,
                                           const std::vector<std::string>& classes, const TagLookup* tags,
                                           std::size_t max_len) {
  // Distinct (subword, period) in ranked order; the first record fixes the tag.
  std::map<std::pair<tok::TokenId, std::string>, Pos> wanted;
  std::vector<DistinctivenessEntry> entries;
  for (const auto& r : rank_by_delta(records)) {
    if (wanted.emplace(std::make_pair(r.subword, r.period), r.pos).second) {
      entries.push_back({r.subword, r.period, r.pos, 0, 0});
    }
  }
  std::set<std::string> periods;
  for (const auto& e : entries) periods.insert(e.period);

  using Key = std::tuple<std::string, tok::TokenId, Pos>;
  std::map<Key, std::pair<std::set<std::string>, std::size_t>> usage;
  for (const auto& d : docs) {
    if (!periods.count(d.period)) continue;
    if (d.label.empty()) throw DataError("document " + d.id + " has no label");
    if (std::find(classes.begin(), classes.end(), d.label) == classes.end()) {
      throw DataError("document " + d.id + " has unknown label '" + d.label + "'");
    }
    const auto seq = tok::encode(d.text, vocab, max_len);
    std::vector<Pos> pos(seq.ids.size(), Pos::kNone);
    if (tags) {
      const auto it = tags->find(d.id);
      if (it != tags->end()) pos = align_pos_to_subwords(it->second, seq);
    }
    std::set<std::pair<tok::TokenId, Pos>> seen;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      if (tok::Vocabulary::is_special(seq.ids[i])) continue;
      if (!wanted.count({seq.ids[i], d.period})) continue;
      seen.insert({seq.ids[i], pos[i]});
    }
    for (const auto& [id, p] : seen) {
      auto& u = usage[{d.period, id, p}];
      u.first.insert(d.label);
      ++u.second;
    }
  }

  DistinctivenessTable t;
  t.rows.resize(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) t.rows[i].classes = i + 1;
  for (auto& e : entries) {
    const auto it = usage.find({e.period, e.subword, e.pos});
    if (it != usage.end()) {
      e.classes = it->second.first.size();
      e.comments = it->second.second;
    }
    if (e.classes == 0) continue;  // not present in the labelled documents
    auto& row = t.rows[e.classes - 1];
    ++row.subwords;
    row.comments += e.comments;
  }
  t.entries = std::move(entries);
  return t;
}

// ---------------------------------------------------------------------------
// CSV

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

namespace {
constexpr int kDigits = 6;
const char* const kRecordHeader = "doc_id,period,subword,word_index,position,pos,loss_control,loss_candidate,delta";
}  // namespace

std::string records_csv(std::span<const MaskedTokenRecord> records, const tok::Vocabulary& vocab) {
  std::ostringstream out;
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << csv_field(r.doc_id) << ',' << csv_field(r.period) << ',' << csv_field(vocab.token(r.subword)) << ','
        << r.word_index << ',' << r.position << ',' << to_string(r.pos) << ',' << format_double(r.loss_control) << ','
        << format_double(r.loss_candidate) << ',' << format_double(r.delta) << '\n';
  }
  return out.str();
}

std::vector<MaskedTokenRecord> parse_records_csv(const std::string& text, const tok::Vocabulary& vocab) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) throw DataError("not a token-record CSV");
  std::vector<MaskedTokenRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 9) throw DataError("token-record CSV row has " + std::to_string(f.size()) + " fields");
    MaskedTokenRecord r;
    r.doc_id = f[0];
    r.period = f[1];
    r.subword = vocab.id(f[2]);
    if (r.subword < 0) throw DataError("subword '" + f[2] + "' is not in the vocabulary");
    try {
      r.word_index = std::stoi(f[3]);
      r.position = std::stoi(f[4]);
      r.loss_control = std::stod(f[6]);
      r.loss_candidate = std::stod(f[7]);
      r.delta = std::stod(f[8]);
    } catch (const std::exception&) {
      throw DataError("malformed number in token-record CSV");
    }
    r.pos = parse_pos(f[5]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string contributions_csv(std::span<const PosContribution> rows) {
  std::ostringstream out;
  out << "pos,contribution,frequency,delta_sum,count\n";
  for (const auto& r : rows) {
    out << to_string(r.pos) << ',' << format_fixed(r.contribution, kDigits) << ',' << format_fixed(r.frequency, kDigits)
        << ',' << format_fixed(r.delta_sum, kDigits) << ',' << r.count << '\n';
  }
  return out.str();
}

std::string deciles_csv(const DecileResult& d) {
  std::ostringstream out;
  out << "decile,size,share\n";
  for (std::size_t i = 0; i < 10; ++i) out << i + 1 << ',' << d.size[i] << ',' << format_fixed(d.share[i], kDigits) << '\n';
  return out.str();
}

std::string improved_csv(std::span<const ImprovedToken> tokens) {
  std::ostringstream out;
  out << "rank,subword,word,period,doc_id,position,pos,delta\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    out << i + 1 << ',' << csv_field(t.subword) << ',' << csv_field(t.word) << ',' << t.record.period << ','
        << csv_field(t.record.doc_id) << ',' << t.record.position << ',' << to_string(t.record.pos) << ','
        << format_fixed(t.record.delta, kDigits) << '\n';
  }
  return out.str();
}

std::string distinctiveness_csv(const DistinctivenessTable& table) {
  std::ostringstream out;
  out << "classes,subwords,comments,avg_frequency\n";
  for (const auto& r : table.rows) {
    out << r.classes << ',' << r.subwords << ',' << r.comments << ',' << format_fixed(r.avg_frequency(), kDigits)
        << '\n';
  }
  return out.str();
}

}  // namespace tempadapt::diag
