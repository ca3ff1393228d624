// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::synth {

using corpus::SplitRole;
using nlohmann::json;

namespace {

constexpr std::array<SplitRole, 3> kRoles = {SplitRole::kAdaptation, SplitRole::kFinetune, SplitRole::kTest};

// Background strata: token mass and share of the background vocabulary.
struct Stratum {
  Pos pos;
  double token_mass;
  double vocab_share;
  int syllables;
};

constexpr std::array<Stratum, 8> kStrata = {{
    {Pos::kDet, 0.12, 0.010, 1},
    {Pos::kPron, 0.10, 0.015, 1},
    {Pos::kConj, 0.08, 0.010, 1},
    {Pos::kNoun, 0.28, 0.400, 2},
    {Pos::kVerb, 0.20, 0.250, 2},
    {Pos::kAdj, 0.10, 0.150, 2},
    {Pos::kAdv, 0.07, 0.080, 3},
    {Pos::kPropn, 0.05, 0.085, 3},
}};

// Draws unique pronounceable pseudo-words.
class WordFactory {
 public:
  explicit WordFactory(std::uint64_t seed) : rng_(seed) {}

  std::string make(int syllables) {
    static constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r",
                                                   "s", "t", "v", "z", "br", "dr", "kl", "st", "tr", "sh"};
    static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    static constexpr std::string_view kCodas[] = {"", "", "", "n", "r", "s", "k", "th", "m"};
    for (int attempt = 0;; ++attempt) {
      std::string w;
      const int n = syllables + (attempt > 20 ? attempt / 20 : 0);
      for (int s = 0; s < n; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      w += kCodas[rng_.below(std::size(kCodas))];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng rng_;
  std::unordered_set<std::string> used_;
};

struct BackgroundWord {
  std::string word;
  Pos pos;
};

// Alias-free cumulative sampler over a fixed weight vector.
class Categorical {
 public:
  Categorical() = default;
  explicit Categorical(const std::vector<double>& weights) : cdf_(weights.size()) {
    std::partial_sum(weights.begin(), weights.end(), cdf_.begin());
    for (auto& c : cdf_) c /= cdf_.back();
  }
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

// Everything derived from the seed that is shared across periods and roles.
struct Lexicon {
  std::vector<std::vector<BackgroundWord>> strata;  // per kStrata entry, by Zipf rank
  std::vector<Categorical> within;                  // Zipf sampler per stratum
  Categorical stratum_pick;
  std::vector<std::vector<BackgroundWord>> topics;
  std::vector<Categorical> topic_within;
  double topic_rate = 0.0;
  std::vector<std::vector<std::string>> stable_cues;  // per class
  std::vector<std::string> drifting_pool;
  // active[period][class] -> drifting cue words
  std::vector<std::vector<std::vector<std::string>>> active;
};

Lexicon build_lexicon(const GeneratorSpec& spec) {
  Lexicon lex;
  WordFactory words(derive_seed(spec.seed, "lexicon"));
  // Reserve event spellings first so background words never collide.
  std::unordered_set<std::string> events;
  for (const auto& e : spec.events) events.insert(e.token);

  auto fresh = [&](int syllables) {
    for (;;) {
      auto w = words.make(syllables);
      if (!events.contains(w)) return w;
    }
  };

  std::vector<double> masses;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < kStrata.size(); ++s) {
    const auto& st = kStrata[s];
    std::size_t n = s + 1 == kStrata.size()
                        ? spec.background_vocab_size - assigned
                        : std::max<std::size_t>(
                              2, static_cast<std::size_t>(std::llround(st.vocab_share * spec.background_vocab_size)));
    n = std::max<std::size_t>(n, 1);
    assigned += n;
    std::vector<BackgroundWord> bucket;
    std::vector<double> zipf;
    for (std::size_t r = 0; r < n; ++r) {
      bucket.push_back({fresh(st.syllables), st.pos});
      zipf.push_back(1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent));
    }
    lex.strata.push_back(std::move(bucket));
    lex.within.emplace_back(zipf);
    masses.push_back(st.token_mass);
  }
  lex.stratum_pick = Categorical(masses);

  // Topic lists sample open-class background words without replacement.
  {
    std::vector<const BackgroundWord*> open;
    for (std::size_t s = 0; s < kStrata.size(); ++s) {
      const auto pos = kStrata[s].pos;
      if (pos == Pos::kNoun || pos == Pos::kVerb || pos == Pos::kAdj || pos == Pos::kAdv) {
        for (const auto& w : lex.strata[s]) open.push_back(&w);
      }
    }
    Rng trng(derive_seed(spec.seed, "topics"));
    const auto per = std::min<std::size_t>(static_cast<std::size_t>(spec.topics.words_per_topic), open.size());
    for (int t = 0; t < spec.topics.count; ++t) {
      auto pool = open;
      trng.shuffle(pool);
      std::vector<BackgroundWord> words;
      std::vector<double> zipf;
      for (std::size_t r = 0; r < per; ++r) {
        words.push_back(*pool[r]);
        zipf.push_back(1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent));
      }
      lex.topics.push_back(std::move(words));
      lex.topic_within.emplace_back(zipf);
    }
    lex.topic_rate = spec.topics.count > 0 ? spec.topics.rate : 0.0;
  }

  const auto& cc = spec.class_cues;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    std::vector<std::string> cues;
    for (int k = 0; k < cc.stable_per_class; ++k) cues.push_back(fresh(2));
    lex.stable_cues.push_back(std::move(cues));
  }
  for (int k = 0; k < cc.drifting_pool; ++k) lex.drifting_pool.push_back(fresh(2));

  // Drift schedule.
  Rng rng(derive_seed(spec.seed, "cue-drift"));
  std::vector<std::string> free_pool = lex.drifting_pool;
  rng.shuffle(free_pool);
  std::vector<std::vector<std::string>> current(spec.classes.size());
  for (auto& cls : current) {
    for (int k = 0; k < cc.drifting_per_class; ++k) {
      cls.push_back(free_pool.back());
      free_pool.pop_back();
    }
  }
  const double retire_fraction = 1.0 - std::pow(2.0, -1.0 / cc.drift_half_life);
  const int per_period = static_cast<int>(std::lround(retire_fraction * cc.drifting_per_class));
  for (int p = 0; p < spec.n_periods; ++p) {
    if (p > 0) {
      std::vector<std::string> retired;
      for (auto& cls : current) {
        for (int k = 0; k < per_period && !cls.empty(); ++k) {
          const auto j = static_cast<std::size_t>(rng.below(cls.size()));
          retired.push_back(cls[j]);
          cls.erase(cls.begin() + static_cast<std::ptrdiff_t>(j));
        }
      }
      // Replacements come from the free pool before this period's
      // retirements rejoin it, so a word never changes class overnight.
      for (auto& cls : current) {
        while (static_cast<int>(cls.size()) < cc.drifting_per_class && !free_pool.empty()) {
          const auto j = static_cast<std::size_t>(rng.below(free_pool.size()));
          cls.push_back(free_pool[j]);
          free_pool.erase(free_pool.begin() + static_cast<std::ptrdiff_t>(j));
        }
      }
      free_pool.insert(free_pool.end(), retired.begin(), retired.end());
    }
    lex.active.push_back(current);
  }
  return lex;
}

struct Token {
  std::string word;
  Pos pos;
};

Token draw_background(const Lexicon& lex, Rng& rng, std::size_t topic) {
  if (lex.topic_rate > 0.0 && rng.bernoulli(lex.topic_rate)) {
    const auto& w = lex.topics[topic][lex.topic_within[topic].sample(rng)];
    return {w.word, w.pos};
  }
  const auto s = lex.stratum_pick.sample(rng);
  const auto& w = lex.strata[s][lex.within[s].sample(rng)];
  return {w.word, w.pos};
}

std::size_t pick_topic(const Lexicon& lex, Rng& rng) {
  return lex.topics.empty() ? 0 : static_cast<std::size_t>(rng.below(lex.topics.size()));
}

// Cue words alternate NOUN / ADJ / VERB by their slot in the inventory.
Pos cue_pos(std::size_t slot) {
  static constexpr Pos kCycle[] = {Pos::kNoun, Pos::kAdj, Pos::kNoun, Pos::kVerb};
  return kCycle[slot % std::size(kCycle)];
}

Pos drifting_pos(const Lexicon& lex, const std::string& word) {
  const auto it = std::find(lex.drifting_pool.begin(), lex.drifting_pool.end(), word);
  return cue_pos(static_cast<std::size_t>(it - lex.drifting_pool.begin()));
}

}  // namespace

// ---------------------------------------------------------------------------

void GeneratorSpec::validate() const {
  if (n_periods < 2) throw ConfigError("generator needs at least 2 periods");
  if (classes.size() < 2) throw ConfigError("generator needs at least 2 classes");
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ConfigError("class names must be distinct");
  }
  if (background_vocab_size < kStrata.size() * 4) throw ConfigError("background vocabulary is too small");
  if (!(zipf_exponent > 0.0)) throw ConfigError("zipf_exponent must be positive");
  if (min_doc_tokens < 1 || max_doc_tokens < min_doc_tokens) throw ConfigError("invalid document length range");
  const auto& cc = class_cues;
  if (!(cc.drift_half_life > 0.0)) throw ConfigError("drift half-life must be positive");
  if (cc.stable_per_class < 0 || cc.drifting_per_class < 0) throw ConfigError("cue counts must be non-negative");
  if (cc.drifting_pool < cc.drifting_per_class * static_cast<int>(classes.size())) {
    throw ConfigError("drifting cue pool is smaller than the active inventory");
  }
  if (cc.stable_rate < 0 || cc.drifting_rate < 0 || cc.confusion_rate < 0) {
    throw ConfigError("cue rates must be non-negative");
  }
  if (topics.count < 0 || (topics.count > 0 && topics.words_per_topic < 1)) {
    throw ConfigError("topics need a non-negative count and at least one word each");
  }
  if (!(topics.rate >= 0.0 && topics.rate <= 1.0)) throw ConfigError("topic rate must lie in [0, 1]");
  std::set<std::string> tokens;
  for (const auto& e : events) {
    if (e.onset_period < 0 || e.onset_period >= n_periods) {
      throw ConfigError("event '" + e.token + "' has onset outside [0, n_periods)");
    }
    if (!(e.peak_rate > 0.0)) throw ConfigError("event '" + e.token + "' needs a positive peak rate");
    if (!(e.decay_factor > 0.0 && e.decay_factor < 1.0)) {
      throw ConfigError("event '" + e.token + "' decay factor must lie in (0, 1)");
    }
    if (e.single_class && std::find(classes.begin(), classes.end(), *e.single_class) == classes.end()) {
      throw ConfigError("event '" + e.token + "' is scoped to unknown class '" + *e.single_class + "'");
    }
    if (e.token.empty() || e.token.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("event token '" + e.token + "' must be a single word");
    }
    if (!tokens.insert(e.token).second) throw ConfigError("duplicate event token '" + e.token + "'");
  }
  for (auto role : kRoles) {
    if (!docs_per_period_per_class.contains(role)) {
      throw ConfigError("docs_per_period_per_class lacks role " + std::string(corpus::to_string(role)));
    }
  }
  (void)corpus::period_bounds(start_period);
}

json GeneratorSpec::to_json() const {
  json j;
  j["n_periods"] = n_periods;
  j["start_period"] = start_period;
  j["classes"] = classes;
  json counts;
  for (const auto& [role, n] : docs_per_period_per_class) counts[std::string(corpus::to_string(role))] = n;
  j["docs_per_period_per_class"] = counts;
  j["background_vocab_size"] = background_vocab_size;
  j["zipf_exponent"] = zipf_exponent;
  json evs = json::array();
  for (const auto& e : events) {
    json ej{{"token", e.token},
            {"onset_period", e.onset_period},
            {"peak_rate", e.peak_rate},
            {"decay_factor", e.decay_factor}};
    ej["class_scope"] = e.single_class ? json{{"single_class", *e.single_class}} : json("shared");
    evs.push_back(ej);
  }
  j["events"] = evs;
  const auto& cc = class_cues;
  j["class_cues"] = {{"stable_per_class", cc.stable_per_class}, {"drifting_per_class", cc.drifting_per_class},
                     {"drifting_pool", cc.drifting_pool},       {"drift_half_life", cc.drift_half_life},
                     {"stable_rate", cc.stable_rate},           {"drifting_rate", cc.drifting_rate},
                     {"confusion_rate", cc.confusion_rate}};
  j["topics"] = {{"count", topics.count}, {"words_per_topic", topics.words_per_topic}, {"rate", topics.rate}};
  j["doc_length"] = {{"min", min_doc_tokens}, {"max", max_doc_tokens}};
  j["seed"] = seed;
  return j;
}

GeneratorSpec GeneratorSpec::from_json(const json& j) {
  GeneratorSpec s;
  s.events.clear();
  try {
    s.n_periods = j.value("n_periods", s.n_periods);
    s.start_period = j.value("start_period", s.start_period);
    s.classes = j.value("classes", s.classes);
    if (const auto it = j.find("docs_per_period_per_class"); it != j.end()) {
      for (const auto& [k, v] : it->items()) s.docs_per_period_per_class[corpus::parse_split_role(k)] = v.get<std::size_t>();
    }
    s.background_vocab_size = j.value("background_vocab_size", s.background_vocab_size);
    s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
    if (const auto it = j.find("class_cues"); it != j.end()) {
      auto& cc = s.class_cues;
      cc.stable_per_class = it->value("stable_per_class", cc.stable_per_class);
      cc.drifting_per_class = it->value("drifting_per_class", cc.drifting_per_class);
      cc.drifting_pool = it->value("drifting_pool", cc.drifting_pool);
      cc.drift_half_life = it->value("drift_half_life", cc.drift_half_life);
      cc.stable_rate = it->value("stable_rate", cc.stable_rate);
      cc.drifting_rate = it->value("drifting_rate", cc.drifting_rate);
      cc.confusion_rate = it->value("confusion_rate", cc.confusion_rate);
    }
    if (const auto it = j.find("topics"); it != j.end()) {
      s.topics.count = it->value("count", s.topics.count);
      s.topics.words_per_topic = it->value("words_per_topic", s.topics.words_per_topic);
      s.topics.rate = it->value("rate", s.topics.rate);
    }
    if (const auto it = j.find("doc_length"); it != j.end()) {
      s.min_doc_tokens = it->value("min", s.min_doc_tokens);
      s.max_doc_tokens = it->value("max", s.max_doc_tokens);
    }
    s.seed = j.value("seed", s.seed);
    if (const auto it = j.find("events"); it != j.end()) {
      for (const auto& ej : *it) {
        EventSpec e;
        e.token = ej.at("token").get<std::string>();
        e.onset_period = ej.at("onset_period").get<int>();
        e.peak_rate = ej.at("peak_rate").get<double>();
        e.decay_factor = ej.at("decay_factor").get<double>();
        const auto& scope = ej.value("class_scope", json("shared"));
        if (scope.is_object()) {
          e.single_class = scope.at("single_class").get<std::string>();
        } else if (scope != "shared") {
          throw ConfigError("event class_scope must be \"shared\" or {\"single_class\": NAME}");
        }
        s.events.push_back(std::move(e));
      }
    }
    if (const auto it = j.find("event_schedule"); it != j.end()) {
      const auto scope = it->value("scope", std::string("shared"));
      if (scope != "shared" && scope != "round_robin") {
        throw ConfigError("event_schedule scope must be shared or round_robin");
      }
      add_event_schedule(s, it->at("per_period").get<int>(), it->at("peak_rate").get<double>(),
                         it->at("decay_factor").get<double>(), scope == "round_robin");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed generator spec: ") + e.what());
  }
  s.validate();
  return s;
}

void add_event_schedule(GeneratorSpec& spec, int per_period, double peak_rate, double decay_factor,
                        bool single_class_round_robin) {
  // Event names come from their own stream so they do not depend on the
  // lexicon; collisions with background words are avoided by build_lexicon.
  WordFactory names(derive_seed(spec.seed, "event-names"));
  std::set<std::string> taken;
  for (const auto& e : spec.events) taken.insert(e.token);
  std::size_t k = 0;
  for (int p = 0; p < spec.n_periods; ++p) {
    for (int i = 0; i < per_period; ++i, ++k) {
      EventSpec e;
      do {
        e.token = names.make(3);
      } while (taken.contains(e.token));
      taken.insert(e.token);
      e.onset_period = p;
      e.peak_rate = peak_rate;
      e.decay_factor = decay_factor;
      if (single_class_round_robin) e.single_class = spec.classes[k % spec.classes.size()];
      spec.events.push_back(std::move(e));
    }
  }
}

GeneratorSpec default_spec(std::uint64_t seed) {
  GeneratorSpec s;
  s.seed = seed;
  add_event_schedule(s, 5, 30.0, 0.6);
  return s;
}

double burst_profile(const EventSpec& event, int period, int n_periods) {
  if (period < 0 || period >= n_periods) {
    throw DataError("period " + std::to_string(period) + " outside [0, " + std::to_string(n_periods) + ")");
  }
  if (period < event.onset_period) return 0.0;
  return event.peak_rate * std::pow(event.decay_factor, period - event.onset_period);
}

GeneratorSpec make_discriminative_variant(const GeneratorSpec& spec) {
  GeneratorSpec out = spec;
  std::size_t k = 0;
  for (auto& e : out.events) {
    if (e.shared()) e.single_class = spec.classes[k++ % spec.classes.size()];
  }
  return out;
}

// ---------------------------------------------------------------------------

void EventLedger::add(const std::string& token, const std::string& period, const std::string& cls, std::size_t n) {
  if (n > 0) counts_[{token, period, cls}] += n;
}

std::size_t EventLedger::count(const std::string& token, const std::string& period) const {
  std::size_t n = 0;
  for (auto it = counts_.lower_bound({token, period, ""});
       it != counts_.end() && std::get<0>(it->first) == token && std::get<1>(it->first) == period; ++it) {
    n += it->second;
  }
  return n;
}

std::set<std::string> EventLedger::classes(const std::string& token, const std::string& period) const {
  std::set<std::string> out;
  for (auto it = counts_.lower_bound({token, period, ""});
       it != counts_.end() && std::get<0>(it->first) == token && std::get<1>(it->first) == period; ++it) {
    out.insert(std::get<2>(it->first));
  }
  return out;
}

std::set<std::string> EventLedger::tokens() const {
  std::set<std::string> out;
  for (const auto& [k, _] : counts_) out.insert(std::get<0>(k));
  return out;
}

std::string EventLedger::to_csv() const {
  std::string out = "event,period,class,count\n";
  for (const auto& [k, n] : counts_) {
    out += std::get<0>(k) + "," + std::get<1>(k) + "," + std::get<2>(k) + "," + std::to_string(n) + "\n";
  }
  return out;
}

EventLedger EventLedger::from_csv(const std::string& text) {
  EventLedger ledger;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (trim(line) != "event,period,class,count") throw DataError("event ledger has an unexpected header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 4) throw DataError("malformed event ledger row '" + line + "'");
    ledger.add(f[0], f[1], f[2], std::stoull(f[3]));
  }
  return ledger;
}

// ---------------------------------------------------------------------------

SyntheticCorpus generate_corpus(const GeneratorSpec& spec) {
  spec.validate();
  const Lexicon lex = build_lexicon(spec);
  const auto& cc = spec.class_cues;
  const auto n_classes = spec.classes.size();

  SyntheticCorpus out;
  out.spec = spec;
  auto& manifest = out.corpus.manifest;
  manifest.corpus_id = "synthetic-" + std::to_string(spec.seed);
  manifest.seed = spec.seed;
  manifest.balanced = true;
  manifest.provenance = {{"source", "synthetic generator"},
                         {"language", "synthetic (English-like pseudo-words)"},
                         {"generator_spec_sha256", sha256_hex(spec.to_json().dump())}};

  for (int p = 0; p < spec.n_periods; ++p) {
    const auto period = corpus::shift_period(spec.start_period, p);
    const auto [t0, t1] = corpus::period_bounds(period);
    corpus::TimeSlice slice{period, {}};
    std::unordered_set<std::string> seen_texts;
    for (auto role : kRoles) {
      const auto n_docs = spec.docs_per_period_per_class.at(role);
      for (std::size_t c = 0; c < n_classes; ++c) {
        const auto& cls = spec.classes[c];
        Rng rng(derive_seed(spec.seed, period + "/" + std::string(corpus::to_string(role)) + "/" + cls));
        const auto& drifting = lex.active[static_cast<std::size_t>(p)][c];
        std::vector<std::pair<const EventSpec*, double>> active_events;
        for (const auto& e : spec.events) {
          if (e.single_class && *e.single_class != cls) continue;
          double rate = burst_profile(e, p, spec.n_periods) / 1000.0;
          if (e.single_class) rate *= static_cast<double>(n_classes);
          if (rate > 0.0) active_events.emplace_back(&e, rate);
        }
        for (std::size_t i = 0; i < n_docs;) {
          const int length = spec.min_doc_tokens +
                             static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_doc_tokens - spec.min_doc_tokens + 1)));
          std::vector<Token> injected;
          std::vector<std::pair<const EventSpec*, int>> event_hits;
          for (const auto& [e, rate] : active_events) {
            const int k = rate <= 1.0 ? (rng.bernoulli(rate) ? 1 : 0) : rng.poisson(rate);
            for (int r = 0; r < k; ++r) injected.push_back({e->token, Pos::kPropn});
            if (k > 0) event_hits.emplace_back(e, k);
          }
          const auto& stable = lex.stable_cues[c];
          for (int k = rng.poisson(cc.stable_rate); k > 0 && !stable.empty(); --k) {
            const auto j = static_cast<std::size_t>(rng.below(stable.size()));
            injected.push_back({stable[j], cue_pos(j)});
          }
          for (int k = rng.poisson(cc.drifting_rate); k > 0 && !drifting.empty(); --k) {
            const auto& w = drifting[static_cast<std::size_t>(rng.below(drifting.size()))];
            injected.push_back({w, drifting_pos(lex, w)});
          }
          for (int k = rng.poisson(cc.confusion_rate); k > 0; --k) {
            auto other = static_cast<std::size_t>(rng.below(n_classes - 1));
            if (other >= c) ++other;
            const auto& pool_stable = lex.stable_cues[other];
            const auto& pool_drift = lex.active[static_cast<std::size_t>(p)][other];
            const std::size_t total = pool_stable.size() + pool_drift.size();
            if (total == 0) continue;
            const auto j = static_cast<std::size_t>(rng.below(total));
            if (j < pool_stable.size()) {
              injected.push_back({pool_stable[j], cue_pos(j)});
            } else {
              const auto& w = pool_drift[j - pool_stable.size()];
              injected.push_back({w, drifting_pos(lex, w)});
            }
          }
          if (static_cast<int>(injected.size()) > length) {
            // Over-long injections are rare; they are truncated rather than
            // lengthening the document. Event tokens come first so survive.
            injected.resize(static_cast<std::size_t>(length));
          }
          std::vector<Token> tokens = injected;
          const auto topic = pick_topic(lex, rng);
          while (static_cast<int>(tokens.size()) < length) tokens.push_back(draw_background(lex, rng, topic));
          rng.shuffle(tokens);

          std::string text;
          std::vector<Pos> tags;
          for (const auto& t : tokens) {
            if (!text.empty()) text.push_back(' ');
            text += t.word;
            tags.push_back(t.pos);
          }
          if (!seen_texts.insert(text).second) continue;  // redraw duplicates

          // Recount events from the emitted tokens so truncation is honoured.
          std::map<std::string, std::size_t> emitted;
          for (const auto& t : tokens) {
            if (t.pos == Pos::kPropn) ++emitted[t.word];
          }
          for (const auto& [e, _] : event_hits) {
            if (auto it = emitted.find(e->token); it != emitted.end()) out.ledger.add(e->token, period, cls, it->second);
          }

          corpus::Document doc;
          char idbuf[96];
          std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%s-%05zu", period.c_str(),
                        std::string(corpus::to_string(role)).c_str(), cls.c_str(), i);
          doc.id = idbuf;
          doc.text = std::move(text);
          doc.timestamp = t0 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(t1 - t0)));
          doc.source_label = cls;
          doc.split_role = role;
          out.tags[doc.id] = std::move(tags);
          slice.documents.push_back(std::move(doc));
          ++i;
        }
      }
    }
    manifest.periods.push_back(period);
    out.corpus.slices.push_back(std::move(slice));
  }
  manifest.counts = corpus::count_documents(out.corpus.slices);
  return out;
}

std::vector<std::string> generate_background_texts(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed,
                                                   std::vector<std::vector<Pos>>* tags) {
  spec.validate();
  const Lexicon lex = build_lexicon(spec);
  Rng rng(derive_seed(seed, "background"));
  std::vector<std::string> texts;
  texts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int length = spec.min_doc_tokens +
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_doc_tokens - spec.min_doc_tokens + 1)));
    std::string text;
    std::vector<Pos> doc_tags;
    const auto topic = pick_topic(lex, rng);
    for (int k = 0; k < length; ++k) {
      const auto t = draw_background(lex, rng, topic);
      if (!text.empty()) text.push_back(' ');
      text += t.word;
      doc_tags.push_back(t.pos);
    }
    texts.push_back(std::move(text));
    if (tags) tags->push_back(std::move(doc_tags));
  }
  return texts;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& synthetic) {
  corpus::write_corpus(dir, synthetic.corpus);
  write_file_atomic(dir / "event_ledger.csv", synthetic.ledger.to_csv());
  std::string tags;
  for (const auto& slice : synthetic.corpus.slices) {
    for (const auto& d : slice.documents) {
      json row;
      row["id"] = d.id;
      json arr = json::array();
      for (Pos p : synthetic.tags.at(d.id)) arr.push_back(to_string(p));
      row["tags"] = arr;
      tags += row.dump();
      tags += '\n';
    }
  }
  write_file_atomic(dir / "gold_tags.jsonl", tags);
  write_file_atomic(dir / "generator_spec.json", synthetic.spec.to_json().dump(2) + "\n");
}

GoldTags read_gold_tags(const std::filesystem::path& dir) {
  GoldTags tags;
  const auto path = dir / "gold_tags.jsonl";
  if (!std::filesystem::exists(path)) return tags;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json row = json::parse(line, nullptr, false);
    if (row.is_discarded()) throw DataError("malformed gold tag row in " + path.string());
    std::vector<Pos> doc_tags;
    for (const auto& t : row.at("tags")) doc_tags.push_back(parse_pos(t.get<std::string>()));
    tags[row.at("id").get<std::string>()] = std::move(doc_tags);
  }
  return tags;
}

EventLedger read_ledger(const std::filesystem::path& dir) {
  return EventLedger::from_csv(read_file(dir / "event_ledger.csv"));
}

EventLedger recount_ledger(const corpus::Corpus& corpus, const std::set<std::string>& event_tokens) {
  EventLedger ledger;
  for (const auto& slice : corpus.slices) {
    for (const auto& d : slice.documents) {
      std::istringstream words(d.text);
      std::string w;
      while (words >> w) {
        if (event_tokens.contains(w)) ledger.add(w, slice.period_id, d.source_label.value_or(""));
      }
    }
  }
  return ledger;
}

}  // namespace tempadapt::synth
