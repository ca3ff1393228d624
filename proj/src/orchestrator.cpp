// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>

#include "tempadapt/error.hpp"
#include "tempadapt/tokenizer.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::orch {

namespace fs = std::filesystem;
using json = nlohmann::json;
using corpus::Document;
using corpus::SplitRole;

// ---------------------------------------------------------------------------
// Strategies

std::string to_string(Strategy s) {
  static const char* kAda[] = {"NAda", "DAda", "TAda"};
  return std::string(kAda[static_cast<int>(s.adaptation)]) + (s.finetuning == Finetuning::kRFt ? "+RFt" : "+TFt");
}

Strategy parse_strategy(std::string_view name) {
  for (const auto& s : all_strategies()) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected e.g. TAda+TFt)");
}

std::vector<Strategy> all_strategies() {
  std::vector<Strategy> out;
  for (auto a : {Adaptation::kNAda, Adaptation::kDAda, Adaptation::kTAda}) {
    for (auto f : {Finetuning::kRFt, Finetuning::kTFt}) out.push_back({a, f});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan

json BaseSpec::to_json() const {
  return {{"background_docs", background_docs}, {"epochs", epochs}, {"learning_rate", learning_rate},
          {"batch", batch}, {"seed", seed}, {"checkpoint", checkpoint}, {"vocab", vocab}};
}

BaseSpec BaseSpec::from_json(const json& j) {
  BaseSpec b;
  b.background_docs = j.value("background_docs", b.background_docs);
  b.epochs = j.value("epochs", b.epochs);
  b.learning_rate = j.value("learning_rate", b.learning_rate);
  b.batch = j.value("batch", b.batch);
  b.seed = j.value("seed", b.seed);
  b.checkpoint = j.value("checkpoint", b.checkpoint);
  b.vocab = j.value("vocab", b.vocab);
  return b;
}

namespace {

const std::set<std::string> kAnalyses = {"mlm_matrix", "cls_matrix", "sweep", "compare", "diagnostics"};

template <typename T>
std::vector<T> list_or(const json& j, const char* key, std::vector<T> fallback) {
  return j.contains(key) ? j.at(key).get<std::vector<T>>() : std::move(fallback);
}

}  // namespace

void ExperimentPlan::validate() const {
  if (!corpus.is_object() || (corpus.contains("synth") == corpus.contains("path"))) {
    throw ConfigError("plan corpus must hold exactly one of 'synth' or 'path'");
  }
  model.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("plan needs at least one seed");
  for (const auto& s : strategies) (void)parse_strategy(s);
  for (const auto& s : matrix_strategies) {
    if (!parse_strategy(s).per_period()) throw ConfigError("strategy " + s + " has no per-period models to tabulate");
  }
  for (const auto& a : analyses) {
    if (!kAnalyses.contains(a)) throw ConfigError("unknown analysis '" + a + "'");
  }
  if (!std::is_sorted(sweep_adaptation_sizes.begin(), sweep_adaptation_sizes.end()) ||
      !std::is_sorted(sweep_finetune_sizes.begin(), sweep_finetune_sizes.end())) {
    throw ConfigError("sweep sizes must be sorted ascending");
  }
  if (base.epochs < 0 || base.batch < 1 || !(base.learning_rate > 0)) throw ConfigError("invalid base settings");
  if (!base.checkpoint.empty() && base.vocab.empty()) throw ConfigError("a base checkpoint needs its vocabulary");
  if (corpus.contains("path") && base.checkpoint.empty()) {
    throw ConfigError("corpora on disk need a base checkpoint and vocabulary");
  }
}

json ExperimentPlan::to_json() const {
  return {{"corpus", corpus},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"base", base.to_json()},
          {"strategies", strategies},
          {"periods", periods},
          {"adaptation_size", adaptation_size},
          {"finetune_size", finetune_size},
          {"matrix_strategies", matrix_strategies},
          {"sweep_adaptation_sizes", sweep_adaptation_sizes},
          {"sweep_finetune_sizes", sweep_finetune_sizes},
          {"sweep_test_per_period", sweep_test_per_period},
          {"compare_finetune_sizes", compare_finetune_sizes},
          {"seeds", seeds},
          {"masking_seed", masking_seed},
          {"data_seed", data_seed},
          {"analyses", analyses},
          {"output_dir", output_dir},
          {"verbose", verbose}};
}

ExperimentPlan ExperimentPlan::from_json(const json& j) {
  ExperimentPlan p;
  try {
    p.corpus = j.at("corpus");
    if (j.contains("model")) p.model = model::ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) p.train = model::TrainConfig::from_json(j.at("train"));
    if (j.contains("base")) p.base = BaseSpec::from_json(j.at("base"));
    p.strategies = list_or<std::string>(j, "strategies", {});
    p.periods = list_or<std::string>(j, "periods", {});
    p.adaptation_size = j.value("adaptation_size", p.adaptation_size);
    p.finetune_size = j.value("finetune_size", p.finetune_size);
    p.matrix_strategies = list_or<std::string>(j, "matrix_strategies", {});
    p.sweep_adaptation_sizes = list_or<std::size_t>(j, "sweep_adaptation_sizes", {});
    p.sweep_finetune_sizes = list_or<std::size_t>(j, "sweep_finetune_sizes", {});
    p.sweep_test_per_period = j.value("sweep_test_per_period", p.sweep_test_per_period);
    p.compare_finetune_sizes = list_or<std::size_t>(j, "compare_finetune_sizes", {});
    p.seeds = list_or<std::uint64_t>(j, "seeds", p.seeds);
    p.masking_seed = j.value("masking_seed", p.masking_seed);
    p.data_seed = j.value("data_seed", p.data_seed);
    p.analyses = list_or<std::string>(j, "analyses", {});
    p.output_dir = j.value("output_dir", p.output_dir);
    p.verbose = j.value("verbose", p.verbose);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad plan: ") + e.what());
  }
  if (p.matrix_strategies.empty()) {
    for (const auto& s : p.strategies) {
      if (parse_strategy(s).per_period()) p.matrix_strategies.push_back(s);
    }
  }
  p.validate();
  return p;
}

ExperimentPlan ExperimentPlan::load(const fs::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError("plan " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::string ExperimentPlan::hash() const {
  auto j = to_json();
  j.erase("output_dir");
  j.erase("verbose");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Cache

CheckpointCache::CheckpointCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string CheckpointCache::key(const json& request) { return sha256_hex(request.dump()); }

model::Checkpoint CheckpointCache::get_or_train(const json& request,
                                                const std::function<model::Checkpoint(model::TrainStats&)>& train,
                                                bool* trained, model::TrainStats* stats) {
  const auto k = key(request);
  if (trained) *trained = false;
  if (stats) *stats = {};
  if (auto it = memory_.find(k); it != memory_.end()) return *it->second;
  const auto entry = dir_ / k;
  if (fs::exists(entry / "request.json")) {
    const auto stored = json::parse(read_file(entry / "request.json"));
    if (stored != request) throw IntegrityError("cache entry " + k + " was produced by a different request");
    auto ckpt = model::Checkpoint::load(entry / "checkpoint");
    memory_[k] = std::make_shared<const model::Checkpoint>(ckpt);
    return ckpt;
  }
  model::TrainStats st;
  auto ckpt = train(st);
  ckpt.save(entry / "checkpoint");
  write_file_atomic(entry / "request.json", request.dump(2) + "\n");
  memory_[k] = std::make_shared<const model::Checkpoint>(ckpt);
  if (trained) *trained = true;
  if (stats) *stats = st;
  return ckpt;
}

fs::path cache_dir(const fs::path& fallback) {
  if (const char* env = std::getenv("TEMPADAPT_CACHE"); env && *env) return env;
  return fallback;
}

json RunRecord::to_json() const {
  json runs_j = json::array();
  for (const auto& r : runs) {
    runs_j.push_back({{"name", r.name},
                      {"kind", r.kind},
                      {"cache_key", r.cache_key},
                      {"checkpoint_hash", r.checkpoint_hash},
                      {"trained", r.trained},
                      {"steps", r.steps},
                      {"seconds", r.seconds}});
  }
  return {{"plan_hash", plan_hash},       {"artifact_dir", artifact_dir.string()}, {"runs", runs_j},
          {"outputs", outputs},           {"training_steps", training_steps},     {"wall_seconds", wall_seconds},
          {"metrics", metrics}};
}

// ---------------------------------------------------------------------------
// Data selection

std::vector<std::size_t> even_quotas(std::size_t total, std::size_t parts) {
  if (parts == 0) throw ConfigError("no periods to split over");
  std::vector<std::size_t> q(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++q[i];
  return q;
}

std::vector<Document> balanced_order(std::vector<Document> docs, std::uint64_t seed) {
  std::map<std::string, std::vector<Document>> by_label;
  for (auto& d : docs) by_label[d.source_label.value_or("")].push_back(std::move(d));
  for (auto& [label, v] : by_label) {
    Rng rng(derive_seed(seed, "label:" + label));
    rng.shuffle(v);
  }
  std::vector<Document> out;
  for (std::size_t i = 0;; ++i) {
    bool any = false;
    for (auto& [label, v] : by_label) {
      if (i < v.size()) {
        out.push_back(std::move(v[i]));
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

Workspace load_workspace(const ExperimentPlan& plan) {
  Workspace ws;
  if (plan.corpus.contains("synth")) {
    auto spec = synth::GeneratorSpec::from_json(plan.corpus.at("synth"));
    if (plan.corpus.value("discriminative", false)) spec = synth::make_discriminative_variant(spec);
    auto syn = synth::generate_corpus(spec);
    ws.corpus = std::move(syn.corpus);
    ws.tags = std::move(syn.tags);
    ws.ledger = std::move(syn.ledger);
    ws.spec = std::move(syn.spec);
  } else {
    const fs::path dir = plan.corpus.at("path").get<std::string>();
    if (!fs::exists(dir / "manifest.json")) throw ConfigError("no corpus at " + dir.string());
    ws.corpus = corpus::read_corpus(dir);
    ws.tags = synth::read_gold_tags(dir);
    if (fs::exists(dir / "event_ledger.csv")) ws.ledger = synth::read_ledger(dir);
  }
  ws.periods = plan.periods.empty() ? ws.corpus.manifest.periods : plan.periods;
  for (const auto& p : ws.periods) (void)ws.corpus.slice(p);  // ConfigError when missing
  std::set<std::string> labels;
  for (const auto& s : ws.corpus.slices) {
    for (const auto& d : s.documents) {
      if (d.split_role != SplitRole::kAdaptation && d.source_label) labels.insert(*d.source_label);
    }
  }
  ws.labels.assign(labels.begin(), labels.end());
  return ws;
}

eval::CrossTemporalMatrix PlanResults::median(const std::vector<eval::CrossTemporalMatrix>& per_seed) {
  if (per_seed.empty()) throw DataError("no matrices to aggregate");
  auto m = per_seed.front();
  for (std::size_t c = 0; c < m.cols.size(); ++c) {
    std::vector<double> v;
    for (const auto& s : per_seed) v.push_back(s.control[c]);
    m.control[c] = eval::median(v);
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
      std::vector<double> x;
      for (const auto& s : per_seed) x.push_back(s.values[r][c]);
      m.values[r][c] = eval::median(x);
    }
  }
  return m;
}

report::Table PlanResults::median(const std::vector<report::Table>& per_seed) {
  if (per_seed.empty()) throw DataError("no tables to aggregate");
  auto t = per_seed.front();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      std::vector<double> x;
      for (const auto& s : per_seed) x.push_back(s.values[r][c]);
      t.values[r][c] = eval::median(x);
    }
  }
  return t;
}

DiagnosticsOutput token_diagnostics(const model::Model& control, const CandidateForPeriod& candidate,
                                    const DiagnosticsInput& in) {
  if (!in.vocab) throw ConfigError("diagnostics need a vocabulary");
  const auto& vocab = *in.vocab;
  std::vector<diag::MaskedTokenRecord> records;
  std::map<std::string, std::string> texts;
  std::vector<diag::LabelledDocument> labelled;
  for (const auto& test : in.tests) {
    const auto cand = candidate(test.period);
    const auto a = model::per_token_losses(control, vocab, test.docs, in.masking_seed);
    const auto b = model::per_token_losses(cand, vocab, test.docs, in.masking_seed);
    auto r = diag::loss_deltas(a, b, in.tags);
    records.insert(records.end(), r.begin(), r.end());
    for (std::size_t i = 0; i < test.docs.size(); ++i) {
      texts[test.docs[i].id] = test.docs[i].text;
      if (i < test.labels.size()) labelled.push_back({test.docs[i].id, test.period, test.docs[i].text, test.labels[i]});
    }
  }
  std::vector<diag::MaskedTokenRecord> propn;
  for (const auto& r : records) {
    if (r.pos == Pos::kPropn) propn.push_back(r);
  }
  DiagnosticsOutput out;
  auto& summary = out.summary;
  summary = {{"records", records.size()}, {"propn_records", propn.size()}};
  out.files["records.csv"] = diag::records_csv(records, vocab);

  const bool tagged = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.pos != Pos::kNone; });
  if (tagged) {
    const auto contrib = diag::contribution_by_pos(records);
    out.files["pos_contributions.csv"] = diag::contributions_csv(contrib);
    for (const auto& c : contrib) {
      if (c.pos == Pos::kPropn) {
        summary["propn_contribution"] = c.contribution;
        summary["propn_frequency"] = c.frequency;
      }
    }
  }
  if (!records.empty()) out.files["top_improved.csv"] = diag::improved_csv(diag::top_improved_tokens(records, 10, vocab, &texts));

  if (propn.size() >= 10) {
    const auto deciles = diag::decile_contributions(propn);
    out.files["propn_deciles.csv"] = diag::deciles_csv(deciles);
    summary["propn_top_decile_share"] = deciles.share[0];
    const auto top = diag::top_decile(propn);
    // Class distinctiveness needs labels for every test document.
    if (!in.labels.empty() && labelled.size() == texts.size()) {
      const auto table = diag::distinctiveness_table(top, labelled, vocab, in.labels, in.tags, in.max_len);
      out.files["distinctiveness.csv"] = diag::distinctiveness_csv(table);
      std::size_t present = 0, multi = 0;
      for (const auto& e : table.entries) {
        present += e.classes > 0;
        multi += e.classes >= 2;
      }
      summary["top_decile_distinct_subwords"] = present;
      summary["top_decile_multi_class_fraction"] =
          present ? static_cast<double>(multi) / static_cast<double>(present) : 0.0;
    }
    if (!in.event_tokens.empty()) {
      std::size_t hits = 0;
      for (const auto& r : top) {
        const auto words = tok::pre_tokenize(texts.at(r.doc_id));
        const auto w = static_cast<std::size_t>(r.word_index);
        hits += w < words.size() && in.event_tokens.contains(words[w]);
      }
      summary["top_decile_event_fraction"] = static_cast<double>(hits) / static_cast<double>(top.size());
    }
  }
  out.files["summary.json"] = summary.dump(2) + "\n";
  return out;
}

std::vector<double> distance_profile(const eval::CrossTemporalMatrix& m) {
  if (!m.square()) throw DataError("distance profile needs a square matrix");
  const auto p = m.rows.size();
  std::vector<std::vector<double>> by(p);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = 0; c < p; ++c) by[r > c ? r - c : c - r].push_back(m.values[r][c]);
  }
  std::vector<double> out;
  for (const auto& v : by) out.push_back(eval::mean(v));
  return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

using Clock = std::chrono::steady_clock;

std::string data_hash(const std::vector<std::string>& texts, const std::vector<std::string>* labels = nullptr) {
  Sha256 h;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    h.update(texts[i]).update("\x1e");
    if (labels) h.update((*labels)[i]).update("\x1f");
  }
  return h.hex();
}

json sets_json(const std::vector<model::UnlabelledSet>& sets) {
  json j = json::array();
  for (const auto& s : sets) j.push_back({{"period", s.period_id}, {"size", s.texts.size()}, {"data", data_hash(s.texts)}});
  return j;
}

json sets_json(const std::vector<model::LabelledSet>& sets) {
  json j = json::array();
  for (const auto& s : sets) {
    j.push_back({{"period", s.period_id}, {"size", s.texts.size()}, {"data", data_hash(s.texts, &s.labels)}});
  }
  return j;
}

class Runner {
 public:
  Runner(const ExperimentPlan& plan, RunRecord& record)
      : plan_(plan),
        record_(record),
        ws_(load_workspace(plan)),
        cache_(cache_dir(fs::path(plan.output_dir) / "cache")) {
    record_.plan_hash = plan.hash();
    record_.artifact_dir = fs::path(plan.output_dir) / record_.plan_hash.substr(0, 16);
    fs::create_directories(record_.artifact_dir);
    write_file_atomic(record_.artifact_dir / "plan.json", plan.to_json().dump(2) + "\n");
    prepare_pools();
    prepare_base();
  }

  const Workspace& workspace() const { return ws_; }
  const tok::Vocabulary& vocab() const { return vocab_; }
  const fs::path& artifacts() const { return record_.artifact_dir; }

  void log(const std::string& msg) const {
    if (plan_.verbose) std::clog << "[tempadapt] " << msg << std::endl;
  }

  void emit(const fs::path& rel, const std::string& contents) {
    write_file_atomic(artifacts() / rel, contents);
    record_.outputs.push_back(rel.generic_string());
  }
  void emit_table(const fs::path& rel_dir, const std::string& name, const report::Table& t, bool centered) {
    report::report(t, artifacts() / rel_dir, name, centered);
    record_.outputs.push_back((rel_dir / (name + ".csv")).generic_string());
    record_.outputs.push_back((rel_dir / (name + ".png")).generic_string());
  }
  void emit_matrix(const fs::path& rel_dir, const std::string& name, const eval::CrossTemporalMatrix& m) {
    report::report(m, artifacts() / rel_dir, name);
    for (const auto* suffix : {"_raw.csv", "_raw.png", "_percent.csv", "_percent.png", "_control.csv"}) {
      record_.outputs.push_back((rel_dir / (name + suffix)).generic_string());
    }
  }

  // --- data -------------------------------------------------------------

  std::size_t period_adapt_size() const {
    return plan_.adaptation_size ? plan_.adaptation_size : adapt_pool_.at(ws_.periods.front()).size();
  }
  std::size_t period_finetune_size() const {
    return plan_.finetune_size ? plan_.finetune_size : finetune_pool_.at(ws_.periods.front()).size();
  }

  std::vector<model::UnlabelledSet> tada_data(const std::string& p) const {
    return {{p, prefix_texts(adapt_pool_.at(p), period_adapt_size(), p)}};
  }

  std::vector<model::UnlabelledSet> dada_data(std::size_t total) const {
    std::vector<model::UnlabelledSet> sets;
    const auto q = even_quotas(total, ws_.periods.size());
    for (std::size_t i = 0; i < ws_.periods.size(); ++i) {
      if (q[i] == 0) continue;
      const auto& p = ws_.periods[i];
      sets.push_back({p, prefix_texts(adapt_pool_.at(p), q[i], p)});
    }
    return sets;
  }

  std::vector<model::LabelledSet> tft_data(const std::string& p, std::size_t size) const {
    return {labelled_prefix(finetune_pool_.at(p), size, p)};
  }

  std::vector<model::LabelledSet> rft_data(std::size_t total) const {
    std::vector<model::LabelledSet> sets;
    const auto q = even_quotas(total, ws_.periods.size());
    for (std::size_t i = 0; i < ws_.periods.size(); ++i) {
      if (q[i] == 0) continue;
      sets.push_back(labelled_prefix(finetune_pool_.at(ws_.periods[i]), q[i], ws_.periods[i]));
    }
    return sets;
  }

  const eval::TestSet& test_set(const std::string& p) const { return tests_.at(p); }

  eval::TestSet pooled_test() const {
    eval::TestSet t{"pooled", {}, {}};
    for (const auto& p : ws_.periods) {
      const auto& pool = test_pool_.at(p);
      const auto n = std::min(plan_.sweep_test_per_period, pool.size());
      for (std::size_t i = 0; i < n; ++i) {
        t.docs.push_back({pool[i].id, p, pool[i].text});
        t.labels.push_back(pool[i].source_label.value_or(""));
      }
    }
    return t;
  }

  // --- models -----------------------------------------------------------

  model::TrainConfig train_config(std::uint64_t seed) const {
    auto tc = plan_.train;
    tc.seed = seed;
    return tc;
  }

  const model::Checkpoint& base() const { return base_; }

  model::Checkpoint adapt(const std::string& name, const model::Checkpoint& from,
                          const std::vector<model::UnlabelledSet>& sets, std::uint64_t seed) {
    if (sets.empty()) return from;
    const auto tc = train_config(seed);
    json request = {{"kind", "adapt"},         {"format", 1}, {"numerics", model::numerics_fingerprint()},        {"base", hash_of(from)},
                    {"vocab", vocab_.hash()}, {"sets", sets_json(sets)}, {"train", tc.to_json()}};
    return cached(name, "adapt", request, [&](model::TrainStats& st) {
      return model::adapt(from, vocab_, sets, tc, &st);
    });
  }

  model::Checkpoint finetune(const std::string& name, const model::Checkpoint& from,
                             const std::vector<model::LabelledSet>& sets, std::uint64_t seed) {
    const auto tc = train_config(seed);
    json request = {{"kind", "finetune"},     {"format", 1}, {"numerics", model::numerics_fingerprint()},          {"base", hash_of(from)},
                    {"vocab", vocab_.hash()}, {"sets", sets_json(sets)}, {"labels", ws_.labels},
                    {"train", tc.to_json()}};
    return cached(name, "finetune", request, [&](model::TrainStats& st) {
      return model::finetune(from, vocab_, sets, ws_.labels, tc, &st);
    });
  }

  model::Checkpoint tada(const std::string& p, std::uint64_t seed) {
    return adapt("TAda/" + p + "/seed" + std::to_string(seed), base_, tada_data(p), seed);
  }
  model::Checkpoint dada(std::size_t size, std::uint64_t seed) {
    return adapt("DAda/" + std::to_string(size) + "/seed" + std::to_string(seed), base_, dada_data(size), seed);
  }

  /// Adapted model of a strategy for one period (period ignored unless TAda).
  model::Checkpoint adapted(Adaptation a, const std::string& p, std::uint64_t seed) {
    switch (a) {
      case Adaptation::kNAda:
        return base_;
      case Adaptation::kDAda:
        return dada(period_adapt_size(), seed);
      case Adaptation::kTAda:
        return tada(p, seed);
    }
    return base_;
  }

  /// Fully trained model of a strategy whose adaptation and/or fine-tuning
  /// period is p.
  model::Checkpoint strategy_model(Strategy s, const std::string& p, std::size_t ft_size, std::uint64_t seed) {
    const auto from = adapted(s.adaptation, p, seed);
    const auto tag = to_string(s) + "/" + (s.per_period() ? p : std::string("all")) + "/ft" + std::to_string(ft_size) +
                     "/seed" + std::to_string(seed);
    return s.finetuning == Finetuning::kTFt ? finetune(tag, from, tft_data(p, ft_size), seed)
                                            : finetune(tag, from, rft_data(ft_size), seed);
  }

  model::Model load(const model::Checkpoint& c) const { return model::init_from(c, vocab_); }

 private:
  template <typename Fn>
  model::Checkpoint cached(const std::string& name, const std::string& kind, const json& request, Fn&& fn) {
    const auto t0 = Clock::now();
    bool trained = false;
    model::TrainStats st;
    auto ckpt = cache_.get_or_train(request, fn, &trained, &st);
    RunEntry e{name, kind, CheckpointCache::key(request), hash_of(ckpt), trained, st.steps,
               std::chrono::duration<double>(Clock::now() - t0).count()};
    if (trained) log("trained " + name + " (" + std::to_string(st.steps) + " steps, " + std::to_string(e.seconds) + " s)");
    record_.training_steps += st.steps;
    if (!seen_runs_.contains(e.cache_key)) {
      seen_runs_.insert(e.cache_key);
      record_.runs.push_back(std::move(e));
    }
    return ckpt;
  }

  std::string hash_of(const model::Checkpoint& c) {
    // Checkpoints are large; memoise hashes by weight buffer identity is not
    // safe across copies, so hash the content each time.
    return c.content_hash();
  }

  static std::vector<std::string> prefix_texts(const std::vector<Document>& pool, std::size_t n, const std::string& p) {
    if (n > pool.size()) {
      throw DataError("period " + p + " has " + std::to_string(pool.size()) + " documents, " + std::to_string(n) +
                      " requested");
    }
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[i].text);
    return out;
  }

  static model::LabelledSet labelled_prefix(const std::vector<Document>& pool, std::size_t n, const std::string& p) {
    if (n > pool.size()) {
      throw DataError("period " + p + " has " + std::to_string(pool.size()) + " labelled documents, " +
                      std::to_string(n) + " requested");
    }
    model::LabelledSet s{p, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      if (!pool[i].source_label) throw DataError("fine-tuning document " + pool[i].id + " has no label");
      s.texts.push_back(pool[i].text);
      s.labels.push_back(*pool[i].source_label);
    }
    return s;
  }

  void prepare_pools() {
    for (const auto& p : ws_.periods) {
      const auto& slice = ws_.corpus.slice(p);
      adapt_pool_[p] = balanced_order(corpus::select_role(slice, SplitRole::kAdaptation),
                                      derive_seed(plan_.data_seed, "adapt/" + p));
      finetune_pool_[p] = balanced_order(corpus::select_role(slice, SplitRole::kFinetune),
                                         derive_seed(plan_.data_seed, "finetune/" + p));
      test_pool_[p] = balanced_order(corpus::select_role(slice, SplitRole::kTest), derive_seed(plan_.data_seed, "test/" + p));
      eval::TestSet t{p, {}, {}};
      for (const auto& d : corpus::select_role(slice, SplitRole::kTest)) {
        t.docs.push_back({d.id, p, d.text});
        t.labels.push_back(d.source_label.value_or(""));
      }
      tests_[p] = std::move(t);
    }
  }

  void prepare_base() {
    if (!plan_.base.checkpoint.empty()) {
      vocab_ = tok::Vocabulary::load(plan_.base.vocab);
      base_ = model::Checkpoint::load(plan_.base.checkpoint);
      (void)model::init_from(base_, vocab_);
      return;
    }
    if (!ws_.spec) throw ConfigError("pre-training a base model needs a synthetic spec");
    const auto texts = synth::generate_background_texts(*ws_.spec, plan_.base.background_docs, plan_.base.seed);
    const auto texts_hash = data_hash(texts);
    const json vocab_request = {{"kind", "vocabulary"}, {"data", texts_hash}, {"size", plan_.model.vocab_size}};
    const auto vocab_path = cache_.dir() / ("vocab-" + CheckpointCache::key(vocab_request) + ".txt");
    if (fs::exists(vocab_path)) {
      vocab_ = tok::Vocabulary::load(vocab_path);
    } else {
      log("training vocabulary");
      vocab_ = tok::train_vocabulary(texts, static_cast<std::size_t>(plan_.model.vocab_size));
      vocab_.save(vocab_path);
    }
    auto cfg = plan_.model;
    cfg.vocab_size = static_cast<int>(vocab_.size());
    cfg.vocab_hash = vocab_.hash();
    cfg.n_classes = 0;
    auto tc = plan_.train;
    tc.learning_rate = plan_.base.learning_rate;
    tc.adaptation_batch = plan_.base.batch;
    tc.adaptation_epochs = plan_.base.epochs;
    tc.seed = plan_.base.seed;
    const json request = {{"kind", "pretrain"}, {"format", 1}, {"numerics", model::numerics_fingerprint()}, {"model", cfg.to_json()},
                          {"data", texts_hash}, {"size", texts.size()}, {"train", tc.to_json()}};
    base_ = cached("NAda/base", "pretrain", request, [&](model::TrainStats& st) {
      const auto init = model::init_model(cfg, plan_.base.seed);
      std::vector<model::UnlabelledSet> sets{{"background", texts}};
      auto out = model::adapt(init, vocab_, sets, tc, &st);
      out.provenance = {{"strategy", "NAda"},
                        {"adaptation", json::array()},
                        {"pretraining", {{"documents", texts.size()}, {"config", tc.to_json()}}}};
      return out;
    });
  }

  const ExperimentPlan& plan_;
  RunRecord& record_;
  Workspace ws_;
  CheckpointCache cache_;
  tok::Vocabulary vocab_;
  model::Checkpoint base_;
  std::map<std::string, std::vector<Document>> adapt_pool_, finetune_pool_, test_pool_;
  std::map<std::string, eval::TestSet> tests_;
  std::set<std::string> seen_runs_;
};

std::string seed_dir(std::uint64_t s) { return "seed-" + std::to_string(s); }

// --- analyses -------------------------------------------------------------

eval::CrossTemporalMatrix mlm_matrix(Runner& run, const ExperimentPlan& plan, std::uint64_t seed) {
  const auto& periods = run.workspace().periods;
  std::vector<model::Model> models;
  models.reserve(periods.size());
  for (const auto& p : periods) models.push_back(run.load(run.tada(p, seed)));
  const auto control = run.load(run.dada(run.period_adapt_size(), seed));
  std::vector<eval::NamedModel> named;
  for (std::size_t i = 0; i < periods.size(); ++i) named.push_back({periods[i], &models[i]});
  std::vector<eval::TestSet> tests;
  for (const auto& p : periods) tests.push_back(run.test_set(p));
  run.log("evaluating TAda pseudo-perplexity matrix, seed " + std::to_string(seed));
  return eval::build_matrix(named, tests, periods, eval::Metric::kPseudoPerplexity, control, run.vocab(),
                            plan.masking_seed);
}

json asymmetry(const eval::CrossTemporalMatrix& m) {
  const auto pairs = eval::offdiagonal_pairs(m);
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : pairs) xy.emplace_back(p.past_on_future, p.future_on_past);
  auto j = eval::wilcoxon_signed_rank(xy, eval::Alternative::kGreater).to_json();
  j["pairs"] = pairs.size();
  j["alternative"] = "past_on_future > future_on_past";
  return j;
}

std::size_t diagonal_wins(const eval::CrossTemporalMatrix& m, bool lower_better) {
  const auto best = m.best_per_column(lower_better);
  std::size_t wins = 0;
  for (std::size_t c = 0; c < best.size(); ++c) wins += best[c].row == c && !best[c].tied;
  return wins;
}

eval::CrossTemporalMatrix cls_matrix(Runner& run, Strategy s, std::uint64_t seed) {
  const auto& periods = run.workspace().periods;
  const auto size = run.period_finetune_size();
  std::vector<model::Model> models;
  for (const auto& p : periods) models.push_back(run.load(run.strategy_model(s, p, size, seed)));
  // Time-agnostic control: the same pipeline with regular fine-tuning, and
  // domain adaptation in place of temporal adaptation.
  Strategy control_s{s.adaptation == Adaptation::kTAda ? Adaptation::kDAda : s.adaptation, Finetuning::kRFt};
  const auto control = run.load(run.strategy_model(control_s, periods.front(), size, seed));
  std::vector<eval::NamedModel> named;
  for (std::size_t i = 0; i < periods.size(); ++i) named.push_back({periods[i], &models[i]});
  std::vector<eval::TestSet> tests;
  for (const auto& p : periods) tests.push_back(run.test_set(p));
  run.log("evaluating " + to_string(s) + " macro-F1 matrix, seed " + std::to_string(seed));
  return eval::build_matrix(named, tests, periods, eval::Metric::kMacroF1, control, run.vocab(), 0);
}

json cls_summary(const eval::CrossTemporalMatrix& m) {
  std::size_t beats = 0;
  for (std::size_t i = 0; i < m.rows.size(); ++i) beats += m.values[i][i] > m.control[i];
  const auto profile = distance_profile(m);
  std::vector<double> dist;
  for (std::size_t d = 0; d < profile.size(); ++d) dist.push_back(static_cast<double>(d));
  json j = {{"diagonal_beats_control", beats}, {"periods", m.rows.size()}, {"distance_profile", profile}};
  // A flat profile has no rank correlation; report null instead of failing the run.
  const bool flat = std::adjacent_find(profile.begin(), profile.end(), std::not_equal_to<>()) == profile.end();
  if (profile.size() >= 3 && !flat) {
    const auto sp = eval::spearman(dist, profile);
    j["spearman_rho"] = sp.rho;
    j["spearman_p_less"] = sp.p_less;
  } else {
    j["spearman_rho"] = nullptr;
    j["spearman_p_less"] = nullptr;
  }
  return j;
}

report::Table sweep_table(Runner& run, const ExperimentPlan& plan, std::uint64_t seed) {
  const auto pooled = run.pooled_test();
  report::Table t;
  t.corner = "adaptation_size";
  t.cols.push_back("ppl");
  for (auto m : plan.sweep_finetune_sizes) t.cols.push_back("f1@" + std::to_string(m));
  for (auto n : plan.sweep_adaptation_sizes) {
    t.rows.push_back(std::to_string(n));
    const auto adapted = n == 0 ? run.base() : run.dada(n, seed);
    std::vector<double> row;
    row.push_back(eval::evaluate_mlm(run.load(adapted), run.vocab(), pooled, plan.masking_seed).pseudo_perplexity);
    for (auto m : plan.sweep_finetune_sizes) {
      const auto name = std::string(n == 0 ? "NAda" : "DAda") + "+RFt/" + std::to_string(n) + "/ft" +
                        std::to_string(m) + "/seed" + std::to_string(seed);
      const auto ft = run.finetune(name, adapted, run.rft_data(m), seed);
      row.push_back(eval::evaluate_cls(run.load(ft), run.vocab(), pooled).macro_f1);
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

report::Table compare_table(Runner& run, const ExperimentPlan& plan, std::uint64_t seed) {
  const auto& periods = run.workspace().periods;
  auto sizes = plan.compare_finetune_sizes;
  if (sizes.empty()) sizes.push_back(run.period_finetune_size());
  report::Table t;
  t.corner = "strategy";
  for (auto m : sizes) t.cols.push_back(std::to_string(m));
  for (const auto& s : all_strategies()) {
    t.rows.push_back(to_string(s));
    std::vector<double> row;
    for (auto m : sizes) {
      std::vector<double> f1;
      std::optional<model::Model> shared;
      for (const auto& p : periods) {
        // Temporal runs are matched to the test period.
        if (s.per_period()) {
          f1.push_back(eval::evaluate_cls(run.load(run.strategy_model(s, p, m, seed)), run.vocab(), run.test_set(p)).macro_f1);
        } else {
          if (!shared) shared.emplace(run.load(run.strategy_model(s, p, m, seed)));
          f1.push_back(eval::evaluate_cls(*shared, run.vocab(), run.test_set(p)).macro_f1);
        }
      }
      row.push_back(eval::mean(f1));
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

json diagnostics(Runner& run, const ExperimentPlan& plan, std::uint64_t seed, const fs::path& out_dir) {
  const auto& ws = run.workspace();
  run.log("token-level diagnostics, seed " + std::to_string(seed));
  DiagnosticsInput in;
  in.vocab = &run.vocab();
  for (const auto& p : ws.periods) in.tests.push_back(run.test_set(p));
  in.tags = &ws.tags;
  in.labels = ws.labels;
  if (ws.spec) {
    for (const auto& e : ws.spec->events) in.event_tokens.insert(e.token);
  }
  in.masking_seed = plan.masking_seed;
  in.max_len = static_cast<std::size_t>(run.base().config.max_len);
  const auto out = token_diagnostics(run.load(run.dada(run.period_adapt_size(), seed)),
                                     [&](const std::string& p) { return run.load(run.tada(p, seed)); }, in);
  for (const auto& [name, text] : out.files) run.emit(out_dir / name, text);
  return out.summary;
}

bool wants(const ExperimentPlan& plan, const std::string& a) {
  return std::find(plan.analyses.begin(), plan.analyses.end(), a) != plan.analyses.end();
}

}  // namespace

RunRecord run_plan(const ExperimentPlan& plan, PlanResults* results) {
  plan.validate();
  const auto t0 = Clock::now();
  RunRecord record;
  Runner run(plan, record);
  PlanResults local;
  PlanResults& res = results ? *results : local;
  res = {};
  res.seeds = plan.seeds;

  if (wants(plan, "compare")) {
    std::vector<std::string> missing;
    for (const auto& s : all_strategies()) {
      if (std::find(plan.strategies.begin(), plan.strategies.end(), to_string(s)) == plan.strategies.end()) {
        missing.push_back(to_string(s));
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw ConfigError("strategy comparison needs all six strategies; missing " + list);
    }
  }

  for (auto seed : plan.seeds) {
    const fs::path dir = seed_dir(seed);
    if (wants(plan, "mlm_matrix")) {
      auto m = mlm_matrix(run, plan, seed);
      run.emit_matrix(dir, "mlm_matrix", m);
      run.emit(dir / "mlm_wilcoxon.json", asymmetry(m).dump(2) + "\n");
      res.mlm_matrix.push_back(std::move(m));
    }
    if (wants(plan, "cls_matrix")) {
      for (const auto& name : plan.matrix_strategies) {
        auto m = cls_matrix(run, parse_strategy(name), seed);
        run.emit_matrix(dir, "cls_matrix_" + name, m);
        res.cls_matrix[name].push_back(std::move(m));
      }
    }
    if (wants(plan, "sweep")) {
      auto t = sweep_table(run, plan, seed);
      run.emit_table(dir, "sweep", t, false);
      res.sweep.push_back(std::move(t));
    }
    if (wants(plan, "compare")) {
      auto t = compare_table(run, plan, seed);
      run.emit_table(dir, "compare", t, false);
      res.compare.push_back(std::move(t));
    }
    if (wants(plan, "diagnostics")) res.diagnostics.push_back(diagnostics(run, plan, seed, dir / "diagnostics"));
  }

  // Medians over seeds.
  const fs::path med = "median";
  auto& metrics = record.metrics;
  if (!res.mlm_matrix.empty()) {
    const auto m = PlanResults::median(res.mlm_matrix);
    run.emit_matrix(med, "mlm_matrix", m);
    std::vector<double> ps;
    for (const auto& s : res.mlm_matrix) ps.push_back(asymmetry(s)["p_value"].get<double>());
    metrics["mlm_matrix"] = {{"diagonal_wins", diagonal_wins(m, true)},
                             {"periods", m.rows.size()},
                             {"wilcoxon_p_per_seed", ps},
                             {"wilcoxon_p_median", eval::median(ps)}};
    run.emit(med / "mlm_summary.json", metrics["mlm_matrix"].dump(2) + "\n");
  }
  for (const auto& [name, per_seed] : res.cls_matrix) {
    const auto m = PlanResults::median(per_seed);
    run.emit_matrix(med, "cls_matrix_" + name, m);
    metrics["cls_matrix"][name] = cls_summary(m);
    run.emit(med / ("cls_summary_" + name + ".json"), metrics["cls_matrix"][name].dump(2) + "\n");
  }
  if (!res.sweep.empty()) run.emit_table(med, "sweep", PlanResults::median(res.sweep), false);
  if (!res.compare.empty()) run.emit_table(med, "compare", PlanResults::median(res.compare), false);
  if (!res.diagnostics.empty()) metrics["diagnostics"] = res.diagnostics;

  record.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  write_file_atomic(record.artifact_dir / "run_record.json", record.to_json().dump(2) + "\n");
  return record;
}

report::Table scale_sweep(const ExperimentPlan& plan, RunRecord* record) {
  auto p = plan;
  p.analyses = {"sweep"};
  if (p.sweep_adaptation_sizes.empty()) throw ConfigError("scale sweep needs adaptation sizes");
  PlanResults res;
  auto r = run_plan(p, &res);
  if (record) *record = std::move(r);
  return PlanResults::median(res.sweep);
}

report::Table strategy_compare(const ExperimentPlan& plan, RunRecord* record) {
  auto p = plan;
  p.analyses = {"compare"};
  PlanResults res;
  auto r = run_plan(p, &res);
  if (record) *record = std::move(r);
  return PlanResults::median(res.compare);
}

}  // namespace tempadapt::orch
