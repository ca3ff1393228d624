// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand maps library errors onto exit
// codes: 1 configuration, 2 data or I/O, 3 integrity.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tempadapt/corpus.hpp"
#include "tempadapt/error.hpp"
#include "tempadapt/evaluation.hpp"
#include "tempadapt/model.hpp"
#include "tempadapt/orchestrator.hpp"
#include "tempadapt/report.hpp"
#include "tempadapt/synthgen.hpp"
#include "tempadapt/tokenizer.hpp"
#include "tempadapt/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tempadapt;
using corpus::SplitRole;

namespace {

json load_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<std::string> csv_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& s : split(text, ',')) {
    if (auto t = trim(s); !t.empty()) out.push_back(std::move(t));
  }
  return out;
}

corpus::Corpus open_corpus(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw ConfigError("no corpus at " + dir.string());
  return corpus::read_corpus(dir);
}

std::vector<std::string> periods_or_all(const corpus::Corpus& c, const std::string& list) {
  auto periods = list.empty() ? c.manifest.periods : csv_list(list);
  for (const auto& p : periods) (void)c.slice(p);
  return periods;
}

std::vector<std::string> corpus_labels(const corpus::Corpus& c) {
  std::set<std::string> labels;
  for (const auto& s : c.slices) {
    for (const auto& d : s.documents) {
      if (d.split_role != SplitRole::kAdaptation && d.source_label) labels.insert(*d.source_label);
    }
  }
  return {labels.begin(), labels.end()};
}

std::vector<eval::TestSet> test_sets(const corpus::Corpus& c, const std::vector<std::string>& periods) {
  std::vector<eval::TestSet> out;
  for (const auto& p : periods) {
    eval::TestSet t{p, {}, {}};
    for (const auto& d : corpus::select_role(c.slice(p), SplitRole::kTest)) {
      t.docs.push_back({d.id, p, d.text});
      if (d.source_label) t.labels.push_back(*d.source_label);
    }
    if (t.docs.empty()) throw DataError("period " + p + " has no test documents");
    if (t.labels.size() != t.docs.size()) t.labels.clear();
    out.push_back(std::move(t));
  }
  return out;
}

bool is_checkpoint(const fs::path& dir) { return fs::exists(dir / "config.json"); }

/// Per-period checkpoints stored as DIR/<period>/.
std::map<std::string, fs::path> period_checkpoints(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no model directory " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && is_checkpoint(e.path())) out[e.path().filename().string()] = e.path();
  }
  if (out.empty()) throw ConfigError(dir.string() + " holds no per-period checkpoints");
  return out;
}

model::TrainConfig train_config(const std::string& path, std::uint64_t seed) {
  auto tc = path.empty() ? model::TrainConfig{} : model::TrainConfig::from_json(load_json(path));
  tc.seed = seed;
  tc.validate();
  return tc;
}

/// Balanced, data-seeded prefixes of one role, spread evenly over periods.
template <typename Set, typename Fill>
std::vector<Set> draw_sets(const corpus::Corpus& c, const std::vector<std::string>& periods, SplitRole role,
                           std::size_t total, std::uint64_t data_seed, Fill fill) {
  std::vector<Set> sets;
  const auto quotas = orch::even_quotas(total, periods.size());
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const auto& p = periods[i];
    auto pool = orch::balanced_order(corpus::select_role(c.slice(p), role),
                                     derive_seed(data_seed, std::string(corpus::to_string(role)) + "/" + p));
    const auto n = total == 0 ? pool.size() : quotas[i];
    if (n == 0) continue;
    if (n > pool.size()) {
      throw DataError("period " + p + " has " + std::to_string(pool.size()) + " " +
                      std::string(corpus::to_string(role)) + " documents, " + std::to_string(n) + " requested");
    }
    Set s;
    s.period_id = p;
    for (std::size_t k = 0; k < n; ++k) fill(s, pool[k]);
    sets.push_back(std::move(s));
  }
  return sets;
}

void print_stats(const std::string& what, const model::TrainStats& st, const fs::path& out) {
  std::cout << json{{"command", what}, {"steps", st.steps}, {"examples", st.examples}, {"out", out.string()}}.dump()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal adaptation experiments for masked language models"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic temporal corpus");
  std::string spec_path, synth_out;
  bool discriminative = false;
  synth_cmd->add_option("--spec", spec_path, "Generator spec (JSON)")->required();
  synth_cmd->add_option("--out", synth_out, "Output corpus directory")->required();
  synth_cmd->add_flag("--discriminative", discriminative, "Confine each event to one class");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a corpus from newline-delimited JSON records");
  std::string ingest_in, field_map, filters, granularity = "month", ingest_out, default_role = "adaptation",
                                             corpus_id = "ingested";
  ingest_cmd->add_option("--input", ingest_in, "Records file")->required();
  ingest_cmd->add_option("--field-map", field_map, "e.g. text=body,timestamp=created_utc")->required();
  ingest_cmd->add_option("--filters", filters, "Comma-separated filter list");
  ingest_cmd->add_option("--granularity", granularity, "Time-slice granularity")->check(CLI::IsMember({"month"}));
  ingest_cmd->add_option("--role", default_role, "Split role for records without one");
  ingest_cmd->add_option("--id", corpus_id, "Corpus id");
  ingest_cmd->add_option("--out", ingest_out, "Output corpus directory")->required();

  // tokenize
  auto* tok_cmd = app.add_subcommand("tokenize", "Learn a subword vocabulary from corpus text");
  std::string tok_corpus, tok_out, tok_role = "adaptation", tok_periods;
  std::size_t tok_size = 2000;
  tok_cmd->add_option("--corpus", tok_corpus, "Corpus directory")->required();
  tok_cmd->add_option("--size", tok_size, "Vocabulary size including special tokens");
  tok_cmd->add_option("--role", tok_role, "Split role whose text is used");
  tok_cmd->add_option("--periods", tok_periods, "Comma-separated periods (default: all)");
  tok_cmd->add_option("--out", tok_out, "Vocabulary file")->required();

  // adapt / finetune share most options
  struct TrainArgs {
    std::string base, init, vocab, corpus, periods, train, out;
    std::size_t size = 0;
    std::uint64_t seed = 1, data_seed = 99;
  };
  TrainArgs ad, ft;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--vocab", a.vocab, "Vocabulary file")->required();
    cmd->add_option("--corpus", a.corpus, "Corpus directory")->required();
    cmd->add_option("--periods", a.periods, "Comma-separated periods (one: temporal, several: pooled)");
    cmd->add_option("--size", a.size, "Total documents, split evenly over periods (0: all)");
    cmd->add_option("--train", a.train, "Training config (JSON)");
    cmd->add_option("--seed", a.seed, "Run seed");
    cmd->add_option("--data-seed", a.data_seed, "Document selection seed");
    cmd->add_option("--out", a.out, "Output checkpoint directory")->required();
  };
  auto* adapt_cmd = app.add_subcommand("adapt", "Continued masked-language-model pre-training");
  auto* adapt_base = adapt_cmd->add_option("--base", ad.base, "Base checkpoint directory");
  auto* adapt_init = adapt_cmd->add_option("--init", ad.init, "Model config (JSON) for training from scratch");
  adapt_base->excludes(adapt_init);
  add_train_options(adapt_cmd, ad);
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a classification head");
  ft_cmd->add_option("--base", ft.base, "Checkpoint directory")->required();
  add_train_options(ft_cmd, ft);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one checkpoint on period test sets");
  std::string ev_model, ev_vocab, ev_corpus, ev_periods, ev_metric = "ppl";
  std::uint64_t ev_mask_seed = 1234;
  eval_cmd->add_option("--model", ev_model, "Checkpoint directory")->required();
  eval_cmd->add_option("--vocab", ev_vocab, "Vocabulary file")->required();
  eval_cmd->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  eval_cmd->add_option("--periods", ev_periods, "Comma-separated periods (default: all)");
  eval_cmd->add_option("--metric", ev_metric, "ppl or f1");
  eval_cmd->add_option("--masking-seed", ev_mask_seed, "Masking seed");

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "Cross-temporal matrix of per-period models");
  std::string mx_models, mx_tests, mx_metric = "ppl", mx_control, mx_out, mx_vocab;
  std::uint64_t mx_mask_seed = 1234;
  matrix_cmd->add_option("--models", mx_models, "Directory of per-period checkpoints")->required();
  matrix_cmd->add_option("--tests", mx_tests, "Corpus directory with test documents")->required();
  matrix_cmd->add_option("--metric", mx_metric, "ppl or f1");
  matrix_cmd->add_option("--control", mx_control, "Control checkpoint directory")->required();
  matrix_cmd->add_option("--vocab", mx_vocab, "Vocabulary file")->required();
  matrix_cmd->add_option("--masking-seed", mx_mask_seed, "Masking seed");
  matrix_cmd->add_option("--out", mx_out, "Output directory")->required();

  // diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "Token-level loss comparison against a control");
  std::string dg_control, dg_candidate, dg_tests, dg_vocab, dg_out, dg_periods;
  std::uint64_t dg_mask_seed = 1234;
  diag_cmd->add_option("--control", dg_control, "Control checkpoint directory")->required();
  diag_cmd->add_option("--candidate", dg_candidate, "Checkpoint, or directory of per-period checkpoints")->required();
  diag_cmd->add_option("--tests", dg_tests, "Corpus directory with test documents")->required();
  diag_cmd->add_option("--vocab", dg_vocab, "Vocabulary file")->required();
  diag_cmd->add_option("--periods", dg_periods, "Comma-separated periods (default: all)");
  diag_cmd->add_option("--masking-seed", dg_mask_seed, "Masking seed");
  diag_cmd->add_option("--out", dg_out, "Output directory")->required();

  // plan-driven commands
  std::string plan_path;
  auto* run_cmd = app.add_subcommand("run", "Run every analysis of an experiment plan");
  auto* sweep_cmd = app.add_subcommand("sweep", "Adaptation and fine-tuning size sweep of a plan");
  auto* compare_cmd = app.add_subcommand("compare", "Strategy comparison of a plan");
  for (auto* cmd : {run_cmd, sweep_cmd, compare_cmd}) {
    cmd->add_option("--plan", plan_path, "Experiment plan (JSON)")->required();
  }

  // report
  auto* report_cmd = app.add_subcommand("report", "Render a CSV table as CSV plus heatmap");
  std::string rp_input, rp_out, rp_name;
  bool rp_centered = false;
  report_cmd->add_option("--input", rp_input, "Table CSV")->required();
  report_cmd->add_option("--out", rp_out, "Output directory")->required();
  report_cmd->add_option("--name", rp_name, "Output base name (default: input stem)");
  report_cmd->add_flag("--centered", rp_centered, "Signed colour scale centred at zero");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::kConfig);
  }

  try {
    if (*synth_cmd) {
      auto spec = synth::GeneratorSpec::from_json(load_json(spec_path));
      if (discriminative) spec = synth::make_discriminative_variant(spec);
      const auto syn = synth::generate_corpus(spec);
      synth::write_synthetic(synth_out, syn);
      std::size_t docs = 0;
      for (const auto& s : syn.corpus.slices) docs += s.documents.size();
      std::cout << json{{"command", "synth"}, {"periods", syn.corpus.slices.size()}, {"documents", docs},
                        {"out", synth_out}}.dump()
                << "\n";
    } else if (*ingest_cmd) {
      corpus::IngestOptions opt;
      opt.field_map = corpus::parse_field_map(field_map);
      opt.filters = corpus::parse_filters(filters);
      opt.default_role = corpus::parse_split_role(default_role);
      opt.corpus_id = corpus_id;
      const auto c = corpus::build_corpus(ingest_in, opt);
      corpus::write_corpus(ingest_out, c);
      std::cout << json{{"command", "ingest"}, {"periods", c.manifest.periods}, {"out", ingest_out}}.dump() << "\n";
    } else if (*tok_cmd) {
      const auto c = open_corpus(tok_corpus);
      const auto role = corpus::parse_split_role(tok_role);
      std::vector<std::string> texts;
      for (const auto& p : periods_or_all(c, tok_periods)) {
        for (const auto& d : corpus::select_role(c.slice(p), role)) texts.push_back(d.text);
      }
      if (texts.empty()) throw DataError("no " + tok_role + " text to learn a vocabulary from");
      const auto v = tok::train_vocabulary(texts, tok_size);
      v.save(tok_out);
      std::cout << json{{"command", "tokenize"}, {"size", v.size()}, {"hash", v.hash()}, {"out", tok_out}}.dump()
                << "\n";
    } else if (*adapt_cmd) {
      if (ad.base.empty() == ad.init.empty()) throw ConfigError("adapt needs exactly one of --base or --init");
      const auto vocab = tok::Vocabulary::load(ad.vocab);
      const auto c = open_corpus(ad.corpus);
      const auto periods = periods_or_all(c, ad.periods);
      model::Checkpoint base;
      if (!ad.init.empty()) {
        auto cfg = model::ModelConfig::from_json(load_json(ad.init));
        cfg.vocab_size = static_cast<int>(vocab.size());
        cfg.vocab_hash = vocab.hash();
        cfg.n_classes = 0;
        base = model::init_model(cfg, ad.seed);
      } else {
        base = model::Checkpoint::load(ad.base);
      }
      const auto sets = draw_sets<model::UnlabelledSet>(
          c, periods, SplitRole::kAdaptation, ad.size, ad.data_seed,
          [](model::UnlabelledSet& s, const corpus::Document& d) { s.texts.push_back(d.text); });
      model::TrainStats st;
      const auto out = model::adapt(base, vocab, sets, train_config(ad.train, ad.seed), &st);
      out.save(ad.out);
      print_stats("adapt", st, ad.out);
    } else if (*ft_cmd) {
      const auto vocab = tok::Vocabulary::load(ft.vocab);
      const auto c = open_corpus(ft.corpus);
      const auto periods = periods_or_all(c, ft.periods);
      const auto sets = draw_sets<model::LabelledSet>(
          c, periods, SplitRole::kFinetune, ft.size, ft.data_seed,
          [](model::LabelledSet& s, const corpus::Document& d) {
            if (!d.source_label) throw DataError("fine-tuning document " + d.id + " has no label");
            s.texts.push_back(d.text);
            s.labels.push_back(*d.source_label);
          });
      model::TrainStats st;
      const auto out = model::finetune(model::Checkpoint::load(ft.base), vocab, sets, corpus_labels(c),
                                       train_config(ft.train, ft.seed), &st);
      out.save(ft.out);
      print_stats("finetune", st, ft.out);
    } else if (*eval_cmd) {
      const auto vocab = tok::Vocabulary::load(ev_vocab);
      const auto c = open_corpus(ev_corpus);
      const auto metric = eval::parse_metric(ev_metric);
      const auto m = model::init_from(model::Checkpoint::load(ev_model), vocab);
      for (const auto& t : test_sets(c, periods_or_all(c, ev_periods))) {
        const double v = eval::evaluate(m, vocab, t, metric, ev_mask_seed);
        std::cout << json{{"period", t.period}, {"metric", eval::to_string(metric)}, {"value", v}}.dump() << "\n";
      }
    } else if (*matrix_cmd) {
      const auto vocab = tok::Vocabulary::load(mx_vocab);
      const auto c = open_corpus(mx_tests);
      const auto metric = eval::parse_metric(mx_metric);
      const auto control = model::init_from(model::Checkpoint::load(mx_control), vocab);
      std::vector<model::Model> models;
      std::vector<std::string> periods;
      for (const auto& [p, dir] : period_checkpoints(mx_models)) {
        periods.push_back(p);
        models.push_back(model::init_from(model::Checkpoint::load(dir), vocab));
      }
      std::vector<eval::NamedModel> named;
      for (std::size_t i = 0; i < models.size(); ++i) named.push_back({periods[i], &models[i]});
      const auto m = eval::build_matrix(named, test_sets(c, periods), periods, metric, control, vocab, mx_mask_seed);
      fs::create_directories(mx_out);
      m.write(mx_out);
      report::report(m, mx_out, "matrix");
      json summary = {{"metric", eval::to_string(metric)}, {"periods", periods}};
      if (m.square() && periods.size() >= 2) {
        const auto pairs = eval::offdiagonal_pairs(m);
        std::vector<double> diffs;
        for (const auto& p : pairs) {
          // Positive when the past model is worse on the future than the reverse.
          diffs.push_back(eval::lower_is_better(metric) ? p.past_on_future - p.future_on_past
                                                        : p.future_on_past - p.past_on_future);
        }
        const auto w = eval::wilcoxon_signed_rank(diffs, eval::Alternative::kGreater);
        summary["pairs"] = pairs.size();
        summary["wilcoxon"] = w.to_json();
      }
      write_file_atomic(fs::path(mx_out) / "wilcoxon.json", summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
    } else if (*diag_cmd) {
      const auto vocab = tok::Vocabulary::load(dg_vocab);
      const auto c = open_corpus(dg_tests);
      orch::DiagnosticsInput in;
      in.vocab = &vocab;
      in.masking_seed = dg_mask_seed;
      in.labels = corpus_labels(c);
      const auto tags = synth::read_gold_tags(dg_tests);
      in.tags = &tags;
      if (fs::exists(fs::path(dg_tests) / "event_ledger.csv")) in.event_tokens = synth::read_ledger(dg_tests).tokens();
      const auto control_ckpt = model::Checkpoint::load(dg_control);
      in.max_len = static_cast<std::size_t>(control_ckpt.config.max_len);
      const auto control = model::init_from(control_ckpt, vocab);
      std::vector<std::string> periods;
      orch::CandidateForPeriod candidate;
      if (is_checkpoint(dg_candidate)) {
        periods = periods_or_all(c, dg_periods);
        const auto single = model::Checkpoint::load(dg_candidate);
        candidate = [&, single](const std::string&) { return model::init_from(single, vocab); };
      } else {
        const auto dirs = period_checkpoints(dg_candidate);
        if (dg_periods.empty()) {
          for (const auto& [p, d] : dirs) periods.push_back(p);
        } else {
          periods = csv_list(dg_periods);
        }
        candidate = [&vocab, dirs](const std::string& p) {
          const auto it = dirs.find(p);
          if (it == dirs.end()) throw ConfigError("no candidate checkpoint for period " + p);
          return model::init_from(model::Checkpoint::load(it->second), vocab);
        };
      }
      in.tests = test_sets(c, periods);
      const auto out = orch::token_diagnostics(control, candidate, in);
      for (const auto& [name, text] : out.files) write_file_atomic(fs::path(dg_out) / name, text);
      std::cout << out.summary.dump() << "\n";
    } else if (*run_cmd || *sweep_cmd || *compare_cmd) {
      const auto plan = orch::ExperimentPlan::load(plan_path);
      orch::RunRecord record;
      if (*run_cmd) {
        record = orch::run_plan(plan);
      } else if (*sweep_cmd) {
        (void)orch::scale_sweep(plan, &record);
      } else {
        (void)orch::strategy_compare(plan, &record);
      }
      std::cout << json{{"plan", record.plan_hash},
                        {"artifacts", record.artifact_dir.string()},
                        {"training_steps", record.training_steps},
                        {"outputs", record.outputs.size()}}.dump()
                << "\n";
    } else if (*report_cmd) {
      const auto table = report::Table::from_csv(read_file(rp_input));
      const auto name = rp_name.empty() ? fs::path(rp_input).stem().string() : rp_name;
      report::report(table, rp_out, name, rp_centered);
      std::cout << json{{"command", "report"}, {"csv", (fs::path(rp_out) / (name + ".csv")).string()},
                        {"png", (fs::path(rp_out) / (name + ".png")).string()}}.dump()
                << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "tempadapt: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "tempadapt: " << e.what() << "\n";
    return exit_code(ErrorKind::kIo);
  } catch (const json::exception& e) {
    std::cerr << "tempadapt: " << e.what() << "\n";
    return exit_code(ErrorKind::kConfig);
  }
  return 0;
}
