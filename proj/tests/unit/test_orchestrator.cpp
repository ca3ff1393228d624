// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "tempadapt/error.hpp"
#include "tempadapt/orchestrator.hpp"
#include "tempadapt/util.hpp"

using namespace tempadapt;
using namespace tempadapt::orch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("tempadapt_orch_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

model::Checkpoint tiny_checkpoint(std::uint64_t seed) {
  model::ModelConfig c;
  c.layers = 1;
  c.hidden = 8;
  c.heads = 2;
  c.feedforward = 16;
  c.vocab_size = 20;
  c.max_len = 8;
  return model::init_model(c, seed);
}

json tiny_plan(const fs::path& out) {
  return {
      {"corpus",
       {{"synth",
         {{"n_periods", 3},
          {"classes", {"a", "b"}},
          {"docs_per_period_per_class", {{"adaptation", 30}, {"finetune", 16}, {"test", 8}}},
          {"background_vocab_size", 200},
          {"event_schedule", {{"per_period", 2}, {"peak_rate", 20}, {"decay_factor", 0.5}}},
          {"seed", 3}}}}},
      {"model",
       {{"layers", 1}, {"hidden", 16}, {"heads", 2}, {"feedforward", 32}, {"vocab_size", 200}, {"max_len", 32}}},
      {"train", {{"learning_rate", 1e-3}, {"adaptation_batch", 16}, {"finetune_batch", 16}, {"finetune_epochs", 1}}},
      {"base", {{"background_docs", 60}, {"epochs", 1}}},
      {"strategies", {"NAda+RFt", "NAda+TFt", "DAda+RFt", "DAda+TFt", "TAda+RFt", "TAda+TFt"}},
      {"matrix_strategies", {"TAda+TFt"}},
      {"adaptation_size", 30},
      {"finetune_size", 16},
      {"sweep_adaptation_sizes", {0, 30}},
      {"sweep_finetune_sizes", {16}},
      {"sweep_test_per_period", 8},
      {"seeds", {1}},
      {"analyses", {"mlm_matrix", "cls_matrix", "sweep", "compare", "diagnostics"}},
      {"output_dir", out.string()}};
}

}  // namespace

TEST_CASE("strategy names") {
  const auto all = all_strategies();
  CHECK(all.size() == 6);
  for (const auto& s : all) CHECK(parse_strategy(to_string(s)) == s);
  CHECK(to_string({Adaptation::kTAda, Finetuning::kRFt}) == "TAda+RFt");
  CHECK(parse_strategy("DAda+TFt").per_period());
  CHECK_FALSE(parse_strategy("DAda+RFt").per_period());
  CHECK_THROWS_AS(parse_strategy("XAda+RFt"), ConfigError);
}

TEST_CASE("even quotas give the remainder to the earliest parts") {
  CHECK(even_quotas(10, 3) == std::vector<std::size_t>{4, 3, 3});
  CHECK(even_quotas(12, 4) == std::vector<std::size_t>{3, 3, 3, 3});
  CHECK(even_quotas(2, 4) == std::vector<std::size_t>{1, 1, 0, 0});
}

TEST_CASE("balanced order alternates labels and is deterministic") {
  std::vector<corpus::Document> docs;
  for (int i = 0; i < 9; ++i) {
    corpus::Document d;
    d.id = "d" + std::to_string(i);
    d.source_label = i < 6 ? "x" : "y";
    docs.push_back(d);
  }
  const auto a = balanced_order(docs, 5), b = balanced_order(docs, 5);
  REQUIRE(a.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(a[i].id == b[i].id);
  // Every prefix of even length is balanced while both labels last.
  for (std::size_t i = 0; i < 6; i += 2) CHECK(a[i].source_label != a[i + 1].source_label);
}

TEST_CASE("plan hash covers result-affecting fields only") {
  const auto base = ExperimentPlan::from_json(tiny_plan("x"));
  auto j = tiny_plan("elsewhere");
  CHECK(ExperimentPlan::from_json(j).hash() == base.hash());
  j["seeds"] = {1, 2};
  CHECK(ExperimentPlan::from_json(j).hash() != base.hash());
  j = tiny_plan("x");
  j["train"]["learning_rate"] = 2e-3;
  CHECK(ExperimentPlan::from_json(j).hash() != base.hash());
  j = tiny_plan("x");
  j["corpus"]["synth"]["seed"] = 4;
  CHECK(ExperimentPlan::from_json(j).hash() != base.hash());
  const auto round = ExperimentPlan::from_json(base.to_json());
  CHECK(round.hash() == base.hash());
}

TEST_CASE("bad plans are configuration errors") {
  auto j = tiny_plan("x");
  j["strategies"] = {"NAda+XFt"};
  CHECK_THROWS_AS(ExperimentPlan::from_json(j), ConfigError);
  j = tiny_plan("x");
  j.erase("corpus");
  CHECK_THROWS_AS(ExperimentPlan::from_json(j), ConfigError);
  j = tiny_plan("x");
  j["strategies"] = {"NAda+RFt", "TAda+TFt"};
  j["matrix_strategies"] = json::array();
  const auto p = ExperimentPlan::from_json(j);
  CHECK(p.matrix_strategies == std::vector<std::string>{"TAda+TFt"});
}

TEST_CASE("checkpoint cache trains once and verifies requests") {
  const auto dir = fresh_dir("cache");
  const json request{{"kind", "test"}, {"seed", 7}};
  int calls = 0;
  auto train = [&](model::TrainStats& st) {
    ++calls;
    st.steps = 5;
    return tiny_checkpoint(7);
  };
  bool trained = false;
  model::TrainStats st;
  const auto first = CheckpointCache(dir).get_or_train(request, train, &trained, &st);
  CHECK(trained);
  CHECK(st.steps == 5);
  const auto second = CheckpointCache(dir).get_or_train(request, train, &trained, &st);
  CHECK_FALSE(trained);
  CHECK(st.steps == 0);
  CHECK(calls == 1);
  CHECK(second.content_hash() == first.content_hash());

  // A tampered request file no longer matches its key.
  const auto entry = dir / CheckpointCache::key(request) / "request.json";
  write_file_atomic(entry, json{{"kind", "other"}}.dump());
  CHECK_THROWS_AS(CheckpointCache(dir).get_or_train(request, train), IntegrityError);
  fs::remove_all(dir);
}

TEST_CASE("cache directory honours the environment") {
  ::unsetenv("TEMPADAPT_CACHE");
  CHECK(cache_dir("fallback") == fs::path("fallback"));
  ::setenv("TEMPADAPT_CACHE", "/tmp/elsewhere", 1);
  CHECK(cache_dir("fallback") == fs::path("/tmp/elsewhere"));
  ::unsetenv("TEMPADAPT_CACHE");
}

TEST_CASE("distance profile averages by period gap") {
  eval::CrossTemporalMatrix m;
  m.rows = m.cols = {"a", "b", "c"};
  m.values = {{10, 7, 4}, {7, 10, 7}, {4, 7, 10}};
  m.control = {5, 5, 5};
  const auto d = distance_profile(m);
  REQUIRE(d.size() == 3);
  CHECK(d[0] == doctest::Approx(10.0));
  CHECK(d[1] == doctest::Approx(7.0));
  CHECK(d[2] == doctest::Approx(4.0));
}

TEST_CASE("median across seeds is taken per cell") {
  report::Table a, b, c;
  for (auto* t : {&a, &b, &c}) {
    t->rows = {"r"};
    t->cols = {"x", "y"};
  }
  a.values = {{1, 9}};
  b.values = {{3, 5}};
  c.values = {{2, 7}};
  const auto m = PlanResults::median({a, b, c});
  CHECK(m.values == std::vector<std::vector<double>>{{2, 7}});
}

TEST_CASE("a tiny plan runs end to end and reruns from cache") {
  const auto out = fresh_dir("plan");
  ::unsetenv("TEMPADAPT_CACHE");
  const auto plan = ExperimentPlan::from_json(tiny_plan(out));
  PlanResults results;
  const auto first = run_plan(plan, &results);
  CHECK(first.training_steps > 0);
  REQUIRE(results.compare.size() == 1);
  CHECK(results.compare[0].rows.size() == 6);
  REQUIRE(results.mlm_matrix.size() == 1);
  CHECK(results.mlm_matrix[0].rows.size() == 3);
  CHECK(results.cls_matrix.contains("TAda+TFt"));
  REQUIRE(results.sweep.size() == 1);
  CHECK(results.sweep[0].rows.size() == 2);
  CHECK(fs::exists(first.artifact_dir / "run_record.json"));

  std::map<std::string, std::string> before;
  for (const auto& f : first.outputs) {
    if (f.ends_with(".csv")) before[f] = slurp(first.artifact_dir / f);
  }
  CHECK_FALSE(before.empty());

  const auto second = run_plan(plan);
  CHECK(second.training_steps == 0);
  for (const auto& r : second.runs) CHECK_FALSE(r.trained);
  for (const auto& [f, bytes] : before) CHECK(slurp(second.artifact_dir / f) == bytes);
  fs::remove_all(out);
}
