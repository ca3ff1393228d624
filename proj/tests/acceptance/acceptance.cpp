// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   acceptance --plans DIR --work DIR [--keep-cache] [--only 1,2,3]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "tempadapt/corpus.hpp"
#include "tempadapt/error.hpp"
#include "tempadapt/evaluation.hpp"
#include "tempadapt/orchestrator.hpp"
#include "tempadapt/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tempadapt;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300); }

// --- criterion 1 -----------------------------------------------------------

Outcome metric_exactness() {
  Rng rng(2026);
  constexpr double kTol = 1e-9;
  int cases = 0, bad = 0;
  for (int t = 0; t < 25; ++t, ++cases) {
    std::vector<double> losses(1 + rng.below(400));
    for (auto& l : losses) l = 12.0 * rng.uniform();
    bad += !close_rel(eval::pseudo_perplexity(losses), oracle::pseudo_perplexity(losses), kTol);
  }
  for (int t = 0; t < 25; ++t, ++cases) {
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<int> pred(20 + rng.below(300)), gold(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      gold[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      pred[i] = rng.uniform() < 0.6 ? gold[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    bad += !close_rel(eval::macro_f1(pred, gold, k).macro_f1, oracle::macro_f1(pred, gold, k), kTol);
  }
  for (int t = 0; t < 25; ++t, ++cases) {
    const double v = 1 + 100 * rng.uniform(), c = 1 + 100 * rng.uniform();
    const long double ref = (static_cast<long double>(v) - c) / c * 100;
    bad += !close_rel(eval::relative_difference(v, c), static_cast<double>(ref), kTol);
  }
  for (int t = 0; t < 25; ++t, ++cases) {
    std::set<std::string> a, b;
    for (int i = 0; i < 30; ++i) {
      const auto w = "w" + std::to_string(rng.below(60));
      (rng.uniform() < 0.5 ? a : b).insert(w);
    }
    corpus::WordSet wa(a.begin(), a.end()), wb(b.begin(), b.end());
    bad += !close_rel(corpus::jaccard_similarity(wa, wb), oracle::jaccard(a, b), kTol);
  }
  const double paper = eval::relative_difference(8.36, 19.54);
  const bool anchor = std::abs(paper - (-57.22)) <= 0.01;
  return {bad == 0 && anchor, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                                  " oracle cases within 1e-9; relative_difference(8.36, 19.54) = " + fmt(paper, 6)};
}

// --- criterion 2 -----------------------------------------------------------

Outcome wilcoxon_exactness() {
  Rng rng(7);
  double worst = 0;
  int checked = 0;
  for (int n = 1; n <= 12; ++n) {
    for (int t = 0; t < 200; ++t) {
      std::vector<double> d(static_cast<std::size_t>(n));
      // Coarse values so ties and zeros occur; an all-zero draw has no test.
      do {
        for (auto& x : d) x = std::round(8 * (rng.uniform() - 0.35)) / 2;
      } while (std::all_of(d.begin(), d.end(), [](double x) { return x == 0; }));
      for (bool greater : {true, false}) {
        const auto r = eval::wilcoxon_signed_rank(d, greater ? eval::Alternative::kGreater : eval::Alternative::kLess);
        worst = std::max(worst, std::abs(r.p_value - oracle::wilcoxon_enumerated(d, greater)));
        ++checked;
      }
    }
  }
  const std::vector<double> pos{1, 2, 3, 4, 5};
  const double p5 = eval::wilcoxon_signed_rank(pos, eval::Alternative::kGreater).p_value;
  return {worst <= 1e-12 && p5 == 0.03125,
          std::to_string(checked) + " p-values vs enumeration, max error " + fmt(worst, 3) + "; n=5 all positive p = " +
              fmt(p5, 6)};
}

// --- criterion 3 -----------------------------------------------------------

Outcome gradient_check() {
  double worst = 0;
  std::string where;
  std::size_t tensors = 0;
  for (auto head : {testing::Head::kMlm, testing::Head::kCls}) {
    for (const auto& e : testing::gradient_check(head, 0.0, 7)) {
      ++tensors;
      if (e.relative > worst) {
        worst = e.relative;
        where = std::string(head == testing::Head::kMlm ? "mlm:" : "cls:") + e.name;
      }
    }
  }
  return {worst < 1e-3, std::to_string(tensors) + " tensors, max relative error " + fmt(worst, 3) + " (" + where + ")"};
}

// --- experiment-backed criteria -------------------------------------------

struct PlanRun {
  orch::RunRecord record;
  orch::PlanResults results;
  double seconds = 0;
};

PlanRun run(const orch::ExperimentPlan& plan) {
  PlanRun r;
  const auto t0 = Clock::now();
  r.record = orch::run_plan(plan, &r.results);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

std::map<std::string, std::string> csv_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
    }
  }
  return out;
}

double cell(const report::Table& t, const std::string& row, std::size_t col) {
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i] == row) return t.values[i].at(col);
  }
  throw DataError("table has no row " + row);
}

Outcome diagonal_dominance(const PlanRun& r) {
  const auto& m = r.record.metrics.at("mlm_matrix");
  const auto wins = m.at("diagonal_wins").get<std::size_t>();
  const auto n = m.at("periods").get<std::size_t>();
  return {n == 12 && wins >= 9, std::to_string(wins) + "/" + std::to_string(n) + " periods best on own test set"};
}

Outcome asymmetry(const PlanRun& r) {
  const auto& m = r.record.metrics.at("mlm_matrix");
  const double p = m.at("wilcoxon_p_median").get<double>();
  return {p < 0.05, "median-seed one-sided p = " + fmt(p, 3) + " over 66 pairs (per seed " +
                        m.at("wilcoxon_p_per_seed").dump() + ")"};
}

Outcome scale_effect(const PlanRun& r) {
  const auto t = orch::PlanResults::median(r.results.sweep);
  std::vector<double> ppl;
  for (const auto& row : t.values) ppl.push_back(row.at(0));
  bool ok = ppl.size() == 4;
  std::string seq;
  for (std::size_t i = 0; i < ppl.size(); ++i) {
    seq += (i ? " > " : "") + fmt(ppl[i], 5);
    if (i >= 1) ok = ok && ppl[i] < ppl[i - 1];
    if (i >= 2) ok = ok && (ppl[i - 1] - ppl[i]) < (ppl[i - 2] - ppl[i - 1]);
  }
  return {ok, "PP at sizes " + json(t.rows).dump() + ": " + seq};
}

Outcome temporal_finetuning(const PlanRun& r) {
  const auto& s = r.record.metrics.at("cls_matrix").at("NAda+TFt");
  const auto beats = s.at("diagonal_beats_control").get<std::size_t>();
  const bool has_rho = !s.at("spearman_rho").is_null();
  const double rho = has_rho ? s.at("spearman_rho").get<double>() : 0.0;
  const double p = has_rho ? s.at("spearman_p_less").get<double>() : 1.0;
  return {beats >= 9 && has_rho && rho < 0 && p < 0.05,
          "TFt beats RFt on " + std::to_string(beats) + "/12 periods; distance rho = " + fmt(rho) + ", p = " + fmt(p, 3)};
}

Outcome strategy_ordering(const PlanRun& r) {
  const auto t = orch::PlanResults::median(r.results.compare);
  const double nr = cell(t, "NAda+RFt", 0), dr = cell(t, "DAda+RFt", 0), tr = cell(t, "TAda+RFt", 0);
  const double dt = cell(t, "DAda+TFt", 0), tt = cell(t, "TAda+TFt", 0);
  const double gap = dr - nr;
  const bool ok = nr < dr && std::abs(tr - dr) < gap && std::abs(tt - dt) < gap;
  return {ok, "NAda+RFt " + fmt(nr) + " < DAda+RFt " + fmt(dr) + " (gap " + fmt(gap, 3) + "); |TAda-DAda| RFt " +
                  fmt(std::abs(tr - dr), 3) + ", TFt " + fmt(std::abs(tt - dt), 3)};
}

Outcome discriminative_flip(const PlanRun& r) {
  std::vector<double> ta, da, diff;
  for (const auto& t : r.results.compare) {
    ta.push_back(cell(t, "TAda+RFt", 0));
    da.push_back(cell(t, "DAda+RFt", 0));
    diff.push_back(ta.back() - da.back());
  }
  const double margin = eval::median(ta) - eval::median(da);
  const double m = eval::mean(diff);
  double ss = 0;
  for (double d : diff) ss += (d - m) * (d - m);
  const double se = diff.size() > 1 ? std::sqrt(ss / static_cast<double>(diff.size() - 1) / static_cast<double>(diff.size()))
                                     : std::numeric_limits<double>::infinity();
  return {margin > se, "median TAda+RFt - DAda+RFt = " + fmt(margin, 3) + " vs standard error " + fmt(se, 3) +
                           " (per-seed differences " + json(diff).dump() + ")"};
}

Outcome attribution(const PlanRun& r) {
  const auto& per_seed = r.results.diagnostics;
  auto med = [&](const char* key) {
    std::vector<double> v;
    for (const auto& s : per_seed) v.push_back(s.value(key, std::nan("")));
    return eval::median(v);
  };
  const double contrib = med("propn_contribution"), freq = med("propn_frequency");
  const double top = med("propn_top_decile_share");
  const double multi = med("top_decile_multi_class_fraction"), events = med("top_decile_event_fraction");
  const bool a = contrib > freq, b = top > 50, c = multi >= 0.6, d = events >= 0.8;
  return {a && b && c && d, std::string("(a) PROPN contribution ") + fmt(contrib, 3) + "% vs frequency " + fmt(freq, 3) +
                                "%; (b) top decile " + fmt(top, 3) + "%; (c) multi-class " + fmt(100 * multi, 3) +
                                "%; ledger " + fmt(100 * events, 3) + "% event tokens"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string plans_dir, work_dir;
  bool keep_cache = false;
  std::string only;
  app.add_option("--plans", plans_dir, "Directory with shared.json and discriminative.json")->required();
  app.add_option("--work", work_dir, "Scratch directory for runs and cache")->required();
  app.add_flag("--keep-cache", keep_cache, "Reuse an existing cache instead of training from scratch");
  app.add_option("--only", only, "Comma-separated criteria to evaluate");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  for (const auto& s : split(only, ',')) {
    if (!trim(s).empty()) selected.insert(std::stoi(trim(s)));
  }
  auto wanted = [&](int c) { return selected.empty() || selected.contains(c); };

  const fs::path work = work_dir;
  const auto cache = work / "cache";
  if (!keep_cache) fs::remove_all(cache);
  fs::create_directories(cache);
  ::setenv("TEMPADAPT_CACHE", cache.c_str(), 1);

  std::map<int, Outcome> outcomes;
  const std::map<int, std::string> names = {
      {1, "metric exactness"},   {2, "wilcoxon exactness"},      {3, "gradient check"},
      {4, "diagonal dominance"}, {5, "past/future asymmetry"},   {6, "adaptation scale effect"},
      {7, "temporal fine-tuning"}, {8, "strategy ordering"},   {9, "discriminative events flip the null"},
      {10, "attribution structure"}, {11, "determinism"}};
  auto guard = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      outcomes[c] = f();
    } catch (const std::exception& e) {
      outcomes[c] = {false, std::string("error: ") + e.what()};
    }
  };

  guard(1, metric_exactness);
  guard(2, wilcoxon_exactness);
  guard(3, gradient_check);

  const bool need_shared = wanted(4) || wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(10) || wanted(11);
  if (need_shared) {
    try {
      auto plan = orch::ExperimentPlan::load(fs::path(plans_dir) / "shared.json");
      plan.output_dir = (work / "runs").string();
      std::clog << "[acceptance] running the shared-event plan (" << plan.seeds.size() << " seeds)" << std::endl;
      const auto first = run(plan);
      std::clog << "[acceptance] " << first.record.training_steps << " training steps in " << fmt(first.seconds, 4)
                << " s" << std::endl;
      guard(4, [&] { return diagonal_dominance(first); });
      guard(5, [&] { return asymmetry(first); });
      guard(6, [&] { return scale_effect(first); });
      guard(7, [&] { return temporal_finetuning(first); });
      guard(8, [&] { return strategy_ordering(first); });
      guard(10, [&] { return attribution(first); });
      guard(11, [&] {
        const auto before = csv_bytes(first.record.artifact_dir);
        std::clog << "[acceptance] rerunning the shared-event plan against the warm cache" << std::endl;
        const auto second = run(plan);
        const auto after = csv_bytes(second.record.artifact_dir);
        std::size_t differing = 0;
        for (const auto& [name, bytes] : before) {
          const auto it = after.find(name);
          differing += it == after.end() || it->second != bytes;
        }
        differing += after.size() > before.size() ? after.size() - before.size() : 0;
        const bool ok = !before.empty() && differing == 0 && second.record.training_steps == 0;
        return Outcome{ok, std::to_string(before.size() - std::min(before.size(), differing)) + "/" +
                               std::to_string(before.size()) + " CSVs byte-identical; rerun training steps " +
                               std::to_string(second.record.training_steps) + " (first run " +
                               std::to_string(first.record.training_steps) + "), rerun " + fmt(second.seconds, 3) +
                               " s"};
      });
    } catch (const std::exception& e) {
      for (int c : {4, 5, 6, 7, 8, 10, 11}) {
        if (wanted(c) && !outcomes.contains(c)) outcomes[c] = {false, std::string("error: ") + e.what()};
      }
    }
  }

  guard(9, [&] {
    auto plan = orch::ExperimentPlan::load(fs::path(plans_dir) / "discriminative.json");
    plan.output_dir = (work / "runs").string();
    std::clog << "[acceptance] running the discriminative-event plan" << std::endl;
    return discriminative_flip(run(plan));
  });

  int failed = 0;
  json report = json::object();
  for (const auto& [c, o] : outcomes) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << names.at(c) << "): " << o.detail
              << std::endl;
    failed += !o.pass;
    report[std::to_string(c)] = {{"name", names.at(c)}, {"pass", o.pass}, {"detail", o.detail}};
  }
  write_file_atomic(work / "acceptance.json", report.dump(2) + "\n");
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
