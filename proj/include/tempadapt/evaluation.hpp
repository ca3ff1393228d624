// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tempadapt/model.hpp"

namespace tempadapt::eval {

/// Pairwise (cascade) summation; fixed reduction order regardless of how the
/// values were produced.
double pairwise_sum(std::span<const double> values);
double mean(std::span<const double> values);
double median(std::vector<double> values);

/// exp of the mean loss over all masked tokens. Empty input is a DataError.
double pseudo_perplexity(std::span<const double> losses);

struct ClsResult {
  double macro_f1 = 0.0;  // 0-100
  std::vector<double> precision, recall, f1;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::size_t n = 0;
};

/// Macro F1 on a 0-100 scale. Classes with no gold and no predicted
/// instances contribute F1 = 0.
ClsResult macro_f1(std::span<const int> predictions, std::span<const int> golds, int n_classes);

/// (value - control) / control * 100. Zero control is a DataError.
double relative_difference(double value, double control);

enum class Metric { kPseudoPerplexity, kMacroF1 };

std::string to_string(Metric metric);
Metric parse_metric(std::string_view name);
inline bool lower_is_better(Metric m) { return m == Metric::kPseudoPerplexity; }

/// Evaluation set of one period.
struct TestSet {
  std::string period;
  std::vector<model::EvalDocument> docs;
  std::vector<std::string> labels;  // empty for unlabelled sets
};

struct MlmResult {
  double pseudo_perplexity = 0.0;
  std::size_t n_masked = 0;
  std::string period;
  nlohmann::json provenance;
};

MlmResult evaluate_mlm(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test,
                       std::uint64_t masking_seed);
ClsResult evaluate_cls(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test);

/// One metric value for the model on the test set.
double evaluate(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test, Metric metric,
                std::uint64_t masking_seed);

struct CrossTemporalMatrix {
  std::vector<std::string> rows;  // training periods
  std::vector<std::string> cols;  // test periods
  std::vector<std::vector<double>> values;
  std::vector<double> control;  // one per column

  double percent(std::size_t r, std::size_t c) const { return relative_difference(values[r][c], control[c]); }
  std::vector<std::vector<double>> percent_matrix() const;
  bool square() const { return rows == cols; }

  struct Best {
    std::size_t row = 0;
    bool tied = false;
  };
  /// Best row per column; ties go to the earliest row and are flagged.
  std::vector<Best> best_per_column(bool lower_better) const;

  std::string raw_csv() const;
  std::string percent_csv() const;
  std::string control_csv() const;
  /// Writes raw.csv, percent.csv and control.csv into dir.
  void write(const std::filesystem::path& dir) const;
  static CrossTemporalMatrix read(const std::filesystem::path& dir);
};

/// Evaluates cell(r, c) for every row/column and control(c) for every column.
CrossTemporalMatrix build_matrix(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                                 const std::function<double(std::size_t, std::size_t)>& cell,
                                 const std::function<double(std::size_t)>& control);

struct NamedModel {
  std::string period;
  const model::Model* model = nullptr;
};

/// Models x test sets. A column period without a test set is a ConfigError.
CrossTemporalMatrix build_matrix(std::span<const NamedModel> models, const std::vector<TestSet>& tests,
                                 const std::vector<std::string>& test_periods, Metric metric,
                                 const model::Model& control, const tok::Vocabulary& vocab,
                                 std::uint64_t masking_seed);

struct OffDiagonalPair {
  std::string early, late;
  double past_on_future = 0.0;  // model of `early` tested on `late`
  double future_on_past = 0.0;  // model of `late` tested on `early`
};

/// All P(P-1)/2 matched off-diagonal cells of a square matrix, taken from
/// the percent differences. A non-square matrix is a DataError.
std::vector<OffDiagonalPair> offdiagonal_pairs(const CrossTemporalMatrix& matrix);

enum class Alternative { kGreater, kLess };

struct WilcoxonResult {
  double w_plus = 0.0;
  std::size_t n = 0;
  std::size_t zeros_dropped = 0;
  double p_value = 1.0;
  bool exact = true;

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kExactWilcoxonMax = 25;

/// One-sided signed-rank test on the differences first - second. Zero
/// differences are dropped, tied magnitudes get midranks. Exact null
/// distribution for n <= 25, normal approximation with tie correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs, Alternative alternative);
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences, Alternative alternative);

struct SpearmanResult {
  double rho = 0.0;
  double p_less = 1.0;     // one-sided, H1: rho < 0
  double p_greater = 1.0;  // one-sided, H1: rho > 0
};

/// Spearman rank correlation with midranks; p-values from the t
/// approximation with n - 2 degrees of freedom.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

/// Midranks (1-based) of the values.
std::vector<double> midranks(std::span<const double> values);

}  // namespace tempadapt::eval
