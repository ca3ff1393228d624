// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::eval {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw DataError("mean of an empty list is undefined");
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty list is undefined");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double pseudo_perplexity(std::span<const double> losses) {
  if (losses.empty()) throw DataError("pseudo-perplexity needs at least one masked token");
  return std::exp(mean(losses));
}

ClsResult macro_f1(std::span<const int> predictions, std::span<const int> golds, int n_classes) {
  if (predictions.size() != golds.size()) {
    throw DataError("prediction and gold lists differ in length (" + std::to_string(predictions.size()) + " vs " +
                    std::to_string(golds.size()) + ")");
  }
  if (n_classes < 1) throw ConfigError("n_classes must be positive");
  const auto k = static_cast<std::size_t>(n_classes);
  ClsResult r;
  r.n = golds.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] < 0 || golds[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes) {
      throw DataError("label outside [0, n_classes)");
    }
    ++r.confusion[static_cast<std::size_t>(golds[i])][static_cast<std::size_t>(predictions[i])];
  }
  r.precision.assign(k, 0.0);
  r.recall.assign(k, 0.0);
  r.f1.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(r.confusion[c][c]);
    double gold = 0.0, pred = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      gold += static_cast<double>(r.confusion[c][j]);
      pred += static_cast<double>(r.confusion[j][c]);
    }
    r.precision[c] = pred > 0 ? tp / pred : 0.0;
    r.recall[c] = gold > 0 ? tp / gold : 0.0;
    // 2PR/(P+R) written as 2tp/(gold+pred) avoids dividing twice.
    r.f1[c] = gold + pred > 0 ? 2.0 * tp / (gold + pred) : 0.0;
  }
  r.macro_f1 = 100.0 * mean(r.f1);
  return r;
}

double relative_difference(double value, double control) {
  if (control == 0.0) throw DataError("relative difference against a zero control is undefined");
  return (value - control) / control * 100.0;
}

std::string to_string(Metric metric) { return metric == Metric::kPseudoPerplexity ? "ppl" : "f1"; }

Metric parse_metric(std::string_view name) {
  if (name == "ppl" || name == "pseudo_perplexity") return Metric::kPseudoPerplexity;
  if (name == "f1" || name == "macro_f1") return Metric::kMacroF1;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected ppl or f1)");
}

MlmResult evaluate_mlm(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test,
                       std::uint64_t masking_seed) {
  const auto records = model::per_token_losses(model, vocab, test.docs, masking_seed);
  std::vector<double> losses;
  losses.reserve(records.size());
  for (const auto& r : records) losses.push_back(r.loss);
  MlmResult out;
  out.pseudo_perplexity = pseudo_perplexity(losses);
  out.n_masked = losses.size();
  out.period = test.period;
  out.provenance = model.checkpoint().provenance;
  return out;
}

ClsResult evaluate_cls(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test) {
  const auto& labels = model.checkpoint().labels;
  if (test.labels.size() != test.docs.size()) throw DataError("test set " + test.period + " lacks labels");
  std::vector<tok::TokenSequence> seqs;
  std::vector<int> golds;
  seqs.reserve(test.docs.size());
  for (std::size_t i = 0; i < test.docs.size(); ++i) {
    const auto it = std::find(labels.begin(), labels.end(), test.labels[i]);
    if (it == labels.end()) throw DataError("test label '" + test.labels[i] + "' unknown to the model");
    golds.push_back(static_cast<int>(it - labels.begin()));
    seqs.push_back(tok::encode(test.docs[i].text, vocab, static_cast<std::size_t>(model.layout().max_len)));
  }
  const auto pred = model::predict(model, seqs);
  std::vector<int> p;
  p.reserve(pred.size());
  for (const auto& x : pred) p.push_back(x.label);
  return macro_f1(p, golds, static_cast<int>(labels.size()));
}

double evaluate(const model::Model& model, const tok::Vocabulary& vocab, const TestSet& test, Metric metric,
                std::uint64_t masking_seed) {
  return metric == Metric::kPseudoPerplexity ? evaluate_mlm(model, vocab, test, masking_seed).pseudo_perplexity
                                             : evaluate_cls(model, vocab, test).macro_f1;
}

// ---------------------------------------------------------------------------
// Matrices

std::vector<std::vector<double>> CrossTemporalMatrix::percent_matrix() const {
  std::vector<std::vector<double>> p(rows.size(), std::vector<double>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) p[r][c] = percent(r, c);
  }
  return p;
}

std::vector<CrossTemporalMatrix::Best> CrossTemporalMatrix::best_per_column(bool lower_better) const {
  std::vector<Best> out(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double v = values[r][c], b = values[out[c].row][c];
      if (v == b) {
        out[c].tied = true;
      } else if (lower_better ? v < b : v > b) {
        out[c] = {r, false};
      }
    }
  }
  return out;
}

namespace {

constexpr int kCsvDigits = 6;

std::string grid_csv(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                     const std::vector<std::vector<double>>& v) {
  std::ostringstream out;
  out << "period";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (std::size_t c = 0; c < cols.size(); ++c) out << ',' << format_fixed(v[r][c], kCsvDigits);
    out << '\n';
  }
  return out.str();
}

double parse_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("not a number in CSV: '" + s + "'");
  }
}

void parse_grid(const std::string& text, std::vector<std::string>& rows, std::vector<std::string>& cols,
                std::vector<std::vector<double>>& v) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty matrix CSV");
  auto header = split(line, ',');
  if (header.empty()) throw DataError("bad matrix CSV header");
  cols.assign(header.begin() + 1, header.end());
  rows.clear();
  v.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != cols.size() + 1) throw DataError("ragged matrix CSV row");
    rows.push_back(f[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) row.push_back(parse_number(f[i]));
    v.push_back(std::move(row));
  }
}

}  // namespace

std::string CrossTemporalMatrix::raw_csv() const { return grid_csv(rows, cols, values); }
std::string CrossTemporalMatrix::percent_csv() const { return grid_csv(rows, cols, percent_matrix()); }

std::string CrossTemporalMatrix::control_csv() const {
  std::ostringstream out;
  out << "period,control\n";
  for (std::size_t c = 0; c < cols.size(); ++c) out << cols[c] << ',' << format_fixed(control[c], kCsvDigits) << '\n';
  return out.str();
}

void CrossTemporalMatrix::write(const std::filesystem::path& dir) const {
  write_file_atomic(dir / "raw.csv", raw_csv());
  write_file_atomic(dir / "percent.csv", percent_csv());
  write_file_atomic(dir / "control.csv", control_csv());
}

CrossTemporalMatrix CrossTemporalMatrix::read(const std::filesystem::path& dir) {
  CrossTemporalMatrix m;
  parse_grid(read_file(dir / "raw.csv"), m.rows, m.cols, m.values);
  std::istringstream in(read_file(dir / "control.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 2) throw DataError("bad control CSV row");
    m.control.push_back(parse_number(f[1]));
  }
  if (m.control.size() != m.cols.size()) throw DataError("control CSV does not match matrix columns");
  return m;
}

CrossTemporalMatrix build_matrix(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                                 const std::function<double(std::size_t, std::size_t)>& cell,
                                 const std::function<double(std::size_t)>& control) {
  CrossTemporalMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.assign(rows.size(), std::vector<double>(cols.size(), 0.0));
  for (std::size_t c = 0; c < cols.size(); ++c) m.control.push_back(control(c));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) m.values[r][c] = cell(r, c);
  }
  return m;
}

CrossTemporalMatrix build_matrix(std::span<const NamedModel> models, const std::vector<TestSet>& tests,
                                 const std::vector<std::string>& test_periods, Metric metric,
                                 const model::Model& control, const tok::Vocabulary& vocab,
                                 std::uint64_t masking_seed) {
  std::vector<const TestSet*> by_col;
  for (const auto& p : test_periods) {
    const auto it = std::find_if(tests.begin(), tests.end(), [&](const TestSet& t) { return t.period == p; });
    if (it == tests.end()) throw ConfigError("no test set for period " + p);
    by_col.push_back(&*it);
  }
  std::vector<std::string> rows;
  for (const auto& m : models) rows.push_back(m.period);
  return build_matrix(
      rows, test_periods,
      [&](std::size_t r, std::size_t c) { return evaluate(*models[r].model, vocab, *by_col[c], metric, masking_seed); },
      [&](std::size_t c) { return evaluate(control, vocab, *by_col[c], metric, masking_seed); });
}

std::vector<OffDiagonalPair> offdiagonal_pairs(const CrossTemporalMatrix& m) {
  if (!m.square()) throw DataError("off-diagonal pairs need a square matrix with matching periods");
  std::vector<OffDiagonalPair> out;
  const auto p = m.rows.size();
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a + 1; b < p; ++b) out.push_back({m.rows[a], m.rows[b], m.percent(a, b), m.percent(b, a)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank tests

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

nlohmann::json WilcoxonResult::to_json() const {
  return {{"w_plus", w_plus},
          {"n", n},
          {"zeros_dropped", zeros_dropped},
          {"p_value", p_value},
          {"method", exact ? "exact" : "normal-approximation"}};
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences, Alternative alternative) {
  WilcoxonResult r;
  std::vector<double> d;
  for (double x : differences) {
    if (x == 0.0) {
      ++r.zeros_dropped;
    } else {
      d.push_back(x);
    }
  }
  if (d.empty()) throw DataError("all differences are zero; the signed-rank test is undefined");
  r.n = d.size();
  std::vector<double> mags(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mags[i] = std::abs(d[i]);
  const auto ranks = midranks(mags);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) r.w_plus += ranks[i];
  }
  const double n = static_cast<double>(r.n);

  if (r.n <= kExactWilcoxonMax) {
    // Midranks are multiples of 1/2, so doubled ranks are integers and the
    // null distribution of 2W+ is a subset-sum count over 2^n sign patterns.
    std::vector<int> twice(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) total += twice[i] = static_cast<int>(std::lround(2 * ranks[i]));
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (int t : twice) {
      for (int s = total; s >= t; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - t)];
    }
    const int obs = static_cast<int>(std::lround(2 * r.w_plus));
    double tail = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (alternative == Alternative::kGreater ? s >= obs : s <= obs) tail += count[static_cast<std::size_t>(s)];
    }
    r.p_value = tail / std::ldexp(1.0, static_cast<int>(r.n));
    r.exact = true;
    return r;
  }

  double tie_term = 0.0;
  {
    auto sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
  }
  const double mu = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  const double z = (r.w_plus - mu) / std::sqrt(var);
  const boost::math::normal_distribution<double> norm;
  r.p_value = alternative == Alternative::kGreater ? boost::math::cdf(boost::math::complement(norm, z))
                                                   : boost::math::cdf(norm, z);
  r.exact = false;
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs, Alternative alternative) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [a, b] : pairs) d.push_back(a - b);
  return wilcoxon_signed_rank(std::span<const double>(d), alternative);
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 3) throw DataError("spearman needs at least three points");
  const auto rx = midranks(x), ry = midranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("spearman: constant input");
  SpearmanResult r;
  r.rho = sxy / std::sqrt(sxx * syy);
  const double df = static_cast<double>(x.size()) - 2.0;
  if (std::abs(r.rho) >= 1.0) {
    r.p_less = r.rho < 0 ? 0.0 : 1.0;
    r.p_greater = r.rho > 0 ? 0.0 : 1.0;
    return r;
  }
  const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
  const boost::math::students_t_distribution<double> dist(df);
  r.p_less = boost::math::cdf(dist, t);
  r.p_greater = boost::math::cdf(boost::math::complement(dist, t));
  return r;
}

}  // namespace tempadapt::eval
