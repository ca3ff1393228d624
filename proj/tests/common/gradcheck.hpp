// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of the transformer's analytic gradients,
// shared by the unit suite and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tempadapt/transformer.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::testing {

struct TensorError {
  std::string name;
  double relative = 0.0;
};

enum class Head { kMlm, kCls };

/// Returns the relative error ||analytic - numeric|| / (||analytic|| + ||numeric||)
/// for every parameter tensor of a small model.
inline std::vector<TensorError> gradient_check(Head head, double dropout, std::uint64_t seed) {
  using model::Layout;
  using model::Mat;
  using model::Transformer;
  const Layout layout(/*vocab=*/12, /*max_len=*/8, /*hidden=*/8, /*heads=*/2, /*feedforward=*/16, /*layers=*/2,
                      /*classes=*/3);
  Rng rng(seed);
  std::vector<double> params(layout.total());
  for (const auto& t : layout.tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool gamma = t.name.ends_with("gamma");
      params[t.offset + i] = (gamma ? 1.0 : 0.0) + 0.3 * rng.normal();
    }
  }
  tok::TokenSequence a{{2, 9, 4, 3}, {-1, 0, 1, 2}, false};
  tok::TokenSequence b{{2, 7, 3}, {-1, 0, 1}, false};
  std::vector<const tok::TokenSequence*> seqs{&a, &b};
  const auto batch = model::pack(seqs);
  const std::vector<int> rows{1, 2, 5};
  const std::vector<int> mlm_targets{8, 10, 11};
  const std::vector<int> cls_targets{2, 0};
  const std::uint64_t dropout_seed = derive_seed(seed, "dropout");

  auto loss_and_grad = [&](const std::vector<double>& p, std::vector<double>* grad) {
    Transformer<double> net(layout, p, dropout);
    net.forward(batch, dropout > 0.0, dropout_seed);
    std::vector<double> per_row;
    Mat<double> dlogits;
    double loss = 0.0;
    if (head == Head::kMlm) {
      const auto logits = net.mlm_logits(rows);
      loss = model::cross_entropy<double>(logits, mlm_targets, per_row, grad ? &dlogits : nullptr);
      if (grad) net.backward_mlm(dlogits, *grad);
    } else {
      const auto logits = net.cls_logits();
      loss = model::cross_entropy<double>(logits, cls_targets, per_row, grad ? &dlogits : nullptr);
      if (grad) net.backward_cls(dlogits, *grad);
    }
    if (grad) net.backward_encoder(*grad);
    return loss;
  };

  std::vector<double> analytic(layout.total(), 0.0);
  loss_and_grad(params, &analytic);
  constexpr double kStep = 1e-4;
  std::vector<TensorError> out;
  for (const auto& t : layout.tensors()) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto k = t.offset + i;
      auto p = params;
      p[k] += kStep;
      const double up = loss_and_grad(p, nullptr);
      p[k] -= 2 * kStep;
      const double down = loss_and_grad(p, nullptr);
      const double numeric = (up - down) / (2 * kStep);
      diff += (analytic[k] - numeric) * (analytic[k] - numeric);
      na += analytic[k] * analytic[k];
      nn += numeric * numeric;
    }
    // Tensors whose true gradient vanishes (the key bias shifts every score of
    // a row equally) are compared against an absolute floor.
    const double denom = std::max(std::sqrt(na) + std::sqrt(nn), 1e-6);
    out.push_back({t.name, std::sqrt(diff) / denom});
  }
  return out;
}

}  // namespace tempadapt::testing
