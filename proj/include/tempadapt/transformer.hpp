// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Post-LN transformer encoder with a tied-embedding MLM head and a linear
// classification head over the [CLS] position. Forward and backward passes
// are written out by hand over a packed batch: all tokens of all sequences
// are stacked into one N x H matrix, and attention runs per sequence block,
// so no padding or attention masks are needed.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tempadapt/tokenizer.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::model {

struct ModelConfig;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Parameter storage aligned for the widest SIMD path Eigen may use.
using Weights = std::vector<float, Eigen::aligned_allocator<float>>;

/// Tensor offsets are multiples of this many floats (64 bytes).
inline constexpr std::size_t kTensorAlign = 16;

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  bool decay = true;  // weight decay applies (matrices yes; biases and norms no)

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Flat parameter layout derived from a ModelConfig.
class Layout {
 public:
  struct LayerSlots {
    int wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };

  Layout(int vocab, int max_len, int hidden, int heads, int feedforward, int layers, int classes);
  explicit Layout(const ModelConfig& config);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::size_t total() const { return total_; }

  int vocab, max_len, hidden, heads, feedforward, classes;
  int tok_emb, pos_emb, emb_g, emb_b;
  std::vector<LayerSlots> layers;
  int mlm_w, mlm_b, mlm_g, mlm_beta, mlm_bias;
  int cls_w = -1, cls_b = -1;

 private:
  int add(std::string name, int rows, int cols, bool decay);
  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

/// Tokens of several sequences stacked row-wise.
struct PackedBatch {
  std::vector<tok::TokenId> ids;
  std::vector<int> positions;  // position within its own sequence
  std::vector<int> offsets;    // sequence d spans rows [offsets[d], offsets[d+1])

  std::size_t sequences() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t rows() const { return ids.size(); }
};

PackedBatch pack(std::span<const tok::TokenSequence* const> seqs);

template <typename T>
class Transformer {
 public:
  using M = Mat<T>;
  using ConstMap = Eigen::Map<const M>;
  using Map = Eigen::Map<M>;

  Transformer(const Layout& layout, std::span<const T> params, double dropout)
      : layout_(layout), params_(params), dropout_(dropout) {}

  /// Runs the encoder. With train set, dropout masks are drawn from seed.
  const M& forward(const PackedBatch& batch, bool train, std::uint64_t seed);

  /// MLM logits (rows.size() x vocab) for the given packed rows.
  M mlm_logits(std::span<const int> rows);
  /// Classification logits (sequences x classes) from each [CLS] row.
  M cls_logits();

  /// Gradients are accumulated into `grads` (same layout as params).
  void backward_mlm(const M& dlogits, std::span<T> grads);
  void backward_cls(const M& dlogits, std::span<T> grads);
  /// Propagates the accumulated hidden-state gradient through the encoder.
  void backward_encoder(std::span<T> grads);

  const M& hidden() const { return hidden_; }

 private:
  struct NormCache {
    M xhat;
    Vec<T> rstd;
  };
  struct LayerCache {
    M x_in, q, k, v, ctx, x1, hpre, g;
    std::vector<M> probs, prob_masks;  // per (sequence, head)
    M attn_mask, ffn_mask;
    NormCache ln1, ln2;
  };

  ConstMap w(int slot) const {
    const auto& t = layout_.tensors()[static_cast<std::size_t>(slot)];
    return ConstMap(params_.data() + t.offset, t.rows, t.cols);
  }
  static Map g(std::span<T> grads, const Layout& layout, int slot) {
    const auto& t = layout.tensors()[static_cast<std::size_t>(slot)];
    return Map(grads.data() + t.offset, t.rows, t.cols);
  }

  M layer_norm(const M& x, int gamma, int beta, NormCache& cache) const;
  M layer_norm_backward(const M& dy, int gamma, int beta, const NormCache& cache, std::span<T> grads) const;
  M dropout_mask(Eigen::Index rows, Eigen::Index cols);

  const Layout& layout_;
  std::span<const T> params_;
  double dropout_;

  bool train_ = false;
  Rng rng_{0};
  const PackedBatch* batch_ = nullptr;
  M emb_mask_;
  NormCache emb_norm_;
  std::vector<LayerCache> cache_;
  M hidden_;
  M d_hidden_;

  // MLM head cache
  std::vector<int> mlm_rows_;
  M mlm_in_, mlm_pre_, mlm_act_;
  NormCache mlm_norm_;
  M mlm_out_;
  // classification head cache
  M cls_in_, cls_mask_;
};

/// Numerically stable log-sum-exp of one row, accumulated in double.
template <typename Row>
double log_sum_exp(const Row& row) {
  const double mx = static_cast<double>(row.maxCoeff());
  double s = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) s += std::exp(static_cast<double>(row(j)) - mx);
  return mx + std::log(s);
}

/// Mean cross-entropy of logits against targets; fills per-row losses and,
/// when dlogits is non-null, the gradient of the mean.
template <typename T>
double cross_entropy(const Mat<T>& logits, std::span<const int> targets, std::vector<double>& per_row,
                     Mat<T>* dlogits);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace tempadapt::model
