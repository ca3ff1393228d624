// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/transformer.hpp"

#include <algorithm>
#include <numbers>

#include "tempadapt/error.hpp"
#include "tempadapt/model.hpp"

namespace tempadapt::model {

Layout::Layout(int vocab_, int max_len_, int hidden_, int heads_, int feedforward_, int n_layers, int classes_)
    : vocab(vocab_), max_len(max_len_), hidden(hidden_), heads(heads_), feedforward(feedforward_), classes(classes_) {
  const int h = hidden, f = feedforward;
  tok_emb = add("embeddings.token", vocab, h, true);
  pos_emb = add("embeddings.position", max_len, h, true);
  emb_g = add("embeddings.norm.gamma", 1, h, false);
  emb_b = add("embeddings.norm.beta", 1, h, false);
  for (int l = 0; l < n_layers; ++l) {
    const auto p = "layer" + std::to_string(l) + ".";
    LayerSlots s{};
    s.wq = add(p + "attn.query.weight", h, h, true);
    s.bq = add(p + "attn.query.bias", 1, h, false);
    s.wk = add(p + "attn.key.weight", h, h, true);
    s.bk = add(p + "attn.key.bias", 1, h, false);
    s.wv = add(p + "attn.value.weight", h, h, true);
    s.bv = add(p + "attn.value.bias", 1, h, false);
    s.wo = add(p + "attn.output.weight", h, h, true);
    s.bo = add(p + "attn.output.bias", 1, h, false);
    s.ln1_g = add(p + "attn.norm.gamma", 1, h, false);
    s.ln1_b = add(p + "attn.norm.beta", 1, h, false);
    s.w1 = add(p + "ffn.in.weight", h, f, true);
    s.b1 = add(p + "ffn.in.bias", 1, f, false);
    s.w2 = add(p + "ffn.out.weight", f, h, true);
    s.b2 = add(p + "ffn.out.bias", 1, h, false);
    s.ln2_g = add(p + "ffn.norm.gamma", 1, h, false);
    s.ln2_b = add(p + "ffn.norm.beta", 1, h, false);
    layers.push_back(s);
  }
  mlm_w = add("mlm.transform.weight", h, h, true);
  mlm_b = add("mlm.transform.bias", 1, h, false);
  mlm_g = add("mlm.norm.gamma", 1, h, false);
  mlm_beta = add("mlm.norm.beta", 1, h, false);
  mlm_bias = add("mlm.output.bias", 1, vocab, false);
  if (classes > 0) {
    cls_w = add("classifier.weight", h, classes, true);
    cls_b = add("classifier.bias", 1, classes, false);
  }
}

Layout::Layout(const ModelConfig& c)
    : Layout(c.vocab_size, c.max_len, c.hidden, c.heads, c.feedforward, c.layers, c.n_classes) {}

int Layout::add(std::string name, int rows, int cols, bool decay) {
  // Every tensor starts on a 64-byte boundary so vectorised kernels see the
  // same alignment, and hence the same summation order, on every run.
  total_ = (total_ + kTensorAlign - 1) / kTensorAlign * kTensorAlign;
  tensors_.push_back({std::move(name), rows, cols, total_, decay});
  total_ += tensors_.back().size();
  return static_cast<int>(tensors_.size()) - 1;
}

PackedBatch pack(std::span<const tok::TokenSequence* const> seqs) {
  PackedBatch b;
  b.offsets.push_back(0);
  for (const auto* s : seqs) {
    for (std::size_t i = 0; i < s->ids.size(); ++i) {
      b.ids.push_back(s->ids[i]);
      b.positions.push_back(static_cast<int>(i));
    }
    b.offsets.push_back(static_cast<int>(b.ids.size()));
  }
  return b;
}

namespace {

template <typename T>
inline T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(1.0 / std::sqrt(2.0 * std::numbers::pi));
  return cdf + x * pdf;
}

template <typename T>
void add_row_bias(Mat<T>& x, const Eigen::Map<const Mat<T>>& bias) {
  x.rowwise() += bias.row(0);
}

template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

template <typename T>
Mat<T> Transformer<T>::dropout_mask(Eigen::Index rows, Eigen::Index cols) {
  M mask(rows, cols);
  const T scale = T(1.0 / (1.0 - dropout_));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng_.uniform() < dropout_ ? T(0) : scale;
  return mask;
}

template <typename T>
Mat<T> Transformer<T>::layer_norm(const M& x, int gamma, int beta, NormCache& cache) const {
  constexpr double kEps = 1e-12;
  const auto n = x.rows();
  const auto h = x.cols();
  cache.xhat.resize(n, h);
  cache.rstd.resize(n);
  M y(n, h);
  const auto gm = w(gamma);
  const auto bt = w(beta);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + T(kEps));
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
    y.row(r) = cache.xhat.row(r).cwiseProduct(gm.row(0)) + bt.row(0);
  }
  return y;
}

template <typename T>
Mat<T> Transformer<T>::layer_norm_backward(const M& dy, int gamma, int beta, const NormCache& cache,
                                           std::span<T> grads) const {
  const auto n = dy.rows();
  const auto h = static_cast<T>(dy.cols());
  auto dg = g(grads, layout_, gamma);
  auto db = g(grads, layout_, beta);
  dg.row(0) += (dy.cwiseProduct(cache.xhat)).colwise().sum();
  db.row(0) += dy.colwise().sum();
  const auto gm = w(gamma);
  M dx(n, dy.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto dxhat = (dy.row(r).cwiseProduct(gm.row(0))).eval();
    const T mean_d = dxhat.sum() / h;
    const T mean_dx = dxhat.cwiseProduct(cache.xhat.row(r)).sum() / h;
    dx.row(r) = cache.rstd(r) * (dxhat.array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

template <typename T>
const Mat<T>& Transformer<T>::forward(const PackedBatch& batch, bool train, std::uint64_t seed) {
  train_ = train && dropout_ > 0.0;
  rng_ = Rng(seed);
  batch_ = &batch;
  const auto n = static_cast<Eigen::Index>(batch.rows());
  const int hdim = layout_.hidden;
  const int heads = layout_.heads;
  const int dh = hdim / heads;
  const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));

  const auto tok = w(layout_.tok_emb);
  const auto pos = w(layout_.pos_emb);
  M x(n, hdim);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (batch.positions[static_cast<std::size_t>(r)] >= layout_.max_len) throw DataError("sequence exceeds max_len");
    x.row(r) = tok.row(batch.ids[static_cast<std::size_t>(r)]) + pos.row(batch.positions[static_cast<std::size_t>(r)]);
  }
  x = layer_norm(x, layout_.emb_g, layout_.emb_b, emb_norm_);
  if (train_) {
    emb_mask_ = dropout_mask(n, hdim);
    x.array() *= emb_mask_.array();
  }

  cache_.resize(layout_.layers.size());
  for (std::size_t l = 0; l < layout_.layers.size(); ++l) {
    const auto& s = layout_.layers[l];
    auto& c = cache_[l];
    c.x_in = x;
    c.q = x * w(s.wq);
    add_row_bias<T>(c.q, w(s.bq));
    c.k = x * w(s.wk);
    add_row_bias<T>(c.k, w(s.bk));
    c.v = x * w(s.wv);
    add_row_bias<T>(c.v, w(s.bv));
    c.ctx.setZero(n, hdim);
    c.probs.clear();
    c.prob_masks.clear();
    for (std::size_t d = 0; d < batch.sequences(); ++d) {
      const int start = batch.offsets[d];
      const int len = batch.offsets[d + 1] - start;
      for (int h = 0; h < heads; ++h) {
        const auto qd = c.q.block(start, h * dh, len, dh);
        const auto kd = c.k.block(start, h * dh, len, dh);
        const auto vd = c.v.block(start, h * dh, len, dh);
        M p = (qd * kd.transpose()) * scale;
        softmax_rows(p);
        if (train_) {
          M mask = dropout_mask(len, len);
          c.ctx.block(start, h * dh, len, dh).noalias() = p.cwiseProduct(mask) * vd;
          c.prob_masks.push_back(std::move(mask));
        } else {
          c.ctx.block(start, h * dh, len, dh).noalias() = p * vd;
        }
        c.probs.push_back(std::move(p));
      }
    }
    M a = c.ctx * w(s.wo);
    add_row_bias<T>(a, w(s.bo));
    if (train_) {
      c.attn_mask = dropout_mask(n, hdim);
      a.array() *= c.attn_mask.array();
    }
    c.x1 = layer_norm(x + a, s.ln1_g, s.ln1_b, c.ln1);
    c.hpre = c.x1 * w(s.w1);
    add_row_bias<T>(c.hpre, w(s.b1));
    c.g = c.hpre.unaryExpr([](T v) { return gelu(v); });
    M f = c.g * w(s.w2);
    add_row_bias<T>(f, w(s.b2));
    if (train_) {
      c.ffn_mask = dropout_mask(n, hdim);
      f.array() *= c.ffn_mask.array();
    }
    x = layer_norm(c.x1 + f, s.ln2_g, s.ln2_b, c.ln2);
  }
  hidden_ = std::move(x);
  d_hidden_.setZero(n, hdim);
  return hidden_;
}

template <typename T>
Mat<T> Transformer<T>::mlm_logits(std::span<const int> rows) {
  mlm_rows_.assign(rows.begin(), rows.end());
  const auto m = static_cast<Eigen::Index>(rows.size());
  mlm_in_.resize(m, layout_.hidden);
  for (Eigen::Index i = 0; i < m; ++i) mlm_in_.row(i) = hidden_.row(rows[static_cast<std::size_t>(i)]);
  mlm_pre_ = mlm_in_ * w(layout_.mlm_w);
  add_row_bias<T>(mlm_pre_, w(layout_.mlm_b));
  mlm_act_ = mlm_pre_.unaryExpr([](T v) { return gelu(v); });
  mlm_out_ = layer_norm(mlm_act_, layout_.mlm_g, layout_.mlm_beta, mlm_norm_);
  M logits = mlm_out_ * w(layout_.tok_emb).transpose();
  add_row_bias<T>(logits, w(layout_.mlm_bias));
  return logits;
}

template <typename T>
Mat<T> Transformer<T>::cls_logits() {
  if (layout_.cls_w < 0) throw ConfigError("model has no classification head");
  const auto b = static_cast<Eigen::Index>(batch_->sequences());
  cls_in_.resize(b, layout_.hidden);
  for (Eigen::Index d = 0; d < b; ++d) cls_in_.row(d) = hidden_.row(batch_->offsets[static_cast<std::size_t>(d)]);
  if (train_) {
    cls_mask_ = dropout_mask(b, layout_.hidden);
    cls_in_.array() *= cls_mask_.array();
  }
  M logits = cls_in_ * w(layout_.cls_w);
  add_row_bias<T>(logits, w(layout_.cls_b));
  return logits;
}

template <typename T>
void Transformer<T>::backward_mlm(const M& dlogits, std::span<T> grads) {
  g(grads, layout_, layout_.mlm_bias).row(0) += dlogits.colwise().sum();
  g(grads, layout_, layout_.tok_emb).noalias() += dlogits.transpose() * mlm_out_;
  M dout = dlogits * w(layout_.tok_emb);
  M dact = layer_norm_backward(dout, layout_.mlm_g, layout_.mlm_beta, mlm_norm_, grads);
  M dpre = dact.cwiseProduct(mlm_pre_.unaryExpr([](T v) { return gelu_grad(v); }));
  g(grads, layout_, layout_.mlm_w).noalias() += mlm_in_.transpose() * dpre;
  g(grads, layout_, layout_.mlm_b).row(0) += dpre.colwise().sum();
  M din = dpre * w(layout_.mlm_w).transpose();
  for (std::size_t i = 0; i < mlm_rows_.size(); ++i) d_hidden_.row(mlm_rows_[i]) += din.row(static_cast<Eigen::Index>(i));
}

template <typename T>
void Transformer<T>::backward_cls(const M& dlogits, std::span<T> grads) {
  g(grads, layout_, layout_.cls_w).noalias() += cls_in_.transpose() * dlogits;
  g(grads, layout_, layout_.cls_b).row(0) += dlogits.colwise().sum();
  M din = dlogits * w(layout_.cls_w).transpose();
  if (train_) din.array() *= cls_mask_.array();
  for (Eigen::Index d = 0; d < din.rows(); ++d) d_hidden_.row(batch_->offsets[static_cast<std::size_t>(d)]) += din.row(d);
}

template <typename T>
void Transformer<T>::backward_encoder(std::span<T> grads) {
  const auto& batch = *batch_;
  const int hdim = layout_.hidden;
  const int heads = layout_.heads;
  const int dh = hdim / heads;
  const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));

  M dx = d_hidden_;
  for (std::size_t li = layout_.layers.size(); li-- > 0;) {
    const auto& s = layout_.layers[li];
    const auto& c = cache_[li];
    M dr2 = layer_norm_backward(dx, s.ln2_g, s.ln2_b, c.ln2, grads);
    M dx1 = dr2;
    M df = dr2;
    if (train_) df.array() *= c.ffn_mask.array();
    g(grads, layout_, s.w2).noalias() += c.g.transpose() * df;
    g(grads, layout_, s.b2).row(0) += df.colwise().sum();
    M dh_pre = (df * w(s.w2).transpose()).cwiseProduct(c.hpre.unaryExpr([](T v) { return gelu_grad(v); }));
    g(grads, layout_, s.w1).noalias() += c.x1.transpose() * dh_pre;
    g(grads, layout_, s.b1).row(0) += dh_pre.colwise().sum();
    dx1.noalias() += dh_pre * w(s.w1).transpose();

    M dr1 = layer_norm_backward(dx1, s.ln1_g, s.ln1_b, c.ln1, grads);
    M da = dr1;
    if (train_) da.array() *= c.attn_mask.array();
    g(grads, layout_, s.wo).noalias() += c.ctx.transpose() * da;
    g(grads, layout_, s.bo).row(0) += da.colwise().sum();
    M dctx = da * w(s.wo).transpose();

    const auto n = dctx.rows();
    M dq = M::Zero(n, hdim), dk = M::Zero(n, hdim), dv = M::Zero(n, hdim);
    std::size_t slot = 0;
    for (std::size_t d = 0; d < batch.sequences(); ++d) {
      const int start = batch.offsets[d];
      const int len = batch.offsets[d + 1] - start;
      for (int h = 0; h < heads; ++h, ++slot) {
        const auto& p = c.probs[slot];
        const auto qd = c.q.block(start, h * dh, len, dh);
        const auto kd = c.k.block(start, h * dh, len, dh);
        const auto vd = c.v.block(start, h * dh, len, dh);
        const auto dc = dctx.block(start, h * dh, len, dh);
        M dp = dc * vd.transpose();
        if (train_) {
          const auto& mask = c.prob_masks[slot];
          dv.block(start, h * dh, len, dh).noalias() += p.cwiseProduct(mask).transpose() * dc;
          dp.array() *= mask.array();
        } else {
          dv.block(start, h * dh, len, dh).noalias() += p.transpose() * dc;
        }
        // softmax backward: dS = P .* (dP - rowsum(dP .* P))
        const Vec<T> inner = dp.cwiseProduct(p).rowwise().sum();
        M ds = p.cwiseProduct(dp.colwise() - inner) * scale;
        dq.block(start, h * dh, len, dh).noalias() += ds * kd;
        dk.block(start, h * dh, len, dh).noalias() += ds.transpose() * qd;
      }
    }
    g(grads, layout_, s.wq).noalias() += c.x_in.transpose() * dq;
    g(grads, layout_, s.bq).row(0) += dq.colwise().sum();
    g(grads, layout_, s.wk).noalias() += c.x_in.transpose() * dk;
    g(grads, layout_, s.bk).row(0) += dk.colwise().sum();
    g(grads, layout_, s.wv).noalias() += c.x_in.transpose() * dv;
    g(grads, layout_, s.bv).row(0) += dv.colwise().sum();
    dx = dr1;
    dx.noalias() += dq * w(s.wq).transpose();
    dx.noalias() += dk * w(s.wk).transpose();
    dx.noalias() += dv * w(s.wv).transpose();
  }

  if (train_) dx.array() *= emb_mask_.array();
  M demb = layer_norm_backward(dx, layout_.emb_g, layout_.emb_b, emb_norm_, grads);
  auto dtok = g(grads, layout_, layout_.tok_emb);
  auto dpos = g(grads, layout_, layout_.pos_emb);
  for (Eigen::Index r = 0; r < demb.rows(); ++r) {
    dtok.row(batch.ids[static_cast<std::size_t>(r)]) += demb.row(r);
    dpos.row(batch.positions[static_cast<std::size_t>(r)]) += demb.row(r);
  }
}

template <typename T>
double cross_entropy(const Mat<T>& logits, std::span<const int> targets, std::vector<double>& per_row,
                     Mat<T>* dlogits) {
  const auto m = logits.rows();
  per_row.resize(static_cast<std::size_t>(m));
  if (dlogits) dlogits->resize(m, logits.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto row = logits.row(r);
    const double lse = log_sum_exp(row);
    const int t = targets[static_cast<std::size_t>(r)];
    per_row[static_cast<std::size_t>(r)] = lse - static_cast<double>(row(t));
    if (dlogits) {
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        (*dlogits)(r, j) = static_cast<T>(std::exp(static_cast<double>(row(j)) - lse) / static_cast<double>(m));
      }
      (*dlogits)(r, t) -= static_cast<T>(1.0 / static_cast<double>(m));
    }
  }
  // Pairwise-free but fixed-order summation keeps means reproducible.
  double sum = 0.0;
  for (double v : per_row) sum += v;
  return m > 0 ? sum / static_cast<double>(m) : 0.0;
}

template class Transformer<float>;
template class Transformer<double>;
template double cross_entropy<float>(const Mat<float>&, std::span<const int>, std::vector<double>&, Mat<float>*);
template double cross_entropy<double>(const Mat<double>&, std::span<const int>, std::vector<double>&, Mat<double>*);

}  // namespace tempadapt::model
