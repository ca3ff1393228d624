// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::model {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ModelConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || feedforward < 1) throw ConfigError("model sizes must be positive");
  if (hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                      " attention heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (vocab_size <= tok::kNumSpecial) throw ConfigError("vocabulary too small");
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  if (n_classes < 0) throw ConfigError("n_classes must be non-negative");
}

json ModelConfig::to_json() const {
  return {{"layers", layers},   {"hidden", hidden},         {"heads", heads},
          {"feedforward", feedforward}, {"dropout", dropout}, {"vocab_size", vocab_size},
          {"vocab_hash", vocab_hash},   {"max_len", max_len}, {"n_classes", n_classes}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.feedforward = j.value("feedforward", c.feedforward);
    c.dropout = j.value("dropout", c.dropout);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.vocab_hash = j.value("vocab_hash", c.vocab_hash);
    c.max_len = j.value("max_len", c.max_len);
    c.n_classes = j.value("n_classes", c.n_classes);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (adaptation_epochs < 0 || finetune_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (adaptation_batch < 1 || finetune_batch < 1) throw ConfigError("batch sizes must be positive");
  if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw ConfigError("mask_rate must lie in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("invalid Adam moments");
  }
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"adaptation_epochs", adaptation_epochs},
          {"adaptation_batch", adaptation_batch},
          {"finetune_epochs", finetune_epochs},
          {"finetune_batch", finetune_batch},
          {"mask_rate", mask_rate},
          {"masking", {masking.mask, masking.random, masking.keep}},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"seed", seed},
          {"warmup", "none"},
          {"gradient_clipping", "none"},
          {"schedule", "constant"}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adaptation_epochs = j.value("adaptation_epochs", c.adaptation_epochs);
    c.adaptation_batch = j.value("adaptation_batch", c.adaptation_batch);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.finetune_batch = j.value("finetune_batch", c.finetune_batch);
    c.mask_rate = j.value("mask_rate", c.mask_rate);
    if (j.contains("masking")) {
      const auto& m = j.at("masking");
      c.masking = {m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>()};
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string numerics_fingerprint() { return std::string("eigen/") + Eigen::SimdInstructionSetsInUse(); }

std::string Checkpoint::content_hash() const {
  Sha256 h;
  h.update(std::string(kCheckpointFormat)).update("\n");
  h.update(config.to_json().dump()).update("\n");
  h.update(json(labels).dump()).update("\n");
  h.update(std::as_bytes(std::span<const float>(weights)));
  return h.hex();
}

void Checkpoint::save(const fs::path& dir) const {
  const auto hash = content_hash();
  static thread_local Rng tmp_rng(std::random_device{}());
  const fs::path tmp = dir.string() + ".tmp" + std::to_string(tmp_rng.next() & 0xffffff);
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);
  const auto bytes = std::as_bytes(std::span<const float>(weights));
  write_file_atomic(tmp / "weights.bin", std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  json cfg = {{"format", kCheckpointFormat}, {"model", config.to_json()}, {"labels", labels}};
  write_file_atomic(tmp / "config.json", cfg.dump(2) + "\n");
  write_file_atomic(tmp / "provenance.json", provenance.dump(2) + "\n");
  write_file_atomic(tmp / "hash", hash + "\n");
  if (fs::exists(dir)) fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) {
    fs::remove_all(tmp);
    // Another writer may have won the race with identical content.
    if (fs::exists(dir / "hash") && trim(read_file(dir / "hash")) == hash) return;
    throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
  }
}

Checkpoint Checkpoint::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no checkpoint at " + dir.string());
  Checkpoint c;
  json cfg;
  try {
    cfg = json::parse(read_file(dir / "config.json"));
    c.provenance = json::parse(read_file(dir / "provenance.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  if (cfg.value("format", "") != kCheckpointFormat) throw IntegrityError("unknown checkpoint format in " + dir.string());
  c.config = ModelConfig::from_json(cfg.at("model"));
  c.labels = cfg.value("labels", std::vector<std::string>{});
  const auto blob = read_file(dir / "weights.bin");
  if (blob.size() % sizeof(float) != 0) throw IntegrityError("truncated weights in " + dir.string());
  c.weights.resize(blob.size() / sizeof(float));
  std::memcpy(c.weights.data(), blob.data(), blob.size());
  if (c.weights.size() != Layout(c.config).total()) throw IntegrityError("weight count does not match config");
  const auto stored = trim(read_file(dir / "hash"));
  if (stored != c.content_hash()) throw IntegrityError("checkpoint hash mismatch in " + dir.string());
  return c;
}

namespace {

void init_tensor(const TensorInfo& t, std::span<float> out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, t.name));
  const bool is_gamma = t.name.ends_with("gamma");
  for (std::size_t i = 0; i < t.size(); ++i) {
    float v = 0.0f;
    if (is_gamma) {
      v = 1.0f;
    } else if (t.decay) {
      v = static_cast<float>(0.02 * rng.normal());
    }
    out[t.offset + i] = v;
  }
}

}  // namespace

Checkpoint init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Checkpoint c;
  c.config = config;
  const Layout layout(config);
  c.weights.assign(layout.total(), 0.0f);
  for (const auto& t : layout.tensors()) init_tensor(t, c.weights, seed);
  c.provenance = {{"strategy", "NAda"}, {"init_seed", seed}, {"adaptation", json::array()}};
  return c;
}

Model::Model(Checkpoint checkpoint) : ckpt_(std::move(checkpoint)), layout_(ckpt_.config) {
  ckpt_.config.validate();
  if (ckpt_.weights.size() != layout_.total()) throw ConfigError("weight count does not match model config");
}

Model init_from(const Checkpoint& checkpoint, const tok::Vocabulary& vocab) {
  if (static_cast<std::size_t>(checkpoint.config.vocab_size) != vocab.size()) {
    throw ConfigError("checkpoint expects a vocabulary of " + std::to_string(checkpoint.config.vocab_size) +
                      " entries, got " + std::to_string(vocab.size()));
  }
  if (!checkpoint.config.vocab_hash.empty() && checkpoint.config.vocab_hash != vocab.hash()) {
    throw ConfigError("checkpoint was trained with a different vocabulary");
  }
  return Model(checkpoint);
}

// ---------------------------------------------------------------------------
// Losses and prediction

namespace {

void check_ids(const Layout& layout, const tok::TokenSequence& seq) {
  if (seq.ids.empty()) throw DataError("empty token sequence");
  if (seq.ids.size() > static_cast<std::size_t>(layout.max_len)) throw DataError("sequence exceeds max_len");
  for (auto id : seq.ids) {
    if (id < 0 || id >= layout.vocab) throw DataError("token id outside the vocabulary");
  }
}

struct MlmBatch {
  PackedBatch packed;
  std::vector<int> rows;
  std::vector<int> targets;
};

MlmBatch pack_masked(const Layout& layout, std::span<const tok::MaskedSequence* const> batch) {
  std::vector<const tok::TokenSequence*> seqs;
  seqs.reserve(batch.size());
  for (const auto* m : batch) {
    check_ids(layout, m->sequence);
    seqs.push_back(&m->sequence);
  }
  MlmBatch out;
  out.packed = pack(seqs);
  for (std::size_t d = 0; d < batch.size(); ++d) {
    for (std::size_t i = 0; i < batch[d]->positions.size(); ++i) {
      out.rows.push_back(out.packed.offsets[d] + batch[d]->positions[i]);
      out.targets.push_back(batch[d]->targets[i]);
    }
  }
  return out;
}

std::vector<const tok::MaskedSequence*> pointers(std::span<const tok::MaskedSequence> batch) {
  std::vector<const tok::MaskedSequence*> p;
  p.reserve(batch.size());
  for (const auto& m : batch) p.push_back(&m);
  return p;
}

}  // namespace

Mat<float> mlm_logits(const Model& model, std::span<const tok::MaskedSequence> batch) {
  const auto ptrs = pointers(batch);
  auto mb = pack_masked(model.layout(), ptrs);
  Transformer<float> net(model.layout(), model.weights(), 0.0);
  net.forward(mb.packed, false, 0);
  return net.mlm_logits(mb.rows);
}

LossResult mlm_loss(const Model& model, std::span<const tok::MaskedSequence> batch) {
  const auto ptrs = pointers(batch);
  auto mb = pack_masked(model.layout(), ptrs);
  if (mb.rows.empty()) throw DataError("no masked positions: mean loss is undefined");
  Transformer<float> net(model.layout(), model.weights(), 0.0);
  net.forward(mb.packed, false, 0);
  const auto logits = net.mlm_logits(mb.rows);
  LossResult r;
  r.mean = cross_entropy<float>(logits, mb.targets, r.per_item, nullptr);
  return r;
}

LossResult cls_loss(const Model& model, std::span<const LabelledSequence> batch) {
  if (batch.empty()) throw DataError("empty classification batch");
  const auto& layout = model.layout();
  if (layout.classes < 1) throw ConfigError("model has no classification head");
  std::vector<const tok::TokenSequence*> seqs;
  std::vector<int> targets;
  for (const auto& ex : batch) {
    if (ex.label < 0 || ex.label >= layout.classes) throw DataError("label outside [0, n_classes)");
    check_ids(layout, ex.sequence);
    seqs.push_back(&ex.sequence);
    targets.push_back(ex.label);
  }
  const auto packed = pack(seqs);
  Transformer<float> net(layout, model.weights(), 0.0);
  net.forward(packed, false, 0);
  LossResult r;
  r.mean = cross_entropy<float>(net.cls_logits(), targets, r.per_item, nullptr);
  return r;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += p[i] = std::exp(static_cast<double>(logits[i]) - mx);
  for (auto& v : p) v /= s;
  return p;
}

std::vector<Prediction> predict(const Model& model, std::span<const tok::TokenSequence> docs, std::size_t batch_size) {
  const auto& layout = model.layout();
  if (layout.classes < 1) throw ConfigError("model has no classification head");
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<Prediction> out;
  out.reserve(docs.size());
  Transformer<float> net(layout, model.weights(), 0.0);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const auto end = std::min(docs.size(), start + batch_size);
    std::vector<const tok::TokenSequence*> seqs;
    for (std::size_t i = start; i < end; ++i) {
      check_ids(layout, docs[i]);
      seqs.push_back(&docs[i]);
    }
    const auto packed = pack(seqs);
    net.forward(packed, false, 0);
    const auto logits = net.cls_logits();
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Prediction p;
      p.probabilities = softmax(std::span<const float>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
      p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                 p.probabilities.begin());
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

/// Adam with decoupled weight decay applied to matrix tensors only.
class AdamW {
 public:
  AdamW(const Layout& layout, const TrainConfig& cfg)
      : cfg_(cfg), m_(layout.total(), 0.0f), v_(layout.total(), 0.0f), decay_(layout.total(), 0) {
    for (const auto& t : layout.tensors()) {
      if (t.decay) std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), 1);
    }
  }

  void step(std::span<float> params, std::span<const float> grads) {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const float lr = static_cast<float>(cfg_.learning_rate);
    const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(b1, static_cast<double>(t_))));
    const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(b2, static_cast<double>(t_))));
    const float decay = static_cast<float>(1.0 - cfg_.learning_rate * cfg_.weight_decay);
    const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
    const float eps = static_cast<float>(cfg_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const float g = grads[i];
      m_[i] = fb1 * m_[i] + (1.0f - fb1) * g;
      v_[i] = fb2 * v_[i] + (1.0f - fb2) * g * g;
      if (decay_[i]) params[i] *= decay;
      params[i] -= lr * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + eps);
    }
  }

 private:
  TrainConfig cfg_;
  Weights m_, v_;
  std::vector<char> decay_;
  std::uint64_t t_ = 0;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::string_view tag, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, std::string(tag) + "-order-" + std::to_string(epoch)));
  rng.shuffle(order);
  return order;
}

void check_vocab(const Checkpoint& ckpt, const tok::Vocabulary& vocab) { (void)init_from(ckpt, vocab); }

}  // namespace

Checkpoint adapt(const Checkpoint& base, const tok::Vocabulary& vocab, std::span<const UnlabelledSet> sets,
                 const TrainConfig& config, TrainStats* stats) {
  config.validate();
  check_vocab(base, vocab);
  if (stats) *stats = {};
  if (sets.empty()) return base;
  for (const auto& s : sets) {
    if (s.texts.empty()) throw DataError("adaptation slice " + s.period_id + " is empty");
  }
  Checkpoint out = base;
  const Layout layout(out.config);
  std::vector<tok::TokenSequence> seqs;
  json periods = json::array();
  for (const auto& s : sets) {
    for (const auto& t : s.texts) {
      seqs.push_back(tok::encode(t, vocab, static_cast<std::size_t>(out.config.max_len)));
    }
    periods.push_back({{"period", s.period_id}, {"size", s.texts.size()}});
  }

  AdamW opt(layout, config);
  Weights grads(layout.total());
  const auto batch = static_cast<std::size_t>(config.adaptation_batch);
  std::size_t steps = 0;
  for (int epoch = 0; epoch < config.adaptation_epochs; ++epoch) {
    const auto order = epoch_order(seqs.size(), config.seed, "adapt", epoch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      std::vector<tok::MaskedSequence> masked;
      masked.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto seed = derive_seed(config.seed, "adapt-mask-" + std::to_string(epoch) + "-" + std::to_string(order[i]));
        masked.push_back(tok::apply_mlm_masking(seqs[order[i]], vocab.size(), seed, config.mask_rate, config.masking));
      }
      const auto ptrs = pointers(masked);
      auto mb = pack_masked(layout, ptrs);
      if (mb.rows.empty()) continue;
      std::fill(grads.begin(), grads.end(), 0.0f);
      Transformer<float> net(layout, out.weights, out.config.dropout);
      net.forward(mb.packed, true, derive_seed(config.seed, "adapt-dropout-" + std::to_string(steps)));
      const auto logits = net.mlm_logits(mb.rows);
      Mat<float> dlogits;
      std::vector<double> per_row;
      cross_entropy<float>(logits, mb.targets, per_row, &dlogits);
      net.backward_mlm(dlogits, grads);
      net.backward_encoder(grads);
      opt.step(out.weights, grads);
      ++steps;
    }
  }
  if (stats) *stats = {steps, seqs.size() * static_cast<std::size_t>(config.adaptation_epochs)};

  const bool temporal = sets.size() == 1;
  out.provenance["strategy"] = temporal ? "TAda" : "DAda";
  out.provenance["adaptation"] = periods;
  out.provenance["adaptation_config"] = config.to_json();
  out.provenance["adaptation_parent"] = base.content_hash();
  return out;
}

Checkpoint finetune(const Checkpoint& base, const tok::Vocabulary& vocab, std::span<const LabelledSet> sets,
                    const std::vector<std::string>& labels, const TrainConfig& config, TrainStats* stats) {
  config.validate();
  check_vocab(base, vocab);
  if (stats) *stats = {};
  if (labels.size() < 2) throw ConfigError("fine-tuning needs at least two labels");
  if (sets.empty()) throw DataError("fine-tuning needs labelled data");
  Checkpoint out = base;
  const int n_classes = static_cast<int>(labels.size());
  if (out.config.n_classes == 0) {
    out.config.n_classes = n_classes;
    out.labels = labels;
    const Layout with_head(out.config);
    // The head tensors come last in the layout, so existing weights are a prefix.
    out.weights.resize(with_head.total(), 0.0f);
    for (int slot : {with_head.cls_w, with_head.cls_b}) {
      init_tensor(with_head.tensors()[static_cast<std::size_t>(slot)], out.weights,
                  derive_seed(config.seed, "classifier-init"));
    }
  } else if (out.config.n_classes != n_classes || out.labels != labels) {
    throw ConfigError("checkpoint already has a classification head with different labels");
  }
  const Layout layout(out.config);

  std::vector<LabelledSequence> data;
  json periods = json::array();
  for (const auto& s : sets) {
    if (s.texts.empty()) throw DataError("fine-tuning slice " + s.period_id + " is empty");
    if (s.texts.size() != s.labels.size()) throw DataError("texts and labels differ in length");
    for (std::size_t i = 0; i < s.texts.size(); ++i) {
      const auto it = std::find(labels.begin(), labels.end(), s.labels[i]);
      if (it == labels.end()) throw DataError("label '" + s.labels[i] + "' is not in the label set");
      data.push_back({tok::encode(s.texts[i], vocab, static_cast<std::size_t>(out.config.max_len)),
                      static_cast<int>(it - labels.begin())});
    }
    periods.push_back({{"period", s.period_id}, {"size", s.texts.size()}});
  }

  AdamW opt(layout, config);
  Weights grads(layout.total());
  const auto batch = static_cast<std::size_t>(config.finetune_batch);
  std::size_t steps = 0;
  for (int epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    const auto order = epoch_order(data.size(), config.seed, "finetune", epoch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      std::vector<const tok::TokenSequence*> seqs;
      std::vector<int> targets;
      for (std::size_t i = start; i < end; ++i) {
        check_ids(layout, data[order[i]].sequence);
        seqs.push_back(&data[order[i]].sequence);
        targets.push_back(data[order[i]].label);
      }
      const auto packed = pack(seqs);
      std::fill(grads.begin(), grads.end(), 0.0f);
      Transformer<float> net(layout, out.weights, out.config.dropout);
      net.forward(packed, true, derive_seed(config.seed, "finetune-dropout-" + std::to_string(steps)));
      const auto logits = net.cls_logits();
      Mat<float> dlogits;
      std::vector<double> per_row;
      cross_entropy<float>(logits, targets, per_row, &dlogits);
      net.backward_cls(dlogits, grads);
      net.backward_encoder(grads);
      opt.step(out.weights, grads);
      ++steps;
    }
  }
  if (stats) *stats = {steps, data.size() * static_cast<std::size_t>(config.finetune_epochs)};

  out.provenance["finetune"] = {{"strategy", sets.size() == 1 ? "TFt" : "RFt"},
                                {"periods", periods},
                                {"config", config.to_json()},
                                {"parent", base.content_hash()}};
  return out;
}

tok::MaskedSequence mask_document(const tok::TokenSequence& seq, std::size_t vocab_size, std::uint64_t masking_seed,
                                  const std::string& doc_id, double rate, tok::MaskingPolicy policy) {
  return tok::apply_mlm_masking(seq, vocab_size, derive_seed(masking_seed, "eval-mask:" + doc_id), rate, policy);
}

std::vector<TokenLossRecord> per_token_losses(const Model& model, const tok::Vocabulary& vocab,
                                              std::span<const EvalDocument> docs, std::uint64_t masking_seed,
                                              double rate, std::size_t batch_size) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  const auto& layout = model.layout();
  std::vector<TokenLossRecord> out;
  Transformer<float> net(layout, model.weights(), 0.0);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const auto end = std::min(docs.size(), start + batch_size);
    std::vector<tok::MaskedSequence> masked;
    for (std::size_t i = start; i < end; ++i) {
      const auto seq = tok::encode(docs[i].text, vocab, static_cast<std::size_t>(layout.max_len));
      masked.push_back(mask_document(seq, vocab.size(), masking_seed, docs[i].id, rate));
    }
    const auto ptrs = pointers(masked);
    auto mb = pack_masked(layout, ptrs);
    if (mb.rows.empty()) continue;
    net.forward(mb.packed, false, 0);
    const auto logits = net.mlm_logits(mb.rows);
    std::vector<double> per_row;
    cross_entropy<float>(logits, mb.targets, per_row, nullptr);
    std::size_t k = 0;
    for (std::size_t d = 0; d < masked.size(); ++d) {
      const auto& m = masked[d];
      for (std::size_t i = 0; i < m.positions.size(); ++i, ++k) {
        const auto pos = m.positions[i];
        out.push_back({docs[start + d].id, docs[start + d].period, pos,
                       m.sequence.word_index[static_cast<std::size_t>(pos)], m.targets[i], per_row[k]});
      }
    }
  }
  return out;
}

}  // namespace tempadapt::model
