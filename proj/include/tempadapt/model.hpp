// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tempadapt/tokenizer.hpp"
#include "tempadapt/transformer.hpp"

namespace tempadapt::model {

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 2;
  int feedforward = 256;
  double dropout = 0.1;
  int vocab_size = 2000;
  std::string vocab_hash;  // ties the weights to one vocabulary
  int max_len = 128;
  int n_classes = 0;  // 0: no classification head yet

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  int adaptation_epochs = 1;
  int adaptation_batch = 128;
  int finetune_epochs = 3;
  int finetune_batch = 32;
  double mask_rate = 0.15;
  tok::MaskingPolicy masking{};
  // Adam moments; warmup, clipping and schedules are not used.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Weights plus everything needed to interpret and reproduce them.
struct Checkpoint {
  ModelConfig config;
  Weights weights;
  std::vector<std::string> labels;  // class names, index = class id
  nlohmann::json provenance = nlohmann::json::object();

  /// SHA-256 over config, labels and raw weight bytes.
  std::string content_hash() const;

  /// DIR/{weights.bin, config.json, provenance.json, hash}; written through
  /// a temporary directory and renamed into place.
  void save(const std::filesystem::path& dir) const;
  /// Verifies the stored hash; a mismatch is an IntegrityError.
  static Checkpoint load(const std::filesystem::path& dir);
};

inline constexpr std::string_view kCheckpointFormat = "tempadapt-checkpoint/1";

/// Identifies the floating-point code path (SIMD instruction sets in use).
/// Builds with different paths train to different weights, so cached
/// results are keyed on it.
std::string numerics_fingerprint();

/// Random initialisation (normal, std 0.02; norms at 1/0), deterministic in seed.
Checkpoint init_model(const ModelConfig& config, std::uint64_t seed);

/// Inference/training handle over a checkpoint's weights.
class Model {
 public:
  explicit Model(Checkpoint checkpoint);

  const Checkpoint& checkpoint() const { return ckpt_; }
  Checkpoint& checkpoint() { return ckpt_; }
  const Layout& layout() const { return layout_; }
  std::span<const float> weights() const { return ckpt_.weights; }

 private:
  Checkpoint ckpt_;
  Layout layout_;
};

/// Loads a checkpoint for use with `vocab`; a vocabulary or shape mismatch is
/// a ConfigError.
Model init_from(const Checkpoint& checkpoint, const tok::Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Losses and prediction

struct LossResult {
  double mean = 0.0;
  std::vector<double> per_item;  // per masked position or per document
};

/// Mean cross-entropy over all masked positions of the batch, evaluation
/// mode. Throws DataError when nothing is masked.
LossResult mlm_loss(const Model& model, std::span<const tok::MaskedSequence> batch);

/// Raw MLM logits of a batch, masked positions in batch order.
Mat<float> mlm_logits(const Model& model, std::span<const tok::MaskedSequence> batch);

struct LabelledSequence {
  tok::TokenSequence sequence;
  int label = 0;
};

LossResult cls_loss(const Model& model, std::span<const LabelledSequence> batch);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

std::vector<Prediction> predict(const Model& model, std::span<const tok::TokenSequence> docs,
                                std::size_t batch_size = 64);

/// Softmax of one row of logits in double precision.
std::vector<double> softmax(std::span<const float> logits);

// ---------------------------------------------------------------------------
// Training regimes

struct UnlabelledSet {
  std::string period_id;
  std::vector<std::string> texts;
};

struct LabelledSet {
  std::string period_id;
  std::vector<std::string> texts;
  std::vector<std::string> labels;
};

struct TrainStats {
  std::size_t steps = 0;
  std::size_t examples = 0;
};

/// One pass of continued MLM pre-training over the pooled sets.
/// Provenance becomes TAda for a single period and DAda otherwise; no sets
/// at all returns the input unchanged. Empty sets are a DataError.
Checkpoint adapt(const Checkpoint& base, const tok::Vocabulary& vocab, std::span<const UnlabelledSet> sets,
                 const TrainConfig& config, TrainStats* stats = nullptr);

/// Fine-tunes a classification head (created when absent) for
/// finetune_epochs. Provenance records TFt for one period, RFt otherwise.
Checkpoint finetune(const Checkpoint& base, const tok::Vocabulary& vocab, std::span<const LabelledSet> sets,
                    const std::vector<std::string>& labels, const TrainConfig& config,
                    TrainStats* stats = nullptr);

struct TokenLossRecord {
  std::string doc_id;
  std::string period;
  std::int32_t position = 0;    // index in the encoded sequence
  std::int32_t word_index = 0;  // source word
  tok::TokenId subword = 0;
  double loss = 0.0;
};

struct EvalDocument {
  std::string id;
  std::string period;
  std::string text;
};

/// Deterministic masking of one document: the seed depends only on the
/// masking seed and the document id, so every model sees identical masks.
tok::MaskedSequence mask_document(const tok::TokenSequence& seq, std::size_t vocab_size,
                                  std::uint64_t masking_seed, const std::string& doc_id,
                                  double rate = 0.15, tok::MaskingPolicy policy = {});

/// One record per masked position, in document order.
std::vector<TokenLossRecord> per_token_losses(const Model& model, const tok::Vocabulary& vocab,
                                              std::span<const EvalDocument> docs, std::uint64_t masking_seed,
                                              double rate = 0.15, std::size_t batch_size = 64);

}  // namespace tempadapt::model
