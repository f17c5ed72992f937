// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Single-stream multimodal transformer classifier.
//
// Text pieces and visual regions are embedded into one d-dimensional space,
// concatenated as [text | regions], and passed through pre-norm transformer
// blocks. The binary logit is read from the final [CLS] state. Region boxes
// are carried for reporting only; regions have no positional embedding.

#ifndef MEMESCOPE_MODEL_H_
#define MEMESCOPE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "memescope/attention.h"
#include "memescope/autodiff.h"
#include "memescope/dataset.h"
#include "memescope/tensor.h"
#include "memescope/tokenizer.h"

namespace memescope {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t hidden_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t vocab_size = 0;
  std::size_t visual_feature_dim = 2048;
  std::size_t max_text_len = 64;
  std::size_t num_regions = 100;
  double layer_norm_eps = 1e-5;
  // LayerNorm on the pooled [CLS] state before the classifier head.
  bool final_norm = true;

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  std::size_t seq_len() const { return max_text_len + num_regions; }

  // Throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParameterSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

// Every parameter the architecture needs, in canonical order.
std::vector<ParameterSpec> parameter_specs(const ModelConfig& config);

// Named tensors kept in insertion order.
class Parameters {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// N(0, 0.02) weights and embeddings, unit LayerNorm gains, zero biases.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double final_loss = 0.0;
};

struct ModelCheckpoint {
  ModelConfig config;
  WordPieceVocab vocab;
  Parameters params;
  TrainingMeta meta;
};

// Fresh checkpoint with randomly initialized parameters.
ModelCheckpoint make_checkpoint(ModelConfig config, WordPieceVocab vocab, std::uint64_t seed);

// A record made model-ready: tokenized text plus the region features padded
// with zero rows up to num_regions.
struct ModelInput {
  std::string record_id;
  TokenSequence tokens;
  Tensor features;               // R x Dv
  std::vector<bool> region_pad;  // length R
  std::vector<BoundingBox> boxes;

  SequenceLayout layout() const;
};

// Throws ValidationError when the record has more regions than num_regions or
// a feature dimension other than visual_feature_dim.
ModelInput prepare_input(const ModelConfig& config, const WordPieceVocab& vocab,
                         const MemeRecord& record);

// Parameter tensors bound as leaves of one tape.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const Parameters& params, bool requires_grad);
  const Var& operator[](const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }

 private:
  std::vector<std::pair<std::string, Var>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddedInputs {
  Var text;    // T x d
  Var visual;  // R x d
};

// text = token + position + segment A; visual = features W + b + segment B.
EmbeddedInputs embed_inputs(Tape& tape, const BoundParameters& params,
                            const ModelConfig& config, const ModelInput& input);
// Same, with the features supplied as a variable (for feature-level gradients).
EmbeddedInputs embed_inputs(Tape& tape, const BoundParameters& params,
                            const ModelConfig& config, const ModelInput& input,
                            const Var& features);

struct EncoderOutput {
  Var logit;  // 1 x 1
  AttentionTrace trace;
};

// Runs the transformer over [text | visual]. Keys flagged in layout.key_pad
// receive -inf scores before the softmax. When record_trace is false the
// returned trace is empty.
EncoderOutput encode(Tape& tape, const BoundParameters& params, const ModelConfig& config,
                     const Var& text, const Var& visual, const SequenceLayout& layout,
                     bool record_trace = true);

struct ForwardResult {
  double logit = 0.0;
  AttentionTrace trace;
  Tensor text_embedding;
  Tensor visual_embedding;
};

ForwardResult forward(const ModelCheckpoint& checkpoint, const ModelInput& input);

struct Classification {
  Label label = Label::kNonHateful;
  double p_hateful = 0.0;
  double logit = 0.0;
};

// p = sigmoid(logit); hateful iff p >= threshold (a tie is hateful).
Classification classify(double logit, double threshold = 0.5);
Classification classify(const ModelCheckpoint& checkpoint, const ModelInput& input,
                        double threshold = 0.5);

}  // namespace memescope

#endif  // MEMESCOPE_MODEL_H_
