// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/model.h"

#include <cmath>
#include <limits>
#include <random>

#include "memescope/error.h"

namespace memescope {

using nlohmann::json;

namespace {

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i) + "."; }

}  // namespace

// --- ModelConfig -------------------------------------------------------------

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(num_heads, "num_heads");
  positive(hidden_dim, "hidden_dim");
  positive(ffn_dim, "ffn_dim");
  positive(visual_feature_dim, "visual_feature_dim");
  positive(num_regions, "num_regions");
  if (hidden_dim % num_heads != 0) {
    throw ValidationError("model config: hidden_dim " + std::to_string(hidden_dim) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (max_text_len < 3) {
    throw ValidationError("model config: max_text_len must be >= 3 ([CLS], a token, [SEP])");
  }
  if (vocab_size <= WordPieceVocab::kUnk) {
    throw ValidationError("model config: vocab_size must cover the 4 special tokens");
  }
  if (!(layer_norm_eps > 0.0)) throw ValidationError("model config: layer_norm_eps must be > 0");
}

json ModelConfig::to_json() const {
  return {{"num_layers", num_layers},
          {"num_heads", num_heads},
          {"hidden_dim", hidden_dim},
          {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size},
          {"visual_feature_dim", visual_feature_dim},
          {"max_text_len", max_text_len},
          {"num_regions", num_regions},
          {"layer_norm_eps", layer_norm_eps},
          {"final_norm", final_norm}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  ModelConfig c;
  try {
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.visual_feature_dim = j.value("visual_feature_dim", c.visual_feature_dim);
    c.max_text_len = j.value("max_text_len", c.max_text_len);
    c.num_regions = j.value("num_regions", c.num_regions);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.final_norm = j.value("final_norm", c.final_norm);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  return c;
}

// --- Parameters --------------------------------------------------------------

std::vector<ParameterSpec> parameter_specs(const ModelConfig& c) {
  const std::size_t d = c.hidden_dim;
  std::vector<ParameterSpec> specs = {
      {"embeddings.token", {c.vocab_size, d}},
      {"embeddings.position", {c.max_text_len, d}},
      {"embeddings.segment", {2, d}},
      {"visual.weight", {c.visual_feature_dim, d}},
      {"visual.bias", {d}},
  };
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string p = layer_prefix(i);
    specs.push_back({p + "ln1.gamma", {d}});
    specs.push_back({p + "ln1.beta", {d}});
    for (const char* proj : {"q", "k", "v", "o"}) {
      specs.push_back({p + "attn." + proj + ".weight", {d, d}});
      specs.push_back({p + "attn." + proj + ".bias", {d}});
    }
    specs.push_back({p + "ln2.gamma", {d}});
    specs.push_back({p + "ln2.beta", {d}});
    specs.push_back({p + "ffn.in.weight", {d, c.ffn_dim}});
    specs.push_back({p + "ffn.in.bias", {c.ffn_dim}});
    specs.push_back({p + "ffn.out.weight", {c.ffn_dim, d}});
    specs.push_back({p + "ffn.out.bias", {d}});
  }
  if (c.final_norm) {
    specs.push_back({"final_norm.gamma", {d}});
    specs.push_back({"final_norm.beta", {d}});
  }
  specs.push_back({"head.weight", {d, 1}});
  specs.push_back({"head.bias", {1}});
  return specs;
}

void Parameters::add(std::string name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& Parameters::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

std::size_t Parameters::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  Parameters params;
  for (const auto& spec : parameter_specs(config)) {
    Tensor t(spec.shape, 0.0);
    const std::string& n = spec.name;
    const bool is_gain = n.ends_with(".gamma");
    const bool is_bias = n.ends_with(".bias") || n.ends_with(".beta");
    if (is_gain) {
      t.fill(1.0);
    } else if (!is_bias) {
      for (double& v : t.storage()) v = normal(rng);
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

ModelCheckpoint make_checkpoint(ModelConfig config, WordPieceVocab vocab, std::uint64_t seed) {
  config.vocab_size = vocab.size();
  config.validate();
  ModelCheckpoint ckpt{config, std::move(vocab), init_parameters(config, seed), {}};
  ckpt.meta.seed = seed;
  return ckpt;
}

// --- Inputs ------------------------------------------------------------------

SequenceLayout ModelInput::layout() const {
  SequenceLayout l;
  l.text_len = tokens.length();
  l.num_regions = region_pad.size();
  l.cls_position = 0;
  l.sep_positions = {tokens.sep_position};
  l.key_pad.reserve(l.seq_len());
  l.key_pad.insert(l.key_pad.end(), tokens.pad_mask.begin(), tokens.pad_mask.end());
  l.key_pad.insert(l.key_pad.end(), region_pad.begin(), region_pad.end());
  return l;
}

ModelInput prepare_input(const ModelConfig& config, const WordPieceVocab& vocab,
                         const MemeRecord& record) {
  if (record.regions.size() > config.num_regions) {
    throw ValidationError("record '" + record.id + "' has " +
                          std::to_string(record.regions.size()) + " regions; the model takes " +
                          std::to_string(config.num_regions));
  }
  ModelInput input;
  input.record_id = record.id;
  try {
    input.tokens = tokenize(record.text, vocab, config.max_text_len);
  } catch (const ValidationError& e) {
    throw ValidationError("record '" + record.id + "': " + e.what());
  }
  const std::size_t dv = config.visual_feature_dim;
  input.features = Tensor({config.num_regions, dv}, 0.0);
  input.region_pad.assign(config.num_regions, true);
  input.boxes.assign(config.num_regions, BoundingBox{0.0, 0.0, 0.0, 0.0});
  for (std::size_t r = 0; r < record.regions.size(); ++r) {
    const Region& region = record.regions[r];
    if (region.feature.size() != dv) {
      throw ValidationError("record '" + record.id + "': region feature dimension " +
                            std::to_string(region.feature.size()) + " but the model expects " +
                            std::to_string(dv));
    }
    std::copy(region.feature.begin(), region.feature.end(),
              input.features.data().begin() + static_cast<std::ptrdiff_t>(r * dv));
    input.region_pad[r] = false;
    input.boxes[r] = region.bbox;
  }
  return input;
}

// --- Forward -----------------------------------------------------------------

BoundParameters::BoundParameters(Tape& tape, const Parameters& params, bool requires_grad) {
  for (const auto& [name, value] : params) {
    index_.emplace(name, vars_.size());
    vars_.emplace_back(name, tape.leaf(value, requires_grad));
  }
}

const Var& BoundParameters::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("parameter '" + name + "' is not bound");
  return vars_[it->second].second;
}

EmbeddedInputs embed_inputs(Tape& tape, const BoundParameters& p, const ModelConfig& config,
                            const ModelInput& input) {
  return embed_inputs(tape, p, config, input, tape.constant(input.features));
}

EmbeddedInputs embed_inputs(Tape&, const BoundParameters& p, const ModelConfig& config,
                            const ModelInput& input, const Var& features) {
  if (input.tokens.length() != config.max_text_len) {
    throw ShapeError("embed_inputs: token sequence of length " +
                     std::to_string(input.tokens.length()) + ", model expects " +
                     std::to_string(config.max_text_len));
  }
  if (features.shape() != std::vector<std::size_t>{config.num_regions, config.visual_feature_dim}) {
    throw ShapeError("embed_inputs: visual features " + features.value().shape_string() +
                     ", model expects " +
                     shape_string({config.num_regions, config.visual_feature_dim}));
  }
  const Var& segment = p["embeddings.segment"];
  Var text = embedding_lookup(p["embeddings.token"], input.tokens.ids);
  text = add(text, p["embeddings.position"]);
  text = add_bias(text, slice_rows(segment, 0, 1));

  Var visual = matmul(features, p["visual.weight"]);
  visual = add_bias(visual, p["visual.bias"]);
  visual = add_bias(visual, slice_rows(segment, 1, 1));
  return {text, visual};
}

EncoderOutput encode(Tape& tape, const BoundParameters& p, const ModelConfig& c,
                     const Var& text, const Var& visual, const SequenceLayout& layout,
                     bool record_trace) {
  const std::size_t s = layout.seq_len();
  const std::size_t d = c.hidden_dim;
  const std::size_t dh = c.head_dim();
  if (text.shape() != std::vector<std::size_t>{c.max_text_len, d} ||
      visual.shape() != std::vector<std::size_t>{c.num_regions, d} || s != c.seq_len()) {
    throw ShapeError("encode: embeddings " + text.value().shape_string() + " + " +
                     visual.value().shape_string() + " do not match the model config");
  }

  Tensor mask_values({s, s}, 0.0);
  for (std::size_t q = 0; q < s; ++q) {
    for (std::size_t k = 0; k < s; ++k) {
      if (layout.key_pad[k]) mask_values[q * s + k] = -std::numeric_limits<double>::infinity();
    }
  }
  const Var mask = tape.constant(std::move(mask_values));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  EncoderOutput out;
  if (record_trace) out.trace = AttentionTrace(c.num_layers, c.num_heads, layout);

  const Var parts[] = {text, visual};
  Var x = concat_rows(parts);
  for (std::size_t layer = 0; layer < c.num_layers; ++layer) {
    const std::string pre = layer_prefix(layer);
    auto linear = [&](const Var& in, const std::string& name) {
      return add_bias(matmul(in, p[name + ".weight"]), p[name + ".bias"]);
    };

    Var h = layer_norm(x, p[pre + "ln1.gamma"], p[pre + "ln1.beta"], c.layer_norm_eps);
    Var q = linear(h, pre + "attn.q");
    Var k = linear(h, pre + "attn.k");
    Var v = linear(h, pre + "attn.v");
    std::vector<Var> heads;
    heads.reserve(c.num_heads);
    for (std::size_t head = 0; head < c.num_heads; ++head) {
      Var qh = slice_cols(q, head * dh, dh);
      Var kh = slice_cols(k, head * dh, dh);
      Var vh = slice_cols(v, head * dh, dh);
      Var scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), mask);
      Var probs = softmax(scores, 1);
      if (record_trace) {
        const auto src = probs.value().data();
        auto dst = out.trace.matrix(layer, head);
        std::copy(src.begin(), src.end(), dst.begin());
      }
      heads.push_back(matmul(probs, vh));
    }
    Var attn = linear(concat_cols(heads), pre + "attn.o");
    x = add(x, attn);

    Var h2 = layer_norm(x, p[pre + "ln2.gamma"], p[pre + "ln2.beta"], c.layer_norm_eps);
    Var ffn = linear(gelu(linear(h2, pre + "ffn.in")), pre + "ffn.out");
    x = add(x, ffn);
  }
  Var pooled = slice_rows(x, layout.cls_position, 1);
  if (c.final_norm) {
    pooled = layer_norm(pooled, p["final_norm.gamma"], p["final_norm.beta"], c.layer_norm_eps);
  }
  out.logit = add_bias(matmul(pooled, p["head.weight"]), p["head.bias"]);
  return out;
}

ForwardResult forward(const ModelCheckpoint& ckpt, const ModelInput& input) {
  Tape tape;
  BoundParameters params(tape, ckpt.params, false);
  EmbeddedInputs emb = embed_inputs(tape, params, ckpt.config, input);
  EncoderOutput enc = encode(tape, params, ckpt.config, emb.text, emb.visual, input.layout());
  return {enc.logit.value().item(), std::move(enc.trace), emb.text.value(),
          emb.visual.value()};
}

Classification classify(double logit, double threshold) {
  Classification c;
  c.logit = logit;
  c.p_hateful = sigmoid(logit);
  c.label = c.p_hateful >= threshold ? Label::kHateful : Label::kNonHateful;
  return c;
}

Classification classify(const ModelCheckpoint& ckpt, const ModelInput& input, double threshold) {
  return classify(forward(ckpt, input).logit, threshold);
}

}  // namespace memescope
