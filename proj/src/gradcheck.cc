// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "memescope/error.h"

namespace memescope {
namespace {

struct Block {
  std::string name;
  Tensor* value;
  Tensor grad;
};

std::string coordinate_path(const std::string& name, const Tensor& t, std::size_t flat) {
  std::vector<std::size_t> idx(t.rank());
  for (std::size_t d = t.rank(); d-- > 0;) {
    idx[d] = flat % t.shape()[d];
    flat /= t.shape()[d];
  }
  std::string out = name + "[";
  for (std::size_t d = 0; d < idx.size(); ++d) {
    if (d > 0) out += ",";
    out += std::to_string(idx[d]);
  }
  return out + "]";
}

double logit_at(const ModelConfig& config, const Parameters& params, const ModelInput& input,
                const Tensor& features) {
  Tape tape;
  BoundParameters bound(tape, params, false);
  EmbeddedInputs emb = embed_inputs(tape, bound, config, input, tape.constant(features));
  return encode(tape, bound, config, emb.text, emb.visual, input.layout(), false)
      .logit.value()
      .item();
}

}  // namespace

ModelGradCheckReport model_grad_check(const ModelCheckpoint& ckpt, const ModelInput& input,
                                      const ModelGradCheckOptions& options) {
  if (options.samples == 0) throw ValidationError("gradcheck needs at least one sample");
  if (!(options.step > 0.0)) throw ValidationError("gradcheck step must be positive");
  const ModelConfig& config = ckpt.config;

  Parameters work = ckpt.params;
  Tensor features = input.features;
  std::vector<Block> blocks;
  {
    Tape tape;
    BoundParameters bound(tape, work, true);
    Var feat = tape.leaf(features, true);
    EmbeddedInputs emb = embed_inputs(tape, bound, config, input, feat);
    Var logit = encode(tape, bound, config, emb.text, emb.visual, input.layout(), false).logit;
    if (options.fault_op) tape.inject_backward_fault(*options.fault_op, options.fault_factor);
    tape.backward(logit);
    for (auto& [name, value] : work) blocks.push_back({name, &value, bound[name].grad()});
    blocks.push_back({"input.features", &features, feat.grad()});
  }

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& b : blocks) {
    offsets.push_back(total);
    total += b.value->size();
  }
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picked;
  std::mt19937_64 rng(options.seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked),
              std::min(options.samples, total), rng);
  std::shuffle(picked.begin(), picked.end(), rng);

  ModelGradCheckReport report;
  report.worst.relative_error = -1.0;
  for (std::size_t flat : picked) {
    const std::size_t b =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                 offsets.begin()) - 1;
    Block& block = blocks[b];
    const std::size_t i = flat - offsets[b];
    double& slot = (*block.value)[i];
    const double saved = slot;
    slot = saved + options.step;
    const double plus = logit_at(config, work, input, features);
    slot = saved - options.step;
    const double minus = logit_at(config, work, input, features);
    slot = saved;

    CoordinateCheck c;
    c.path = coordinate_path(block.name, *block.value, i);
    c.analytic = block.grad[i];
    c.numeric = (plus - minus) / (2.0 * options.step);
    c.relative_error = relative_error(c.analytic, c.numeric);
    if (c.relative_error > report.worst.relative_error) report.worst = c;
    report.checks.push_back(std::move(c));
  }
  report.max_relative_error = report.worst.relative_error;
  return report;
}

ModelConfig gradcheck_default_config(std::size_t vocab_size) {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 4;
  c.hidden_dim = 64;
  c.ffn_dim = 128;
  c.vocab_size = vocab_size;
  c.max_text_len = 32;
  c.num_regions = 16;
  return c;
}

MemeRecord random_record(const ModelConfig& config, const WordPieceVocab& vocab,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> words;
  for (const auto& t : vocab.tokens()) {
    if (!t.empty() && t[0] != '[' && t.rfind("##", 0) != 0) words.push_back(t);
  }
  if (words.empty()) throw ValidationError("random_record: vocabulary has no whole words");
  const std::size_t max_words = std::max<std::size_t>(1, config.max_text_len - 2);
  std::uniform_int_distribution<std::size_t> n_words(1, std::min<std::size_t>(max_words, 12));
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  MemeRecord r;
  r.id = "random-" + std::to_string(seed);
  const std::size_t n = n_words(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) r.text += ' ';
    r.text += words[pick(rng)];
  }
  r.label = Label::kHateful;
  const std::size_t real = std::max<std::size_t>(1, config.num_regions * 3 / 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < real; ++k) {
    Region region;
    const double x1 = unit(rng) * 0.5, y1 = unit(rng) * 0.5;
    region.bbox = {x1, y1, x1 + 0.1 + unit(rng) * 0.4, y1 + 0.1 + unit(rng) * 0.4};
    region.feature.resize(config.visual_feature_dim);
    for (double& v : region.feature) v = normal(rng);
    r.regions.push_back(std::move(region));
  }
  return r;
}

nlohmann::json gradcheck_to_json(const ModelGradCheckReport& report, double tolerance) {
  return {{"coordinates_checked", report.checks.size()},
          {"max_relative_error", report.max_relative_error},
          {"tolerance", tolerance},
          {"passed", report.max_relative_error <= tolerance},
          {"worst",
           {{"path", report.worst.path},
            {"analytic", report.worst.analytic},
            {"numeric", report.worst.numeric},
            {"relative_error", report.worst.relative_error}}}};
}

}  // namespace memescope
