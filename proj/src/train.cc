// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "memescope/error.h"

namespace memescope {

using nlohmann::json;

json TrainOptions::to_json() const {
  return {{"learning_rate", learning_rate}, {"steps", steps},   {"batch_size", batch_size},
          {"seed", seed},                   {"beta1", beta1},   {"beta2", beta2},
          {"adam_eps", adam_eps}};
}

TrainOptions TrainOptions::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("training options must be a JSON object");
  TrainOptions o;
  try {
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.steps = j.value("steps", o.steps);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.seed = j.value("seed", o.seed);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.adam_eps = j.value("adam_eps", o.adam_eps);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("training options: ") + e.what());
  }
  if (o.batch_size == 0) throw ValidationError("training options: batch_size must be >= 1");
  if (!(o.learning_rate >= 0.0)) throw ValidationError("training options: learning_rate < 0");
  return o;
}

namespace {

double record_loss(Tape& tape, const BoundParameters& params, const ModelConfig& config,
                   const ModelInput& input, Label label, Var* loss_out) {
  EmbeddedInputs emb = embed_inputs(tape, params, config, input);
  EncoderOutput enc =
      encode(tape, params, config, emb.text, emb.visual, input.layout(), /*record_trace=*/false);
  Var loss = bce_with_logits(enc.logit, label == Label::kHateful ? 1.0 : 0.0);
  if (loss_out) *loss_out = loss;
  return loss.value().item();
}

}  // namespace

TrainResult train(const ModelConfig& config_in, const WordPieceVocab& vocab,
                  const DatasetSplit& data, const TrainOptions& options,
                  const StepCallback& on_step) {
  if (data.empty()) throw ValidationError("cannot train on an empty dataset");
  const SplitStats stats = split_stats(data);
  if (stats.hateful == 0 || stats.nonhateful == 0) {
    throw ValidationError("training data must contain both classes (hateful=" +
                          std::to_string(stats.hateful) +
                          ", non-hateful=" + std::to_string(stats.nonhateful) + ")");
  }
  if (options.batch_size == 0) throw ValidationError("batch_size must be >= 1");

  TrainResult result;
  ModelCheckpoint& ckpt = result.checkpoint;
  ckpt = make_checkpoint(config_in, vocab, options.seed);
  const ModelConfig& config = ckpt.config;

  std::vector<ModelInput> inputs;
  inputs.reserve(data.size());
  for (const auto& r : data.records) inputs.push_back(prepare_input(config, vocab, r));

  std::vector<Tensor> m, v;
  for (const auto& [name, t] : ckpt.params) {
    m.emplace_back(t.shape(), 0.0);
    v.emplace_back(t.shape(), 0.0);
  }

  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  double beta1_pow = 1.0, beta2_pow = 1.0;
  for (std::size_t step = 0; step < options.steps; ++step) {
    Tape tape;
    BoundParameters params(tape, ckpt.params, true);
    std::vector<Var> losses;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      Var loss;
      record_loss(tape, params, config, inputs[idx], data.records[idx].label, &loss);
      losses.push_back(loss);
    }
    Var total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    Var mean = scale(total, 1.0 / static_cast<double>(losses.size()));
    tape.backward(mean);
    const double batch_loss = mean.value().item();
    result.loss_history.push_back(batch_loss);

    beta1_pow *= options.beta1;
    beta2_pow *= options.beta2;
    const double lr = options.learning_rate;
    std::size_t k = 0;
    for (auto& [name, param] : ckpt.params) {
      const Tensor grad = params[name].grad();
      Tensor& mk = m[k];
      Tensor& vk = v[k];
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        mk[i] = options.beta1 * mk[i] + (1.0 - options.beta1) * g;
        vk[i] = options.beta2 * vk[i] + (1.0 - options.beta2) * g * g;
        const double m_hat = mk[i] / (1.0 - beta1_pow);
        const double v_hat = vk[i] / (1.0 - beta2_pow);
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + options.adam_eps);
      }
      ++k;
    }
    if (on_step) on_step(step, batch_loss);
  }

  ckpt.meta.seed = options.seed;
  ckpt.meta.steps = options.steps;
  ckpt.meta.batch_size = options.batch_size;
  ckpt.meta.learning_rate = options.learning_rate;
  ckpt.meta.final_loss = mean_loss(ckpt, data);
  return result;
}

double mean_loss(const ModelCheckpoint& ckpt, const DatasetSplit& data) {
  if (data.empty()) throw ValidationError("mean_loss of an empty split");
  double total = 0.0;
  for (const auto& r : data.records) {
    Tape tape;
    BoundParameters params(tape, ckpt.params, false);
    total += record_loss(tape, params, ckpt.config, prepare_input(ckpt.config, ckpt.vocab, r),
                         r.label, nullptr);
  }
  return total / static_cast<double>(data.size());
}

double accuracy(const ModelCheckpoint& ckpt, const DatasetSplit& data) {
  if (data.empty()) throw ValidationError("accuracy of an empty split");
  std::size_t correct = 0;
  for (const auto& r : data.records) {
    const auto c = classify(ckpt, prepare_input(ckpt.config, ckpt.vocab, r));
    correct += c.label == r.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace memescope
