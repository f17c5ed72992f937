// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MEMESCOPE_TRAIN_H_
#define MEMESCOPE_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "memescope/dataset.h"
#include "memescope/model.h"

namespace memescope {

struct TrainOptions {
  double learning_rate = 1e-3;
  std::size_t steps = 600;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  nlohmann::json to_json() const;
  static TrainOptions from_json(const nlohmann::json& j);
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<double> loss_history;  // mean batch loss per step
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Adam on mean binary cross-entropy with logits. Batches walk a per-epoch
// shuffle drawn from the seed, so a fixed seed gives bit-identical results.
// config.vocab_size is taken from the vocabulary. Throws ValidationError on an
// empty or single-class dataset.
TrainResult train(const ModelConfig& config, const WordPieceVocab& vocab,
                  const DatasetSplit& data, const TrainOptions& options,
                  const StepCallback& on_step = {});

// Mean BCE of the checkpoint over a split.
double mean_loss(const ModelCheckpoint& checkpoint, const DatasetSplit& data);

// Fraction of records whose classify() label matches the gold label.
double accuracy(const ModelCheckpoint& checkpoint, const DatasetSplit& data);

}  // namespace memescope

#endif  // MEMESCOPE_TRAIN_H_
