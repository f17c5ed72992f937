// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end finite-difference check of the classifier logit.

#ifndef MEMESCOPE_GRADCHECK_H_
#define MEMESCOPE_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memescope/model.h"

namespace memescope {

struct ModelGradCheckOptions {
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  double step = 1e-5;
  // Scales the backward of every node with this op name (negative control).
  std::optional<std::string> fault_op;
  double fault_factor = 1.0;
};

struct CoordinateCheck {
  std::string path;  // e.g. "layer0.attn.q.weight[3,5]" or "input.features[2,7]"
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct ModelGradCheckReport {
  double max_relative_error = 0.0;
  CoordinateCheck worst;
  std::vector<CoordinateCheck> checks;  // in sampled order
};

// Samples coordinates without replacement from every parameter plus the
// region feature matrix and compares d(logit) against central differences.
ModelGradCheckReport model_grad_check(const ModelCheckpoint& checkpoint, const ModelInput& input,
                                      const ModelGradCheckOptions& options = {});

// 2 layers, 4 heads, d=64, T=32, R=16 over the built-in synthetic vocabulary.
ModelConfig gradcheck_default_config(std::size_t vocab_size);

// A deterministic random record shaped for the config: random real pieces,
// some real regions, N(0, 1) features.
MemeRecord random_record(const ModelConfig& config, const WordPieceVocab& vocab,
                         std::uint64_t seed);

nlohmann::json gradcheck_to_json(const ModelGradCheckReport& report, double tolerance);

}  // namespace memescope

#endif  // MEMESCOPE_GRADCHECK_H_
