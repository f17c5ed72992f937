// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Gradient-based explanations of a ModelCheckpoint.
//
// All attributions live in the shared embedding space: text rows after the
// token + position + segment sum, visual rows after the region projection.
// Token ids are discrete, so the embedded rows are the differentiable inputs.
// [PAD] text rows and pad regions never contribute.

#ifndef MEMESCOPE_ATTRIBUTION_H_
#define MEMESCOPE_ATTRIBUTION_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memescope/autodiff.h"
#include "memescope/model.h"

namespace memescope {

// Which scalar is differentiated. kHatefulLogit is the pre-sigmoid logit;
// kPredictedLogit flips its sign when the model predicts non-hateful, so the
// attributions explain whichever class was chosen.
enum class Target { kHatefulLogit, kPredictedLogit };
enum class Method { kRawGradient, kIntegratedGradients };

const char* target_name(Target target);
Target parse_target(const std::string& name);
const char* method_name(Method method);

// +1 or -1 multiplier applied to the logit for `target` on this input.
double target_sign(const ModelCheckpoint& checkpoint, const ModelInput& input, Target target);

struct InputGradients {
  double target_value = 0.0;
  std::vector<std::size_t> text_positions;  // non-pad text positions
  std::vector<std::size_t> region_indices;  // non-pad regions
  Tensor text;                   // text_positions.size() x d
  std::optional<Tensor> visual;  // region_indices.size() x d; empty without regions
};

InputGradients input_gradients(const ModelCheckpoint& checkpoint, const ModelInput& input,
                               Target target = Target::kHatefulLogit);

struct ModalityContribution {
  double text = 0.0;
  double visual = 0.0;
};

// Joint L2 normalization of all retained per-position gradient rows, then
// each modality's sum of per-row norms. Zero gradients give (0, 0). A
// modality with no retained rows is passed as nullopt.
ModalityContribution modality_attribution(const std::optional<Tensor>& text_grads,
                                          const std::optional<Tensor>& visual_grads);
ModalityContribution modality_attribution(const ModelCheckpoint& checkpoint,
                                          const ModelInput& input,
                                          Target target = Target::kHatefulLogit);

struct ModalityStats {
  std::string model;
  double text_avg = 0.0;
  double text_std = 0.0;
  double visual_avg = 0.0;
  double visual_std = 0.0;
  std::size_t sample_count = 0;
};

// Mean and population standard deviation of the per-record contributions,
// summed in record order. Throws ValidationError on an empty split.
ModalityStats dataset_modality_stats(const ModelCheckpoint& checkpoint, const DatasetSplit& split,
                                     Target target = Target::kHatefulLogit,
                                     const std::string& model_name = "model");
ModalityStats summarize_contributions(std::span<const ModalityContribution> contributions,
                                      const std::string& model_name = "model");

// Starting point of the integration path. kAbsence replaces every real text
// piece with [PAD] (keeping [CLS]/[SEP]) and zeroes every region feature;
// kExplicit takes the embedded baseline rows verbatim.
struct BaselineSpec {
  enum class Kind { kAbsence, kExplicit };
  Kind kind = Kind::kAbsence;
  Tensor text;    // T x d, kExplicit only
  Tensor visual;  // R x d, kExplicit only
};

struct EmbeddedBaseline {
  Tensor text;
  Tensor visual;
};

EmbeddedBaseline make_baseline(const ModelCheckpoint& checkpoint, const ModelInput& input,
                               const BaselineSpec& spec);

struct AttributionResult {
  std::string record_id;
  Method method = Method::kRawGradient;
  Target target = Target::kHatefulLogit;
  double target_sign = 1.0;
  std::size_t steps = 0;

  std::vector<std::size_t> text_positions;
  std::vector<double> text_scores;  // signed, one per text position
  std::vector<std::size_t> region_indices;
  std::vector<double> region_scores;  // signed, one per real region

  double text_contrib = 0.0;
  double visual_contrib = 0.0;

  // Integrated gradients only.
  double target_at_input = 0.0;
  double target_at_baseline = 0.0;
  std::optional<double> completeness_delta;

  // Per-coordinate attributions over the full T x d and R x d inputs.
  Tensor text_attributions;
  Tensor visual_attributions;
};

// Signed input-times-gradient scores plus the modality contributions.
AttributionResult gradient_attribution(const ModelCheckpoint& checkpoint, const ModelInput& input,
                                       Target target = Target::kHatefulLogit);

// Builds the scalar being attributed from one leaf per input block.
using MultiInputFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct IntegratedGradientsOutput {
  std::vector<Tensor> attributions;  // same shapes as the inputs
  double value_at_input = 0.0;
  double value_at_baseline = 0.0;
  double completeness_delta = 0.0;
};

// (x - x') * mean_k dF/dx at x' + a_k (x - x'), a_k = (k - 1/2) / steps.
// Throws ValidationError if steps == 0 or the input/baseline shapes differ.
IntegratedGradientsOutput integrated_gradients(const MultiInputFunction& f,
                                               std::span<const Tensor> inputs,
                                               std::span<const Tensor> baselines,
                                               std::size_t steps);

AttributionResult integrated_gradients(const ModelCheckpoint& checkpoint, const ModelInput& input,
                                       Target target = Target::kHatefulLogit,
                                       const BaselineSpec& baseline = {},
                                       std::size_t steps = 64);

struct WordScore {
  std::string word;
  std::size_t begin = 0;
  std::size_t end = 0;
  double score = 0.0;
};

// Sums piece scores over each word's span. Positive favours the target.
std::vector<WordScore> token_scores(const AttributionResult& result, const TokenSequence& tokens);

// Indices of the k largest |score|, descending; ties prefer the lower index.
std::vector<std::size_t> rank_regions(std::span<const double> region_scores, std::size_t k = 9);

nlohmann::json attribution_to_json(const AttributionResult& result,
                                   const std::vector<WordScore>& words);
nlohmann::json stats_to_json(const ModalityStats& stats);

}  // namespace memescope

#endif  // MEMESCOPE_ATTRIBUTION_H_
