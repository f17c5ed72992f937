// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/attribution.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memescope/error.h"

namespace memescope {

using nlohmann::json;

const char* target_name(Target target) {
  return target == Target::kHatefulLogit ? "hateful-logit" : "predicted-logit";
}

Target parse_target(const std::string& name) {
  if (name == "hateful-logit" || name == "hateful") return Target::kHatefulLogit;
  if (name == "predicted-logit" || name == "predicted") return Target::kPredictedLogit;
  throw ValidationError("unknown attribution target '" + name +
                        "' (expected hateful-logit or predicted-logit)");
}

const char* method_name(Method method) {
  return method == Method::kRawGradient ? "raw-gradient" : "integrated-gradients";
}

double target_sign(const ModelCheckpoint& ckpt, const ModelInput& input, Target target) {
  if (target == Target::kHatefulLogit) return 1.0;
  return classify(ckpt, input).label == Label::kHateful ? 1.0 : -1.0;
}

namespace {

struct LeafGradients {
  double value = 0.0;
  Tensor text;
  Tensor visual;
};

// sign * logit and its gradient w.r.t. the embedded rows.
LeafGradients gradients_at(const ModelCheckpoint& ckpt, const SequenceLayout& layout,
                           const Tensor& text, const Tensor& visual, double sign) {
  Tape tape;
  BoundParameters params(tape, ckpt.params, false);
  Var t = tape.leaf(text, true);
  Var v = tape.leaf(visual, true);
  EncoderOutput enc = encode(tape, params, ckpt.config, t, v, layout, false);
  Var out = scale(enc.logit, sign);
  tape.backward(out);
  return {out.value().item(), t.grad(), v.grad()};
}

std::vector<std::size_t> real_text_positions(const ModelInput& input) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < input.tokens.length(); ++p) {
    if (!input.tokens.pad_mask[p]) out.push_back(p);
  }
  return out;
}

std::vector<std::size_t> real_regions(const ModelInput& input) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < input.region_pad.size(); ++r) {
    if (!input.region_pad[r]) out.push_back(r);
  }
  return out;
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
  const std::size_t d = m.cols();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = m[rows[i] * d + j];
  return out;
}

std::optional<Tensor> gather_rows_or_empty(const Tensor& m, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return std::nullopt;
  return gather_rows(m, rows);
}

std::vector<double> row_sums(const Tensor& m, const std::vector<std::size_t>& rows) {
  const std::size_t d = m.cols();
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += m[r * d + j];
    out.push_back(s);
  }
  return out;
}

double squared_norm(const std::optional<Tensor>& m) {
  if (!m) return 0.0;
  double s = 0.0;
  for (double v : m->data()) s += v * v;
  return s;
}

double sum_of_row_norms(const std::optional<Tensor>& m, double scale) {
  if (!m) return 0.0;
  const std::size_t rows = m->rows(), d = m->cols();
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = (*m)[i * d + j] * scale;
      s += v * v;
    }
    total += std::sqrt(s);
  }
  return total;
}

}  // namespace

InputGradients input_gradients(const ModelCheckpoint& ckpt, const ModelInput& input,
                               Target target) {
  const double sign = target_sign(ckpt, input, target);
  const ForwardResult fwd = forward(ckpt, input);
  const LeafGradients g =
      gradients_at(ckpt, input.layout(), fwd.text_embedding, fwd.visual_embedding, sign);
  InputGradients out;
  out.target_value = g.value;
  out.text_positions = real_text_positions(input);
  out.region_indices = real_regions(input);
  out.text = gather_rows(g.text, out.text_positions);
  out.visual = gather_rows_or_empty(g.visual, out.region_indices);
  return out;
}

ModalityContribution modality_attribution(const std::optional<Tensor>& text_grads,
                                          const std::optional<Tensor>& visual_grads) {
  const double norm = std::sqrt(squared_norm(text_grads) + squared_norm(visual_grads));
  if (norm == 0.0) return {0.0, 0.0};
  const double inv = 1.0 / norm;
  return {sum_of_row_norms(text_grads, inv), sum_of_row_norms(visual_grads, inv)};
}

ModalityContribution modality_attribution(const ModelCheckpoint& ckpt, const ModelInput& input,
                                          Target target) {
  const InputGradients g = input_gradients(ckpt, input, target);
  return modality_attribution(g.text, g.visual);
}

ModalityStats summarize_contributions(std::span<const ModalityContribution> contributions,
                                      const std::string& model_name) {
  if (contributions.empty()) throw ValidationError("modality statistics of an empty split");
  const double n = static_cast<double>(contributions.size());
  ModalityStats stats;
  stats.model = model_name;
  stats.sample_count = contributions.size();
  for (const auto& c : contributions) {
    stats.text_avg += c.text;
    stats.visual_avg += c.visual;
  }
  stats.text_avg /= n;
  stats.visual_avg /= n;
  for (const auto& c : contributions) {
    stats.text_std += (c.text - stats.text_avg) * (c.text - stats.text_avg);
    stats.visual_std += (c.visual - stats.visual_avg) * (c.visual - stats.visual_avg);
  }
  stats.text_std = std::sqrt(stats.text_std / n);
  stats.visual_std = std::sqrt(stats.visual_std / n);
  return stats;
}

ModalityStats dataset_modality_stats(const ModelCheckpoint& ckpt, const DatasetSplit& split,
                                     Target target, const std::string& model_name) {
  if (split.empty()) throw ValidationError("modality statistics of an empty split");
  std::vector<ModalityContribution> contributions;
  contributions.reserve(split.size());
  for (const auto& r : split.records) {
    contributions.push_back(
        modality_attribution(ckpt, prepare_input(ckpt.config, ckpt.vocab, r), target));
  }
  return summarize_contributions(contributions, model_name);
}

EmbeddedBaseline make_baseline(const ModelCheckpoint& ckpt, const ModelInput& input,
                               const BaselineSpec& spec) {
  const ModelConfig& c = ckpt.config;
  if (spec.kind == BaselineSpec::Kind::kExplicit) {
    if (spec.text.shape() != std::vector<std::size_t>{c.max_text_len, c.hidden_dim} ||
        spec.visual.shape() != std::vector<std::size_t>{c.num_regions, c.hidden_dim}) {
      throw ValidationError("explicit baseline shapes " + spec.text.shape_string() + " / " +
                            spec.visual.shape_string() + " do not match the model");
    }
    return {spec.text, spec.visual};
  }
  ModelInput absent = input;
  for (std::size_t p = 0; p < absent.tokens.length(); ++p) {
    if (!WordPieceVocab::is_special(absent.tokens.ids[p]) || absent.tokens.ids[p] == WordPieceVocab::kUnk) {
      absent.tokens.ids[p] = WordPieceVocab::kPad;
    }
  }
  absent.features.fill(0.0);
  Tape tape;
  BoundParameters params(tape, ckpt.params, false);
  EmbeddedInputs emb = embed_inputs(tape, params, c, absent);
  return {emb.text.value(), emb.visual.value()};
}

AttributionResult gradient_attribution(const ModelCheckpoint& ckpt, const ModelInput& input,
                                       Target target) {
  const double sign = target_sign(ckpt, input, target);
  const ForwardResult fwd = forward(ckpt, input);
  const LeafGradients g =
      gradients_at(ckpt, input.layout(), fwd.text_embedding, fwd.visual_embedding, sign);

  AttributionResult r;
  r.record_id = input.record_id;
  r.method = Method::kRawGradient;
  r.target = target;
  r.target_sign = sign;
  r.steps = 0;
  r.target_at_input = g.value;
  r.text_positions = real_text_positions(input);
  r.region_indices = real_regions(input);
  r.text_attributions = g.text;
  for (std::size_t i = 0; i < r.text_attributions.size(); ++i) {
    r.text_attributions[i] *= fwd.text_embedding[i];
  }
  r.visual_attributions = g.visual;
  for (std::size_t i = 0; i < r.visual_attributions.size(); ++i) {
    r.visual_attributions[i] *= fwd.visual_embedding[i];
  }
  r.text_scores = row_sums(r.text_attributions, r.text_positions);
  r.region_scores = row_sums(r.visual_attributions, r.region_indices);
  const ModalityContribution mc = modality_attribution(
      gather_rows(g.text, r.text_positions), gather_rows_or_empty(g.visual, r.region_indices));
  r.text_contrib = mc.text;
  r.visual_contrib = mc.visual;
  return r;
}

IntegratedGradientsOutput integrated_gradients(const MultiInputFunction& f,
                                               std::span<const Tensor> inputs,
                                               std::span<const Tensor> baselines,
                                               std::size_t steps) {
  if (steps == 0) throw ValidationError("integrated gradients needs steps >= 1");
  if (inputs.size() != baselines.size()) {
    throw ValidationError("integrated gradients: one baseline per input is required");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].same_shape(baselines[i])) {
      throw ValidationError("integrated gradients: input " + inputs[i].shape_string() +
                            " and baseline " + baselines[i].shape_string() + " differ in shape");
    }
  }
  auto evaluate = [&](std::span<const Tensor> point) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : point) leaves.push_back(tape.constant(t));
    return f(tape, leaves).value().item();
  };

  IntegratedGradientsOutput out;
  std::vector<Tensor> grad_sum;
  for (const Tensor& t : inputs) grad_sum.emplace_back(t.shape(), 0.0);

  std::vector<Tensor> point(inputs.begin(), inputs.end());
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t j = 0; j < inputs[i].size(); ++j) {
        point[i][j] = baselines[i][j] + alpha * (inputs[i][j] - baselines[i][j]);
      }
    }
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : point) leaves.push_back(tape.leaf(t, true));
    tape.backward(f(tape, leaves));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor g = leaves[i].grad();
      for (std::size_t j = 0; j < g.size(); ++j) grad_sum[i][j] += g[j];
    }
  }

  double total = 0.0;
  const double inv_steps = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor attr(inputs[i].shape(), 0.0);
    for (std::size_t j = 0; j < attr.size(); ++j) {
      attr[j] = (inputs[i][j] - baselines[i][j]) * grad_sum[i][j] * inv_steps;
      total += attr[j];
    }
    out.attributions.push_back(std::move(attr));
  }
  out.value_at_input = evaluate(inputs);
  out.value_at_baseline = evaluate(baselines);
  out.completeness_delta = std::abs(total - (out.value_at_input - out.value_at_baseline));
  return out;
}

AttributionResult integrated_gradients(const ModelCheckpoint& ckpt, const ModelInput& input,
                                       Target target, const BaselineSpec& baseline,
                                       std::size_t steps) {
  const double sign = target_sign(ckpt, input, target);
  const SequenceLayout layout = input.layout();
  const ForwardResult fwd = forward(ckpt, input);
  const EmbeddedBaseline base = make_baseline(ckpt, input, baseline);

  // Parameters are bound once per tape; the function closes over the checkpoint.
  MultiInputFunction model_fn = [&](Tape& tape, std::span<const Var> leaves) {
    BoundParameters params(tape, ckpt.params, false);
    EncoderOutput enc = encode(tape, params, ckpt.config, leaves[0], leaves[1], layout, false);
    return scale(enc.logit, sign);
  };
  const Tensor xs[] = {fwd.text_embedding, fwd.visual_embedding};
  const Tensor bs[] = {base.text, base.visual};
  IntegratedGradientsOutput ig = integrated_gradients(model_fn, xs, bs, steps);

  AttributionResult r;
  r.record_id = input.record_id;
  r.method = Method::kIntegratedGradients;
  r.target = target;
  r.target_sign = sign;
  r.steps = steps;
  r.text_positions = real_text_positions(input);
  r.region_indices = real_regions(input);
  r.text_attributions = std::move(ig.attributions[0]);
  r.visual_attributions = std::move(ig.attributions[1]);
  r.text_scores = row_sums(r.text_attributions, r.text_positions);
  r.region_scores = row_sums(r.visual_attributions, r.region_indices);
  r.target_at_input = ig.value_at_input;
  r.target_at_baseline = ig.value_at_baseline;
  r.completeness_delta = ig.completeness_delta;

  const LeafGradients g =
      gradients_at(ckpt, layout, fwd.text_embedding, fwd.visual_embedding, sign);
  const ModalityContribution mc = modality_attribution(
      gather_rows(g.text, r.text_positions), gather_rows_or_empty(g.visual, r.region_indices));
  r.text_contrib = mc.text;
  r.visual_contrib = mc.visual;
  return r;
}

std::vector<WordScore> token_scores(const AttributionResult& result, const TokenSequence& tokens) {
  std::vector<double> by_position(tokens.length(), 0.0);
  for (std::size_t i = 0; i < result.text_positions.size(); ++i) {
    by_position[result.text_positions[i]] = result.text_scores[i];
  }
  std::vector<WordScore> out;
  out.reserve(tokens.words.size());
  for (const auto& w : tokens.words) {
    WordScore s{w.word, w.begin, w.end, 0.0};
    for (std::size_t p = w.begin; p < w.end; ++p) s.score += by_position[p];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> rank_regions(std::span<const double> region_scores, std::size_t k) {
  if (k == 0) throw ValidationError("rank_regions: k must be >= 1");
  std::vector<std::size_t> idx(region_scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(region_scores[a]) > std::abs(region_scores[b]);
  });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

json attribution_to_json(const AttributionResult& r, const std::vector<WordScore>& words) {
  json text = json::array();
  for (const auto& w : words) text.push_back({{"word", w.word}, {"score", w.score}});
  json j = {{"record_id", r.record_id},
            {"method", method_name(r.method)},
            {"target", target_name(r.target)},
            {"target_sign", r.target_sign},
            {"steps", r.steps},
            {"text_scores", text},
            {"piece_scores", r.text_scores},
            {"region_scores", r.region_scores},
            {"text_contrib", r.text_contrib},
            {"visual_contrib", r.visual_contrib}};
  if (r.completeness_delta) {
    j["completeness_delta"] = *r.completeness_delta;
    j["target_at_input"] = r.target_at_input;
    j["target_at_baseline"] = r.target_at_baseline;
  } else {
    j["completeness_delta"] = nullptr;
  }
  return j;
}

json stats_to_json(const ModalityStats& s) {
  return {{"model", s.model},
          {"text_avg", s.text_avg},
          {"text_std", s.text_std},
          {"visual_avg", s.visual_avg},
          {"visual_std", s.visual_std},
          {"sample_count", s.sample_count}};
}

}  // namespace memescope
