// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic memes with a planted, known label rule.
//
// Every record carries a handful of words drawn from a distractor pool and a
// set of regions whose features are noisy copies of mutually orthogonal unit
// prototypes. Prototype 0 is the planted object; keyword is the planted word.
// The label rule decides which of the two signals make a record hateful, and
// the ground-truth sidecar records where each planted signal was placed.

#ifndef MEMESCOPE_SYNTH_H_
#define MEMESCOPE_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memescope/dataset.h"
#include "memescope/tokenizer.h"

namespace memescope {

enum class LabelRule { kTextOnly, kVisualOnly, kConjunction };

const char* rule_name(LabelRule rule);
LabelRule parse_rule(const std::string& name);

struct SyntheticSpec {
  std::uint64_t seed = 7;
  LabelRule rule = LabelRule::kConjunction;
  // keywords[0] is planted; the rest appear at random as uninformative decoys.
  std::vector<std::string> keywords = {"dishwasher", "goat"};
  // Word -> WordPiece split added to the vocabulary. Keywords without an
  // entry are added whole.
  std::map<std::string, std::vector<std::string>> keyword_pieces = {
      {"dishwasher", {"dish", "##wash", "##er"}}};
  std::vector<std::string> distractors;  // empty -> built-in pool
  std::size_t feature_dim = 16;
  std::size_t num_prototypes = 6;
  double noise = 0.1;  // expected L2 norm of the per-region noise vector
  std::size_t regions_per_record = 12;
  std::size_t min_words = 3;
  std::size_t max_words = 7;
  double decoy_rate = 0.3;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;

  // Throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Ground-truth sidecar entry: which planted signals a record carries.
struct TruthRecord {
  std::string id;
  std::optional<std::string> keyword;
  std::optional<std::size_t> region_idx;
};

struct SyntheticDataset {
  DatasetSplit train;
  DatasetSplit test;
  std::vector<TruthRecord> truth;  // train records first, then test
  WordPieceVocab vocab;
  std::vector<std::vector<double>> prototypes;
};

std::vector<std::string> default_distractors();

SyntheticDataset synth_generate(const SyntheticSpec& spec);

// Label implied by the rule given which signals are present.
Label rule_label(LabelRule rule, bool has_keyword, bool has_prototype);
// Whether the record text contains `keyword` as a pre-tokenized word.
bool text_has_word(const std::string& text, const std::string& keyword);

nlohmann::json truth_to_json(const TruthRecord& t);
TruthRecord truth_from_json(const nlohmann::json& j);
void save_truth(const std::vector<TruthRecord>& truth, const std::filesystem::path& path);
std::vector<TruthRecord> load_truth(const std::filesystem::path& path);

}  // namespace memescope

#endif  // MEMESCOPE_SYNTH_H_
