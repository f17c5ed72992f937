// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Attention traces and visual-text grounding queries.
//
// A trace holds every post-softmax attention matrix of one forward pass,
// indexed [layer][head][query][key], over the concatenated sequence
// [text (T positions) | visual regions (R positions)]. The queries below ask
// how much attention the pieces of a keyword send to each region, to the
// separator (a "no-op" sink), and which heads show the crispest alignment.

#ifndef MEMESCOPE_ATTENTION_H_
#define MEMESCOPE_ATTENTION_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memescope/tokenizer.h"

namespace memescope {

struct SequenceLayout {
  std::size_t text_len = 0;     // T
  std::size_t num_regions = 0;  // R
  std::size_t cls_position = 0;
  std::vector<std::size_t> sep_positions;
  // True for [PAD] text positions and pad regions; length T + R.
  std::vector<bool> key_pad;

  std::size_t seq_len() const { return text_len + num_regions; }
  std::size_t region_position(std::size_t region) const { return text_len + region; }
  bool is_pad_region(std::size_t region) const { return key_pad[text_len + region]; }
  bool is_special(std::size_t position) const;
  std::size_t real_region_count() const;

  nlohmann::json to_json() const;
  static SequenceLayout from_json(const nlohmann::json& j);
  friend bool operator==(const SequenceLayout&, const SequenceLayout&) = default;
};

class AttentionTrace {
 public:
  AttentionTrace() = default;
  AttentionTrace(std::size_t num_layers, std::size_t num_heads, SequenceLayout layout);

  std::size_t num_layers() const { return num_layers_; }
  std::size_t num_heads() const { return num_heads_; }
  std::size_t seq_len() const { return layout_.seq_len(); }
  const SequenceLayout& layout() const { return layout_; }

  double at(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const;
  std::span<const double> row(std::size_t layer, std::size_t head, std::size_t query) const;
  // Mutable S x S block for (layer, head); used by the encoder to fill it.
  std::span<double> matrix(std::size_t layer, std::size_t head);

  const std::vector<double>& data() const { return data_; }

  nlohmann::json to_json() const;
  static AttentionTrace from_json(const nlohmann::json& j);
  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;

 private:
  void check(std::size_t layer, std::size_t head) const;

  std::size_t num_layers_ = 0;
  std::size_t num_heads_ = 0;
  SequenceLayout layout_;
  std::vector<double> data_;
};

struct HeadAlignment {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<double> region_mass;  // length R; pad regions are 0
  double sep_mass = 0.0;
};

struct AlignmentResult {
  std::string keyword;
  std::vector<std::size_t> positions;
  std::vector<HeadAlignment> heads;  // every (layer, head), layer-major
};

struct HeadScore {
  std::size_t layer = 0;
  std::size_t head = 0;
  double peak_region_mass = 0.0;
};

struct RegionMass {
  std::size_t region = 0;
  double mass = 0.0;
};

// Every position where the keyword's piece sequence occurs among the real
// text tokens. A keyword that is itself a vocabulary entry (e.g. "##wash")
// is matched as that single piece. Missing keyword -> empty.
std::vector<std::size_t> keyword_positions(const TokenSequence& tokens,
                                           const std::string& keyword,
                                           const WordPieceVocab& vocab);

// Attention mass from the query positions to each region and to [SEP],
// averaged over queries. Throws ValidationError on empty positions.
HeadAlignment alignment_map(const AttentionTrace& trace,
                            std::span<const std::size_t> positions, std::size_t layer,
                            std::size_t head);

AlignmentResult align_keyword(const AttentionTrace& trace, const std::string& keyword,
                              std::span<const std::size_t> positions);

// Heads ranked by their peak single-region mass, descending; ties prefer the
// lower layer, then the lower head.
std::vector<HeadScore> top_alignment_heads(const AttentionTrace& trace,
                                           std::span<const std::size_t> positions,
                                           std::size_t k = 4);

// Real (non-pad) regions by mass, descending; ties prefer the lower index.
std::vector<RegionMass> top_regions_for_head(const AttentionTrace& trace,
                                             std::span<const std::size_t> positions,
                                             std::size_t layer, std::size_t head,
                                             std::size_t k = 9);

// Mean mass from the queries onto [SEP] and, unless sep_only, [CLS].
double noop_mass(const AttentionTrace& trace, std::span<const std::size_t> positions,
                 std::size_t layer, std::size_t head, bool sep_only = false);

nlohmann::json alignment_to_json(const AlignmentResult& result);

}  // namespace memescope

#endif  // MEMESCOPE_ATTENTION_H_
