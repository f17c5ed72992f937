// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/attention.h"

#include <algorithm>

#include "memescope/error.h"

namespace memescope {

using nlohmann::json;

bool SequenceLayout::is_special(std::size_t position) const {
  if (position == cls_position) return true;
  return std::find(sep_positions.begin(), sep_positions.end(), position) != sep_positions.end();
}

std::size_t SequenceLayout::real_region_count() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < num_regions; ++r) n += is_pad_region(r) ? 0 : 1;
  return n;
}

json SequenceLayout::to_json() const {
  return {{"text_len", text_len},
          {"num_regions", num_regions},
          {"cls_position", cls_position},
          {"sep_positions", sep_positions},
          {"key_pad", key_pad}};
}

SequenceLayout SequenceLayout::from_json(const json& j) {
  SequenceLayout l;
  l.text_len = j.at("text_len").get<std::size_t>();
  l.num_regions = j.at("num_regions").get<std::size_t>();
  l.cls_position = j.at("cls_position").get<std::size_t>();
  l.sep_positions = j.at("sep_positions").get<std::vector<std::size_t>>();
  l.key_pad = j.at("key_pad").get<std::vector<bool>>();
  if (l.key_pad.size() != l.seq_len()) {
    throw ValidationError("sequence layout: key_pad length does not match T + R");
  }
  return l;
}

AttentionTrace::AttentionTrace(std::size_t num_layers, std::size_t num_heads,
                               SequenceLayout layout)
    : num_layers_(num_layers),
      num_heads_(num_heads),
      layout_(std::move(layout)),
      data_(num_layers * num_heads * layout_.seq_len() * layout_.seq_len(), 0.0) {}

void AttentionTrace::check(std::size_t layer, std::size_t head) const {
  if (layer >= num_layers_ || head >= num_heads_) {
    throw IndexError("attention head (" + std::to_string(layer) + ", " + std::to_string(head) +
                     ") outside " + std::to_string(num_layers_) + " layers x " +
                     std::to_string(num_heads_) + " heads");
  }
}

double AttentionTrace::at(std::size_t layer, std::size_t head, std::size_t query,
                          std::size_t key) const {
  return row(layer, head, query)[key];
}

std::span<const double> AttentionTrace::row(std::size_t layer, std::size_t head,
                                            std::size_t query) const {
  check(layer, head);
  const std::size_t s = seq_len();
  if (query >= s) throw IndexError("attention query " + std::to_string(query) + " out of range");
  return std::span<const double>(data_).subspan(((layer * num_heads_ + head) * s + query) * s, s);
}

std::span<double> AttentionTrace::matrix(std::size_t layer, std::size_t head) {
  check(layer, head);
  const std::size_t s = seq_len();
  return std::span<double>(data_).subspan((layer * num_heads_ + head) * s * s, s * s);
}

json AttentionTrace::to_json() const {
  return {{"num_layers", num_layers_},
          {"num_heads", num_heads_},
          {"layout", layout_.to_json()},
          {"data", data_}};
}

AttentionTrace AttentionTrace::from_json(const json& j) {
  AttentionTrace t(j.at("num_layers").get<std::size_t>(), j.at("num_heads").get<std::size_t>(),
                   SequenceLayout::from_json(j.at("layout")));
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.data_.size()) {
    throw ValidationError("attention trace: expected " + std::to_string(t.data_.size()) +
                          " values, found " + std::to_string(data.size()));
  }
  t.data_ = std::move(data);
  return t;
}

std::vector<std::size_t> keyword_positions(const TokenSequence& tokens,
                                           const std::string& keyword,
                                           const WordPieceVocab& vocab) {
  if (keyword.empty()) throw ValidationError("keyword must be non-empty");
  std::vector<std::size_t> pattern;
  if (auto id = vocab.find(keyword); id && !WordPieceVocab::is_special(*id)) {
    pattern.push_back(*id);
  } else {
    for (const auto& word : pre_tokenize(keyword)) {
      for (std::size_t id : wordpiece(word, vocab)) {
        if (id == WordPieceVocab::kUnk) return {};
        pattern.push_back(id);
      }
    }
  }
  std::vector<std::size_t> positions;
  if (pattern.empty()) return positions;
  // Real tokens occupy [1, sep_position).
  const std::size_t end = tokens.sep_position;
  for (std::size_t start = 1; start + pattern.size() <= end; ++start) {
    if (std::equal(pattern.begin(), pattern.end(),
                   tokens.ids.begin() + static_cast<std::ptrdiff_t>(start))) {
      for (std::size_t i = 0; i < pattern.size(); ++i) positions.push_back(start + i);
    }
  }
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  return positions;
}

HeadAlignment alignment_map(const AttentionTrace& trace, std::span<const std::size_t> positions,
                            std::size_t layer, std::size_t head) {
  if (positions.empty()) throw ValidationError("alignment_map: no query positions");
  const SequenceLayout& layout = trace.layout();
  HeadAlignment out;
  out.layer = layer;
  out.head = head;
  out.region_mass.assign(layout.num_regions, 0.0);
  for (std::size_t q : positions) {
    const auto row = trace.row(layer, head, q);
    for (std::size_t r = 0; r < layout.num_regions; ++r) {
      out.region_mass[r] += row[layout.region_position(r)];
    }
    for (std::size_t s : layout.sep_positions) out.sep_mass += row[s];
  }
  const double inv = 1.0 / static_cast<double>(positions.size());
  for (double& m : out.region_mass) m *= inv;
  out.sep_mass *= inv;
  return out;
}

AlignmentResult align_keyword(const AttentionTrace& trace, const std::string& keyword,
                              std::span<const std::size_t> positions) {
  AlignmentResult result;
  result.keyword = keyword;
  result.positions.assign(positions.begin(), positions.end());
  for (std::size_t l = 0; l < trace.num_layers(); ++l) {
    for (std::size_t h = 0; h < trace.num_heads(); ++h) {
      result.heads.push_back(alignment_map(trace, positions, l, h));
    }
  }
  return result;
}

std::vector<HeadScore> top_alignment_heads(const AttentionTrace& trace,
                                           std::span<const std::size_t> positions,
                                           std::size_t k) {
  if (k == 0) throw ValidationError("top_alignment_heads: k must be >= 1");
  std::vector<HeadScore> scores;
  for (std::size_t l = 0; l < trace.num_layers(); ++l) {
    for (std::size_t h = 0; h < trace.num_heads(); ++h) {
      const HeadAlignment a = alignment_map(trace, positions, l, h);
      double peak = 0.0;
      for (double m : a.region_mass) peak = std::max(peak, m);
      scores.push_back({l, h, peak});
    }
  }
  // Input is already in (layer, head) order, so a stable sort keeps ties there.
  std::stable_sort(scores.begin(), scores.end(), [](const HeadScore& a, const HeadScore& b) {
    return a.peak_region_mass > b.peak_region_mass;
  });
  if (scores.size() > k) scores.resize(k);
  return scores;
}

std::vector<RegionMass> top_regions_for_head(const AttentionTrace& trace,
                                             std::span<const std::size_t> positions,
                                             std::size_t layer, std::size_t head,
                                             std::size_t k) {
  if (k == 0) throw ValidationError("top_regions_for_head: k must be >= 1");
  const HeadAlignment a = alignment_map(trace, positions, layer, head);
  std::vector<RegionMass> regions;
  for (std::size_t r = 0; r < a.region_mass.size(); ++r) {
    if (!trace.layout().is_pad_region(r)) regions.push_back({r, a.region_mass[r]});
  }
  std::stable_sort(regions.begin(), regions.end(),
                   [](const RegionMass& x, const RegionMass& y) { return x.mass > y.mass; });
  if (regions.size() > k) regions.resize(k);
  return regions;
}

double noop_mass(const AttentionTrace& trace, std::span<const std::size_t> positions,
                 std::size_t layer, std::size_t head, bool sep_only) {
  if (positions.empty()) throw ValidationError("noop_mass: no query positions");
  const SequenceLayout& layout = trace.layout();
  double total = 0.0;
  for (std::size_t q : positions) {
    const auto row = trace.row(layer, head, q);
    for (std::size_t s : layout.sep_positions) total += row[s];
    if (!sep_only) total += row[layout.cls_position];
  }
  return total / static_cast<double>(positions.size());
}

json alignment_to_json(const AlignmentResult& result) {
  json heads = json::object();
  for (const auto& h : result.heads) {
    const std::string key = "L" + std::to_string(h.layer) + "H" + std::to_string(h.head);
    heads[key] = {{"layer", h.layer},
                  {"head", h.head},
                  {"region_mass", h.region_mass},
                  {"sep_mass", h.sep_mass}};
  }
  return {{"keyword", result.keyword}, {"positions", result.positions}, {"heads", heads}};
}

}  // namespace memescope
