// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Self-contained HTML/SVG rendering of explanations and alignments.
//
// Colours are a pure function of the stored scores, so a document renders
// byte-identically every time. Nothing is fetched: styles and SVG are inline
// and the only external reference is an image path the caller supplies.

#ifndef MEMESCOPE_REPORT_H_
#define MEMESCOPE_REPORT_H_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "memescope/attention.h"
#include "memescope/attribution.h"
#include "memescope/dataset.h"

namespace memescope {

inline constexpr double kOpacityFloor = 0.15;

struct Highlight {
  enum class Polarity { kNeutral, kPositive, kNegative };
  Polarity polarity = Polarity::kNeutral;
  double opacity = 0.0;  // 0 for neutral, otherwise in [kOpacityFloor, 1]
};

// |score| / max_abs with the opacity floor; positive is green, negative red.
// A zero score, or max_abs == 0, is neutral.
Highlight highlight_for(double score, double max_abs);

// CSS background colour for a highlight, "transparent" when neutral.
std::string highlight_css(const Highlight& h);

struct RegionBox {
  std::size_t region = 0;
  BoundingBox bbox{};
  double mass = 0.0;
};

struct HeadPanel {
  std::size_t layer = 0;
  std::size_t head = 0;
  double peak_region_mass = 0.0;
  double noop_mass = 0.0;
  std::vector<RegionBox> regions;  // already ranked
};

struct ReportDocument {
  std::string record_id;
  std::string text;
  Label gold = Label::kNonHateful;
  Label predicted = Label::kNonHateful;
  double p_hateful = 0.0;
  std::optional<std::string> image_path;

  // Explanation section; absent for alignment-only reports.
  std::optional<std::string> method;
  std::size_t steps = 0;
  std::vector<WordScore> words;
  double text_contrib = 0.0;
  double visual_contrib = 0.0;
  std::optional<double> completeness_delta;

  // Alignment section; empty for explanation-only reports.
  std::optional<std::string> keyword;
  std::vector<HeadPanel> heads;
};

// One 1000x1000 SVG canvas (boxes are normalized, so scaled by 1000). Box
// fill opacity is mass / max drawn mass. With an image path the canvas
// draws that file underneath, otherwise it is blank.
std::string render_head_svg(const HeadPanel& panel, const std::optional<std::string>& image_path);

std::string render_html(const ReportDocument& doc);

std::string html_escape(const std::string& s);

}  // namespace memescope

#endif  // MEMESCOPE_REPORT_H_
