// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace memescope {
namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

constexpr const char* kStyle = R"(body{font-family:sans-serif;margin:24px;color:#222}
h1{font-size:20px}h2{font-size:16px;margin-top:24px}
.text{font-size:20px;line-height:2}
.word{padding:2px 4px;border-radius:3px}
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}
.panels{display:flex;flex-wrap:wrap;gap:16px}
.panel{width:320px}
.panel svg{width:320px;height:320px;border:1px solid #999}
)";

}  // namespace

Highlight highlight_for(double score, double max_abs) {
  Highlight h;
  if (!(max_abs > 0.0) || score == 0.0 || !std::isfinite(score)) return h;
  h.polarity = score > 0.0 ? Highlight::Polarity::kPositive : Highlight::Polarity::kNegative;
  h.opacity = std::clamp(std::abs(score) / max_abs, kOpacityFloor, 1.0);
  return h;
}

std::string highlight_css(const Highlight& h) {
  switch (h.polarity) {
    case Highlight::Polarity::kPositive:
      return "rgba(0,160,0," + fixed(h.opacity, 3) + ")";
    case Highlight::Polarity::kNegative:
      return "rgba(200,0,0," + fixed(h.opacity, 3) + ")";
    case Highlight::Polarity::kNeutral:
      break;
  }
  return "transparent";
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_head_svg(const HeadPanel& panel, const std::optional<std::string>& image_path) {
  const std::string label = "L" + std::to_string(panel.layer) + "H" + std::to_string(panel.head);
  std::ostringstream out;
  out << "<svg viewBox=\"0 0 1000 1000\" role=\"img\" "
      << "aria-label=\"" << label << "\">\n";
  if (image_path) {
    out << "<image href=\"" << html_escape(*image_path)
        << "\" x=\"0\" y=\"0\" width=\"1000\" height=\"1000\" preserveAspectRatio=\"none\"/>\n";
  } else {
    out << "<rect x=\"0\" y=\"0\" width=\"1000\" height=\"1000\" fill=\"#ffffff\"/>\n";
  }
  double max_mass = 0.0;
  for (const auto& r : panel.regions) max_mass = std::max(max_mass, r.mass);
  for (const auto& r : panel.regions) {
    const double x = r.bbox[0] * 1000.0, y = r.bbox[1] * 1000.0;
    const double w = (r.bbox[2] - r.bbox[0]) * 1000.0, h = (r.bbox[3] - r.bbox[1]) * 1000.0;
    const double opacity = max_mass > 0.0 ? r.mass / max_mass : 0.0;
    out << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y, 1) << "\" width=\"" << fixed(w, 1)
        << "\" height=\"" << fixed(h, 1) << "\" fill=\"#1f6feb\" fill-opacity=\""
        << fixed(opacity * 0.6, 3) << "\" stroke=\"#1f6feb\" stroke-opacity=\"" << fixed(opacity, 3)
        << "\" stroke-width=\"4\"><title>region " << r.region << " mass " << fixed(r.mass, 4)
        << "</title></rect>\n";
    out << "<text x=\"" << fixed(x + 6, 1) << "\" y=\"" << fixed(y + 30, 1)
        << "\" font-size=\"28\" fill=\"#0b3d91\">" << r.region << "</text>\n";
  }
  out << "<text x=\"12\" y=\"980\" font-size=\"40\" fill=\"#000\">" << label << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string render_html(const ReportDocument& doc) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
      << "<title>memescope " << html_escape(doc.record_id) << "</title>\n<style>" << kStyle
      << "</style>\n</head>\n<body>\n";
  out << "<h1>Record " << html_escape(doc.record_id) << "</h1>\n";
  out << "<table>\n<tr><th>gold</th><td>" << label_name(doc.gold) << "</td></tr>\n"
      << "<tr><th>predicted</th><td>" << label_name(doc.predicted) << "</td></tr>\n"
      << "<tr><th>p(hateful)</th><td>" << fixed(doc.p_hateful, 4) << "</td></tr>\n";
  if (doc.image_path) {
    out << "<tr><th>image</th><td>" << html_escape(*doc.image_path) << "</td></tr>\n";
  }
  out << "</table>\n";

  if (doc.method) {
    double max_abs = 0.0;
    for (const auto& w : doc.words) max_abs = std::max(max_abs, std::abs(w.score));
    out << "<h2>Word attributions (" << html_escape(*doc.method);
    if (doc.steps > 0) out << ", " << doc.steps << " steps";
    out << ")</h2>\n<p class=\"text\">";
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
      const WordScore& w = doc.words[i];
      if (i > 0) out << ' ';
      out << "<span class=\"word\" style=\"background:" << highlight_css(highlight_for(w.score, max_abs))
          << "\" title=\"" << fixed(w.score, 6) << "\">" << html_escape(w.word) << "</span>";
    }
    out << "</p>\n<p>Green pushes toward hateful, red toward non-hateful.</p>\n";
    out << "<table>\n<tr><th>text contribution</th><td>" << fixed(doc.text_contrib, 4)
        << "</td></tr>\n<tr><th>visual contribution</th><td>" << fixed(doc.visual_contrib, 4)
        << "</td></tr>\n";
    if (doc.completeness_delta) {
      out << "<tr><th>completeness delta</th><td>" << fixed(*doc.completeness_delta, 9)
          << "</td></tr>\n";
    }
    out << "</table>\n";
  }

  if (!doc.heads.empty()) {
    out << "<h2>Attention to regions";
    if (doc.keyword) out << " from &quot;" << html_escape(*doc.keyword) << "&quot;";
    out << "</h2>\n<div class=\"panels\">\n";
    for (const auto& panel : doc.heads) {
      out << "<div class=\"panel\">\n" << render_head_svg(panel, doc.image_path)
          << "<p>L" << panel.layer << "H" << panel.head << " peak "
          << fixed(panel.peak_region_mass, 4) << ", no-op " << fixed(panel.noop_mass, 4)
          << "</p>\n</div>\n";
    }
    out << "</div>\n";
  }
  out << "</body>\n</html>\n";
  return out.str();
}

}  // namespace memescope
