#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "seqlrp/saliency.hpp"
#include "seqlrp/vocab.hpp"

namespace seqlrp {

namespace detail {

inline double map_abs_max(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

// Standalone HTML heatmap: one row per generated token, one cell per input
// token, red for positive relevance, blue for negative, cell opacity
// proportional to |R| normalized per map by that map's max |R|.
inline std::string heatmap_html(const SaliencyStack& stack, const Vocab& vocab,
                                const std::string& title = "saliency") {
  std::string out;
  out += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
  out += "<!-- Cell color encodes signed relevance: red positive, blue negative.\n";
  out += "     Opacity is |R| / max|R|, normalized per map (per row). -->\n";
  out += "<title>" + detail::html_escape(title) + "</title>\n";
  out += "<style>\n";
  out += "body { font-family: monospace; }\n";
  out += "table { border-collapse: collapse; }\n";
  out += "td { padding: 2px 4px; border: 1px solid #ddd; white-space: nowrap; }\n";
  out += "td.label { font-weight: bold; background: #f4f4f4; }\n";
  out += "</style>\n</head>\n<body>\n";
  out += "<h3>" + detail::html_escape(title) + "</h3>\n<table>\n";

  out += "<tr><td class=\"label\"></td>";
  for (int id : stack.input_ids) {
    out += "<td class=\"label\">" + detail::html_escape(vocab.token_of(id)) + "</td>";
  }
  out += "</tr>\n";

  for (const auto& map : stack.maps) {
    const double norm = detail::map_abs_max(map.values);
    out += "<tr><td class=\"label\">step " + std::to_string(map.output_step) + ": " +
           detail::html_escape(vocab.token_of(map.emitted_id)) + "</td>";
    for (std::size_t t = 0; t < map.values.size(); ++t) {
      const double r = map.values[t];
      const double opacity = norm > 0.0 ? std::abs(r) / norm : 0.0;
      const char* rgb = r >= 0.0 ? "220,40,40" : "40,60,220";
      out += "<td style=\"background: rgba(" + std::string(rgb) + "," + detail::fmt(opacity) +
             ")\" title=\"" + detail::fmt(r) + "\">" +
             detail::html_escape(vocab.token_of(stack.input_ids[t])) + "</td>";
    }
    out += "</tr>\n";
  }
  out += "</table>\n</body>\n</html>\n";
  return out;
}

// Terminal rendering with a signed 24-bit color scale, same normalization as
// the HTML emitter.
inline std::string heatmap_ansi(const SaliencyStack& stack, const Vocab& vocab) {
  std::string out;
  for (const auto& map : stack.maps) {
    const double norm = detail::map_abs_max(map.values);
    out += "step " + std::to_string(map.output_step) + " [" + vocab.token_of(map.emitted_id) + "]: ";
    for (std::size_t t = 0; t < map.values.size(); ++t) {
      const double r = map.values[t];
      const double intensity = norm > 0.0 ? std::abs(r) / norm : 0.0;
      const int level = static_cast<int>(std::lround(intensity * 255.0));
      const int red = r >= 0.0 ? level : 0;
      const int blue = r >= 0.0 ? 0 : level;
      out += "\x1b[48;2;" + std::to_string(red) + ";0;" + std::to_string(blue) + "m" +
             vocab.token_of(stack.input_ids[t]) + "\x1b[0m ";
    }
    out += "\n";
  }
  return out;
}

}  // namespace seqlrp
