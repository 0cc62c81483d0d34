#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ftaed/errors.hpp"
#include "ftaed/sensor_data.hpp"

namespace ftaed {

// Time-space diagram: time left to right, milemarkers top to bottom in node
// order (highest milemarker first, the direction of travel). One rect per
// (time, milemarker) cell of the chosen lane; detection flags drawn on top.
struct HeatmapOptions {
  int t_begin = 0;
  int t_end = -1;       // -1 = end of grid
  double v_max = 80.0;  // speed mapped to full green
  int cell_w = 2;
  int cell_h = 8;
};

namespace detail {

inline std::string speed_color(double v, double v_max) {
  double u = std::clamp(v / v_max, 0.0, 1.0);
  int r, g;
  if (u < 0.5) {
    r = 255;
    g = static_cast<int>(std::lround(255.0 * 2.0 * u));
  } else {
    r = static_cast<int>(std::lround(255.0 * 2.0 * (1.0 - u)));
    g = 255;
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x00", r, g);
  return buf;
}

}  // namespace detail

// `flags` are (time index, node id) pairs; only those on `lane` inside the
// time range are drawn. Output is deterministic for identical inputs.
inline void write_heatmap_svg(const std::string& path, const SensorGrid& grid,
                              int lane,
                              const std::vector<std::pair<int, int>>& flags,
                              const HeatmapOptions& options = {}) {
  if (lane < 1 || lane > grid.n_lanes)
    fail(ErrorKind::OutOfBounds, "lane " + std::to_string(lane));
  int t0 = options.t_begin;
  int t1 = options.t_end < 0 ? grid.n_times() : options.t_end;
  if (t0 < 0 || t1 > grid.n_times() || t0 >= t1)
    fail(ErrorKind::OutOfBounds, "empty or out-of-range time window");

  const int ml = 50, mt = 24, mb = 28;  // margins for labels
  const int cw = options.cell_w, ch = options.cell_h;
  const int plot_w = (t1 - t0) * cw;
  const int plot_h = grid.n_milemarkers() * ch;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ml + plot_w + 8
      << "\" height=\"" << mt + plot_h + mb << "\">\n";
  out << "<text x=\"" << ml << "\" y=\"14\" font-size=\"12\">lane " << lane
      << " speed</text>\n";

  for (int t = t0; t < t1; ++t) {
    const int x = ml + (t - t0) * cw;
    for (int mm = 0; mm < grid.n_milemarkers(); ++mm) {
      const int node = grid.node_id(mm, lane);
      std::string color =
          grid.is_missing(t, node, Feature::Speed)
              ? "#cccccc"
              : detail::speed_color(grid.value(t, node, Feature::Speed),
                                    options.v_max);
      out << "<rect x=\"" << x << "\" y=\"" << mt + mm * ch << "\" width=\""
          << cw << "\" height=\"" << ch << "\" fill=\"" << color << "\"/>\n";
    }
  }

  // hour ticks along the bottom, day boundaries as vertical lines
  for (int t = t0; t < t1; ++t) {
    const int tick = grid.tick_of_time(t);
    if (tick % 120 == 0) {
      const int x = ml + (t - t0) * cw;
      const double hour = grid.window.start_hour + tick / 120.0;
      out << "<text x=\"" << x << "\" y=\"" << mt + plot_h + 16
          << "\" font-size=\"10\">" << detail::format_double(hour)
          << ":00</text>\n";
    }
    if (tick == 0 && t > t0)
      out << "<line x1=\"" << ml + (t - t0) * cw << "\" y1=\"" << mt
          << "\" x2=\"" << ml + (t - t0) * cw << "\" y2=\"" << mt + plot_h
          << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  }
  out << "<text x=\"4\" y=\"" << mt + 10 << "\" font-size=\"10\">"
      << detail::format_double(grid.milemarkers.front()) << "</text>\n";
  out << "<text x=\"4\" y=\"" << mt + plot_h << "\" font-size=\"10\">"
      << detail::format_double(grid.milemarkers.back()) << "</text>\n";

  for (const auto& [t, node] : flags) {
    if (t < t0 || t >= t1 || grid.lane_of(node) != lane) continue;
    const int x = ml + (t - t0) * cw + cw / 2;
    const int y = mt + grid.mm_index_of(node) * ch + ch / 2;
    out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\""
        << std::max(cw, ch) << "\" fill=\"none\" stroke=\"black\" "
           "stroke-width=\"1.5\"/>\n";
  }
  out << "</svg>\n";
  if (!out) fail(ErrorKind::IoError, "short write to " + path);
}

}  // namespace ftaed
