#pragma once

#include <string>
#include <vector>

#include "chunkrt/exec_strategies.hpp"

namespace chunkrt {

struct SvgSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#000000";
  double width = 1.0;
  double opacity = 1.0;
};

struct SvgFrame {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 900;
  int height = 420;
};

/// Line plot with axes and five ticks per axis. Numbers are printed with
/// fixed precision so the output is byte-stable.
std::string render_svg(const std::vector<SvgSeries>& series, const SvgFrame& frame);

/// Chunks as thin coloured polylines at their execution times and the
/// executed command as a thick dark line, for one whole-body scalar channel
/// (index into whole_body_layout()) over [t0, t0 + span] of the run.
std::string overlay_svg(const RunResult& run, std::size_t scalar_channel, double span = 4.0);

}  // namespace chunkrt
