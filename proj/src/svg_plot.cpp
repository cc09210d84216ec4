#include "chunkrt/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string render_svg(const std::vector<SvgSeries>& series, const SvgFrame& frame) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = frame.width - left - right, ph = frame.height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << frame.width << "\" height=\"" << frame.height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fixed(frame.width / 2.0, 1) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(frame.title) << "</text>\n";
  os << "<rect x=\"" << fixed(left, 1) << "\" y=\"" << fixed(top, 1) << "\" width=\"" << fixed(pw, 1)
     << "\" height=\"" << fixed(ph, 1) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0, yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<line x1=\"" << fixed(px(xv), 1) << "\" y1=\"" << fixed(top + ph, 1) << "\" x2=\"" << fixed(px(xv), 1)
       << "\" y2=\"" << fixed(top + ph + 5, 1) << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << fixed(px(xv), 1) << "\" y=\"" << fixed(top + ph + 18, 1) << "\" text-anchor=\"middle\">"
       << fixed(xv, 2) << "</text>\n";
    os << "<line x1=\"" << fixed(left - 5, 1) << "\" y1=\"" << fixed(py(yv), 1) << "\" x2=\"" << fixed(left, 1)
       << "\" y2=\"" << fixed(py(yv), 1) << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << fixed(left - 8, 1) << "\" y=\"" << fixed(py(yv) + 4, 1) << "\" text-anchor=\"end\">"
       << fixed(yv, 4) << "</text>\n";
  }
  os << "<text x=\"" << fixed(left + pw / 2, 1) << "\" y=\"" << fixed(frame.height - 10.0, 1)
     << "\" text-anchor=\"middle\">" << escape(frame.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << fixed(top + ph / 2, 1) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << fixed(top + ph / 2, 1) << ")\">" << escape(frame.y_label) << "</text>\n";
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InvalidInput("series x and y lengths differ");
    if (s.x.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << fixed(s.width, 1)
       << "\" stroke-opacity=\"" << fixed(s.opacity, 2) << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << fixed(px(s.x[i]), 2) << ',' << fixed(py(s.y[i]), 2);
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string overlay_svg(const RunResult& run, std::size_t scalar_channel, double span) {
  const auto& layout = whole_body_layout();
  if (scalar_channel >= layout.scalars()) throw InvalidInput("overlay channel out of range");
  const auto c = static_cast<Eigen::Index>(scalar_channel);
  if (run.executed.t.empty()) throw InvalidInput("run has no executed samples");
  const double t0 = run.executed.t.front();
  const double t1 = t0 + span;

  std::vector<SvgSeries> series;
  std::size_t colour = 0;
  for (const auto& rec : run.chunks) {
    if (rec.arrival > t1) break;
    SvgSeries s;
    for (std::size_t i = 0; i < rec.chunk.frames.size(); ++i) {
      const double t = rec.chunk.time_of(i) + rec.time_shift;
      if (t < t0 || t > t1) continue;
      s.x.push_back(t);
      s.y.push_back(to_channels(rec.chunk.frames[i]).scalar[c]);
    }
    if (s.x.empty()) continue;
    s.color = kPalette[colour++ % std::size(kPalette)];
    s.opacity = rec.accepted ? 0.6 : 0.25;
    series.push_back(std::move(s));
  }
  SvgSeries exec;
  exec.color = "#111111";
  exec.width = 2.2;
  for (std::size_t k = 0; k < run.executed.t.size() && run.executed.t[k] <= t1; ++k) {
    exec.x.push_back(run.executed.t[k]);
    exec.y.push_back(to_channels(run.executed.frames[k]).scalar[c]);
  }
  series.push_back(std::move(exec));

  SvgFrame frame;
  frame.title = to_string(run.strategy) + ": " + layout.scalar_names[scalar_channel] + " (chunks in colour, executed in black)";
  frame.x_label = "time [s]";
  frame.y_label = layout.scalar_names[scalar_channel];
  return render_svg(series, frame);
}

}  // namespace chunkrt
