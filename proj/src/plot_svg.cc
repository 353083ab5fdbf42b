#include "nodectl/plot_svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nodectl {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string Label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Panel {
  double x0, y0, w, h;
  double t_max;
  double lo, hi;

  double X(double t) const { return x0 + (t_max > 0 ? t / t_max : 0.0) * w; }
  double Y(double v) const { return y0 + h - (v - lo) / (hi - lo) * h; }
};

void Frame(std::ostringstream& os, const Panel& p, const std::string& label) {
  os << "<rect x=\"" << Num(p.x0) << "\" y=\"" << Num(p.y0) << "\" width=\""
     << Num(p.w) << "\" height=\"" << Num(p.h)
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << Num(p.x0 - 6) << "\" y=\"" << Num(p.y0 + 10)
     << "\" text-anchor=\"end\" font-size=\"10\">" << Label(p.hi) << "</text>\n";
  os << "<text x=\"" << Num(p.x0 - 6) << "\" y=\"" << Num(p.y0 + p.h)
     << "\" text-anchor=\"end\" font-size=\"10\">" << Label(p.lo) << "</text>\n";
  os << "<text x=\"" << Num(p.x0 + p.w) << "\" y=\"" << Num(p.y0 + p.h + 14)
     << "\" text-anchor=\"end\" font-size=\"10\">t = " << Label(p.t_max)
     << "</text>\n";
  os << "<text x=\"" << Num(p.x0 + 4) << "\" y=\"" << Num(p.y0 + 14)
     << "\" font-size=\"12\">" << label << "</text>\n";
}

void Polyline(std::ostringstream& os, const Panel& p,
              const std::vector<double>& t, const std::vector<double>& v,
              const std::string& color, int max_points, bool dashed) {
  const size_t n = t.size();
  const size_t stride = std::max<size_t>(1, n / std::max(1, max_points));
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
  if (dashed) os << " stroke-dasharray=\"5,3\"";
  os << " points=\"";
  for (size_t k = 0; k < n; k += stride) {
    os << Num(p.X(t[k])) << "," << Num(p.Y(v[k])) << " ";
  }
  if (n > 0 && (n - 1) % stride != 0) {
    os << Num(p.X(t[n - 1])) << "," << Num(p.Y(v[n - 1]));
  }
  os << "\"/>\n";
}

void Range(const std::vector<std::vector<double>>& series, double& lo,
           double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : series) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    const double pad = std::max(1e-9, std::abs(lo) * 0.1 + 1e-3);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
}

}  // namespace

std::string PlotSvg(const std::vector<Trajectory>& trajectories,
                    const PlotOptions& options) {
  if (trajectories.empty() || trajectories[0].states.empty()) {
    throw std::invalid_argument("PlotSvg: need at least one trajectory");
  }
  const Eigen::Index m = trajectories[0].states[0].size();
  const int panels = static_cast<int>(m) + (options.envelope ? 1 : 0);
  const double left = 60, top = options.title.empty() ? 20 : 40, gap = 30;
  const double pw = options.width - left - 20;
  const double ph = options.panel_height;
  const double height = top + panels * (ph + gap) + 10;
  double t_max = 0.0;
  for (const auto& tr : trajectories) t_max = std::max(t_max, tr.times.back());

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width
     << "\" height=\"" << Num(height) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    os << "<text x=\"" << Num(left) << "\" y=\"24\" font-size=\"14\">"
       << options.title << "</text>\n";
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<std::vector<double>> series;
    for (const auto& tr : trajectories) {
      std::vector<double> v;
      for (const auto& x : tr.states) v.push_back(x(i));
      series.push_back(std::move(v));
    }
    Panel p{left, top + i * (ph + gap), pw, ph, t_max, 0, 0};
    Range(series, p.lo, p.hi);
    Frame(os, p, "x" + std::to_string(i + 1));
    for (size_t k = 0; k < trajectories.size(); ++k) {
      Polyline(os, p, trajectories[k].times, series[k], kPalette[k % 8],
               options.max_points, false);
    }
  }
  if (options.envelope) {
    const EnvelopeOverlay& e = *options.envelope;
    std::vector<std::vector<double>> dist, bound;
    for (const auto& tr : trajectories) {
      std::vector<double> d, b;
      const double d0 = (tr.states[0] - e.x_star).norm();
      for (size_t k = 0; k < tr.states.size(); ++k) {
        d.push_back((tr.states[k] - e.x_star).norm());
        const double decay = std::exp(-e.rate * tr.times[k]);
        b.push_back(e.c * d0 * decay + e.radius * (1.0 - decay));
      }
      dist.push_back(std::move(d));
      bound.push_back(std::move(b));
    }
    std::vector<std::vector<double>> all = dist;
    all.insert(all.end(), bound.begin(), bound.end());
    Panel p{left, top + m * (ph + gap), pw, ph, t_max, 0, 0};
    Range(all, p.lo, p.hi);
    p.lo = std::min(p.lo, 0.0);
    Frame(os, p, "|x - x*| and envelope");
    for (size_t k = 0; k < trajectories.size(); ++k) {
      Polyline(os, p, trajectories[k].times, dist[k], kPalette[k % 8],
               options.max_points, false);
      Polyline(os, p, trajectories[k].times, bound[k], kPalette[k % 8],
               options.max_points, true);
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nodectl
