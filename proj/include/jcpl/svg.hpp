#pragma once

// Small self-contained SVG chart writer; no plotting dependency. Data space
// maps linearly onto a fixed canvas with margins, axes and tick labels.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace jcpl {

struct SvgStyle {
  static const char* method_color(const std::string& method) {
    if (method == "hidden") return "#7f7f7f";
    if (method == "explicit") return "#1f77b4";
    if (method == "predictive_id") return "#ff7f0e";
    if (method == "jcpl") return "#2ca02c";
    return "#9467bd";
  }

  // compact blue-to-yellow map for context coloring
  static std::string heat(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(48 + t * (253 - 48));
    const int g = static_cast<int>(18 + t * (231 - 18));
    const int b = static_cast<int>(140 + t * (37 - 140));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
  }
};

class SvgChart {
 public:
  SvgChart(double x_min, double x_max, double y_min, double y_max, int width = 640,
           int height = 420)
      : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max), width_(width),
        height_(height) {
    if (x_max_ <= x_min_) x_max_ = x_min_ + 1.0;
    if (y_max_ <= y_min_) y_max_ = y_min_ + 1.0;
  }

  void title(const std::string& t) { title_ = t; }
  void axis_labels(const std::string& x, const std::string& y) {
    x_label_ = x;
    y_label_ = y;
  }

  double px(double x) const {
    return margin_ + (x - x_min_) / (x_max_ - x_min_) * (width_ - 2 * margin_);
  }
  double py(double y) const {
    return height_ - margin_ -
           (y - y_min_) / (y_max_ - y_min_) * (height_ - 2 * margin_);
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, double width = 1.8,
                const std::string& dash = "") {
    std::ostringstream pts;
    for (std::size_t i = 0; i < xs.size(); ++i)
      pts << px(xs[i]) << ',' << py(ys[i]) << ' ';
    body_ << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width
          << "'";
    if (!dash.empty()) body_ << " stroke-dasharray='" << dash << "'";
    body_ << " points='" << pts.str() << "'/>\n";
  }

  void band(const std::vector<double>& xs, const std::vector<double>& lo,
            const std::vector<double>& hi, const std::string& color,
            double opacity = 0.18) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts << px(xs[i]) << ',' << py(hi[i]) << ' ';
    for (std::size_t i = xs.size(); i-- > 0;) pts << px(xs[i]) << ',' << py(lo[i]) << ' ';
    body_ << "<polygon fill='" << color << "' fill-opacity='" << opacity
          << "' stroke='none' points='" << pts.str() << "'/>\n";
  }

  void circle(double x, double y, double r, const std::string& color,
              double opacity = 0.85) {
    body_ << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='" << r << "' fill='"
          << color << "' fill-opacity='" << opacity << "'/>\n";
  }

  // rectangle in data coordinates
  void rect(double x0, double x1, double y0, double y1, const std::string& fill,
            double opacity = 0.8, const std::string& stroke = "none") {
    body_ << "<rect x='" << px(x0) << "' y='" << py(y1) << "' width='"
          << (px(x1) - px(x0)) << "' height='" << (py(y0) - py(y1)) << "' fill='" << fill
          << "' fill-opacity='" << opacity << "' stroke='" << stroke << "'/>\n";
  }

  void line(double x0, double y0, double x1, double y1, const std::string& color,
            double width = 1.2) {
    body_ << "<line x1='" << px(x0) << "' y1='" << py(y0) << "' x2='" << px(x1)
          << "' y2='" << py(y1) << "' stroke='" << color << "' stroke-width='" << width
          << "'/>\n";
  }

  void label(double x, double y, const std::string& text, const std::string& color,
             int size = 12, const std::string& anchor = "start") {
    body_ << "<text x='" << px(x) << "' y='" << py(y) << "' font-size='" << size
          << "' fill='" << color << "' text-anchor='" << anchor
          << "' font-family='sans-serif'>" << text << "</text>\n";
  }

  void legend_entry(const std::string& name, const std::string& color) {
    legend_.emplace_back(name, color);
  }

  void write(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width_ << "' height='"
       << height_ << "' viewBox='0 0 " << width_ << ' ' << height_ << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    // axes
    os << "<line x1='" << margin_ << "' y1='" << height_ - margin_ << "' x2='"
       << width_ - margin_ << "' y2='" << height_ - margin_
       << "' stroke='black' stroke-width='1'/>\n";
    os << "<line x1='" << margin_ << "' y1='" << margin_ << "' x2='" << margin_
       << "' y2='" << height_ - margin_ << "' stroke='black' stroke-width='1'/>\n";
    for (int i = 0; i <= ticks_; ++i) {
      const double fx = x_min_ + (x_max_ - x_min_) * i / ticks_;
      const double tx = margin_ + (width_ - 2.0 * margin_) * i / ticks_;
      os << "<line x1='" << tx << "' y1='" << height_ - margin_ << "' x2='" << tx
         << "' y2='" << height_ - margin_ + 4 << "' stroke='black'/>\n";
      os << "<text x='" << tx << "' y='" << height_ - margin_ + 16
         << "' font-size='10' text-anchor='middle' font-family='sans-serif'>"
         << format(fx) << "</text>\n";
      const double fy = y_min_ + (y_max_ - y_min_) * i / ticks_;
      const double ty = height_ - margin_ - (height_ - 2.0 * margin_) * i / ticks_;
      os << "<line x1='" << margin_ - 4 << "' y1='" << ty << "' x2='" << margin_
         << "' y2='" << ty << "' stroke='black'/>\n";
      os << "<text x='" << margin_ - 6 << "' y='" << ty + 3
         << "' font-size='10' text-anchor='end' font-family='sans-serif'>" << format(fy)
         << "</text>\n";
    }
    if (!title_.empty())
      os << "<text x='" << width_ / 2 << "' y='16' font-size='14' text-anchor='middle'"
         << " font-family='sans-serif'>" << title_ << "</text>\n";
    if (!x_label_.empty())
      os << "<text x='" << width_ / 2 << "' y='" << height_ - 6
         << "' font-size='12' text-anchor='middle' font-family='sans-serif'>" << x_label_
         << "</text>\n";
    if (!y_label_.empty())
      os << "<text x='14' y='" << height_ / 2
         << "' font-size='12' text-anchor='middle' font-family='sans-serif'"
         << " transform='rotate(-90 14 " << height_ / 2 << ")'>" << y_label_
         << "</text>\n";
    os << body_.str();
    double ly = margin_ + 6;
    for (const auto& [name, color] : legend_) {
      os << "<rect x='" << width_ - margin_ - 120 << "' y='" << ly - 9
         << "' width='12' height='12' fill='" << color << "'/>\n";
      os << "<text x='" << width_ - margin_ - 104 << "' y='" << ly + 1
         << "' font-size='11' font-family='sans-serif'>" << name << "</text>\n";
      ly += 16;
    }
    os << "</svg>\n";
  }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
  }

  double x_min_, x_max_, y_min_, y_max_;
  int width_, height_;
  double margin_ = 52;
  int ticks_ = 5;
  std::string title_, x_label_, y_label_;
  std::vector<std::pair<std::string, std::string>> legend_;
  std::ostringstream body_;
};

}  // namespace jcpl
