#include "o2o/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "o2o/errors.hpp"

namespace o2o {

SvgCanvas::SvgCanvas(double width, double height)
    : width_(width), height_(height) {}

static std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void SvgCanvas::rect(double x, double y, double w, double h,
                     const std::string& fill) {
  body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
           "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::line(double x1, double y1, double x2, double y2,
                     const std::string& stroke, double width) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
           "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           num(width) + "\"/>\n";
}

void SvgCanvas::circle(double cx, double cy, double r, const std::string& stroke,
                       const std::string& fill) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) +
           "\" stroke=\"" + stroke + "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& stroke, double width) {
  body_ += "<polyline points=\"";
  for (const auto& [x, y] : pts) body_ += num(x) + "," + num(y) + " ";
  body_ += "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
           num(width) + "\"/>\n";
}

void SvgCanvas::text(double x, double y, const std::string& s, double size) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
           num(size) + "\" font-family=\"monospace\">" + s + "</text>\n";
}

void SvgCanvas::arrow(double x1, double y1, double x2, double y2,
                      const std::string& stroke, double width) {
  line(x1, y1, x2, y2, stroke, width);
  double dx = x2 - x1, dy = y2 - y1;
  double len = std::hypot(dx, dy);
  if (len < 1e-9) return;
  dx /= len;
  dy /= len;
  double hx = -dx * 3.0, hy = -dy * 3.0;
  line(x2, y2, x2 + hx - hy * 0.6, y2 + hy + hx * 0.6, stroke, width);
  line(x2, y2, x2 + hx + hy * 0.6, y2 + hy - hx * 0.6, stroke, width);
}

void SvgCanvas::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("SvgCanvas: cannot open " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
    << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " "
    << height_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << body_ << "</svg>\n";
  if (!f) throw IoError("SvgCanvas: write failed for " + path);
}

std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  // blue (0) -> white (0.5) -> red (1)
  double r, g, b;
  if (t < 0.5) {
    double u = t * 2.0;
    r = 60 + u * 195;
    g = 80 + u * 175;
    b = 200 + u * 55;
  } else {
    double u = (t - 0.5) * 2.0;
    r = 255;
    g = 255 - u * 175;
    b = 255 - u * 195;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(r),
                static_cast<int>(g), static_cast<int>(b));
  return buf;
}

}  // namespace o2o
