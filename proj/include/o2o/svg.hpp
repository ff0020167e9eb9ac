#pragma once

#include <string>
#include <vector>

namespace o2o {

// Minimal SVG writer for the analysis plots. Coordinates are raw SVG pixels.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void rect(double x, double y, double w, double h, const std::string& fill);
  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double width = 1.0);
  void circle(double cx, double cy, double r, const std::string& stroke,
              const std::string& fill = "none");
  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke, double width = 1.0);
  void text(double x, double y, const std::string& s, double size = 12.0);
  // Small arrow head at (x2, y2) pointing away from (x1, y1).
  void arrow(double x1, double y1, double x2, double y2,
             const std::string& stroke, double width = 1.0);

  void save(const std::string& path) const;

 private:
  double width_, height_;
  std::string body_;
};

// Blue-to-red diverging colormap on [0, 1].
std::string heat_color(double t);

}  // namespace o2o
