#pragma once

#include <string>
#include <vector>

#include "omniloco/evalsuite.hpp"
#include "omniloco/logio.hpp"

namespace omniloco::plot {

// Minimal deterministic raster output: fixed palette, integer rasterizer,
// P6 PPM bytes that depend only on the inputs.  Legends go to a text file
// next to the image (no font rendering here).

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

struct Image {
  int w = 0, h = 0;
  std::vector<unsigned char> px;  // rgb rows, top-down

  Image() = default;
  Image(int width, int height, Rgb fill);
  void set(int x, int y, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);  // filled, inclusive
};

// The comment is embedded as a '#' line in the header (config hash etc.).
void save_ppm(const Image& img, const std::string& path,
              const std::string& comment);

struct Series {
  std::string name;
  std::vector<Real> x, y;
};

Image render_lines(const std::vector<Series>& series, int w = 640,
                   int h = 400);

// One group per tier, one bar per policy, optional CI whiskers.
struct BarGroup {
  std::string label;
  std::vector<Real> value;  // per policy
  std::vector<Real> lo, hi;  // CI bounds; empty = no whiskers
};

Image render_bars(const std::vector<BarGroup>& groups, std::size_t n_policies,
                  int w = 640, int h = 400);

// Four metric panels (success, collision, termination-collision, energy)
// comparing the given reports across tiers.  Writes <prefix>-<metric>.ppm
// plus <prefix>-legend.txt; returns the image paths.
std::vector<std::string> report_panels(const std::vector<EvalReport>& reports,
                                       const std::string& prefix);

// Learning curves for the named numeric columns of a training log against
// its iteration column.  Writes the image and <path>.legend.txt.
void log_curves(const logio::Table& log, const std::vector<std::string>& cols,
                const std::string& path);

}  // namespace omniloco::plot
