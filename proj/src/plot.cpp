#include "omniloco/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace omniloco::plot {

namespace {

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kBlack{20, 20, 20};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kPalette[] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},   {214, 39, 40},
    {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
};
constexpr int kPaletteSize = static_cast<int>(std::size(kPalette));

constexpr int kMargin = 48;

struct Axis {
  Real lo = 0, hi = 1;
  int px0 = 0, px1 = 1;
  int to_px(Real v) const {
    if (hi <= lo) return px0;
    const Real f = (v - lo) / (hi - lo);
    return px0 + static_cast<int>(std::lround(f * (px1 - px0)));
  }
};

void draw_frame(Image& img, const Axis& x, const Axis& y) {
  img.line(x.px0, y.px0, x.px1, y.px0, kBlack);
  img.line(x.px0, y.px0, x.px0, y.px1, kBlack);
  for (int i = 1; i <= 4; ++i) {
    const int gy = y.px0 + (y.px1 - y.px0) * i / 4;
    img.line(x.px0 + 1, gy, x.px1, gy, kGrid);
  }
}

}  // namespace

Image::Image(int width, int height, Rgb fill) : w(width), h(height) {
  px.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) set(x, y, fill);
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || x >= w || y < 0 || y >= h) return;
  const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
  px[i] = c.r;
  px[i + 1] = c.g;
  px[i + 2] = c.b;
}

void Image::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Image::rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void save_ppm(const Image& img, const std::string& path,
              const std::string& comment) {
  OL_REQUIRE(img.w > 0 && img.h > 0, "save_ppm: empty image");
  std::ofstream os(path, std::ios::binary);
  OL_REQUIRE(os.good(), "save_ppm: cannot open " + path);
  os << "P6\n";
  if (!comment.empty()) os << "# " << comment << "\n";
  os << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.px.data()),
           static_cast<std::streamsize>(img.px.size()));
  OL_REQUIRE(os.good(), "save_ppm: write failed");
}

Image render_lines(const std::vector<Series>& series, int w, int h) {
  OL_REQUIRE(!series.empty(), "render_lines: no series");
  std::size_t points = 0;
  for (const auto& s : series) {
    OL_REQUIRE(s.x.size() == s.y.size(), "render_lines: ragged series");
    points += s.x.size();
  }
  OL_REQUIRE(points > 0, "render_lines: no data");

  Axis ax, ay;
  ax.lo = ay.lo = std::numeric_limits<Real>::infinity();
  ax.hi = ay.hi = -std::numeric_limits<Real>::infinity();
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      ax.lo = std::min(ax.lo, s.x[i]);
      ax.hi = std::max(ax.hi, s.x[i]);
      ay.lo = std::min(ay.lo, s.y[i]);
      ay.hi = std::max(ay.hi, s.y[i]);
    }
  if (ax.hi <= ax.lo) ax.hi = ax.lo + 1;
  if (ay.hi <= ay.lo) ay.hi = ay.lo + 1;
  const Real pad = 0.05 * (ay.hi - ay.lo);
  ay.lo -= pad;
  ay.hi += pad;

  Image img(w, h, kWhite);
  ax.px0 = kMargin;
  ax.px1 = w - kMargin / 2;
  ay.px0 = h - kMargin / 2;
  ay.px1 = kMargin / 2;
  draw_frame(img, ax, ay);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Rgb c = kPalette[si % kPaletteSize];
    const auto& s = series[si];
    for (std::size_t i = 1; i < s.x.size(); ++i)
      img.line(ax.to_px(s.x[i - 1]), ay.to_px(s.y[i - 1]), ax.to_px(s.x[i]),
               ay.to_px(s.y[i]), c);
    // colour swatch in the top margin doubles as the legend key
    img.rect(kMargin + static_cast<int>(si) * 18, 4,
             kMargin + static_cast<int>(si) * 18 + 12, 12, c);
  }
  return img;
}

Image render_bars(const std::vector<BarGroup>& groups, std::size_t n_policies,
                  int w, int h) {
  OL_REQUIRE(!groups.empty() && n_policies > 0, "render_bars: empty input");
  Real hi = 0, lo = 0;
  for (const auto& g : groups) {
    OL_REQUIRE(g.value.size() == n_policies, "render_bars: ragged group");
    for (std::size_t i = 0; i < n_policies; ++i) {
      hi = std::max(hi, g.value[i]);
      lo = std::min(lo, g.value[i]);
      if (i < g.hi.size()) hi = std::max(hi, g.hi[i]);
      if (i < g.lo.size()) lo = std::min(lo, g.lo[i]);
    }
  }
  if (hi <= lo) hi = lo + 1;
  hi *= 1.05;

  Image img(w, h, kWhite);
  Axis ax{0, 1, kMargin, w - kMargin / 2};
  Axis ay{lo, hi, h - kMargin / 2, kMargin / 2};
  draw_frame(img, ax, ay);

  const int span = ax.px1 - ax.px0;
  const int ng = static_cast<int>(groups.size());
  const int np = static_cast<int>(n_policies);
  const int group_w = span / ng;
  const int bar_w = std::max(2, (group_w - 12) / np);
  const int y_base = ay.to_px(std::max<Real>(0, lo));

  for (int gi = 0; gi < ng; ++gi) {
    const BarGroup& g = groups[static_cast<std::size_t>(gi)];
    const int gx = ax.px0 + gi * group_w + 6;
    for (int pi = 0; pi < np; ++pi) {
      const Rgb c = kPalette[pi % kPaletteSize];
      const int x0 = gx + pi * bar_w;
      const int yv = ay.to_px(g.value[static_cast<std::size_t>(pi)]);
      img.rect(x0, std::min(yv, y_base), x0 + bar_w - 2,
               std::max(yv, y_base), c);
      if (pi < static_cast<int>(g.lo.size()) &&
          pi < static_cast<int>(g.hi.size())) {
        const int cx = x0 + (bar_w - 2) / 2;
        const int ylo = ay.to_px(g.lo[static_cast<std::size_t>(pi)]);
        const int yhi = ay.to_px(g.hi[static_cast<std::size_t>(pi)]);
        img.line(cx, ylo, cx, yhi, kBlack);
        img.line(cx - 3, ylo, cx + 3, ylo, kBlack);
        img.line(cx - 3, yhi, cx + 3, yhi, kBlack);
      }
    }
    // tick between groups
    img.line(ax.px0 + gi * group_w, ay.px0, ax.px0 + gi * group_w, ay.px0 + 4,
             kBlack);
  }
  return img;
}

std::vector<std::string> report_panels(const std::vector<EvalReport>& reports,
                                       const std::string& prefix) {
  OL_REQUIRE(!reports.empty(), "report_panels: no reports");
  for (const auto& r : reports)
    for (const auto& tier : r.tiers)
      OL_REQUIRE(!tier.episodes.empty(),
                 "report_panels: report '" + r.policy + "' has an empty tier");

  struct Metric {
    const char* name;
    Real (*value)(const TierReport&);
    bool is_rate;
  };
  const Metric metrics[] = {
      {"success", [](const TierReport& t) { return t.success_rate(); }, true},
      {"collision", [](const TierReport& t) { return t.collision_rate(); },
       true},
      {"term-collision",
       [](const TierReport& t) { return t.term_collision_rate(); }, true},
      {"energy", [](const TierReport& t) { return t.mean_energy_rate(); },
       false},
  };

  const std::string comment = "config " + config_hash_hex(reports[0].config_hash) +
                              " seed " + std::to_string(reports[0].seed);
  std::vector<std::string> paths;
  for (const Metric& m : metrics) {
    std::vector<BarGroup> groups;
    for (int ti = 0; ti < kReportTiers; ++ti) {
      BarGroup g;
      g.label = report_tier_name(static_cast<ReportTier>(ti));
      for (const EvalReport& r : reports) {
        const TierReport& tier = r.tiers[ti];
        const Real v = m.value(tier);
        g.value.push_back(v);
        if (m.is_rate) {
          const auto ci = rate_ci(v, tier.episodes.size());
          g.lo.push_back(ci[0]);
          g.hi.push_back(ci[1]);
        }
      }
      groups.push_back(std::move(g));
    }
    const Image img = render_bars(groups, reports.size());
    const std::string path = prefix + "-" + m.name + ".ppm";
    save_ppm(img, path, std::string(m.name) + " " + comment);
    paths.push_back(path);
  }

  std::ostringstream legend;
  legend << "# " << comment << "\n";
  legend << "# groups left to right: ";
  for (int ti = 0; ti < kReportTiers; ++ti)
    legend << report_tier_name(static_cast<ReportTier>(ti))
           << (ti + 1 < kReportTiers ? ", " : "\n");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Rgb c = kPalette[i % kPaletteSize];
    legend << "bar " << i + 1 << " rgb(" << int(c.r) << "," << int(c.g) << ","
           << int(c.b) << ") = " << reports[i].policy << "\n";
  }
  logio::write_text_file(prefix + "-legend.txt", legend.str());
  return paths;
}

void log_curves(const logio::Table& log, const std::vector<std::string>& cols,
                const std::string& path) {
  OL_REQUIRE(!log.rows.empty(), "log_curves: empty log");
  OL_REQUIRE(!cols.empty(), "log_curves: no columns requested");
  const int xc = std::max(log.col("iter"), log.col("round"));
  std::vector<Series> series;
  std::ostringstream legend;
  const auto meta_cfg = log.meta.find("config");
  if (meta_cfg != log.meta.end())
    legend << "# config " << meta_cfg->second << "\n";
  for (const std::string& name : cols) {
    const int c = log.col(name);
    OL_REQUIRE(c >= 0, "log_curves: no column '" + name + "'");
    Series s;
    s.name = name;
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      s.x.push_back(xc >= 0 ? log.rows[i][static_cast<std::size_t>(xc)]
                            : static_cast<Real>(i));
      s.y.push_back(log.rows[i][static_cast<std::size_t>(c)]);
    }
    const Rgb col = kPalette[series.size() % kPaletteSize];
    legend << "line " << series.size() + 1 << " rgb(" << int(col.r) << ","
           << int(col.g) << "," << int(col.b) << ") = " << name << "\n";
    series.push_back(std::move(s));
  }
  const Image img = render_lines(series);
  save_ppm(img, path,
           meta_cfg != log.meta.end() ? "config " + meta_cfg->second : "");
  logio::write_text_file(path + ".legend.txt", legend.str());
}

}  // namespace omniloco::plot
