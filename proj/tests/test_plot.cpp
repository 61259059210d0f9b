#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "omniloco/plot.hpp"

using namespace omniloco;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

EvalReport tiny_report(const std::string& name, Real success) {
  EvalReport rep;
  rep.policy = name;
  rep.episodes_per_tier = 4;
  for (int ti = 0; ti < kReportTiers; ++ti) {
    rep.tiers[ti].tier = static_cast<ReportTier>(ti);
    for (int e = 0; e < 4; ++e) {
      EpisodeResult r;
      r.episode = e;
      r.ticks = 100 + 10 * e;
      r.success = e < static_cast<int>(success * 4);
      r.term = r.success ? TerminationReason::None : TerminationReason::Tilt;
      r.energy = 5.0 + ti;
      r.collisions = e % 2;
      r.had_collision = r.collisions > 0;
      rep.tiers[ti].episodes.push_back(r);
    }
  }
  return rep;
}

}  // namespace

TEST_CASE("image primitives stay in bounds") {
  plot::Image img(16, 9, {250, 250, 250});
  CHECK(img.px.size() == 16u * 9u * 3u);
  img.line(-10, -10, 30, 30, {0, 0, 0});  // clipped, no out-of-range write
  img.rect(10, 3, 99, 99, {7, 7, 7});
  img.set(-5, 2, {9, 9, 9});  // silently clipped
  img.set(2, 99, {9, 9, 9});
  img.set(0, 0, {1, 2, 3});
  img.set(15, 8, {4, 5, 6});
  CHECK(img.px[0] == 1);
  CHECK(img.px[(8 * 16 + 15) * 3] == 4);
  CHECK(img.px[(3 * 16 + 12) * 3] == 7);  // inside the clipped rect
}

TEST_CASE("ppm bytes are deterministic and carry the comment") {
  std::vector<plot::Series> series(2);
  series[0].name = "a";
  series[1].name = "b";
  for (int i = 0; i < 50; ++i) {
    series[0].x.push_back(i);
    series[0].y.push_back(std::sin(0.3 * i));
    series[1].x.push_back(i);
    series[1].y.push_back(0.02 * i);
  }
  const plot::Image img = plot::render_lines(series, 320, 200);
  const std::string p1 = "plot_a.ppm", p2 = "plot_b.ppm";
  plot::save_ppm(img, p1, "fixture");
  plot::save_ppm(plot::render_lines(series, 320, 200), p2, "fixture");
  const std::string b1 = slurp(p1), b2 = slurp(p2);
  CHECK(b1 == b2);
  CHECK(b1.rfind("P6\n", 0) == 0);
  CHECK(b1.find("# fixture") != std::string::npos);
  CHECK(b1.find("320 200") != std::string::npos);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("bar charts render whiskered groups deterministically") {
  std::vector<plot::BarGroup> groups(4);
  for (int g = 0; g < 4; ++g) {
    groups[g].label = "tier" + std::to_string(g);
    groups[g].value = {0.9 - 0.1 * g, 0.7 - 0.1 * g, 0.8};
    groups[g].lo = {0.8 - 0.1 * g, 0.6 - 0.1 * g, 0.7};
    groups[g].hi = {1.0, 0.8 - 0.1 * g, 0.9};
  }
  const plot::Image a = plot::render_bars(groups, 3, 400, 240);
  const plot::Image b = plot::render_bars(groups, 3, 400, 240);
  CHECK(a.px == b.px);
  CHECK(a.w == 400);
  CHECK(a.h == 240);
}

TEST_CASE("report panels write four images plus a legend") {
  const std::vector<EvalReport> reports = {tiny_report("alpha", 0.75),
                                           tiny_report("beta", 0.5)};
  const auto paths = plot::report_panels(reports, "panels_test");
  REQUIRE(paths.size() == 4);
  for (const std::string& p : paths) {
    const std::string bytes = slurp(p);
    CHECK(bytes.rfind("P6\n", 0) == 0);
    std::remove(p.c_str());
  }
  const std::string legend = slurp("panels_test-legend.txt");
  CHECK(legend.find("alpha") != std::string::npos);
  CHECK(legend.find("beta") != std::string::npos);
  std::remove("panels_test-legend.txt");

  CHECK_THROWS(plot::report_panels({}, "panels_empty"));
}

TEST_CASE("log curves plot named columns against the iteration column") {
  std::ostringstream os;
  logio::TableWriter w(os, "train", {}, {"iter", "ret_mean", "loss_pi"});
  for (int i = 0; i < 30; ++i)
    w.row(std::array<Real, 3>{static_cast<Real>(i), 0.1 * i, 1.0 / (1 + i)});
  const logio::Table t = logio::parse_table(os.str());

  const std::string path = "curves_test.ppm";
  plot::log_curves(t, {"ret_mean", "loss_pi"}, path);
  const std::string bytes = slurp(path);
  CHECK(bytes.rfind("P6\n", 0) == 0);
  const std::string legend = slurp(path + ".legend.txt");
  CHECK(legend.find("ret_mean") != std::string::npos);
  std::remove(path.c_str());
  std::remove((path + ".legend.txt").c_str());

  CHECK_THROWS(plot::log_curves(t, {"no_such_column"}, "curves_bad.ppm"));
}
