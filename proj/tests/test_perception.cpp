#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "omniloco/parallel.hpp"
#include "omniloco/perception.hpp"
#include "omniloco/rng.hpp"

using namespace omniloco;

namespace {

HeightField flat_field(Real size = 12.0) {
  const auto n = static_cast<std::size_t>(size / 0.05);
  return HeightField(n, n, 0.05, -size / 2, -size / 2);
}

// Fills every cell whose centre lies in [x0,x1] x [y0,y1].
void fill_rect(HeightField& f, Real x0, Real y0, Real x1, Real y1, Real h) {
  for (std::size_t iy = 0; iy < f.depth_cells; ++iy)
    for (std::size_t ix = 0; ix < f.width_cells; ++ix) {
      const Real cx = f.origin_x + (ix + 0.5) * f.cell_size;
      const Real cy = f.origin_y + (iy + 0.5) * f.cell_size;
      if (cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1) f.at(ix, iy) = h;
    }
}

}  // namespace

TEST_CASE("flat terrain gives a uniform height map of -base_z") {
  const HeightField f = flat_field();
  const HeightMapObs hm = extract_heightmap(f, 0.3, -0.2, 0.8, 0.7);
  for (Real v : hm.values) CHECK(v == -0.8);
}

TEST_CASE("a block ahead lands in the forward cells") {
  HeightField f = flat_field();
  fill_rect(f, 0.8, -0.2, 1.2, 0.2, 0.3);
  const HeightMapObs hm = extract_heightmap(f, 0.0, 0.0, 0.8, 0.0);
  int on = 0;
  for (int ix = 0; ix < HeightMapObs::kCellsX; ++ix)
    for (int iy = 0; iy < HeightMapObs::kCellsY; ++iy) {
      const Real cx = HeightMapObs::cell_x(ix), cy = HeightMapObs::cell_y(iy);
      const bool in_block = cx > 0.8 && cx < 1.2 && cy > -0.2 && cy < 0.2;
      if (in_block) {
        CHECK(hm.at(ix, iy) == doctest::Approx(0.3 - 0.8));
        ++on;
      } else {
        CHECK(hm.at(ix, iy) == -0.8);
      }
    }
  CHECK(on == 8 * 8);  // 0.4 m square at 5 cm
}

TEST_CASE("extraction rotates with the robot frame") {
  HeightField fa = flat_field();
  fill_rect(fa, 0.8, -0.2, 1.2, 0.2, 0.3);  // ahead at yaw 0
  HeightField fb = flat_field();
  fill_rect(fb, -0.2, 0.8, 0.2, 1.2, 0.3);  // ahead at yaw 90 deg
  const HeightMapObs a = extract_heightmap(fa, 0.0, 0.0, 0.8, 0.0);
  const HeightMapObs b = extract_heightmap(fb, 0.0, 0.0, 0.8, kPi / 2);
  for (int i = 0; i < HeightMapObs::kSize; ++i)
    CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("height map ignores joint world translation") {
  HeightField f = flat_field();
  fill_rect(f, 0.5, -0.4, 1.3, 0.1, 0.25);
  HeightField g = f;
  g.origin_x += 0.35;  // 7 whole cells
  g.origin_y -= 0.15;
  for (Real& h : g.heights) h += 0.5;
  const HeightMapObs a = extract_heightmap(f, 0.1, 0.2, 0.8, 0.3);
  const HeightMapObs b = extract_heightmap(g, 0.45, 0.05, 1.3, 0.3);
  for (int i = 0; i < HeightMapObs::kSize; ++i)
    CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("quadrant concatenation is a permutation of the map") {
  HeightMapObs hm;
  std::iota(hm.values.begin(), hm.values.end(), 0.0);
  std::vector<Real> out(kQuadrantConcatSize, -1);
  concat_quadrants(hm, out.data());
  std::vector<Real> sorted = out;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < kQuadrantConcatSize; ++i)
    CHECK(sorted[static_cast<std::size_t>(i)] == static_cast<Real>(i));
}

TEST_CASE("mirror_heightmap is an involution and swaps sides") {
  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    HeightMapObs hm;
    for (Real& v : hm.values) v = rng.uniform(-1.0, 1.0);
    const HeightMapObs mm = mirror_heightmap(mirror_heightmap(hm));
    bool same = true;
    for (int i = 0; i < HeightMapObs::kSize; ++i)
      same = same && mm.values[i] == hm.values[i];
    CHECK(same);
  }

  HeightMapObs hm;
  hm.at(30, 35) = 1.0;  // left side (high iy = left)
  const HeightMapObs m = mirror_heightmap(hm);
  CHECK(m.at(30, HeightMapObs::kCellsY - 1 - 35) == 1.0);
  CHECK(m.at(30, 35) == 0.0);
}

TEST_CASE("heightmap delay returns the previous frame") {
  HeightmapDelayLine line;
  HeightmapPerturb p;
  p.delay_ticks = 1;
  Rng rng(1);
  HeightMapObs t0, t1;
  t0.values.assign(HeightMapObs::kSize, 10.0);
  t1.values.assign(HeightMapObs::kSize, 20.0);
  // first tick: the only frame stands in for the delayed one
  CHECK(line.process(t0, p, rng).values[0] == 10.0);
  // second tick: one-tick delay hands back t0
  CHECK(line.process(t1, p, rng).values[0] == 10.0);
}

TEST_CASE("zero perturbation passes through without rng draws") {
  HeightmapDelayLine line;
  HeightmapPerturb p;  // all zero
  Rng rng(123), untouched(123);
  HeightMapObs hm;
  for (int i = 0; i < HeightMapObs::kSize; ++i)
    hm.values[static_cast<std::size_t>(i)] = 0.01 * i;
  const HeightMapObs out = line.process(hm, p, rng);
  for (int i = 0; i < HeightMapObs::kSize; ++i)
    CHECK(out.values[static_cast<std::size_t>(i)] == 0.01 * i);
  CHECK(rng.next_u64() == untouched.next_u64());
}

TEST_CASE("episode z shift is exactly additive") {
  HeightmapDelayLine line;
  HeightmapPerturb p;
  p.ep_shift_z = 0.1;
  Rng rng(5);
  HeightMapObs hm;
  hm.values.assign(HeightMapObs::kSize, -0.8);
  const HeightMapObs out = line.process(hm, p, rng);
  for (Real v : out.values) CHECK(v == -0.8 + 0.1);
}

TEST_CASE("xy shift of one cell translates the map") {
  HeightMapObs hm;
  hm.at(20, 20) = 1.0;
  shift_heightmap(hm, 1, 0, 0.0);
  CHECK(hm.at(21, 20) == 1.0);
  CHECK(hm.at(20, 20) == 0.0);
}

// --- depth rendering ---

TEST_CASE("flat ground, pitch 45: centre pixels read h/sin(45)") {
  const HeightField f = flat_field();
  CameraRig rig;
  rig.pitch_down_deg = 45;
  const DepthQuad q = render_depth(f, 0.0, 0.0, 0.8, 0.0, rig, nullptr);
  const Real expect = 0.8 / std::sin(kPi / 4);
  for (int cam = 0; cam < 4; ++cam)
    for (int r : {15, 16})
      for (int c : {15, 16})
        CHECK(std::abs(q[cam].at(r, c) - expect) < 0.05);
}

TEST_CASE("wall one metre ahead, horizontal centre ray") {
  HeightField f = flat_field();
  fill_rect(f, 1.0, -6.0, 1.6, 6.0, 3.0);
  CameraRig rig;
  rig.pitch_down_deg = 0;
  const DepthQuad q = render_depth(f, 0.0, 0.0, 0.8, 0.0, rig, nullptr);
  for (int r : {15, 16})
    for (int c : {15, 16}) CHECK(std::abs(q[0].at(r, c) - 1.0) < 0.05);

  // the whole front image never sees anything nearer than the wall
  Real dmin = rig.d_max;
  for (Real d : q[0].d) dmin = std::min(dmin, d);
  CHECK(std::abs(dmin - 1.0) < 0.1);
}

TEST_CASE("rays that never hit read d_max exactly") {
  const HeightField f = flat_field();
  const CameraRig rig;
  const DepthQuad q = render_depth(f, 0.0, 0.0, 10.0, 0.0, rig, nullptr);
  for (int cam = 0; cam < 4; ++cam)
    for (Real d : q[cam].d) CHECK(d == rig.d_max);
}

TEST_CASE("depth stays clipped on any terrain") {
  const TerrainGenConfig tcfg;
  Rng rng(77);
  const CameraRig rig;
  for (int trial = 0; trial < 10; ++trial) {
    auto spec = sample_terrain_spec(TerrainKind::Blocks, EvalTier::Hard, tcfg,
                                    rng);
    const HeightField f = generate_terrain(spec, tcfg);
    const DepthQuad q =
        render_depth(f, rng.uniform(-2, 2), rng.uniform(-2, 2), 1.0,
                     rng.uniform(-kPi, kPi), rig, nullptr);
    for (int cam = 0; cam < 4; ++cam)
      for (Real d : q[cam].d) {
        CHECK(d >= rig.d_min);
        CHECK(d <= rig.d_max);
      }
  }
}

TEST_CASE("render counter counts four frames per call") {
  const HeightField f = flat_field();
  const CameraRig rig;
  RenderCounter counter;
  render_depth(f, 0, 0, 0.8, 0, rig, &counter);
  CHECK(counter.frames == 4);
  render_depth(f, 0, 0, 0.8, 0.3, rig, &counter);
  CHECK(counter.frames == 8);
}

TEST_CASE("parallel renderer matches the serial reference bit-exactly") {
  const TerrainGenConfig tcfg;
  Rng rng(99);
  const CameraRig rig;
  for (int trial = 0; trial < 5; ++trial) {
    auto spec = sample_terrain_spec(TerrainKind::Stairs, EvalTier::Hard, tcfg,
                                    rng);
    const HeightField f = generate_terrain(spec, tcfg);
    const Real x = rng.uniform(-3, 3), y = rng.uniform(-3, 3);
    const Real z = rng.uniform(0.5, 1.5), yaw = rng.uniform(-kPi, kPi);
    const DepthQuad a = render_depth(f, x, y, z, yaw, rig, nullptr);
    const DepthQuad b = reference::render_depth(f, x, y, z, yaw, rig, nullptr);
    for (int cam = 0; cam < 4; ++cam)
      for (int i = 0; i < DepthImage::kRes * DepthImage::kRes; ++i)
        CHECK(a[cam].d[i] == b[cam].d[i]);
  }
}

// --- augmentation ---

TEST_CASE("all-zero augmentation is the identity and draws nothing") {
  DepthImage img;
  Rng fill(3);
  for (Real& v : img.d) v = fill.uniform(0.2, 4.0);
  const DepthImage before = img;
  DepthAugment aug;
  aug.noise_std = 0;
  aug.dropout_rate = 0;
  aug.max_shift_px = 0;
  Rng rng(5), untouched(5);
  augment_depth(img, aug, CameraRig{}, rng);
  for (int i = 0; i < DepthImage::kRes * DepthImage::kRes; ++i)
    CHECK(img.d[i] == before.d[i]);
  CHECK(rng.next_u64() == untouched.next_u64());
}

TEST_CASE("noise std comes out as configured") {
  DepthAugment aug;
  aug.noise_std = 0.02;
  aug.dropout_rate = 0;
  aug.max_shift_px = 0;
  Rng rng(7);
  Real sum = 0, sq = 0;
  int n = 0;
  for (int rep = 0; rep < 10; ++rep) {
    DepthImage img;
    for (Real& v : img.d) v = 2.0;  // far from the clip boundaries
    augment_depth(img, aug, CameraRig{}, rng);
    for (Real v : img.d) {
      const Real d = v - 2.0;
      sum += d;
      sq += d * d;
      ++n;
    }
  }
  const Real mean = sum / n;
  const Real stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(stddev - 0.02) < 0.002);
}

TEST_CASE("dropout rate comes out as configured") {
  DepthAugment aug;
  aug.noise_std = 0;
  aug.dropout_rate = 0.1;
  aug.max_shift_px = 0;
  const CameraRig rig;
  Rng rng(9);
  int dropped = 0, n = 0;
  for (int rep = 0; rep < 10; ++rep) {
    DepthImage img;
    for (Real& v : img.d) v = 2.0;
    augment_depth(img, aug, rig, rng);
    for (Real v : img.d) {
      if (v == rig.d_max) ++dropped;
      ++n;
    }
  }
  const Real rate = static_cast<Real>(dropped) / n;
  CHECK(std::abs(rate - 0.1) < 0.02);
}

TEST_CASE("jitter is a clamped translation of at most two pixels") {
  DepthImage img;
  Rng fill(11);
  for (Real& v : img.d) v = fill.uniform(0.3, 3.9);
  const DepthImage src = img;
  DepthAugment aug;
  aug.noise_std = 0;
  aug.dropout_rate = 0;
  aug.max_shift_px = 2;
  Rng rng(13);
  augment_depth(img, aug, CameraRig{}, rng);

  constexpr int R = DepthImage::kRes;
  bool found = false;
  for (int dy = -2; dy <= 2 && !found; ++dy)
    for (int dx = -2; dx <= 2 && !found; ++dx) {
      bool match = true;
      for (int r = 0; r < R && match; ++r)
        for (int c = 0; c < R && match; ++c)
          match = img.at(r, c) ==
                  src.at(std::clamp(r - dy, 0, R - 1),
                         std::clamp(c - dx, 0, R - 1));
      found = match;
    }
  CHECK(found);
}

TEST_CASE("mirror_depth is an involution and swaps the side cameras") {
  Rng rng(15);
  for (int trial = 0; trial < 1000; ++trial) {
    DepthQuad q;
    for (int cam = 0; cam < 4; ++cam)
      for (Real& v : q[cam].d) v = rng.uniform(0.2, 4.0);
    const DepthQuad mm = mirror_depth(mirror_depth(q));
    bool same = true;
    for (int cam = 0; cam < 4; ++cam)
      for (int i = 0; i < DepthImage::kRes * DepthImage::kRes; ++i)
        same = same && mm[cam].d[i] == q[cam].d[i];
    CHECK(same);
  }

  DepthQuad q{};
  q[1].at(4, 7) = 1.5;  // left camera
  const DepthQuad m = mirror_depth(q);
  CHECK(m[3].at(4, DepthImage::kRes - 1 - 7) == 1.5);
}
