#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "omniloco/rng.hpp"
#include "omniloco/terrain.hpp"

using namespace omniloco;

TEST_CASE("kind frequencies match the sampling distribution") {
  Rng rng(2024);
  std::array<int, 5> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    ++counts[static_cast<int>(sample_terrain_kind(rng))];
  for (int k = 0; k < 5; ++k) {
    const Real freq = static_cast<Real>(counts[k]) / n;
    CHECK(std::abs(freq - kTerrainKindProbs[k]) < 0.01);
  }
}

TEST_CASE("sampled spec parameters stay inside their tier ranges") {
  const TerrainGenConfig cfg;
  Rng rng(5);
  for (EvalTier tier : {EvalTier::Train, EvalTier::Easy, EvalTier::Hard}) {
    for (int i = 0; i < 200; ++i) {
      auto in = [&](TerrainKind k, const char* p, Real v) {
        const Range r = terrain_param_range(k, p, tier);
        CHECK(v >= r.lo);
        CHECK(v <= r.hi);
      };
      {
        const auto s =
            sample_terrain_spec(TerrainKind::Ridges, tier, cfg, rng);
        in(TerrainKind::Ridges, "height", s.ridge_height);
        in(TerrainKind::Ridges, "width", s.ridge_width);
        in(TerrainKind::Ridges, "gap", s.ridge_gap);
      }
      {
        const auto s =
            sample_terrain_spec(TerrainKind::Stairs, tier, cfg, rng);
        in(TerrainKind::Stairs, "height", s.stair_height);
        in(TerrainKind::Stairs, "length", s.stair_length);
        in(TerrainKind::Stairs, "steps", static_cast<Real>(s.stair_steps));
      }
      {
        const auto s =
            sample_terrain_spec(TerrainKind::Blocks, tier, cfg, rng);
        in(TerrainKind::Blocks, "length", s.block_length);
        in(TerrainKind::Blocks, "width", s.block_width);
        in(TerrainKind::Blocks, "height", s.block_height);
        CHECK(s.block_count >= cfg.block_count_lo);
        CHECK(s.block_count <= cfg.block_count_hi);
      }
    }
  }
}

TEST_CASE("same spec generates the same field") {
  const TerrainGenConfig cfg;
  Rng rng(9);
  auto spec = sample_terrain_spec(TerrainKind::Blocks, EvalTier::Hard, cfg, rng);
  spec.seed = 31337;
  const HeightField a = generate_terrain(spec, cfg);
  const HeightField b = generate_terrain(spec, cfg);
  REQUIRE(a.heights.size() == b.heights.size());
  for (std::size_t i = 0; i < a.heights.size(); ++i)
    CHECK(a.heights[i] == b.heights[i]);
}

TEST_CASE("block footprints never overlap and keep the spawn clear") {
  const TerrainGenConfig cfg;
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto spec =
        sample_terrain_spec(TerrainKind::Blocks, EvalTier::Hard, cfg, rng);
    spec.seed = 1000 + trial;
    std::vector<FeatureRect> rects;
    generate_terrain(spec, cfg, &rects);
    REQUIRE(!rects.empty());
    for (std::size_t i = 0; i < rects.size(); ++i) {
      for (std::size_t j = i + 1; j < rects.size(); ++j)
        CHECK(!rects[i].overlaps(rects[j]));
      // spawn disc stays clear: nearest point of the footprint to the map
      // centre lies outside the clear radius
      const Real nx = std::clamp(0.0, rects[i].x0, rects[i].x1);
      const Real ny = std::clamp(0.0, rects[i].y0, rects[i].y1);
      CHECK(nx * nx + ny * ny >
            cfg.spawn_clear_radius * cfg.spawn_clear_radius);
    }
  }
}

TEST_CASE("flat spawn zone really is flat") {
  const TerrainGenConfig cfg;
  Rng rng(23);
  for (TerrainKind k : {TerrainKind::Hills, TerrainKind::Blocks,
                        TerrainKind::Ridges, TerrainKind::Stairs}) {
    auto spec = sample_terrain_spec(k, EvalTier::Hard, cfg, rng);
    const HeightField f = generate_terrain(spec, cfg);
    // sample the spawn disc interior
    for (Real x = -1.5; x <= 1.5; x += 0.25)
      for (Real y = -1.5; y <= 1.5; y += 0.25)
        if (x * x + y * y <= 1.5 * 1.5) CHECK(f.height_at(x, y) == 0.0);
  }
}

TEST_CASE("cell boundary queries resolve to the lower cell") {
  HeightField f(4, 4, 0.5, 0.0, 0.0);
  f.at(0, 0) = 1.0;
  f.at(1, 0) = 2.0;
  // x = 0.5 is the shared edge of cells 0 and 1: lower cell wins
  CHECK(f.cell_index_x(0.5) == 0);
  CHECK(f.height_at(0.5, 0.1) == 1.0);
  CHECK(f.cell_index_x(0.5000001) == 1);
  // clamping outside the grid
  CHECK(f.cell_index_x(-3.0) == 0);
  CHECK(f.cell_index_x(99.0) == 3);
}

TEST_CASE("max_height_in_disc keys on cell centres") {
  HeightField f(40, 40, 0.05, -1.0, -1.0);
  f.at(30, 20) = 0.7;  // cell centre (0.525, 0.025)
  CHECK(f.max_height_in_disc(0.47, 0.025, 0.06) == 0.7);
  CHECK(f.max_height_in_disc(0.47, 0.025, 0.05) == 0.0);
}

TEST_CASE("mirror_field is an involution") {
  const TerrainGenConfig cfg;
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const auto kind = sample_terrain_kind(rng);
    auto spec = sample_terrain_spec(kind, EvalTier::Train, cfg, rng);
    spec.seed = rng.next_u64();
    const HeightField f = generate_terrain(spec, cfg);
    const Real axis = f.origin_y + 0.5 * f.extent_y();
    const HeightField m = mirror_field(f, axis);
    const HeightField mm = mirror_field(m, axis);
    REQUIRE(mm.heights.size() == f.heights.size());
    for (std::size_t i = 0; i < f.heights.size(); ++i)
      CHECK(mm.heights[i] == f.heights[i]);
  }
}

TEST_CASE("mirror_field actually reflects") {
  HeightField f(4, 6, 0.5, 0.0, 0.0);
  f.at(2, 1) = 3.0;
  const HeightField m = mirror_field(f, 0.5 * f.extent_y());
  CHECK(m.at(2, 4) == 3.0);
  CHECK(m.at(2, 1) == 0.0);
}

TEST_CASE("heightfield save/load round-trips bit-exactly") {
  const TerrainGenConfig cfg;
  Rng rng(31);
  auto spec = sample_terrain_spec(TerrainKind::Stairs, EvalTier::Easy, cfg, rng);
  spec.seed = 777;
  const HeightField f = generate_terrain(spec, cfg);
  const std::string path = "test_terrain_roundtrip.hf";
  save_heightfield(f, &spec, path);
  TerrainSpec spec2;
  const HeightField g = load_heightfield(path, &spec2);
  std::remove(path.c_str());

  CHECK(g.width_cells == f.width_cells);
  CHECK(g.depth_cells == f.depth_cells);
  CHECK(g.cell_size == f.cell_size);
  CHECK(g.origin_x == f.origin_x);
  CHECK(g.origin_y == f.origin_y);
  for (std::size_t i = 0; i < f.heights.size(); ++i)
    CHECK(g.heights[i] == f.heights[i]);
  CHECK(spec2.kind == spec.kind);
  CHECK(spec2.tier == spec.tier);
  CHECK(spec2.seed == spec.seed);
  CHECK(spec2.stair_height == spec.stair_height);
  CHECK(spec2.stair_steps == spec.stair_steps);
}

TEST_CASE("kind and tier names round-trip") {
  for (int k = 0; k < 5; ++k) {
    const auto kind = static_cast<TerrainKind>(k);
    CHECK(terrain_kind_from_name(terrain_kind_name(kind)) == kind);
  }
  for (int t = 0; t < 3; ++t) {
    const auto tier = static_cast<EvalTier>(t);
    CHECK(eval_tier_from_name(eval_tier_name(tier)) == tier);
  }
  CHECK_THROWS(terrain_kind_from_name("lava"));
}
