#include "omniloco/terrain.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace omniloco {

const char* terrain_kind_name(TerrainKind k) {
  switch (k) {
    case TerrainKind::Flat: return "flat";
    case TerrainKind::Hills: return "hills";
    case TerrainKind::Blocks: return "blocks";
    case TerrainKind::Ridges: return "ridges";
    case TerrainKind::Stairs: return "stairs";
  }
  fail("terrain_kind_name: bad kind");
}

TerrainKind terrain_kind_from_name(const std::string& name) {
  for (int i = 0; i < 5; ++i)
    if (name == terrain_kind_name(static_cast<TerrainKind>(i)))
      return static_cast<TerrainKind>(i);
  fail("terrain_kind_from_name: unknown kind '" + name + "'");
}

const char* eval_tier_name(EvalTier t) {
  switch (t) {
    case EvalTier::Train: return "train";
    case EvalTier::Easy: return "easy";
    case EvalTier::Hard: return "hard";
  }
  fail("eval_tier_name: bad tier");
}

EvalTier eval_tier_from_name(const std::string& name) {
  for (int i = 0; i < 3; ++i)
    if (name == eval_tier_name(static_cast<EvalTier>(i)))
      return static_cast<EvalTier>(i);
  fail("eval_tier_from_name: unknown tier '" + name + "'");
}

Real HeightField::max_height_in_disc(Real x, Real y, Real radius) const {
  const std::size_t ix0 = cell_index_x(x - radius);
  const std::size_t ix1 = cell_index_x(x + radius);
  const std::size_t iy0 = cell_index_y(y - radius);
  const std::size_t iy1 = cell_index_y(y + radius);
  const Real r2 = radius * radius;
  Real best = at(cell_index_x(x), cell_index_y(y));
  for (std::size_t iy = iy0; iy <= iy1; ++iy) {
    const Real cy = origin_y + (static_cast<Real>(iy) + 0.5) * cell_size;
    for (std::size_t ix = ix0; ix <= ix1; ++ix) {
      const Real cx = origin_x + (static_cast<Real>(ix) + 0.5) * cell_size;
      const Real dx = cx - x, dy = cy - y;
      if (dx * dx + dy * dy <= r2 && at(ix, iy) > best) best = at(ix, iy);
    }
  }
  return best;
}

Range terrain_param_range(TerrainKind kind, const char* param, EvalTier tier) {
  const int t = static_cast<int>(tier);  // 0 train, 1 easy, 2 hard
  auto pick = [&](Range train, Range easy, Range hard) {
    return t == 0 ? train : (t == 1 ? easy : hard);
  };
  const std::string p = param;
  switch (kind) {
    case TerrainKind::Ridges:
      if (p == "height") return pick({0.05, 0.6}, {0.05, 0.5}, {0.5, 0.6});
      if (p == "width") return {0.3, 0.8};
      if (p == "gap") return {0.9, 2.2};
      break;
    case TerrainKind::Stairs:
      if (p == "height") return pick({0.05, 0.2}, {0.05, 0.2}, {0.2, 0.3});
      if (p == "length") return pick({0.25, 0.4}, {0.4, 0.4}, {0.25, 0.4});
      if (p == "steps") return pick({4, 28}, {4, 12}, {12, 28});
      break;
    case TerrainKind::Blocks:
      if (p == "length" || p == "width")
        return pick({0.4, 1.0}, {1.0, 1.0}, {0.4, 1.0});
      if (p == "height") return pick({0.05, 0.4}, {0.05, 0.3}, {0.3, 0.5});
      break;
    case TerrainKind::Hills:
      if (p == "amp") return {0.05, 0.25};
      break;
    case TerrainKind::Flat:
      break;
  }
  fail(std::string("terrain_param_range: no parameter '") + param + "' for " +
       terrain_kind_name(kind));
}

TerrainKind sample_terrain_kind(Rng& rng) {
  return sample_terrain_kind(rng, std::span<const Real>(kTerrainKindProbs));
}

TerrainKind sample_terrain_kind(Rng& rng, std::span<const Real> probs) {
  OL_REQUIRE(probs.size() == 5, "sample_terrain_kind: need 5 probabilities");
  return static_cast<TerrainKind>(rng.categorical(probs));
}

TerrainSpec sample_terrain_spec(TerrainKind kind, EvalTier tier,
                                const TerrainGenConfig& cfg, Rng& rng) {
  TerrainSpec s;
  s.kind = kind;
  s.tier = tier;
  auto draw = [&](const char* p) {
    const Range r = terrain_param_range(kind, p, tier);
    return rng.uniform(r.lo, r.hi);
  };
  switch (kind) {
    case TerrainKind::Flat:
      break;
    case TerrainKind::Hills:
      s.hills_amp = draw("amp");
      break;
    case TerrainKind::Blocks: {
      s.block_length = draw("length");
      s.block_width = draw("width");
      s.block_height = draw("height");
      s.block_count = rng.uniform_int(cfg.block_count_lo, cfg.block_count_hi);
      break;
    }
    case TerrainKind::Ridges:
      s.ridge_height = draw("height");
      s.ridge_width = draw("width");
      s.ridge_gap = draw("gap");
      break;
    case TerrainKind::Stairs: {
      s.stair_height = draw("height");
      s.stair_length = draw("length");
      const Range r = terrain_param_range(kind, "steps", tier);
      s.stair_steps = rng.uniform_int(static_cast<int>(r.lo),
                                      static_cast<int>(r.hi));
      break;
    }
  }
  s.seed = rng.next_u64();
  return s;
}

namespace {

void set_rect(HeightField& f, const FeatureRect& r) {
  // Convert the metric rect to cell index ranges; a cell belongs to the rect
  // if its centre does.
  const std::size_t ix0 = f.cell_index_x(r.x0 + 0.5 * f.cell_size);
  const std::size_t ix1 = f.cell_index_x(r.x1 - 0.5 * f.cell_size);
  const std::size_t iy0 = f.cell_index_y(r.y0 + 0.5 * f.cell_size);
  const std::size_t iy1 = f.cell_index_y(r.y1 - 0.5 * f.cell_size);
  for (std::size_t iy = iy0; iy <= iy1; ++iy)
    for (std::size_t ix = ix0; ix <= ix1; ++ix) f.at(ix, iy) = r.h;
}

void carve_spawn_disc(HeightField& f, Real radius) {
  // Map centre is (0,0) by construction.
  for (std::size_t iy = 0; iy < f.depth_cells; ++iy) {
    const Real cy = f.origin_y + (static_cast<Real>(iy) + 0.5) * f.cell_size;
    for (std::size_t ix = 0; ix < f.width_cells; ++ix) {
      const Real cx = f.origin_x + (static_cast<Real>(ix) + 0.5) * f.cell_size;
      if (cx * cx + cy * cy <= radius * radius) f.at(ix, iy) = 0;
    }
  }
}

Real smoothstep(Real t) {
  t = clamp(t, 0, 1);
  return t * t * (3 - 2 * t);
}

void gen_hills(HeightField& f, const TerrainSpec& spec,
               const TerrainGenConfig& cfg, Rng& rng) {
  // Two octaves of lattice value noise with smoothstep interpolation,
  // faded to zero inside the spawn clearing.
  const Real size = cfg.map_size;
  auto make_lattice = [&](Real spacing, std::vector<Real>& vals, int& nx,
                          int& ny) {
    nx = static_cast<int>(size / spacing) + 2;
    ny = nx;
    vals.resize(static_cast<std::size_t>(nx) * ny);
    for (auto& v : vals) v = rng.uniform(-1.0, 1.0);
  };
  std::vector<Real> l1, l2;
  int n1x, n1y, n2x, n2y;
  const Real sp1 = 2.0, sp2 = 1.0;
  make_lattice(sp1, l1, n1x, n1y);
  make_lattice(sp2, l2, n2x, n2y);
  auto sample = [&](const std::vector<Real>& vals, int nx, int ny, Real sp,
                    Real x, Real y) {
    const Real u = (x - f.origin_x) / sp;
    const Real v = (y - f.origin_y) / sp;
    int i = static_cast<int>(std::floor(u));
    int j = static_cast<int>(std::floor(v));
    i = std::max(0, std::min(i, nx - 2));
    j = std::max(0, std::min(j, ny - 2));
    const Real tu = smoothstep(u - i);
    const Real tv = smoothstep(v - j);
    const Real a = vals[static_cast<std::size_t>(j) * nx + i];
    const Real b = vals[static_cast<std::size_t>(j) * nx + i + 1];
    const Real c = vals[static_cast<std::size_t>(j + 1) * nx + i];
    const Real d = vals[static_cast<std::size_t>(j + 1) * nx + i + 1];
    return (a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv;
  };
  const Real rc = cfg.spawn_clear_radius;
  for (std::size_t iy = 0; iy < f.depth_cells; ++iy) {
    const Real cy = f.origin_y + (static_cast<Real>(iy) + 0.5) * f.cell_size;
    for (std::size_t ix = 0; ix < f.width_cells; ++ix) {
      const Real cx = f.origin_x + (static_cast<Real>(ix) + 0.5) * f.cell_size;
      Real h = sample(l1, n1x, n1y, sp1, cx, cy) +
               0.35 * sample(l2, n2x, n2y, sp2, cx, cy);
      h *= spec.hills_amp / 1.35;
      h = clamp(h, -0.3, 0.3);
      const Real r = std::sqrt(cx * cx + cy * cy);
      f.at(ix, iy) = h * smoothstep(r - rc);
    }
  }
}

void gen_blocks(HeightField& f, const TerrainSpec& spec,
                const TerrainGenConfig& cfg, Rng& rng,
                std::vector<FeatureRect>& placed) {
  const Real half = cfg.map_size / 2;
  const Real rc = cfg.spawn_clear_radius;
  for (int b = 0; b < spec.block_count; ++b) {
    bool ok = false;
    for (int attempt = 0; attempt < cfg.placement_retries && !ok; ++attempt) {
      Real lx = spec.block_length, ly = spec.block_width;
      if (rng.uniform() < 0.5) std::swap(lx, ly);  // orientation
      const Real m = cfg.edge_margin;
      const Real cx = rng.uniform(-half + m + lx / 2, half - m - lx / 2);
      const Real cy = rng.uniform(-half + m + ly / 2, half - m - ly / 2);
      FeatureRect r{cx - lx / 2, cy - ly / 2, cx + lx / 2, cy + ly / 2,
                    spec.block_height};
      // Keep clear of the spawn disc: nearest point of the rect to origin.
      const Real nx = clamp(0, r.x0, r.x1);
      const Real ny = clamp(0, r.y0, r.y1);
      if (nx * nx + ny * ny <= (rc + 0.1) * (rc + 0.1)) continue;
      FeatureRect grown{r.x0 - cfg.block_gap, r.y0 - cfg.block_gap,
                        r.x1 + cfg.block_gap, r.y1 + cfg.block_gap, 0};
      bool hit = false;
      for (const auto& p : placed)
        if (grown.overlaps(p)) {
          hit = true;
          break;
        }
      if (hit) continue;
      set_rect(f, r);
      placed.push_back(r);
      ok = true;
    }
    // Retries exhausted: shrink the effective count rather than fault.
  }
}

void gen_ridges(HeightField& f, const TerrainSpec& spec,
                const TerrainGenConfig& cfg, Rng& rng,
                std::vector<FeatureRect>& placed) {
  const Real half = cfg.map_size / 2;
  const int axis = rng.uniform_int(0, 1);  // bands perpendicular to this axis
  Real p = -half + cfg.edge_margin + rng.uniform(0, spec.ridge_gap);
  while (p + spec.ridge_width < half - cfg.edge_margin) {
    FeatureRect r;
    if (axis == 0)
      r = {p, -half, p + spec.ridge_width, half, spec.ridge_height};
    else
      r = {-half, p, half, p + spec.ridge_width, spec.ridge_height};
    set_rect(f, r);
    placed.push_back(r);
    p += spec.ridge_width + spec.ridge_gap;
  }
  carve_spawn_disc(f, cfg.spawn_clear_radius);
}

void gen_stairs(HeightField& f, const TerrainSpec& spec,
                const TerrainGenConfig& cfg, Rng& rng,
                std::vector<FeatureRect>& placed) {
  const Real half = cfg.map_size / 2;
  const int axis = rng.uniform_int(0, 1);
  const Real h = spec.stair_height, len = spec.stair_length;
  const int n = spec.stair_steps;
  // Two flights rising away from the centre on both sides of the spawn
  // clearing; a plateau tops each flight, then steps descend if room remains.
  auto band = [&](Real lo, Real hi, Real height) {
    lo = std::max(lo, -half);
    hi = std::min(hi, half);
    if (hi - lo < f.cell_size) return;
    FeatureRect r;
    if (axis == 0)
      r = {lo, -half, hi, half, height};
    else
      r = {-half, lo, half, hi, height};
    set_rect(f, r);
    placed.push_back(r);
  };
  for (int side : {+1, -1}) {
    Real pos = cfg.stair_start_radius;
    for (int k = 1; k <= n; ++k) {
      const Real lo = pos, hi = pos + len;
      band(side > 0 ? lo : -hi, side > 0 ? hi : -lo, k * h);
      pos = hi;
    }
    const Real plo = pos, phi = pos + cfg.stair_plateau;
    band(side > 0 ? plo : -phi, side > 0 ? phi : -plo, n * h);
    pos = phi;
    for (int k = n - 1; k >= 1 && pos < half; --k) {
      const Real lo = pos, hi = pos + len;
      band(side > 0 ? lo : -hi, side > 0 ? hi : -lo, k * h);
      pos = hi;
    }
  }
}

}  // namespace

HeightField generate_terrain(const TerrainSpec& spec,
                             const TerrainGenConfig& cfg,
                             std::vector<FeatureRect>* footprints) {
  const auto cells =
      static_cast<std::size_t>(std::llround(cfg.map_size / cfg.cell_size));
  HeightField f(cells, cells, cfg.cell_size, -cfg.map_size / 2,
                -cfg.map_size / 2);
  Rng rng(spec.seed);
  std::vector<FeatureRect> placed;
  switch (spec.kind) {
    case TerrainKind::Flat:
      break;
    case TerrainKind::Hills:
      gen_hills(f, spec, cfg, rng);
      break;
    case TerrainKind::Blocks:
      gen_blocks(f, spec, cfg, rng, placed);
      break;
    case TerrainKind::Ridges:
      gen_ridges(f, spec, cfg, rng, placed);
      break;
    case TerrainKind::Stairs:
      gen_stairs(f, spec, cfg, rng, placed);
      break;
  }
  if (footprints) *footprints = std::move(placed);
  return f;
}

HeightField mirror_field(const HeightField& f, Real axis_y) {
  HeightField out(f.width_cells, f.depth_cells, f.cell_size, f.origin_x,
                  f.origin_y);
  for (std::size_t iy = 0; iy < f.depth_cells; ++iy) {
    const Real cy = f.origin_y + (static_cast<Real>(iy) + 0.5) * f.cell_size;
    const Real ry = 2 * axis_y - cy;
    const long src =
        std::lround((ry - f.origin_y) / f.cell_size - 0.5);
    OL_REQUIRE(src >= 0 && src < static_cast<long>(f.depth_cells),
               "mirror_field: axis reflects rows outside the grid");
    for (std::size_t ix = 0; ix < f.width_cells; ++ix)
      out.at(ix, iy) = f.at(ix, static_cast<std::size_t>(src));
  }
  return out;
}

void save_heightfield(const HeightField& f, const TerrainSpec* spec,
                      const std::string& path) {
  std::ofstream os(path);
  OL_REQUIRE(os.good(), "save_heightfield: cannot open " + path);
  os << "omniloco-terrain v1\n";
  const TerrainSpec s = spec ? *spec : TerrainSpec{};
  os << "kind " << terrain_kind_name(s.kind) << '\n';
  os << "tier " << eval_tier_name(s.tier) << '\n';
  os << "seed " << s.seed << '\n';
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "params %.17g %.17g %.17g %.17g %.17g %d %.17g %.17g %.17g %d "
                "%.17g\n",
                s.ridge_height, s.ridge_width, s.ridge_gap, s.stair_height,
                s.stair_length, s.stair_steps, s.block_length, s.block_width,
                s.block_height, s.block_count, s.hills_amp);
  os << buf;
  os << "cells " << f.width_cells << ' ' << f.depth_cells << '\n';
  std::snprintf(buf, sizeof buf, "cell_size %.17g\norigin %.17g %.17g\n",
                f.cell_size, f.origin_x, f.origin_y);
  os << buf;
  os << "heights\n";
  for (std::size_t iy = 0; iy < f.depth_cells; ++iy) {
    for (std::size_t ix = 0; ix < f.width_cells; ++ix) {
      std::snprintf(buf, sizeof buf, "%.17g", f.at(ix, iy));
      os << buf << (ix + 1 == f.width_cells ? '\n' : ' ');
    }
  }
  OL_REQUIRE(os.good(), "save_heightfield: write failed for " + path);
}

HeightField load_heightfield(const std::string& path, TerrainSpec* spec_out) {
  std::ifstream is(path);
  OL_REQUIRE(is.good(), "load_heightfield: cannot open " + path);
  std::string magic, version;
  is >> magic >> version;
  OL_REQUIRE(magic == "omniloco-terrain" && version == "v1",
             "load_heightfield: bad header in " + path);
  TerrainSpec s;
  std::string key, val;
  is >> key >> val;
  OL_REQUIRE(key == "kind", "load_heightfield: expected kind");
  s.kind = terrain_kind_from_name(val);
  is >> key >> val;
  OL_REQUIRE(key == "tier", "load_heightfield: expected tier");
  s.tier = eval_tier_from_name(val);
  is >> key >> s.seed;
  OL_REQUIRE(key == "seed", "load_heightfield: expected seed");
  is >> key >> s.ridge_height >> s.ridge_width >> s.ridge_gap >>
      s.stair_height >> s.stair_length >> s.stair_steps >> s.block_length >>
      s.block_width >> s.block_height >> s.block_count >> s.hills_amp;
  OL_REQUIRE(key == "params", "load_heightfield: expected params");
  std::size_t w = 0, d = 0;
  is >> key >> w >> d;
  OL_REQUIRE(key == "cells" && w > 0 && d > 0,
             "load_heightfield: bad cells line");
  Real cell = 0, ox = 0, oy = 0;
  is >> key >> cell;
  OL_REQUIRE(key == "cell_size" && cell > 0,
             "load_heightfield: bad cell_size");
  is >> key >> ox >> oy;
  OL_REQUIRE(key == "origin", "load_heightfield: bad origin");
  is >> key;
  OL_REQUIRE(key == "heights", "load_heightfield: expected heights");
  HeightField f(w, d, cell, ox, oy);
  for (std::size_t iy = 0; iy < d; ++iy)
    for (std::size_t ix = 0; ix < w; ++ix) is >> f.at(ix, iy);
  OL_REQUIRE(!is.fail(), "load_heightfield: truncated height data");
  if (spec_out) *spec_out = s;
  return f;
}

void write_preview_pgm(const HeightField& f, const std::string& path) {
  Real lo = f.heights.empty() ? 0 : f.heights[0], hi = lo;
  for (Real h : f.heights) {
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  const Real span = hi - lo;
  std::ofstream os(path, std::ios::binary);
  OL_REQUIRE(os.good(), "write_preview_pgm: cannot open " + path);
  os << "P5\n" << f.width_cells << ' ' << f.depth_cells << "\n255\n";
  std::vector<unsigned char> row(f.width_cells);
  // Top row of the image = max y, so the preview reads like a map.
  for (std::size_t iy = f.depth_cells; iy-- > 0;) {
    for (std::size_t ix = 0; ix < f.width_cells; ++ix) {
      const Real v = span > 0 ? (f.at(ix, iy) - lo) / span : 0.5;
      row[ix] = static_cast<unsigned char>(std::lround(v * 255));
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  OL_REQUIRE(os.good(), "write_preview_pgm: write failed");
}

}  // namespace omniloco
