#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "omniloco/common.hpp"
#include "omniloco/rng.hpp"

namespace omniloco {

enum class TerrainKind { Flat = 0, Hills = 1, Blocks = 2, Ridges = 3, Stairs = 4 };

inline constexpr std::array<Real, 5> kTerrainKindProbs = {0.03, 0.07, 0.35,
                                                          0.20, 0.35};

const char* terrain_kind_name(TerrainKind k);
TerrainKind terrain_kind_from_name(const std::string& name);

enum class EvalTier { Train = 0, Easy = 1, Hard = 2 };

const char* eval_tier_name(EvalTier t);
EvalTier eval_tier_from_name(const std::string& name);

// Piecewise-constant heightfield on a regular grid.  Cell (ix, iy) covers
// [origin + i*cell, origin + (i+1)*cell] on each axis; a query exactly on a
// cell boundary resolves to the lower-index cell.
struct HeightField {
  std::size_t width_cells = 0;  // x
  std::size_t depth_cells = 0;  // y
  Real cell_size = 0.05;
  Real origin_x = 0, origin_y = 0;
  std::vector<Real> heights;  // [iy * width_cells + ix]

  HeightField() = default;
  HeightField(std::size_t w, std::size_t d, Real cell, Real ox, Real oy)
      : width_cells(w),
        depth_cells(d),
        cell_size(cell),
        origin_x(ox),
        origin_y(oy),
        heights(w * d, 0) {}

  Real& at(std::size_t ix, std::size_t iy) {
    return heights[iy * width_cells + ix];
  }
  Real at(std::size_t ix, std::size_t iy) const {
    return heights[iy * width_cells + ix];
  }

  Real extent_x() const { return static_cast<Real>(width_cells) * cell_size; }
  Real extent_y() const { return static_cast<Real>(depth_cells) * cell_size; }

  // Continuous coordinate -> cell index with the boundary-to-lower-cell rule,
  // clamped to the grid (queries outside the extent get the boundary cell).
  std::size_t cell_index_x(Real x) const {
    return cell_index(x, origin_x, width_cells, cell_size);
  }
  std::size_t cell_index_y(Real y) const {
    return cell_index(y, origin_y, depth_cells, cell_size);
  }

  Real height_at(Real x, Real y) const {
    return at(cell_index_x(x), cell_index_y(y));
  }

  Real max_height_in_disc(Real x, Real y, Real radius) const;

 private:
  // ceil(t)-1 instead of floor(t) so an exact boundary value lands in the
  // lower cell.
  static std::size_t cell_index(Real v, Real origin, std::size_t n,
                                Real cell) {
    const Real t = (v - origin) / cell;
    long idx = static_cast<long>(std::ceil(t)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long>(n)) idx = static_cast<long>(n) - 1;
    return static_cast<std::size_t>(idx);
  }
};

// Axis-aligned feature footprint, exposed for placement tests.
struct FeatureRect {
  Real x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  Real h = 0;
  bool overlaps(const FeatureRect& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
};

// Per-kind parameter ranges for one difficulty tier.
struct Range {
  Real lo = 0, hi = 0;
};
Range terrain_param_range(TerrainKind kind, const char* param, EvalTier tier);

struct TerrainGenConfig {
  Real map_size = 12.0;
  Real cell_size = 0.05;
  Real spawn_clear_radius = 2.0;
  Real edge_margin = 0.3;
  int block_count_lo = 16;
  int block_count_hi = 28;
  Real block_gap = 0.10;          // min clearance between block footprints
  Real stair_start_radius = 2.2;  // first riser distance from map centre
  Real stair_plateau = 1.5;
  int placement_retries = 100;
};

// Fully resolved terrain description: kind, sampled parameter values, and the
// seed that generate_terrain() expands deterministically.
struct TerrainSpec {
  TerrainKind kind = TerrainKind::Flat;
  EvalTier tier = EvalTier::Train;
  std::uint64_t seed = 0;

  Real ridge_height = 0, ridge_width = 0, ridge_gap = 0;
  Real stair_height = 0, stair_length = 0;
  int stair_steps = 0;
  Real block_length = 0, block_width = 0, block_height = 0;
  int block_count = 0;
  Real hills_amp = 0;
};

TerrainKind sample_terrain_kind(Rng& rng);
TerrainKind sample_terrain_kind(Rng& rng, std::span<const Real> probs);

TerrainSpec sample_terrain_spec(TerrainKind kind, EvalTier tier,
                                const TerrainGenConfig& cfg, Rng& rng);

HeightField generate_terrain(const TerrainSpec& spec,
                             const TerrainGenConfig& cfg,
                             std::vector<FeatureRect>* footprints = nullptr);

// Reflection about the line y = axis_y.  The axis must map every cell centre
// onto another cell centre inside the grid (always true for the map centre).
HeightField mirror_field(const HeightField& f, Real axis_y);

void save_heightfield(const HeightField& f, const TerrainSpec* spec,
                      const std::string& path);
HeightField load_heightfield(const std::string& path,
                             TerrainSpec* spec_out = nullptr);

void write_preview_pgm(const HeightField& f, const std::string& path);

}  // namespace omniloco
