#include "omniloco/perception.hpp"

#include <algorithm>
#include <cmath>

#include "omniloco/parallel.hpp"

namespace omniloco {

HeightMapObs extract_heightmap(const HeightField& field, Real base_x,
                               Real base_y, Real base_z, Real yaw) {
  HeightMapObs hm;
  const Real c = std::cos(yaw), s = std::sin(yaw);
  for (int ix = 0; ix < HeightMapObs::kCellsX; ++ix) {
    const Real bx = HeightMapObs::cell_x(ix);
    for (int iy = 0; iy < HeightMapObs::kCellsY; ++iy) {
      const Real by = HeightMapObs::cell_y(iy);
      const Real wx = base_x + c * bx - s * by;
      const Real wy = base_y + s * bx + c * by;
      hm.at(ix, iy) = field.height_at(wx, wy) - base_z;
    }
  }
  return hm;
}

void concat_quadrants(const HeightMapObs& hm, Real* out) {
  // front third, left half of middle, back third, right half of middle
  std::size_t k = 0;
  for (int ix = 40; ix < 60; ++ix)
    for (int iy = 0; iy < 40; ++iy) out[k++] = hm.at(ix, iy);
  for (int ix = 20; ix < 40; ++ix)
    for (int iy = 20; iy < 40; ++iy) out[k++] = hm.at(ix, iy);
  for (int ix = 0; ix < 20; ++ix)
    for (int iy = 0; iy < 40; ++iy) out[k++] = hm.at(ix, iy);
  for (int ix = 20; ix < 40; ++ix)
    for (int iy = 0; iy < 20; ++iy) out[k++] = hm.at(ix, iy);
  OL_REQUIRE(k == HeightMapObs::kSize, "concat_quadrants: bad layout");
}

HeightMapObs mirror_heightmap(const HeightMapObs& hm) {
  HeightMapObs out;
  for (int ix = 0; ix < HeightMapObs::kCellsX; ++ix)
    for (int iy = 0; iy < HeightMapObs::kCellsY; ++iy)
      out.at(ix, iy) = hm.at(ix, HeightMapObs::kCellsY - 1 - iy);
  return out;
}

void shift_heightmap(HeightMapObs& hm, int dx_cells, int dy_cells, Real dz) {
  if (dx_cells != 0 || dy_cells != 0) {
    HeightMapObs src = hm;
    for (int ix = 0; ix < HeightMapObs::kCellsX; ++ix) {
      const int sx = std::clamp(ix - dx_cells, 0, HeightMapObs::kCellsX - 1);
      for (int iy = 0; iy < HeightMapObs::kCellsY; ++iy) {
        const int sy = std::clamp(iy - dy_cells, 0, HeightMapObs::kCellsY - 1);
        hm.at(ix, iy) = src.at(sx, sy);
      }
    }
  }
  if (dz != 0)
    for (Real& v : hm.values) v += dz;
}

HeightMapObs HeightmapDelayLine::process(HeightMapObs raw,
                                         const HeightmapPerturb& p, Rng& rng) {
  hist_.push_back(std::move(raw));
  const std::size_t keep = static_cast<std::size_t>(p.delay_ticks) + 1;
  while (hist_.size() > keep) hist_.pop_front();
  // Early in the episode the oldest frame stands in for the delayed one.
  HeightMapObs out = hist_.front();
  Real sx = p.ep_shift_x, sy = p.ep_shift_y, sz = p.ep_shift_z;
  if (p.step_shift_xy > 0) {
    sx += rng.uniform(-p.step_shift_xy, p.step_shift_xy);
    sy += rng.uniform(-p.step_shift_xy, p.step_shift_xy);
  }
  if (p.step_shift_z > 0) sz += rng.uniform(-p.step_shift_z, p.step_shift_z);
  const int dx = static_cast<int>(std::llround(sx / HeightMapObs::kCell));
  const int dy = static_cast<int>(std::llround(sy / HeightMapObs::kCell));
  if (dx != 0 || dy != 0 || sz != 0) shift_heightmap(out, dx, dy, sz);
  return out;
}

// ---------------------------------------------------------------------------
// Depth rendering
// ---------------------------------------------------------------------------

Real trace_depth_ray(const HeightField& field, Real ox, Real oy, Real oz,
                     Real dx, Real dy, Real dz, Real d_min, Real d_max) {
  // Amanatides-Woo traversal over the 2D cell grid.  Within one cell the
  // surface is the horizontal plane of that cell's height: a ray entering
  // below the plane hit the vertical face at the entry point; a descending
  // ray hits the top face where z crosses the plane.  Cell lookups clamp to
  // the grid so terrain continues outward past the map edge.
  const Real cs = field.cell_size;
  const long nx = static_cast<long>(field.width_cells);
  const long ny = static_cast<long>(field.depth_cells);
  long ix = static_cast<long>(std::floor((ox - field.origin_x) / cs));
  long iy = static_cast<long>(std::floor((oy - field.origin_y) / cs));

  const long step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const long step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const Real inv_dx = step_x != 0 ? 1.0 / dx : 0.0;
  const Real inv_dy = step_y != 0 ? 1.0 / dy : 0.0;

  auto boundary_x = [&](long i) { return field.origin_x + i * cs; };
  auto boundary_y = [&](long i) { return field.origin_y + i * cs; };

  Real t_max_x = step_x != 0
                     ? (boundary_x(ix + (step_x > 0 ? 1 : 0)) - ox) * inv_dx
                     : d_max * 2;
  Real t_max_y = step_y != 0
                     ? (boundary_y(iy + (step_y > 0 ? 1 : 0)) - oy) * inv_dy
                     : d_max * 2;
  const Real t_delta_x = step_x != 0 ? cs * std::abs(inv_dx) : 0;
  const Real t_delta_y = step_y != 0 ? cs * std::abs(inv_dy) : 0;

  Real t_entry = 0;
  while (t_entry < d_max) {
    const long cx = std::clamp(ix, 0L, nx - 1);
    const long cy = std::clamp(iy, 0L, ny - 1);
    const Real h = field.at(static_cast<std::size_t>(cx),
                            static_cast<std::size_t>(cy));
    const Real z_entry = oz + dz * t_entry;
    if (z_entry <= h) return clamp(t_entry, d_min, d_max);  // vertical face
    if (dz < 0) {
      const Real t_top = (h - oz) / dz;
      const Real t_exit = std::min(std::min(t_max_x, t_max_y), d_max);
      if (t_top <= t_exit) return clamp(t_top, d_min, d_max);  // top face
    }
    if (t_max_x <= t_max_y) {
      t_entry = t_max_x;
      t_max_x += t_delta_x;
      ix += step_x;
    } else {
      t_entry = t_max_y;
      t_max_y += t_delta_y;
      iy += step_y;
    }
    if (step_x == 0 && step_y == 0) break;  // vertical ray, single cell
  }
  return d_max;
}

namespace {

struct CamBasis {
  Real fx, fy, fz;  // forward
  Real rx, ry, rz;  // image right
  Real ux, uy, uz;  // image up
};

CamBasis camera_basis(Real yaw, Real pitch_down_deg) {
  const Real p = pitch_down_deg * kPi / 180.0;
  const Real cy = std::cos(yaw), sy = std::sin(yaw);
  const Real cp = std::cos(p), sp = std::sin(p);
  CamBasis b;
  b.fx = cp * cy;
  b.fy = cp * sy;
  b.fz = -sp;
  b.rx = sy;
  b.ry = -cy;
  b.rz = 0;
  b.ux = sp * cy;
  b.uy = sp * sy;
  b.uz = cp;
  return b;
}

void render_row(const HeightField& field, const CamBasis& b, Real half_tan,
                Real ox, Real oy, Real oz, Real d_min, Real d_max, int row,
                DepthImage& img) {
  constexpr int R = DepthImage::kRes;
  const Real v = (1.0 - 2.0 * (row + 0.5) / R) * half_tan;
  for (int col = 0; col < R; ++col) {
    const Real u = (2.0 * (col + 0.5) / R - 1.0) * half_tan;
    Real dx = b.fx + u * b.rx + v * b.ux;
    Real dy = b.fy + u * b.ry + v * b.uy;
    Real dz = b.fz + u * b.rz + v * b.uz;
    const Real inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
    dx *= inv;
    dy *= inv;
    dz *= inv;
    img.at(row, col) =
        trace_depth_ray(field, ox, oy, oz, dx, dy, dz, d_min, d_max);
  }
}

template <bool Parallel>
DepthQuad render_depth_impl(const HeightField& field, Real base_x, Real base_y,
                            Real base_z, Real yaw, const CameraRig& rig,
                            RenderCounter* counter) {
  DepthQuad out;
  const Real half_tan = std::tan(rig.fov_deg * kPi / 360.0);
  const Real oz = base_z + rig.height_offset;
  std::array<CamBasis, 4> basis;
  for (int c = 0; c < 4; ++c)
    basis[c] =
        camera_basis(yaw + rig.yaw_offset_deg[c] * kPi / 180.0,
                     rig.pitch_down_deg);
  constexpr int R = DepthImage::kRes;
  if constexpr (Parallel) {
    parallel::for_each_index(4 * R, [&](std::size_t task) {
      const int cam = static_cast<int>(task) / R;
      const int row = static_cast<int>(task) % R;
      render_row(field, basis[cam], half_tan, base_x, base_y, oz, rig.d_min,
                 rig.d_max, row, out[cam]);
    });
  } else {
    for (int cam = 0; cam < 4; ++cam)
      for (int row = 0; row < R; ++row)
        render_row(field, basis[cam], half_tan, base_x, base_y, oz, rig.d_min,
                   rig.d_max, row, out[cam]);
  }
  if (counter) counter->frames += 4;
  return out;
}

}  // namespace

DepthQuad render_depth(const HeightField& field, Real base_x, Real base_y,
                       Real base_z, Real yaw, const CameraRig& rig,
                       RenderCounter* counter) {
  return render_depth_impl<true>(field, base_x, base_y, base_z, yaw, rig,
                                 counter);
}

namespace reference {
DepthQuad render_depth(const HeightField& field, Real base_x, Real base_y,
                       Real base_z, Real yaw, const CameraRig& rig,
                       RenderCounter* counter) {
  return render_depth_impl<false>(field, base_x, base_y, base_z, yaw, rig,
                                  counter);
}
}  // namespace reference

void augment_depth(DepthImage& img, const DepthAugment& aug,
                   const CameraRig& rig, Rng& rng) {
  constexpr int R = DepthImage::kRes;
  if (aug.max_shift_px > 0) {
    const int dx = rng.uniform_int(-aug.max_shift_px, aug.max_shift_px);
    const int dy = rng.uniform_int(-aug.max_shift_px, aug.max_shift_px);
    if (dx != 0 || dy != 0) {
      DepthImage src = img;
      for (int r = 0; r < R; ++r) {
        const int sr = std::clamp(r - dy, 0, R - 1);
        for (int c = 0; c < R; ++c)
          img.at(r, c) = src.at(sr, std::clamp(c - dx, 0, R - 1));
      }
    }
  }
  if (aug.noise_std > 0)
    for (Real& v : img.d) v += rng.normal(0, aug.noise_std);
  if (aug.dropout_rate > 0)
    for (Real& v : img.d)
      if (rng.uniform() < aug.dropout_rate) v = rig.d_max;
  if (aug.max_shift_px > 0 || aug.noise_std > 0 || aug.dropout_rate > 0)
    for (Real& v : img.d) v = clamp(v, rig.d_min, rig.d_max);
}

DepthQuad mirror_depth(const DepthQuad& q) {
  DepthQuad out;
  constexpr int R = DepthImage::kRes;
  const std::array<int, 4> src_cam = {0, 3, 2, 1};  // swap left/right cameras
  for (int cam = 0; cam < 4; ++cam)
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < R; ++c)
        out[cam].at(r, c) = q[src_cam[cam]].at(r, R - 1 - c);
  return out;
}

}  // namespace omniloco
