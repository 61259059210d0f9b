#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <vector>

#include "omniloco/common.hpp"
#include "omniloco/rng.hpp"
#include "omniloco/terrain.hpp"

namespace omniloco {

// Counts rendered depth frames (one per camera per render call); the
// distillation logs report this as the rendering cost of a run.
struct RenderCounter {
  std::uint64_t frames = 0;
};

// ---------------------------------------------------------------------------
// Height-map observation: a yaw-aligned 60x40 grid of terrain heights (5 cm
// cells) spanning 1 m behind to 2 m ahead and 1 m to each side, relative to
// the base height.
// ---------------------------------------------------------------------------
struct HeightMapObs {
  static constexpr int kCellsX = 60;  // along body x, index 0 = rearmost
  static constexpr int kCellsY = 40;  // along body y, index 0 = rightmost
  static constexpr Real kCell = 0.05;
  static constexpr int kSize = kCellsX * kCellsY;  // 2400

  std::vector<Real> values;  // [ix * kCellsY + iy]

  HeightMapObs() : values(kSize, 0) {}

  Real& at(int ix, int iy) { return values[ix * kCellsY + iy]; }
  Real at(int ix, int iy) const { return values[ix * kCellsY + iy]; }

  // Body-frame coordinates of a cell centre.
  static Real cell_x(int ix) { return (ix - 19.5) * kCell; }
  static Real cell_y(int iy) { return (iy - 19.5) * kCell; }
};

HeightMapObs extract_heightmap(const HeightField& field, Real base_x,
                               Real base_y, Real base_z, Real yaw);

// Quadrant concatenation feeding the teacher encoder: front third, left half
// of the middle third, back third, right half of the middle third.
inline constexpr int kQuadrantConcatSize = HeightMapObs::kSize;
void concat_quadrants(const HeightMapObs& hm, Real* out2400);

HeightMapObs mirror_heightmap(const HeightMapObs& hm);

// Integer-cell translation with edge clamping plus a vertical offset.
void shift_heightmap(HeightMapObs& hm, int dx_cells, int dy_cells, Real dz);

// Per-episode height-map perturbation draws; per-step jitter bounds are
// applied on top at every tick.
struct HeightmapPerturb {
  Real ep_shift_x = 0, ep_shift_y = 0;  // metres
  Real ep_shift_z = 0;
  int delay_ticks = 0;       // observation age in control ticks
  Real step_shift_xy = 0;    // uniform bound per tick, metres (0 = off)
  Real step_shift_z = 0;
};

// Applies the observation delay + shifts.  Holds the raw-map history; one
// instance per environment, reset at episode start.
class HeightmapDelayLine {
 public:
  void reset() { hist_.clear(); }

  // Consumes this tick's raw extraction and returns what the policy sees.
  // Per-step draws (x, y, z in that order) happen iff the bound is nonzero.
  HeightMapObs process(HeightMapObs raw, const HeightmapPerturb& p, Rng& rng);

 private:
  std::deque<HeightMapObs> hist_;
};

// ---------------------------------------------------------------------------
// Depth cameras: four 32x32 pinhole cameras at yaw offsets 0/90/180/270 deg,
// pitched 50 deg down, 75 deg FOV.  Depth is Euclidean distance along the
// ray, clipped to [0.2, 4]; misses read 4.
// ---------------------------------------------------------------------------
struct DepthImage {
  static constexpr int kRes = 32;
  std::array<Real, kRes * kRes> d{};

  Real& at(int row, int col) { return d[row * kRes + col]; }
  Real at(int row, int col) const { return d[row * kRes + col]; }
};

struct CameraRig {
  Real fov_deg = 75;
  Real pitch_down_deg = 50;
  Real d_min = 0.2;
  Real d_max = 4.0;
  Real height_offset = 0;  // camera z relative to base z
  std::array<Real, 4> yaw_offset_deg = {0, 90, 180, 270};
};

using DepthQuad = std::array<DepthImage, 4>;

DepthQuad render_depth(const HeightField& field, Real base_x, Real base_y,
                       Real base_z, Real yaw, const CameraRig& rig,
                       RenderCounter* counter);

namespace reference {
// Serial renderer kept as the oracle for the OpenMP one (bit-identical).
DepthQuad render_depth(const HeightField& field, Real base_x, Real base_y,
                       Real base_z, Real yaw, const CameraRig& rig,
                       RenderCounter* counter);
}  // namespace reference

// Single-ray tracer, exposed for targeted tests.  Returns clipped distance.
Real trace_depth_ray(const HeightField& field, Real ox, Real oy, Real oz,
                     Real dx, Real dy, Real dz, Real d_min, Real d_max);

struct DepthAugment {
  Real noise_std = 0.02;    // additive Gaussian, metres
  Real dropout_rate = 0.1;  // per-pixel probability of a d_max dropout
  int max_shift_px = 2;     // integer image translation bound
};

// Augmentation order: shift, noise, dropout, clip.  With all parameters zero
// the image passes through bit-exactly and no rng draws happen.
void augment_depth(DepthImage& img, const DepthAugment& aug, const CameraRig& rig,
                   Rng& rng);

// Left/right mirror of the camera set: swaps the 90/270 deg cameras and
// horizontally flips every image.  Involution.
DepthQuad mirror_depth(const DepthQuad& q);

}  // namespace omniloco
