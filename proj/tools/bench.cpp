// Timing comparison of the OpenMP kernels against their serial reference
// implementations, plus a correctness cross-check on each shape.

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "omniloco/kernels.hpp"
#include "omniloco/parallel.hpp"
#include "omniloco/perception.hpp"
#include "omniloco/rng.hpp"
#include "omniloco/terrain.hpp"

using namespace omniloco;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, const auto& f) {
  f();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<Real>& v, Rng& rng) {
  for (Real& x : v) x = rng.uniform(-1.0, 1.0);
}

// The optimized kernels promise bit-identical results across thread counts;
// against the naive oracle they only agree to rounding (different summation
// order), so compare with a relative error.
Real rel_err(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real worst = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return worst / (scale > 0 ? scale : 1.0);
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n, Rng& rng) {
  std::vector<Real> A(m * k), B(n * k), C(m * n), Cref(m * n);
  fill(A, rng);
  fill(B, rng);
  const double opt = time_ms(
      20, [&] { kernels::matmul_nt(A.data(), B.data(), C.data(), m, k, n); });
  const double ref = time_ms(20, [&] {
    kernels::reference::matmul_nt(A.data(), B.data(), Cref.data(), m, k, n);
  });
  const Real err = rel_err(C, Cref);
  std::printf("matmul_nt %4zux%4zux%4zu  omp %8.3f ms  ref %8.3f ms  "
              "x%.2f  rel err %.2e %s\n",
              m, k, n, opt, ref, ref / opt, err,
              err < 1e-12 ? "ok" : "MISMATCH");
}

void bench_render(Rng& rng) {
  const TerrainGenConfig tcfg;
  const TerrainSpec spec =
      sample_terrain_spec(TerrainKind::Blocks, EvalTier::Hard, tcfg, rng);
  const HeightField field = generate_terrain(spec, tcfg);
  const CameraRig rig;
  DepthQuad q{}, qref{};
  const double opt = time_ms(20, [&] {
    q = render_depth(field, 0.0, 0.0, 1.0, 0.3, rig, nullptr);
  });
  const double ref = time_ms(20, [&] {
    qref = reference::render_depth(field, 0.0, 0.0, 1.0, 0.3, rig, nullptr);
  });
  bool ok = true;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < DepthImage::kRes * DepthImage::kRes; ++i)
      ok = ok && q[c].d[i] == qref[c].d[i];
  std::printf("render_depth 4x32x32      omp %8.3f ms  ref %8.3f ms  "
              "x%.2f  %s\n",
              opt, ref, ref / opt, ok ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", parallel::max_threads());
  Rng rng(20240817);
  bench_matmul(64, 128, 128, rng);
  bench_matmul(450, 232, 512, rng);
  bench_matmul(1800, 512, 64, rng);
  bench_render(rng);
  return 0;
}
