#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "omniloco/kernels.hpp"
#include "omniloco/parallel.hpp"
#include "omniloco/rng.hpp"

using namespace omniloco;
using namespace omniloco::kernels;

namespace {

std::vector<Real> randvec(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (Real& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Real max_rel_err(const std::vector<Real>& got, const std::vector<Real>& want) {
  Real worst = 0, scale = 1e-30;
  for (std::size_t i = 0; i < got.size(); ++i) {
    worst = std::max(worst, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return worst / scale;
}

}  // namespace

TEST_CASE("matmul_nt matches the naive oracle on random shapes") {
  Rng rng(1);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(0, 40);
    const std::size_t k = 1 + rng.uniform_int(0, 60);
    const std::size_t n = 1 + rng.uniform_int(0, 40);
    auto A = randvec(m * k, rng), B = randvec(n * k, rng);
    auto C = randvec(m * n, rng);
    auto Cref = C;  // same start so accumulate mode is comparable
    const bool acc = trial % 2 == 0;
    matmul_nt(A.data(), B.data(), C.data(), m, k, n, acc);
    reference::matmul_nt(A.data(), B.data(), Cref.data(), m, k, n, acc);
    CHECK(max_rel_err(C, Cref) < 1e-13);
  }
}

TEST_CASE("matmul_nn matches the naive oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(0, 40);
    const std::size_t k = 1 + rng.uniform_int(0, 60);
    const std::size_t n = 1 + rng.uniform_int(0, 40);
    auto A = randvec(m * k, rng), B = randvec(k * n, rng);
    auto C = randvec(m * n, rng);
    auto Cref = C;
    const bool acc = trial % 2 == 1;
    matmul_nn(A.data(), B.data(), C.data(), m, k, n, acc);
    reference::matmul_nn(A.data(), B.data(), Cref.data(), m, k, n, acc);
    CHECK(max_rel_err(C, Cref) < 1e-13);
  }
}

TEST_CASE("matmul_tn_acc matches the naive oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t t = 1 + rng.uniform_int(0, 30);
    const std::size_t m = 1 + rng.uniform_int(0, 40);
    const std::size_t n = 1 + rng.uniform_int(0, 40);
    auto A = randvec(t * m, rng), B = randvec(t * n, rng);
    auto C = randvec(m * n, rng);
    auto Cref = C;
    matmul_tn_acc(A.data(), B.data(), C.data(), t, m, n);
    reference::matmul_tn_acc(A.data(), B.data(), Cref.data(), t, m, n);
    CHECK(max_rel_err(C, Cref) < 1e-13);
  }
}

TEST_CASE("gemv equals a one-row matmul_nt") {
  Rng rng(4);
  const std::size_t m = 37, k = 53;
  auto W = randvec(m * k, rng), x = randvec(k, rng);
  std::vector<Real> y(m, 0), y2(m, 0);
  gemv(W.data(), x.data(), y.data(), m, k);
  matmul_nt(x.data(), W.data(), y2.data(), 1, k, m);
  for (std::size_t i = 0; i < m; ++i) CHECK(y[i] == y2[i]);
}

TEST_CASE("results are bit-identical across thread counts") {
  Rng rng(5);
  const std::size_t m = 64, k = 96, n = 80;
  auto A = randvec(m * k, rng), B = randvec(n * k, rng);
  std::vector<Real> C1(m * n), C4(m * n);

  const int before = parallel::max_threads();
  parallel::set_threads(1);
  matmul_nt(A.data(), B.data(), C1.data(), m, k, n);
  parallel::set_threads(4);  // oversubscription is fine, order must not matter
  matmul_nt(A.data(), B.data(), C4.data(), m, k, n);
  parallel::set_threads(before);

  for (std::size_t i = 0; i < C1.size(); ++i) CHECK(C1[i] == C4[i]);
}

TEST_CASE("accumulate=false overwrites, accumulate=true adds") {
  Rng rng(6);
  const std::size_t m = 5, k = 7, n = 3;
  auto A = randvec(m * k, rng), B = randvec(n * k, rng);
  std::vector<Real> C(m * n, 123.0);
  matmul_nt(A.data(), B.data(), C.data(), m, k, n, false);
  std::vector<Real> base = C;
  matmul_nt(A.data(), B.data(), C.data(), m, k, n, true);
  for (std::size_t i = 0; i < C.size(); ++i)
    CHECK(C[i] == doctest::Approx(2 * base[i]).epsilon(1e-12));
}
