#include "omniloco/kernels.hpp"

#include "omniloco/parallel.hpp"

namespace omniloco::kernels {

namespace {

// Dot product with four explicit accumulators.  The split lets the compiler
// keep SIMD lanes busy without reassociating a single serial reduction, and
// fixes the summation order independent of optimization level.
inline Real dot4(const Real* a, const Real* b, std::size_t n) {
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  Real s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void matmul_nt(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  parallel::for_each_index(m, [&](std::size_t i) {
    const Real* a = A + i * k;
    Real* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = dot4(a, B + j * k, k);
      c[j] = accumulate ? c[j] + d : d;
    }
  });
}

void matmul_nn(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  parallel::for_each_index(m, [&](std::size_t i) {
    const Real* a = A + i * k;
    Real* c = C + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) c[j] = 0;
    for (std::size_t l = 0; l < k; ++l) {
      const Real av = a[l];
      const Real* b = B + l * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  });
}

void matmul_tn_acc(const Real* A, const Real* B, Real* C, std::size_t t,
                   std::size_t m, std::size_t n) {
  parallel::for_each_index(m, [&](std::size_t i) {
    Real* c = C + i * n;
    for (std::size_t s = 0; s < t; ++s) {
      const Real av = A[s * m + i];
      const Real* b = B + s * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  });
}

void gemv(const Real* W, const Real* x, Real* y, std::size_t m, std::size_t k,
          bool accumulate) {
  matmul_nt(x, W, y, 1, k, m, accumulate);
}

namespace reference {

void matmul_nt(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t l = 0; l < k; ++l) s += A[i * k + l] * B[j * k + l];
      C[i * n + j] = accumulate ? C[i * n + j] + s : s;
    }
}

void matmul_nn(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t l = 0; l < k; ++l) s += A[i * k + l] * B[l * n + j];
      C[i * n + j] = accumulate ? C[i * n + j] + s : s;
    }
}

void matmul_tn_acc(const Real* A, const Real* B, Real* C, std::size_t t,
                   std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t s_t = 0; s_t < t; ++s_t)
        s += A[s_t * m + i] * B[s_t * n + j];
      C[i * n + j] += s;
    }
}

}  // namespace reference

}  // namespace omniloco::kernels
