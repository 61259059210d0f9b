#pragma once

#include <cstddef>

#include "omniloco/common.hpp"

namespace omniloco::kernels {

// Matmul variants used by the network code.  Naming: n = as stored,
// t = transposed.  All matrices are dense row-major.
//
// The optimized versions run under OpenMP with a static schedule over output
// rows: every output element is computed by exactly one thread with a fixed
// inner-loop order, so results are bit-identical for any thread count.

// C[m x n] = A[m x k] * B^T, where B is stored [n x k].  (Dense forward:
// rows of A are inputs, rows of B are weight rows.)
void matmul_nt(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// C[m x n] = A[m x k] * B[k x n].  (Dense backward w.r.t. inputs.)
void matmul_nn(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// C[m x n] += A^T * B, where A is stored [t x m], B is [t x n].  (Weight
// gradients; always accumulates.)
void matmul_tn_acc(const Real* A, const Real* B, Real* C, std::size_t t,
                   std::size_t m, std::size_t n);

// y[m] = W[m x k] * x[k] (+ y if accumulate).  Single-row convenience.
void gemv(const Real* W, const Real* x, Real* y, std::size_t m, std::size_t k,
          bool accumulate = false);

namespace reference {
// Naive textbook loops, serial, kept as the oracle for the optimized kernels.
void matmul_nt(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nn(const Real* A, const Real* B, Real* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn_acc(const Real* A, const Real* B, Real* C, std::size_t t,
                   std::size_t m, std::size_t n);
}  // namespace reference

}  // namespace omniloco::kernels
