#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace omniloco::parallel {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Parallel loop over [0, n).  Bodies must write disjoint outputs; the static
// schedule keeps the work partition (and therefore every FP accumulation
// order) identical for any thread count.
template <typename F>
inline void for_each_index(std::size_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    f(static_cast<std::size_t>(i));
#else
  for (std::size_t i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace omniloco::parallel
