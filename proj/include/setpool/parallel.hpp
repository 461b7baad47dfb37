#ifndef SETPOOL_PARALLEL_HPP
#define SETPOOL_PARALLEL_HPP

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace setpool {

/// Evaluation thread budget: hardware threads, capped by SETPOOL_THREADS
/// when set. Training stays sequential regardless.
inline int eval_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
  if (const char* cap = std::getenv("SETPOOL_THREADS")) {
    const int limit = std::atoi(cap);
    if (limit >= 1 && limit < n) n = limit;
  }
  return n;
#else
  return 1;
#endif
}

}  // namespace setpool

#endif
