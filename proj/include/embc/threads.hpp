#pragma once

#include <cstdlib>
#include <string>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace embc {

// Applies the EMBC_THREADS cap (if set) to OpenMP and Eigen. Returns the
// thread count in effect.
inline int configure_threads() {
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("EMBC_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0 && cap < threads) threads = cap;
    } catch (const std::exception&) {
    }
  }
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  Eigen::setNbThreads(threads);
  return threads;
}

}  // namespace embc
