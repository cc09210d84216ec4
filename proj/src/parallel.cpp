#include "chunkrt/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chunkrt {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::string parallel_backend() {
#ifdef _OPENMP
  return "openmp";
#else
  return "serial";
#endif
}

}  // namespace chunkrt
