#include "sfaguard/parallel.hpp"

#include <omp.h>

namespace sfaguard {

int max_threads() { return omp_get_max_threads(); }

}  // namespace sfaguard
