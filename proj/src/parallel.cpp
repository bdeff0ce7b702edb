#include "neurocode/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include <omp.h>

namespace neurocode {

int configure_threads_from_env() {
  if (const char* env = std::getenv("NEUROCODE_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) omp_set_num_threads(std::min(cap, omp_get_max_threads()));
    } catch (const std::exception&) {
      // unparsable value: leave the OpenMP default
    }
  }
  return omp_get_max_threads();
}

int max_threads() noexcept { return omp_get_max_threads(); }

}  // namespace neurocode
