#include "leap/parallel.hpp"

#include <omp.h>

#include "leap/error.hpp"

namespace leap {

void set_thread_count(int threads) {
    if (threads < 0) throw ParameterError("jobs: must be >= 0");
    if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace leap
