#include "reachcert/parallel.hpp"

#include <omp.h>

namespace reachcert {

void set_workers(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

int workers() { return omp_get_max_threads(); }

}  // namespace reachcert
