// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/runtime.hpp"

#include <omp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace occ {

void configure_runtime(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
#endif
}

int worker_threads() { return omp_get_max_threads(); }

} // namespace occ
