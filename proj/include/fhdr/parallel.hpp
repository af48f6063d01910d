// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace fhdr {

/// Worker cap from FHDR_THREADS (default 1, minimum 1).
int worker_threads();

/// Overrides FHDR_THREADS for the current process; 0 restores the env value.
void set_worker_threads(int threads);

/// Runs fn(i) for i in [0, count). Work items must write disjoint memory;
/// results never depend on the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace fhdr
