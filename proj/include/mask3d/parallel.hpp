// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mask3d {

/// Worker count from MASK3D_THREADS, else 1.
std::size_t default_thread_count();

/// Runs fn(i) for i in [0, count) on up to `threads` workers, each taking a
/// contiguous block. The first exception thrown is rethrown on the caller.
/// Callers keep results deterministic by writing only to slot i.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace mask3d
