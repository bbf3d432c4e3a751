#pragma once

#include <cstddef>
#include <functional>

namespace kprop {

inline constexpr const char* kThreadsEnv = "KPROP_THREADS";

// KPROP_THREADS if set to a positive integer, else the hardware concurrency.
int default_thread_count();

// Runs fn(0..count-1) on up to `threads` workers (0 means the default) that
// pull indices from a shared counter. The first exception thrown is rethrown
// after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, int threads = 0);

}  // namespace kprop
