#pragma once

#include <cstddef>
#include <functional>

namespace uqih {

/// Worker count used by parallel stages. Defaults to UQIH_THREADS when set,
/// otherwise the hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n) on up to thread_count() workers. Each index
/// runs exactly once; callers write results into slot i so the outcome is
/// independent of scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace uqih
