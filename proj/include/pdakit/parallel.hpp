#pragma once

#include <exception>

namespace pdakit {

// Thread count used by the OpenMP kernels. 0 means "library default"
// (OMP runtime default, or the PDA_KIT_THREADS environment variable when set).
// Results are independent of the thread count by contract: every parallel
// kernel computes each output element from immutable inputs.
void set_num_threads(int n);
int num_threads();

// Resolves PDA_KIT_THREADS once; called lazily by num_threads().
int env_thread_fallback();

namespace detail {
void run_parallel_for(long begin, long end, void* ctx, void (*body)(void*, long));
}

// OMP parallel loop over [begin, end) with the configured thread count.
// The first exception thrown by any iteration is rethrown on the caller's
// thread after the loop; remaining iterations are skipped best-effort.
template <class Fn>
void parallel_for(long begin, long end, Fn&& fn) {
    auto trampoline = [](void* ctx, long i) { (*static_cast<Fn*>(ctx))(i); };
    detail::run_parallel_for(begin, end, &fn, trampoline);
}

}  // namespace pdakit
