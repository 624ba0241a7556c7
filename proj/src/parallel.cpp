#include "pdakit/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdakit {

namespace {
std::atomic<int> g_threads{0};
}

int env_thread_fallback() {
    static int cached = [] {
        const char* env = std::getenv("PDA_KIT_THREADS");
        if (env == nullptr) return 0;
        int v = std::atoi(env);
        return v > 0 ? v : 0;
    }();
    return cached;
}

void set_num_threads(int n) { g_threads.store(n > 0 ? n : 0); }

int num_threads() {
    int n = g_threads.load();
    if (n <= 0) n = env_thread_fallback();
#ifdef _OPENMP
    if (n <= 0) n = omp_get_max_threads();
#else
    if (n <= 0) n = 1;
#endif
    return n;
}

namespace detail {

void run_parallel_for(long begin, long end, void* ctx, void (*body)(void*, long)) {
    std::exception_ptr error = nullptr;
    std::atomic<bool> failed{false};
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(pdakit::num_threads())
#endif
    for (long i = begin; i < end; ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            body(ctx, i);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(pdakit_parallel_for_error)
#endif
            {
                if (!failed.exchange(true)) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

}  // namespace pdakit
