#include "prospectr/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

namespace prospectr {

namespace {

int default_threads() {
    if (const char* env = std::getenv("PROSPECTR_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_threads{0};  // 0 = not set yet

}  // namespace

void set_thread_count(int n) { g_threads.store(n > 0 ? n : 0); }

int thread_count() {
    int n = g_threads.load();
    if (n <= 0) {
        n = default_threads();
        g_threads.store(n);
    }
    return n;
}

namespace detail {

int resolve_threads(int64_t n) {
    // Not worth forking for small loops.
    if (n < 256) return 1;
    int nt = thread_count();
    if (static_cast<int64_t>(nt) > n) nt = static_cast<int>(n);
    return nt;
}

}  // namespace detail

}  // namespace prospectr
