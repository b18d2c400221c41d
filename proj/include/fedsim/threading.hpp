#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace fedsim {

// Index-based fan-out used for per-client work. Results must land in
// per-index slots; cross-index reductions happen sequentially afterwards,
// which keeps every number independent of the worker count.
class WorkerPool {
public:
    explicit WorkerPool(unsigned threads) : threads_(threads == 0 ? 1 : threads) {}

    unsigned size() const { return threads_; }

    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) const {
        if (n == 0) return;
        const unsigned workers = static_cast<unsigned>(
            std::min<std::size_t>(threads_, n));
        if (workers <= 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(n);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= n) return;
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

private:
    unsigned threads_;
};

// Requested count (0 = hardware), then capped by FEDPPA_THREADS if set.
inline unsigned resolve_threads(unsigned requested) {
    unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FEDPPA_THREADS")) {
        unsigned cap = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
        if (cap > 0) n = std::min(n, cap);
    }
    return n;
}

}  // namespace fedsim
