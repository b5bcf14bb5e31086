#pragma once

#include <algorithm>
#include <exception>
#include <stdexcept>
#include <thread>
#include <vector>

namespace metares {

/// Run body(i) for i in [0, count) on up to `threads` workers. Indices are
/// dealt round-robin so the partition is fixed by (count, threads) alone;
/// callers get determinism by writing results into preallocated slots.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    if (threads == 0) threads = 1;
    threads = std::min<unsigned>(threads, count > 0 ? static_cast<unsigned>(count) : 1u);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < count; i += threads) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace metares
