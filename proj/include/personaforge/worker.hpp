#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace personaforge {

/// Run fn(i) for i in [0, n) on up to `workers` threads. Results land in
/// index order, so output is independent of scheduling. The first captured
/// exception is rethrown after all threads join.
template <typename T>
std::vector<T> parallel_map(size_t n, int workers, const std::function<T(size_t)>& fn) {
    std::vector<T> results(n);
    if (n == 0) return results;
    if (workers < 1) workers = 1;
    size_t nthreads = std::min<size_t>(static_cast<size_t>(workers), n);
    if (nthreads == 1) {
        for (size_t i = 0; i < n; ++i) results[i] = fn(i);
        return results;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (size_t t = 0; t < nthreads; ++t) {
        threads.emplace_back([&]() {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    results[i] = fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace personaforge
