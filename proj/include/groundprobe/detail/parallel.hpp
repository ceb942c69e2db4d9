#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace groundprobe::detail {

// Worker count: requested (0 = hardware), capped by GROUNDPROBE_THREADS.
inline std::size_t resolve_jobs(std::size_t requested) {
    std::size_t jobs = requested == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency()) : requested;
    if (const char* cap = std::getenv("GROUNDPROBE_THREADS")) {
        try {
            const auto limit = std::stoul(cap);
            if (limit >= 1) jobs = std::min<std::size_t>(jobs, limit);
        } catch (const std::exception&) {
            // unparsable cap is ignored
        }
    }
    return std::max<std::size_t>(jobs, 1);
}

// Runs body(i) for i in [0, n). Results must be written by index so the
// outcome does not depend on scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    jobs = std::min(jobs, n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace groundprobe::detail
