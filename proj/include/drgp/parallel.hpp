#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace drgp {

// Samples are summed in fixed-size blocks, and the blocks are combined by
// a pairwise tree. The grouping never depends on the worker count, so
// results are bit-identical however the blocks are scheduled.
constexpr Eigen::Index kBlock = 16;

inline Eigen::Index block_count(Eigen::Index n) { return (n + kBlock - 1) / kBlock; }

// DRGP_WORKERS overrides the requested count when set.
inline int resolve_workers(int requested) {
    if (const char* env = std::getenv("DRGP_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return w;
    }
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? (int)hc : 1;
}

inline void parallel_for(Eigen::Index n, int workers, const std::function<void(Eigen::Index)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (Eigen::Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Eigen::Index> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    int spawn = (int)std::min<Eigen::Index>(workers, n);
    for (int w = 0; w < spawn; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (Eigen::Index i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
                next = n;
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

template <class T, class Add>
T tree_reduce(std::vector<T> parts, Add add) {
    if (parts.empty()) return T{};
    for (size_t stride = 1; stride < parts.size(); stride *= 2)
        for (size_t i = 0; i + stride < parts.size(); i += 2 * stride) add(parts[i], parts[i + stride]);
    return std::move(parts[0]);
}

}  // namespace drgp
