#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace agripipe {

// Static row partition across `jobs` workers. Every kernel dispatched here is
// pure per element, so the partition never changes results.
inline void parallel_for(int begin, int end, int jobs, const std::function<void(int)>& body) {
    const int count = end - begin;
    if (count <= 0) return;
    jobs = std::clamp(jobs, 1, count);
    if (jobs == 1) {
        for (int i = begin; i < end; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    const int chunk = (count + jobs - 1) / jobs;
    for (int w = 0; w < jobs; ++w) {
        const int lo = begin + w * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& worker : workers) worker.join();
}

} // namespace agripipe
