#include "implisat/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace implisat {

namespace {

std::atomic<unsigned> g_max_threads{1};

constexpr std::size_t kMinWorkPerThread = 1u << 18;

unsigned resolve(unsigned requested) {
    if (requested != 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void set_max_threads(unsigned count) { g_max_threads = resolve(count); }

unsigned max_threads() { return g_max_threads; }

void configure_threads_from_env() {
    const char* env = std::getenv("IMPLISAT_THREADS");
    if (env == nullptr || *env == '\0') {
        return;
    }
    try {
        const long v = std::stol(env);
        if (v >= 0) {
            set_max_threads(static_cast<unsigned>(v));
        }
    } catch (const std::exception&) {
        // leave the cap as is
    }
}

void parallel_for(std::size_t count, std::size_t work,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (count == 0) {
        return;
    }
    std::size_t threads = std::min<std::size_t>(g_max_threads, count);
    threads = std::min<std::size_t>(threads, std::max<std::size_t>(1, work / kMinWorkPerThread));
    if (threads <= 1) {
        body(0, count);
        return;
    }
    const std::size_t chunk = (count + threads - 1) / threads;
    std::vector<std::jthread> workers;
    workers.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) {
            break;
        }
        workers.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(0, std::min(count, chunk));
}

}  // namespace implisat
