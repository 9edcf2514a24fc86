#include "chainforge/types.hpp"

#include <atomic>
#include <mutex>
#include <thread>
#include <vector>

namespace chainforge {

const char* to_string(Direction d) {
    return d == Direction::Forward ? "forward" : "backward";
}

const char* to_string(ExitFace f) {
    switch (f) {
        case ExitFace::XBandGap: return "x-band-gap";
        case ExitFace::YBandGap: return "y-band-gap";
        case ExitFace::FiberBelow: return "fiber-below";
        case ExitFace::FiberAbove: return "fiber-above";
    }
    return "?";
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void parallel_for_chunks(std::size_t n, std::size_t chunk, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    if (chunk == 0) chunk = 1;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    int workers = threads;
    if (workers <= 0) workers = int(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (std::size_t(workers) > nchunks) workers = int(nchunks);
    if (workers == 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            body(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto run = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            try {
                body(c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace chainforge
