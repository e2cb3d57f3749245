#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cores {

// ---- error types -----------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct InvalidWidths : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NuggetExhausted : Error { using Error::Error; };
struct StaleResidualCache : Error { using Error::Error; };
struct MissingDerivative : Error { using Error::Error; };
struct WrongProblem : Error { using Error::Error; };
struct InvalidViscosity : Error { using Error::Error; };
struct SolveFailed : Error { using Error::Error; };
struct CflViolation : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct LineSearchFailed : Error { using Error::Error; };
struct TransformUndefined : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };

// ---- parallel loop with deterministic chunking ------------------------------
//
// Work is split into a fixed number of chunks that does not depend on the
// thread count, so any per-chunk partial results can be reduced in chunk
// order and stay bitwise reproducible.

inline unsigned hardware_threads() {
    if (const char* env = std::getenv("CORESOLVE_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

inline constexpr std::size_t kParallelChunks = 64;

// body(chunk_index, begin, end)
inline void parallel_chunks(std::size_t n,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    const std::size_t nchunks = std::min(kParallelChunks, n);
    const unsigned nthreads = std::min<unsigned>(hardware_threads(), static_cast<unsigned>(nchunks));
    if (nthreads <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) {
            const std::size_t lo = c * n / nchunks, hi = (c + 1) * n / nchunks;
            body(c, lo, hi);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < nchunks; c += nthreads) {
                const std::size_t lo = c * n / nchunks, hi = (c + 1) * n / nchunks;
                body(c, lo, hi);
            }
        });
    }
    for (auto& th : pool) th.join();
}

inline std::size_t parallel_chunk_count(std::size_t n) {
    return n == 0 ? 0 : std::min(kParallelChunks, n);
}

} // namespace cores
