#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace rsmfc {

/// Fixed chunk width for all deterministic reductions. Chunk boundaries
/// depend only on the element count, never on the worker count, so results
/// are identical for any number of threads.
inline constexpr std::size_t kReduceChunk = 1024;

/// Global worker count (1 = serial). Bounds parallelism; never affects values.
void set_worker_threads(int n);
int worker_threads();

std::size_t chunk_count(std::size_t n);

/// Runs fn(chunk_id, begin, end) over the fixed chunking of [0, n), possibly
/// on worker threads. fn must only touch state owned by its chunk.
void parallel_for_chunks(std::size_t n,
                         const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Sum with a fixed topology: sequential within each chunk, chunk partials
/// combined in chunk order.
double deterministic_sum(std::span<const double> xs);

struct FiniteMean {
    double mean;        // NaN when count == 0
    std::size_t count;  // finite entries
};

/// Mean over the finite entries of xs, same fixed topology as deterministic_sum.
FiniteMean finite_mean(std::span<const double> xs);

} // namespace rsmfc
