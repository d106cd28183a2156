#pragma once

#include <cstdint>
#include <functional>

namespace rsmfc {

/// 64-bit finalizer with full avalanche (the SplitMix64 output mix).
uint64_t mix64(uint64_t z);

/// Standard normal draw as a pure function of (master_seed, path_index, step).
/// Counter-based: no state is consumed, so any subset of (path, step) cells
/// can be evaluated in any order — serial and parallel runs agree bit for bit.
double standard_gaussian(uint64_t master_seed, uint64_t path_index, uint64_t step);

/// One per-path stream of Gaussian increments. The (path, step) cell fully
/// determines the draw; `counter` is only a convenience cursor for
/// sequential use. Streams with distinct path_index never overlap.
struct RngStream {
    uint64_t master_seed = 0;
    uint64_t path_index = 0;
    uint64_t counter = 0;

    /// Draws N(0, dt) at the cursor and advances it.
    double next_gaussian(double dt);
};

/// N(0, dt) increment for (stream.master_seed, stream.path_index, step).
/// Throws std::invalid_argument if dt <= 0.
double gaussian_increment(const RngStream& stream, uint64_t step, double dt);

/// Noise source abstraction used by the simulators: (path, step, dt) -> dB.
using IncrementFn = std::function<double(uint64_t path, uint64_t step, double dt)>;

/// The default counter-based source.
IncrementFn counter_increments(uint64_t master_seed);

/// Brownian-refinement coupling: the increment over a coarse step is the sum
/// of `factor` fine draws of variance dt/factor taken from the same seed, so
/// a run at dt and a run at dt/factor share one underlying Brownian path.
/// Used for common-random-number convergence-order measurements.
IncrementFn coarsened_increments(uint64_t master_seed, unsigned factor);

} // namespace rsmfc
