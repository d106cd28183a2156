#include "rsmfc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rsmfc {

uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

namespace {

// Distinct salts so the two uniforms feeding Box-Muller never coincide.
constexpr uint64_t kSaltSeed = 0x9e3779b97f4a7c15ULL;
constexpr uint64_t kSaltU1 = 0x243f6a8885a308d3ULL;
constexpr uint64_t kSaltU2 = 0x452821e638d01377ULL;

inline uint64_t cell_key(uint64_t seed, uint64_t path, uint64_t step) {
    uint64_t h = mix64(seed + kSaltSeed);
    h = mix64(h ^ path);
    h = mix64(h ^ step);
    return h;
}

} // namespace

double standard_gaussian(uint64_t master_seed, uint64_t path_index, uint64_t step) {
    const uint64_t key = cell_key(master_seed, path_index, step);
    const uint64_t w1 = mix64(key ^ kSaltU1);
    const uint64_t w2 = mix64(key ^ kSaltU2);
    // 53-bit mantissas; u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(w1 >> 11) + 1.0) * 0x1p-53;
    const double u2 = static_cast<double>(w2 >> 11) * 0x1p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double gaussian_increment(const RngStream& stream, uint64_t step, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("gaussian_increment: dt must be positive");
    }
    return std::sqrt(dt) * standard_gaussian(stream.master_seed, stream.path_index, step);
}

double RngStream::next_gaussian(double dt) { return gaussian_increment(*this, counter++, dt); }

IncrementFn counter_increments(uint64_t master_seed) {
    return [master_seed](uint64_t path, uint64_t step, double dt) {
        return std::sqrt(dt) * standard_gaussian(master_seed, path, step);
    };
}

IncrementFn coarsened_increments(uint64_t master_seed, unsigned factor) {
    if (factor == 0) {
        throw std::invalid_argument("coarsened_increments: factor must be >= 1");
    }
    return [master_seed, factor](uint64_t path, uint64_t step, double dt) {
        const double fine_dt = dt / static_cast<double>(factor);
        const double sqrt_fine = std::sqrt(fine_dt);
        double sum = 0.0;
        for (unsigned j = 0; j < factor; ++j) {
            sum += sqrt_fine * standard_gaussian(master_seed, path, step * factor + j);
        }
        return sum;
    };
}

} // namespace rsmfc
