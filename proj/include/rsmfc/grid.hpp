#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace rsmfc {

/// Uniform grid on [0, t_end] with n_steps intervals. Nodes are computed as
/// (k / n_steps) * t_end rather than by running summation, so t_0 == 0 and
/// t_{n_steps} == t_end hold exactly and the nodes are strictly increasing.
struct TimeGrid {
    double t_end = 0.0;
    std::size_t n_steps = 0;
    double dt = 0.0;

    std::size_t n_nodes() const { return n_steps + 1; }

    double node(std::size_t k) const {
        return (static_cast<double>(k) / static_cast<double>(n_steps)) * t_end;
    }

    bool operator==(const TimeGrid&) const = default;
};

/// Throws std::invalid_argument unless t_end > 0 and n_steps >= 1.
TimeGrid make_grid(double t_end, long long n_steps);

/// One discretized scalar trajectory. `blow_up` is the first node index at
/// which the value is no longer valid; entries from that index on are NaN.
/// Paths without the marker contain only finite values.
struct ScalarPath {
    TimeGrid grid;
    std::vector<double> values;
    std::optional<std::size_t> blow_up;

    ScalarPath() = default;
    explicit ScalarPath(const TimeGrid& g) : grid(g), values(g.n_nodes(), 0.0) {}
    ScalarPath(const TimeGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t k) const { return values[k]; }
    double& operator[](std::size_t k) { return values[k]; }

    /// Number of leading valid nodes (blow_up if marked, else all).
    std::size_t valid_nodes() const { return blow_up ? *blow_up : values.size(); }
};

} // namespace rsmfc
