#include "rsmfc/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rsmfc {

TimeGrid make_grid(double t_end, long long n_steps) {
    if (!(t_end > 0.0) || !std::isfinite(t_end)) {
        throw std::invalid_argument("make_grid: t_end must be positive and finite, got " +
                                    std::to_string(t_end));
    }
    if (n_steps < 1) {
        throw std::invalid_argument("make_grid: n_steps must be >= 1, got " +
                                    std::to_string(n_steps));
    }
    TimeGrid g;
    g.t_end = t_end;
    g.n_steps = static_cast<std::size_t>(n_steps);
    g.dt = t_end / static_cast<double>(n_steps);
    return g;
}

} // namespace rsmfc
