#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace rsmfc {

struct Ensemble;

/// Finite-time divergence: a closed-form denominator crossed zero or a
/// simulated quantity left the admissible range. Carries the root location
/// in backward time (tau* = T - t*) and/or the grid node when known.
class blow_up_error : public std::runtime_error {
public:
    explicit blow_up_error(std::string what,
                           std::optional<double> tau_star = std::nullopt,
                           std::optional<std::size_t> node = std::nullopt)
        : std::runtime_error(std::move(what)), tau_star_(tau_star), node_(node) {}

    std::optional<double> tau_star() const { return tau_star_; }
    std::optional<std::size_t> node() const { return node_; }

private:
    std::optional<double> tau_star_;
    std::optional<std::size_t> node_;
};

/// A user-supplied coefficient or control returned a non-finite value at a
/// finite evaluation point (as opposed to a path legitimately diverging).
class evaluation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when every path of a simulation diverged. The partially simulated
/// ensemble stays inspectable through partial().
class ensemble_blow_up_error : public blow_up_error {
public:
    ensemble_blow_up_error(std::string what,
                           std::shared_ptr<const Ensemble> partial,
                           std::size_t step)
        : blow_up_error(std::move(what), std::nullopt, step),
          partial_(std::move(partial)) {}

    const Ensemble& partial() const { return *partial_; }
    std::shared_ptr<const Ensemble> partial_ptr() const { return partial_; }

private:
    std::shared_ptr<const Ensemble> partial_;
};

} // namespace rsmfc
