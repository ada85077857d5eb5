#pragma once

#include "epifit/ode.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace epifit {

enum class Transform { linear, log };

/// Named search coordinates with box bounds, optional pinned values and a
/// per-coordinate search transform.
///
/// Vectors passed to objectives hold the free coordinates only, in the order
/// of `free_indices()`, in natural (untransformed) units.
struct ParameterSpace {
    std::vector<std::string> names;
    Vector lower;
    Vector upper;
    std::vector<std::optional<double>> fixed;
    std::vector<Transform> transform;

    /// Log transform where lower > 0 and the bounds span at least two decades.
    static Transform auto_transform(double lower, double upper);

    void add(const std::string& name, double lower, double upper,
             std::optional<double> fixed_value = std::nullopt);
    void validate() const;

    std::size_t size() const { return names.size(); }
    std::size_t index_of(const std::string& name) const;
    std::vector<std::size_t> free_indices() const;
    std::size_t n_free() const;
    std::vector<std::string> free_names() const;
    Vector free_lower() const;
    Vector free_upper() const;

    /// Full vector (fixed values filled in) from free coordinates.
    Vector expand(const Vector& free_values) const;
    /// Maps free coordinates to the unit cube of transformed coordinates, and back.
    Vector to_unit(const Vector& free_values) const;
    Vector from_unit(const Vector& unit) const;
    bool contains(const Vector& free_values) const;
};

using Objective = std::function<double(const Vector& free_values)>;

struct FitResult {
    Vector theta_hat;  // free coordinates
    double objective_value = 0.0;
    std::size_t restarts_tried = 0;
    bool converged = false;
    std::size_t evaluations = 0;
};

struct NelderMeadOptions {
    std::size_t max_evaluations = 2000;
    double diameter_tol = 1e-8;  // simplex diameter in unit-cube transformed coordinates
    double initial_step = 0.1;
};

/// Bounded Nelder-Mead from `start` (free coordinates). Vertices are projected
/// onto the box; objective errors and non-finite values count as +infinity.
FitResult nelder_mead(const Objective& objective, const ParameterSpace& space, const Vector& start,
                      const NelderMeadOptions& options = {});

/// Best of `n_restarts` bounded local searches from uniform random starts in
/// the transformed box. Deterministic given `seed`.
FitResult multistart_optimize(const Objective& objective, const ParameterSpace& space,
                              std::size_t n_restarts, std::uint64_t seed,
                              const NelderMeadOptions& options = {});

}  // namespace epifit
