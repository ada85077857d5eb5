#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace epifit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// First-order system x' = f(t, x; p).
///
/// The right-hand side writes into `dxdt` (length `dim`). Jacobians are
/// optional; when missing, central finite differences are used instead.
struct OdeSystem {
    using Rhs = std::function<void(double t, std::span<const double> x, std::span<const double> p,
                                   std::span<double> dxdt)>;
    using Jacobian = std::function<void(double t, std::span<const double> x,
                                        std::span<const double> p, Eigen::Ref<Matrix> out)>;

    std::size_t dim = 0;
    std::size_t n_params = 0;
    Rhs rhs;
    Jacobian jacobian_state;   // dim x dim
    Jacobian jacobian_params;  // dim x n_params
};

enum class SolverMethod { rk4_fixed, rk45_adaptive };

struct SolverConfig {
    SolverMethod method = SolverMethod::rk45_adaptive;
    double step = 0.01;  // days, rk4_fixed only
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    std::vector<double> output_grid;

    /// Daily grid 0, 1, ..., horizon.
    static std::vector<double> daily_grid(double horizon, double t0 = 0.0);
    void validate() const;
};

/// Uniformly sampled trajectory: one row per time, one column per variable.
struct TimeSeries {
    std::vector<double> times;
    Matrix values;

    std::size_t size() const { return times.size(); }
    Vector column(Eigen::Index c) const { return values.col(c); }
    /// Single-column series holding `values.col(c)`.
    TimeSeries select(Eigen::Index c) const;
    void validate() const;
};

/// Sensitivities at each grid time: d x / d p (dim x n_free) and d x / d x0 (dim x dim).
struct SensitivityTrajectory {
    std::vector<Matrix> d_state_d_params;
    std::vector<Matrix> d_state_d_ic;
};

TimeSeries integrate(const OdeSystem& system, std::span<const double> params,
                     std::span<const double> x0, const SolverConfig& cfg);

/// Integrates the state together with its variational equations.
///
/// `ic_param_jacobian` (dim x n_free), when given, is the derivative of the
/// initial state with respect to the free parameters; otherwise it is zero.
std::pair<TimeSeries, SensitivityTrajectory> integrate_with_sensitivities(
    const OdeSystem& system, std::span<const double> params, std::span<const double> x0,
    const SolverConfig& cfg, std::span<const std::size_t> free_param_indices,
    const std::optional<Matrix>& ic_param_jacobian = std::nullopt);

/// Central-difference Jacobians, used when the system does not provide analytic ones.
void fd_jacobian_state(const OdeSystem& system, double t, std::span<const double> x,
                       std::span<const double> p, Eigen::Ref<Matrix> out);
void fd_jacobian_params(const OdeSystem& system, double t, std::span<const double> x,
                        std::span<const double> p, Eigen::Ref<Matrix> out);

}  // namespace epifit
