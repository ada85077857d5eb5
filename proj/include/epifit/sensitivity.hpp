#pragma once

#include "epifit/models.hpp"

#include <string>
#include <utility>
#include <vector>

namespace epifit {

/// Hessian of the unweighted SSE loss L(q) = sum_i [y(t_i, q) - y(t_i, q*)]^2 at q = q*.
struct HessianReport {
    Matrix matrix;       // p x p, H = 2 J^T J
    Vector eigenvalues;  // descending
    double eigengap_log10 = 0.0;
    std::size_t eigengap_index = 0;  // gap lies between eigenvalues[index] and eigenvalues[index + 1]
    std::vector<std::string> parameter_names;
};

/// Eigenvalues below this are floored before taking logarithms.
inline constexpr double eigenvalue_floor = 1e-300;

/// Largest consecutive log10 drop of a descending spectrum and its position.
std::pair<double, std::size_t> eigengap(const Vector& eigenvalues);

/// H = 2 J^T J from the observable sensitivity matrix J (n_times x p).
/// Eigenvalues are 2 s^2 from the singular values s of J, which keeps small
/// eigenvalues accurate relative to their own size on strongly graded spectra.
HessianReport hessian_from_jacobian(const Matrix& J, std::vector<std::string> names);

/// Hessian of the SSE loss at `q_star` with respect to the quantities in
/// `free`, with sensitivities from the variational equations on `grid`.
HessianReport loss_hessian(const ModelDef& model, const Vector& q_star, const std::vector<std::size_t>& free,
                           const std::vector<double>& grid);

/// SSE loss against the trajectory at `q_star` (for finite-difference checks).
double sse_loss(const ModelDef& model, const Vector& q_star, const Vector& q, const std::vector<double>& grid);

}  // namespace epifit
