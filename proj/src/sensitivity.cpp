#include "epifit/sensitivity.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <cmath>

namespace epifit {

std::pair<double, std::size_t> eigengap(const Vector& eigenvalues) {
    if (eigenvalues.size() < 2) throw InvalidArgument("eigengap needs at least two eigenvalues");
    double best = -std::numeric_limits<double>::infinity();
    std::size_t at = 0;
    for (Eigen::Index i = 0; i + 1 < eigenvalues.size(); ++i) {
        const double a = std::log10(std::max(eigenvalues(i), eigenvalue_floor));
        const double b = std::log10(std::max(eigenvalues(i + 1), eigenvalue_floor));
        if (a - b > best) {
            best = a - b;
            at = static_cast<std::size_t>(i);
        }
    }
    return {best, at};
}

HessianReport hessian_from_jacobian(const Matrix& J, std::vector<std::string> names) {
    if (static_cast<std::size_t>(J.cols()) != names.size())
        throw InvalidArgument("Jacobian columns and parameter names differ in count");
    HessianReport report;
    report.parameter_names = std::move(names);
    report.matrix = 2.0 * J.transpose() * J;
    report.matrix = 0.5 * (report.matrix + report.matrix.transpose()).eval();

    const auto p = J.cols();
    Vector s = Vector::Zero(p);
    if (J.rows() > 0 && p > 0) {
        Eigen::JacobiSVD<Matrix> svd(J);
        const Vector sv = svd.singularValues();
        s.head(sv.size()) = sv;
    }
    report.eigenvalues = 2.0 * s.array().square();
    std::sort(report.eigenvalues.data(), report.eigenvalues.data() + p, std::greater<>());
    if (p >= 2) std::tie(report.eigengap_log10, report.eigengap_index) = eigengap(report.eigenvalues);
    return report;
}

HessianReport loss_hessian(const ModelDef& model, const Vector& q_star, const std::vector<std::size_t>& free,
                           const std::vector<double>& grid) {
    const auto [series, J] = model.observable_sensitivities(q_star, free, model.solver(grid));
    std::vector<std::string> names;
    for (auto i : free) names.push_back(model.quantity_names.at(i));
    return hessian_from_jacobian(J, std::move(names));
}

double sse_loss(const ModelDef& model, const Vector& q_star, const Vector& q, const std::vector<double>& grid) {
    const Vector ref = model.simulate(q_star, grid).column(model.observable);
    const Vector y = model.simulate(q, grid).column(model.observable);
    return (y - ref).squaredNorm();
}

}  // namespace epifit
