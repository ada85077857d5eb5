#include "epifit/error.hpp"
#include "epifit/models.hpp"
#include "epifit/sensitivity.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

using namespace epifit;

namespace {

Vector values(std::initializer_list<double> xs) {
    Vector out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) out(i++) = x;
    return out;
}

// Central second differences of the SSE loss with relative steps.
Matrix fd_hessian(const ModelDef& model, const Vector& q_star, const std::vector<std::size_t>& free,
                  const std::vector<double>& grid, double rel_step) {
    const std::size_t p = free.size();
    Matrix H(p, p);
    const auto L = [&](const Vector& q) { return sse_loss(model, q_star, q, grid); };
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = j; k < p; ++k) {
            const double hj = rel_step * std::abs(q_star(free[j])), hk = rel_step * std::abs(q_star(free[k]));
            const auto at = [&](double sj, double sk) {
                Vector q = q_star;
                q(free[j]) += sj * hj;
                q(free[k]) += sk * hk;
                return L(q);
            };
            const double h = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * hj * hk);
            H(j, k) = H(k, j) = h;
        }
    }
    return H;
}

void check_against_fd(ModelDef model, const Vector& q_star, const std::vector<std::size_t>& free, double horizon) {
    const auto grid = SolverConfig::daily_grid(horizon);
    const auto report = loss_hessian(model, q_star, free, grid);
    model.rel_tol = 1e-12;
    model.abs_tol *= 1e-4;
    const Matrix fd = fd_hessian(model, q_star, free, grid, 1e-4);
    const double scale = report.matrix.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < fd.rows(); ++j)
        for (Eigen::Index k = 0; k < fd.cols(); ++k) {
            if (std::abs(report.matrix(j, k)) <= 1e-8 * scale) continue;
            CAPTURE(model.name);
            CAPTURE(j);
            CAPTURE(k);
            CHECK(std::abs(report.matrix(j, k) - fd(j, k)) <= 1e-3 * std::abs(report.matrix(j, k)));
        }
}

}  // namespace

TEST_CASE("Hessian of a one-parameter linear model") {
    Matrix J(2, 1);
    J << 1, 2;  // D(t, theta) = theta t on t = (1, 2)
    const auto r = hessian_from_jacobian(J, {"theta"});
    CHECK(r.matrix(0, 0) == doctest::Approx(10.0));
    CHECK(r.eigenvalues(0) == doctest::Approx(10.0));
    CHECK(r.parameter_names == std::vector<std::string>{"theta"});
}

TEST_CASE("spectrum from the Gram form is symmetric, PSD and matches a direct solver") {
    Matrix J(6, 3);
    J << 1, 2, 3, 0.5, 0.1, 4, 2, 2, 2, 1, 0, 1, 3, 1, 0, 0.2, 0.3, 0.4;
    const auto r = hessian_from_jacobian(J, {"a", "b", "c"});
    CHECK((r.matrix - r.matrix.transpose()).norm() <= 1e-10 * r.matrix.norm());
    CHECK((r.matrix - 2 * J.transpose() * J).norm() <= 1e-12 * r.matrix.norm());
    Eigen::SelfAdjointEigenSolver<Matrix> es(r.matrix);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(r.eigenvalues(i) == doctest::Approx(es.eigenvalues()(2 - i)).epsilon(1e-10));
    for (Eigen::Index i = 0; i + 1 < 3; ++i) CHECK(r.eigenvalues(i) >= r.eigenvalues(i + 1));
    CHECK(r.eigenvalues.minCoeff() >= -1e-8 * r.eigenvalues(0));
}

TEST_CASE("eigengap") {
    auto [gap, idx] = eigengap(values({1e6, 1e2, 1e1}));
    CHECK(gap == doctest::Approx(4.0));
    CHECK(idx == 0);
    // Published 4thA spectrum.
    std::tie(gap, idx) = eigengap(values({2.82e21, 2.79e17, 8.38e14, 4.55e13, 1.82e6, 2.43e2, 30.11, 0.25, 0.11, 1.20e-3, 1.34e-5}));
    CHECK(gap == doctest::Approx(std::log10(4.55e13 / 1.82e6)).epsilon(1e-12));
    CHECK(gap == doctest::Approx(7.40).epsilon(1e-3));
    CHECK(idx == 3);
    std::tie(gap, idx) = eigengap(values({3, 3, 3}));
    CHECK(gap == 0.0);
    // Values at or below zero are floored instead of producing NaN.
    std::tie(gap, idx) = eigengap(values({1.0, 0.0}));
    CHECK(gap == doctest::Approx(300.0));
    CHECK_THROWS_AS(eigengap(values({1.0})), InvalidArgument);
}

TEST_CASE("SEIR loss Hessian agrees with finite differences") {
    const auto model = seir_model(9039);
    check_against_fd(model, to_quantities(seir_reference()), {0, 1, 2, 4}, 60);
}

TEST_CASE("4thA loss Hessian agrees with finite differences") {
    const auto model = fourtha_model();
    check_against_fd(model, to_quantities(fourtha_reference()), {0, 1, 2, 3, 4, 5, 6}, 60);
}

TEST_CASE("4thA spectrum spans many decades with the gap after the fourth or fifth eigenvalue") {
    const auto model = fourtha_model();
    std::vector<std::size_t> free;
    for (std::size_t j = 0; j < 11; ++j) free.push_back(j);  // Atilde0 fixed
    const auto r = loss_hessian(model, to_quantities(fourtha_reference()), free, SolverConfig::daily_grid(180));
    REQUIRE(r.eigenvalues.size() == 11);
    CHECK(std::log10(r.eigenvalues(0) / r.eigenvalues(10)) >= 20.0);
    CHECK((r.eigengap_index == 3 || r.eigengap_index == 4));
    CHECK(r.parameter_names.front() == "F");
}
