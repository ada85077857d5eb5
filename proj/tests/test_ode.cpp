#include "epifit/error.hpp"
#include "epifit/models.hpp"
#include "epifit/ode.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace epifit;

namespace {

std::vector<double> vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

SolverConfig rk45(double horizon, double rtol = 1e-10, double atol = 1e-12) {
    SolverConfig cfg;
    cfg.output_grid = SolverConfig::daily_grid(horizon);
    cfg.rel_tol = rtol;
    cfg.abs_tol = atol;
    return cfg;
}

std::vector<double> seir_params() {
    const auto p = seir_reference();
    return {p.beta, p.sigma, p.gamma, p.N};
}

std::vector<double> seir_state() {
    const auto p = seir_reference();
    return {p.S0, p.E0, p.I0, p.R0};
}

OdeSystem decay_system() {
    OdeSystem sys;
    sys.dim = 1;
    sys.n_params = 1;
    sys.rhs = [](double, std::span<const double> x, std::span<const double> p, std::span<double> dx) {
        dx[0] = -p[0] * x[0];
    };
    return sys;
}

}  // namespace

TEST_CASE("integrate returns the initial state at t = 0") {
    const auto ts = integrate(seir_system(), seir_params(), seir_state(), rk45(60));
    CHECK(ts.values(0, 0) == 8485.0);
    CHECK(ts.values(0, 1) == 500.0);
    CHECK(ts.values(0, 2) == 50.0);
    CHECK(ts.values(0, 3) == 4.0);
    CHECK(ts.size() == 61);
}

TEST_CASE("SEIR conserves the total population at every grid point") {
    const auto ts = integrate(seir_system(), seir_params(), seir_state(), rk45(200, 1e-8, 1e-10));
    for (Eigen::Index i = 0; i < ts.values.rows(); ++i)
        CHECK(std::abs(ts.values.row(i).sum() - 9039.0) < 1e-9 * 9039.0);
}

TEST_CASE("fixed-step RK4 agrees with a tight adaptive oracle at t = 25") {
    SolverConfig fixed;
    fixed.method = SolverMethod::rk4_fixed;
    fixed.step = 0.01;
    fixed.output_grid = SolverConfig::daily_grid(25);
    const double I_rk4 = integrate(seir_system(), seir_params(), seir_state(), fixed).values(25, 2);
    const double I_ref = integrate(seir_system(), seir_params(), seir_state(), rk45(25, 1e-12, 1e-12)).values(25, 2);
    CHECK(std::abs(I_rk4 - I_ref) / I_ref < 1e-6);
}

TEST_CASE("RK4 converges with order close to four for every model") {
    struct Case {
        ModelDef model;
        Vector q;
        double horizon;
    };
    std::vector<Case> cases{{seir_model(9039), to_quantities(seir_reference()), 30},
                            {fourtha_model(), to_quantities(fourtha_reference()), 60},
                            {eaihrd_model(), to_quantities(fourtha_to_eaihrd(fourtha_reference(), 0.2, 0.1, 0.05)), 60}};
    for (const auto& c : cases) {
        CAPTURE(c.model.name);
        const Vector params = c.model.rhs_params(c.q);
        const Vector x0 = c.model.initial_state(c.q);
        std::vector<Vector> finals;
        for (double h : {2.0, 1.0, 0.5, 0.25}) {
            SolverConfig cfg;
            cfg.method = SolverMethod::rk4_fixed;
            cfg.step = h;
            cfg.output_grid = {0.0, c.horizon};
            const auto ts = integrate(c.model.system, vec(params), vec(x0), cfg);
            finals.push_back(ts.values.row(1).transpose());
        }
        // Differences between successive halvings shrink by 2^order.
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i + 1 < finals.size(); ++i) {
            lx.push_back(std::log(2.0 / std::pow(2.0, static_cast<double>(i))));
            ly.push_back(std::log(((finals[i] - finals[i + 1]).array() / finals.back().array()).abs().maxCoeff()));
        }
        const double mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3;
        double sxy = 0, sxx = 0;
        for (int i = 0; i < 3; ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        CHECK(sxy / sxx >= 3.7);
    }
}

TEST_CASE("non-finite states raise IntegrationDiverged with the failing time") {
    OdeSystem blowup;
    blowup.dim = 1;
    blowup.n_params = 0;
    blowup.rhs = [](double, std::span<const double> x, std::span<const double>, std::span<double> dx) {
        dx[0] = x[0] * x[0];
    };
    SolverConfig cfg;
    cfg.output_grid = {0.0, 2.0};
    try {
        integrate(blowup, std::vector<double>{}, std::vector<double>{1.0}, cfg);
        FAIL("expected divergence");
    } catch (const IntegrationDiverged& e) {
        CHECK(e.time() > 0.9);
        CHECK(e.time() <= 1.05);
    }
    cfg.method = SolverMethod::rk4_fixed;
    cfg.step = 0.01;
    CHECK_THROWS_AS(integrate(blowup, std::vector<double>{}, std::vector<double>{1.0}, cfg), IntegrationDiverged);
}

TEST_CASE("solver configuration is validated") {
    SolverConfig cfg;
    cfg.output_grid = {0.0, 1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.output_grid = {0.0, 1.0};
    cfg.rel_tol = -1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    CHECK_THROWS_AS(integrate(seir_system(), seir_params(), std::vector<double>{1.0}, rk45(5)), InvalidArgument);
}

TEST_CASE("sensitivity to initial conditions starts at the identity") {
    const std::vector<std::size_t> free{0, 1, 2};
    const auto [ts, sens] = integrate_with_sensitivities(seir_system(), seir_params(), seir_state(), rk45(10), free);
    CHECK(sens.d_state_d_ic.front().isApprox(Matrix::Identity(4, 4)));
    CHECK(sens.d_state_d_params.front().isZero());
    CHECK(sens.d_state_d_params.size() == ts.size());
}

TEST_CASE("given initial-condition Jacobian seeds the parameter sensitivities") {
    Matrix j0 = Matrix::Zero(4, 1);
    j0(0, 0) = 2.0;
    const std::vector<std::size_t> free{0};
    const auto [ts, sens] = integrate_with_sensitivities(seir_system(), seir_params(), seir_state(), rk45(5), free, j0);
    CHECK(sens.d_state_d_params.front().isApprox(j0));
}

TEST_CASE("linear decay sensitivity matches the closed form") {
    const double theta = 0.3, x0 = 2.0;
    const std::vector<std::size_t> free{0};
    const auto [ts, sens] = integrate_with_sensitivities(decay_system(), std::vector<double>{theta},
                                                         std::vector<double>{x0}, rk45(10, 1e-12, 1e-14), free);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double t = ts.times[i];
        CHECK(sens.d_state_d_params[i](0, 0) == doctest::Approx(-t * x0 * std::exp(-theta * t)).epsilon(1e-8));
        CHECK(sens.d_state_d_ic[i](0, 0) == doctest::Approx(std::exp(-theta * t)).epsilon(1e-8));
    }
}

TEST_CASE("SEIR dI/dbeta at t = 10 agrees with a central difference") {
    const std::vector<std::size_t> free{0};
    const auto [ts, sens] = integrate_with_sensitivities(seir_system(), seir_params(), seir_state(),
                                                         rk45(10, 1e-12, 1e-12), free);
    auto p_hi = seir_params(), p_lo = seir_params();
    const double h = 1e-6 * p_hi[0];
    p_hi[0] += h;
    p_lo[0] -= h;
    const double I_hi = integrate(seir_system(), p_hi, seir_state(), rk45(10, 1e-12, 1e-12)).values(10, 2);
    const double I_lo = integrate(seir_system(), p_lo, seir_state(), rk45(10, 1e-12, 1e-12)).values(10, 2);
    const double fd = (I_hi - I_lo) / (2 * h);
    CHECK(std::abs(sens.d_state_d_params[10](2, 0) - fd) / std::abs(fd) < 1e-4);
}

TEST_CASE("variational sensitivities agree with finite differences for every model") {
    struct Case {
        OdeSystem sys;
        std::vector<double> p, x0;
        double horizon;
    };
    const auto fa = fourtha_reference();
    const auto ea = fourtha_to_eaihrd(fa, 0.2, 0.1, 0.05);
    std::vector<Case> cases{
        {seir_system(), seir_params(), seir_state(), 30},
        {fourtha_system(), {fa.F, fa.R2, fa.R3, fa.r1, fa.C1, fa.C2, fa.alpha},
         {fa.D0, fa.D1_0, fa.D2_0, fa.D3_0, fa.Atilde0}, 60},
        {eaihrd_system(), {ea.a, ea.s, ea.r1, ea.r2, ea.r3, ea.h, ea.d, ea.c1, ea.c2},
         {ea.A0, ea.I0, ea.H0, ea.R0, ea.D0, ea.E0}, 60}};
    for (const auto& c : cases) {
        // States of the normalized models are ~1e-8, so their absolute tolerance is scaled down.
        const auto tight = rk45(c.horizon, 1e-12, c.sys.dim == 4 ? 1e-10 : 1e-24);
        std::vector<std::size_t> free(c.p.size());
        for (std::size_t j = 0; j < free.size(); ++j) free[j] = j;
        const auto [ts, sens] = integrate_with_sensitivities(c.sys, c.p, c.x0, tight, free);
        auto check_column = [&](const Matrix& fd_cols, auto analytic, std::string what, double h) {
            for (std::size_t i = 1; i < ts.size(); ++i) {
                const double col_scale = fd_cols.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff();
                for (Eigen::Index r = 0; r < fd_cols.rows(); ++r) {
                    const double a = analytic(i, r);
                    const double b = fd_cols(r, static_cast<Eigen::Index>(i));
                    if (std::abs(a) <= 1e-12 * std::abs(ts.values(static_cast<Eigen::Index>(i), r))) continue;
                    CAPTURE(c.sys.dim);
                    CAPTURE(what);
                    CAPTURE(i);
                    CAPTURE(r);
                    // Floor: solver/rounding noise in the state divided by the difference step.
                    const double noise = 1e-15 * std::abs(ts.values(static_cast<Eigen::Index>(i), r)) / h;
                    CHECK(std::abs(a - b) <= 1e-3 * std::abs(a) + 1e-6 * col_scale + noise);
                }
            }
        };
        for (std::size_t j = 0; j < c.p.size(); ++j) {
            auto hi = c.p, lo = c.p;
            const double h = 1e-5 * std::abs(c.p[j]);
            hi[j] += h;
            lo[j] -= h;
            const Matrix diff = (integrate(c.sys, hi, c.x0, tight).values - integrate(c.sys, lo, c.x0, tight).values) / (2 * h);
            check_column(diff.transpose(), [&](std::size_t i, Eigen::Index r) { return sens.d_state_d_params[i](r, static_cast<Eigen::Index>(j)); }, "param " + std::to_string(j), h);
        }
        for (std::size_t j = 0; j < c.x0.size(); ++j) {
            auto hi = c.x0, lo = c.x0;
            double scale = 0.0;
            for (double v : c.x0) scale = std::max(scale, std::abs(v));
            const double h = 1e-6 * scale;
            hi[j] += h;
            lo[j] -= h;
            const Matrix diff = (integrate(c.sys, c.p, hi, tight).values - integrate(c.sys, c.p, lo, tight).values) / (2 * h);
            check_column(diff.transpose(), [&](std::size_t i, Eigen::Index r) { return sens.d_state_d_ic[i](r, static_cast<Eigen::Index>(j)); }, "ic " + std::to_string(j), h);
        }
    }
}

TEST_CASE("finite-difference Jacobians match the analytic ones") {
    const auto fa = fourtha_reference();
    const auto ea = fourtha_to_eaihrd(fa, 0.2, 0.1, 0.05);
    struct Case {
        OdeSystem sys;
        std::vector<double> p, x;
    };
    std::vector<Case> cases{
        {seir_system(), seir_params(), {7000, 900, 800, 339}},
        {fourtha_system(), {fa.F, fa.R2, fa.R3, fa.r1, fa.C1, fa.C2, fa.alpha}, {1e-6, 2e-7, 3e-8, 1e-9, 2e-6}},
        {eaihrd_system(), {ea.a, ea.s, ea.r1, ea.r2, ea.r3, ea.h, ea.d, ea.c1, ea.c2}, {1e-4, 2e-4, 5e-5, 3e-4, 1e-5, 4e-4}}};
    for (const auto& c : cases) {
        const auto n = static_cast<Eigen::Index>(c.sys.dim);
        const auto p = static_cast<Eigen::Index>(c.sys.n_params);
        Matrix a(n, n), f(n, n), ap(n, p), fp(n, p);
        c.sys.jacobian_state(0.0, c.x, c.p, a);
        fd_jacobian_state(c.sys, 0.0, c.x, c.p, f);
        c.sys.jacobian_params(0.0, c.x, c.p, ap);
        fd_jacobian_params(c.sys, 0.0, c.x, c.p, fp);
        CHECK((a - f).norm() <= 1e-5 * a.norm());
        CHECK((ap - fp).norm() <= 1e-5 * ap.norm());
    }
}
