#include "epifit/ode.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace epifit {

namespace {

using Field = std::function<void(double, const double*, double*)>;

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void rk4_fixed(const Field& f, std::vector<double> y, const SolverConfig& cfg, Matrix& out) {
    const std::size_t n = y.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    const auto& grid = cfg.output_grid;
    for (std::size_t j = 0; j < n; ++j) out(0, j) = y[j];
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const double span = grid[g] - grid[g - 1];
        const auto steps = std::max<long>(1, static_cast<long>(std::ceil(span / cfg.step - 1e-9)));
        const double h = span / static_cast<double>(steps);
        double t = grid[g - 1];
        for (long s = 0; s < steps; ++s) {
            f(t, y.data(), k1.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
            f(t + 0.5 * h, tmp.data(), k2.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
            f(t + 0.5 * h, tmp.data(), k3.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + h * k3[j];
            f(t + h, tmp.data(), k4.data());
            for (std::size_t j = 0; j < n; ++j)
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            t = grid[g - 1] + static_cast<double>(s + 1) * h;
            if (!all_finite(y)) throw IntegrationDiverged(t, "non-finite state");
        }
        for (std::size_t j = 0; j < n; ++j) out(static_cast<Eigen::Index>(g), j) = y[j];
    }
}

// Dormand-Prince 5(4) with the standard 4th-order continuous extension.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

double initial_step(const Field& f, double t0, const std::vector<double>& y0,
                    const std::vector<double>& f0, const SolverConfig& cfg, double span) {
    const std::size_t n = y0.size();
    double d0 = 0, d1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y0[i]);
        d0 += (y0[i] / sc) * (y0[i] / sc);
        d1 += (f0[i] / sc) * (f0[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n));
    d1 = std::sqrt(d1 / static_cast<double>(n));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    std::vector<double> y1(n), f1(n);
    for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + h0 * f0[i];
    f(t0 + h0, y1.data(), f1.data());
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y0[i]);
        d2 += ((f1[i] - f0[i]) / sc) * ((f1[i] - f0[i]) / sc);
    }
    d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    const double h = std::min(100.0 * h0, h1);
    return std::isfinite(h) && h > 0 ? std::min(h, span) : 1e-6;
}

void rk45_adaptive(const Field& f, std::vector<double> y, const SolverConfig& cfg, Matrix& out) {
    using namespace dp;
    const std::size_t n = y.size();
    const auto& grid = cfg.output_grid;
    for (std::size_t j = 0; j < n; ++j) out(0, j) = y[j];
    if (grid.size() == 1) return;

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
    std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n);
    double t = grid.front();
    const double t_end = grid.back();
    f(t, y.data(), k1.data());
    if (!all_finite(k1)) throw IntegrationDiverged(t, "non-finite derivative");
    double h = initial_step(f, t, y, k1, cfg, t_end - t);
    std::size_t next = 1;
    bool rejected_last = false;
    constexpr long max_steps = 2'000'000;

    for (long step = 0; next < grid.size(); ++step) {
        if (step > max_steps) throw IntegrationDiverged(t, "step limit exceeded");
        if (t + h > t_end) h = t_end - t;
        if (h <= 1e-14 * std::max(1.0, std::abs(t)))
            throw IntegrationDiverged(t, "step size underflow");

        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
        f(t + c2 * h, tmp.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(t + c3 * h, tmp.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(t + c4 * h, tmp.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(t + c5 * h, tmp.data(), k5.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        f(t + h, tmp.data(), k6.data());
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
        f(t + h, ynew.data(), k7.data());

        double err = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                                  e7 * k7[i]);
            const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err += (e / sc) * (e / sc);
        }
        err = std::sqrt(err / static_cast<double>(n));

        if (!std::isfinite(err)) {
            h *= 0.1;
            rejected_last = true;
            continue;
        }
        if (err > 1.0) {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            rejected_last = true;
            continue;
        }

        // Accepted: build the dense-output polynomial on [t, t + h].
        for (std::size_t i = 0; i < n; ++i) {
            r1[i] = y[i];
            const double dy = ynew[i] - y[i];
            r2[i] = dy;
            r3[i] = h * k1[i] - dy;
            r4[i] = dy - h * k7[i] - r3[i];
            r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        }
        const double t_new = (t_end - (t + h) < 1e-12 * std::max(1.0, std::abs(t_end))) ? t_end : t + h;
        while (next < grid.size() && grid[next] <= t_new) {
            const double th = (grid[next] - t) / h;
            const double th1 = 1.0 - th;
            for (std::size_t i = 0; i < n; ++i)
                out(static_cast<Eigen::Index>(next), i) =
                    r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
            if (grid[next] == t_new)
                for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(next), i) = ynew[i];
            ++next;
        }

        t = t_new;
        y.swap(ynew);
        k1.swap(k7);
        if (!all_finite(y)) throw IntegrationDiverged(t, "non-finite state");

        double fac = err == 0.0 ? 10.0 : std::min(10.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        if (rejected_last) fac = std::min(fac, 1.0);
        h *= fac;
        rejected_last = false;
    }
}

void run(const Field& f, std::vector<double> y0, const SolverConfig& cfg, Matrix& out) {
    if (cfg.method == SolverMethod::rk4_fixed)
        rk4_fixed(f, std::move(y0), cfg, out);
    else
        rk45_adaptive(f, std::move(y0), cfg, out);
}

void check_inputs(const OdeSystem& system, std::span<const double> params, std::span<const double> x0,
                  const SolverConfig& cfg) {
    if (!system.rhs) throw InvalidArgument("ODE system has no right-hand side");
    if (x0.size() != system.dim)
        throw InvalidArgument("initial state has length " + std::to_string(x0.size()) +
                              ", system dimension is " + std::to_string(system.dim));
    if (params.size() != system.n_params)
        throw InvalidArgument("parameter vector has length " + std::to_string(params.size()) +
                              ", system expects " + std::to_string(system.n_params));
    cfg.validate();
}

}  // namespace

std::vector<double> SolverConfig::daily_grid(double horizon, double t0) {
    std::vector<double> grid;
    const auto n = static_cast<long>(std::floor(horizon + 1e-9));
    grid.reserve(static_cast<std::size_t>(n) + 1);
    for (long i = 0; i <= n; ++i) grid.push_back(t0 + static_cast<double>(i));
    return grid;
}

void SolverConfig::validate() const {
    if (output_grid.empty()) throw InvalidArgument("solver output grid is empty");
    for (std::size_t i = 1; i < output_grid.size(); ++i)
        if (!(output_grid[i] > output_grid[i - 1]))
            throw InvalidArgument("solver output grid must be strictly increasing");
    if (method == SolverMethod::rk4_fixed && !(step > 0))
        throw InvalidArgument("rk4 step must be positive");
    if (method == SolverMethod::rk45_adaptive && !(rel_tol > 0 && abs_tol >= 0))
        throw InvalidArgument("rk45 tolerances must be positive");
}

TimeSeries TimeSeries::select(Eigen::Index c) const {
    TimeSeries s;
    s.times = times;
    s.values = values.col(c);
    return s;
}

void TimeSeries::validate() const {
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw InvalidArgument("time series times must be strictly increasing");
    if (static_cast<std::size_t>(values.rows()) != times.size())
        throw InvalidArgument("time series row count does not match its time grid");
}

TimeSeries integrate(const OdeSystem& system, std::span<const double> params,
                     std::span<const double> x0, const SolverConfig& cfg) {
    check_inputs(system, params, x0, cfg);
    TimeSeries ts;
    ts.times = cfg.output_grid;
    ts.values.resize(static_cast<Eigen::Index>(cfg.output_grid.size()), static_cast<Eigen::Index>(system.dim));
    const std::size_t dim = system.dim;
    const Field f = [&](double t, const double* y, double* dy) {
        system.rhs(t, {y, dim}, params, {dy, dim});
    };
    run(f, {x0.begin(), x0.end()}, cfg, ts.values);
    return ts;
}

std::pair<TimeSeries, SensitivityTrajectory> integrate_with_sensitivities(
    const OdeSystem& system, std::span<const double> params, std::span<const double> x0,
    const SolverConfig& cfg, std::span<const std::size_t> free_param_indices,
    const std::optional<Matrix>& ic_param_jacobian) {
    check_inputs(system, params, x0, cfg);
    const auto dim = static_cast<Eigen::Index>(system.dim);
    const auto nf = static_cast<Eigen::Index>(free_param_indices.size());
    for (auto k : free_param_indices)
        if (k >= system.n_params) throw InvalidArgument("free parameter index out of range");
    if (ic_param_jacobian && (ic_param_jacobian->rows() != dim || ic_param_jacobian->cols() != nf))
        throw InvalidArgument("initial-condition parameter Jacobian has the wrong shape");

    // Augmented state: [x, vec(dx/dp_free), vec(dx/dx0)], column-major blocks.
    const Eigen::Index n_aug = dim + dim * nf + dim * dim;
    std::vector<double> z0(static_cast<std::size_t>(n_aug), 0.0);
    std::copy(x0.begin(), x0.end(), z0.begin());
    if (ic_param_jacobian) {
        Eigen::Map<Matrix>(z0.data() + dim, dim, nf) = *ic_param_jacobian;
    }
    Eigen::Map<Matrix>(z0.data() + dim + dim * nf, dim, dim).setIdentity();

    Matrix jx(dim, dim);
    Matrix jp(dim, static_cast<Eigen::Index>(system.n_params));
    const Field f = [&](double t, const double* z, double* dz) {
        std::span<const double> x{z, static_cast<std::size_t>(dim)};
        system.rhs(t, x, params, {dz, static_cast<std::size_t>(dim)});
        if (system.jacobian_state)
            system.jacobian_state(t, x, params, jx);
        else
            fd_jacobian_state(system, t, x, params, jx);
        if (nf > 0) {
            if (system.jacobian_params)
                system.jacobian_params(t, x, params, jp);
            else
                fd_jacobian_params(system, t, x, params, jp);
        }
        Eigen::Map<const Matrix> sp(z + dim, dim, nf);
        Eigen::Map<Matrix> dsp(dz + dim, dim, nf);
        dsp.noalias() = jx * sp;
        for (Eigen::Index c = 0; c < nf; ++c)
            dsp.col(c) += jp.col(static_cast<Eigen::Index>(free_param_indices[static_cast<std::size_t>(c)]));
        Eigen::Map<const Matrix> s0(z + dim + dim * nf, dim, dim);
        Eigen::Map<Matrix> ds0(dz + dim + dim * nf, dim, dim);
        ds0.noalias() = jx * s0;
    };

    Matrix out(static_cast<Eigen::Index>(cfg.output_grid.size()), n_aug);
    run(f, std::move(z0), cfg, out);

    TimeSeries ts;
    ts.times = cfg.output_grid;
    ts.values = out.leftCols(dim);
    SensitivityTrajectory sens;
    sens.d_state_d_params.reserve(cfg.output_grid.size());
    sens.d_state_d_ic.reserve(cfg.output_grid.size());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        Vector row = out.row(r).transpose();
        sens.d_state_d_params.emplace_back(Eigen::Map<const Matrix>(row.data() + dim, dim, nf));
        sens.d_state_d_ic.emplace_back(Eigen::Map<const Matrix>(row.data() + dim + dim * nf, dim, dim));
    }
    return {std::move(ts), std::move(sens)};
}

void fd_jacobian_state(const OdeSystem& system, double t, std::span<const double> x,
                       std::span<const double> p, Eigen::Ref<Matrix> out) {
    const std::size_t n = system.dim;
    std::vector<double> xp(x.begin(), x.end()), fp(n), fm(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double h = 1e-6 * std::max(std::abs(x[j]), 1e-8);
        xp[j] = x[j] + h;
        system.rhs(t, xp, p, fp);
        xp[j] = x[j] - h;
        system.rhs(t, xp, p, fm);
        xp[j] = x[j];
        for (std::size_t i = 0; i < n; ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2 * h);
    }
}

void fd_jacobian_params(const OdeSystem& system, double t, std::span<const double> x,
                        std::span<const double> p, Eigen::Ref<Matrix> out) {
    const std::size_t n = system.dim;
    std::vector<double> pp(p.begin(), p.end()), fp(n), fm(n);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double h = 1e-6 * std::max(std::abs(p[j]), 1e-8);
        pp[j] = p[j] + h;
        system.rhs(t, x, pp, fp);
        pp[j] = p[j] - h;
        system.rhs(t, x, pp, fm);
        pp[j] = p[j];
        for (std::size_t i = 0; i < n; ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2 * h);
    }
}

}  // namespace epifit
