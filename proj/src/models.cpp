#include "epifit/models.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <cmath>

namespace epifit {

// ---------------------------------------------------------------------------
// SEIR

SeirParams SeirParams::with_population(double beta, double sigma, double gamma, double S0, double E0,
                                       double I0, double N) {
    return SeirParams{beta, sigma, gamma, S0, E0, I0, N - S0 - E0 - I0, N};
}

bool SeirParams::is_physical() const {
    return beta > 0 && sigma > 0 && gamma > 0 && S0 >= 0 && E0 >= 0 && I0 >= 0 && R0 >= 0;
}

OdeSystem seir_system() {
    OdeSystem sys;
    sys.dim = 4;
    sys.n_params = 4;
    sys.rhs = [](double, std::span<const double> x, std::span<const double> p, std::span<double> dx) {
        const double beta = p[0], sigma = p[1], gamma = p[2], N = p[3];
        const double infection = beta * x[0] * x[2] / N;
        dx[0] = -infection;
        dx[1] = infection - sigma * x[1];
        dx[2] = sigma * x[1] - gamma * x[2];
        dx[3] = gamma * x[2];
    };
    sys.jacobian_state = [](double, std::span<const double> x, std::span<const double> p,
                            Eigen::Ref<Matrix> J) {
        const double beta = p[0], sigma = p[1], gamma = p[2], N = p[3];
        const double S = x[0], I = x[2];
        J.setZero();
        J(0, 0) = -beta * I / N;
        J(0, 2) = -beta * S / N;
        J(1, 0) = beta * I / N;
        J(1, 1) = -sigma;
        J(1, 2) = beta * S / N;
        J(2, 1) = sigma;
        J(2, 2) = -gamma;
        J(3, 2) = gamma;
    };
    sys.jacobian_params = [](double, std::span<const double> x, std::span<const double> p,
                             Eigen::Ref<Matrix> J) {
        const double beta = p[0], N = p[3];
        const double S = x[0], E = x[1], I = x[2];
        J.setZero();
        J(0, 0) = -S * I / N;
        J(1, 0) = S * I / N;
        J(1, 1) = -E;
        J(2, 1) = E;
        J(2, 2) = -I;
        J(3, 2) = I;
        J(0, 3) = beta * S * I / (N * N);
        J(1, 3) = -beta * S * I / (N * N);
    };
    return sys;
}

SeirParams seir_symmetry_partner(const SeirParams& p) {
    if (p.sigma == p.gamma)
        throw DegenerateSymmetry("sigma == gamma: the swap partner equals the primary set");
    if (p.gamma == 0 || p.sigma == 0) throw DegenerateSymmetry("sigma and gamma must be nonzero");
    SeirParams q = p;
    q.sigma = p.gamma;
    q.gamma = p.sigma;
    q.S0 = p.S0 * p.sigma / q.sigma;
    q.E0 = (p.sigma / q.sigma) * p.E0 + ((q.gamma - p.gamma) / q.sigma) * p.I0;
    q.R0 = p.N - q.S0 - q.E0 - q.I0;
    return q;
}

SeirParams seir_reference() {
    return SeirParams{0.45, 1.0 / 3.0, 0.1, 8485.0, 500.0, 50.0, 4.0, 9039.0};
}

// ---------------------------------------------------------------------------
// EAIHRD

OdeSystem eaihrd_system() {
    // state: A I H R D E ; params: a s r1 r2 r3 h d c1 c2
    OdeSystem sys;
    sys.dim = 6;
    sys.n_params = 9;
    sys.rhs = [](double, std::span<const double> x, std::span<const double> p, std::span<double> dx) {
        const double a = p[0], s = p[1], r1 = p[2], r2 = p[3], r3 = p[4], h = p[5], d = p[6];
        const double c1 = p[7], c2 = p[8];
        const double A = x[0], I = x[1], H = x[2], E = x[5];
        const double susceptible = 1.0 - (x[0] + x[1] + x[2] + x[3] + x[4] + x[5]);
        dx[0] = a * E - r1 * A;
        dx[1] = s * E - (h + r2) * I;
        dx[2] = h * I - (r3 + d) * H;
        dx[3] = r1 * A + r2 * I + r3 * H;
        dx[4] = d * H;
        dx[5] = susceptible * (c1 * A + c2 * I) - (a + s) * E;
    };
    sys.jacobian_state = [](double, std::span<const double> x, std::span<const double> p,
                            Eigen::Ref<Matrix> J) {
        const double a = p[0], s = p[1], r1 = p[2], r2 = p[3], r3 = p[4], h = p[5], d = p[6];
        const double c1 = p[7], c2 = p[8];
        const double A = x[0], I = x[1];
        const double M = 1.0 - (x[0] + x[1] + x[2] + x[3] + x[4] + x[5]);
        const double lambda = c1 * A + c2 * I;
        J.setZero();
        J(0, 0) = -r1;
        J(0, 5) = a;
        J(1, 1) = -(h + r2);
        J(1, 5) = s;
        J(2, 1) = h;
        J(2, 2) = -(r3 + d);
        J(3, 0) = r1;
        J(3, 1) = r2;
        J(3, 2) = r3;
        J(4, 2) = d;
        for (int k = 0; k < 6; ++k) J(5, k) = -lambda;
        J(5, 0) += M * c1;
        J(5, 1) += M * c2;
        J(5, 5) -= a + s;
    };
    sys.jacobian_params = [](double, std::span<const double> x, std::span<const double>,
                             Eigen::Ref<Matrix> J) {
        const double A = x[0], I = x[1], H = x[2], E = x[5];
        const double M = 1.0 - (x[0] + x[1] + x[2] + x[3] + x[4] + x[5]);
        J.setZero();
        J(0, 0) = E;   // a
        J(5, 0) = -E;
        J(1, 1) = E;   // s
        J(5, 1) = -E;
        J(0, 2) = -A;  // r1
        J(3, 2) = A;
        J(1, 3) = -I;  // r2
        J(3, 3) = I;
        J(2, 4) = -H;  // r3
        J(3, 4) = H;
        J(1, 5) = -I;  // h
        J(2, 5) = I;
        J(2, 6) = -H;  // d
        J(4, 6) = H;
        J(5, 7) = M * A;  // c1
        J(5, 8) = M * I;  // c2
    };
    return sys;
}

// ---------------------------------------------------------------------------
// 4thA

OdeSystem fourtha_system() {
    // state: D D1 D2 D3 At ; params: F R2 R3 r1 C1 C2 alpha
    OdeSystem sys;
    sys.dim = 5;
    sys.n_params = 7;
    sys.rhs = [](double, std::span<const double> x, std::span<const double> p, std::span<double> dx) {
        const double F = p[0], R2 = p[1], R3 = p[2], r1 = p[3], C1 = p[4], C2 = p[5], alpha = p[6];
        const double k1 = F * R2 * R3, k2 = F * R2 + F * R3 + R2 * R3, k3 = F + R2 + R3;
        const double D = x[0], D1 = x[1], D2 = x[2], D3 = x[3], At = x[4];
        const double Q = D3 + k3 * D2 + k2 * D1 + k1 * D - alpha;
        const double Z = C1 * At + C2 * (D2 + R3 * D1);
        dx[0] = D1;
        dx[1] = D2;
        dx[2] = D3;
        dx[3] = -(k3 * D3 + k2 * D2 + k1 * D1) - Q * Z;
        dx[4] = D3 + D2 * (R2 + R3) + D1 * R2 * R3 - r1 * At;
    };
    sys.jacobian_state = [](double, std::span<const double> x, std::span<const double> p,
                            Eigen::Ref<Matrix> J) {
        const double F = p[0], R2 = p[1], R3 = p[2], r1 = p[3], C1 = p[4], C2 = p[5], alpha = p[6];
        const double k1 = F * R2 * R3, k2 = F * R2 + F * R3 + R2 * R3, k3 = F + R2 + R3;
        const double D = x[0], D1 = x[1], D2 = x[2], D3 = x[3], At = x[4];
        const double Q = D3 + k3 * D2 + k2 * D1 + k1 * D - alpha;
        const double Z = C1 * At + C2 * (D2 + R3 * D1);
        J.setZero();
        J(0, 1) = 1;
        J(1, 2) = 1;
        J(2, 3) = 1;
        J(3, 0) = -k1 * Z;
        J(3, 1) = -k1 - k2 * Z - Q * C2 * R3;
        J(3, 2) = -k2 - k3 * Z - Q * C2;
        J(3, 3) = -k3 - Z;
        J(3, 4) = -Q * C1;
        J(4, 1) = R2 * R3;
        J(4, 2) = R2 + R3;
        J(4, 3) = 1;
        J(4, 4) = -r1;
    };
    sys.jacobian_params = [](double, std::span<const double> x, std::span<const double> p,
                             Eigen::Ref<Matrix> J) {
        const double F = p[0], R2 = p[1], R3 = p[2], C1 = p[4], C2 = p[5], alpha = p[6];
        const double k1 = F * R2 * R3, k2 = F * R2 + F * R3 + R2 * R3, k3 = F + R2 + R3;
        const double D = x[0], D1 = x[1], D2 = x[2], D3 = x[3], At = x[4];
        const double Q = D3 + k3 * D2 + k2 * D1 + k1 * D - alpha;
        const double u = D2 + R3 * D1;
        const double Z = C1 * At + C2 * u;
        // d k / d (F, R2, R3)
        const double dk1[3] = {R2 * R3, F * R3, F * R2};
        const double dk2[3] = {R2 + R3, F + R3, F + R2};
        J.setZero();
        for (int j = 0; j < 3; ++j) {
            const double dQ = D2 + dk2[j] * D1 + dk1[j] * D;  // dk3 = 1
            const double dZ = j == 2 ? C2 * D1 : 0.0;
            J(3, j) = -(D3 + dk2[j] * D2 + dk1[j] * D1) - dQ * Z - Q * dZ;
        }
        J(4, 1) = D2 + R3 * D1;  // R2
        J(4, 2) = D2 + R2 * D1;  // R3
        J(4, 3) = -At;           // r1
        J(3, 4) = -Q * At;       // C1
        J(3, 5) = -Q * u;        // C2
        J(3, 6) = Z;             // alpha
    };
    return sys;
}

FourthAParams eaihrd_symmetry_partner(const FourthAParams& p) {
    if (p.F == p.r1) throw DegenerateSymmetry("F == r1: symmetry map denominator vanishes");
    if (p.R2 == p.r1) throw DegenerateSymmetry("R2 == r1: symmetry map denominator vanishes");
    FourthAParams q = p;
    q.F = p.R2;
    q.R2 = p.F;
    q.C1 = p.C1 * (p.R2 - p.r1) / (p.F - p.r1);
    q.C2 = p.C2 + p.C1 * (p.F - p.R2) / (p.F - p.r1);
    q.Atilde0 = ((p.F - p.r1) / (p.R2 - p.r1)) * p.Atilde0 +
                ((p.F - p.R2) / (p.r1 - p.R2)) * (p.D2_0 + p.R3 * p.D1_0);
    return q;
}

FourthAParams eaihrd_to_4tha(const EaihrdParams& p) {
    if (!(p.h > 0) || !(p.s > 0) || !(p.d > 0))
        throw ReductionUndefined("reduction needs h, s, d > 0");
    if (!(p.a > 0)) throw ReductionUndefined("scaling A~ = (hsd/a) A needs a > 0");
    const double hsd = p.h * p.s * p.d;
    FourthAParams q;
    q.F = p.a + p.s;
    q.R2 = p.r2 + p.h;
    q.R3 = p.r3 + p.d;
    q.r1 = p.r1;
    q.C1 = p.a * p.c1 / hsd;
    q.C2 = p.s * p.c2 / hsd;
    q.D0 = p.D0;
    q.D1_0 = p.d * p.H0;
    q.D2_0 = p.h * p.d * p.I0 - q.R3 * p.d * p.H0;
    q.D3_0 = hsd * p.E0 - p.h * p.d * (q.R2 + q.R3) * p.I0 + q.R3 * q.R3 * p.d * p.H0;
    q.alpha = hsd * (1.0 - (p.A0 + p.I0 + p.H0 + p.R0 + p.D0)) +
              q.F * (q.D2_0 + q.D1_0 * (q.R2 + q.R3) + q.D0 * q.R2 * q.R3);
    q.Atilde0 = hsd / p.a * p.A0;
    return q;
}

EaihrdParams fourtha_to_eaihrd(const FourthAParams& q, double a, double h, double d, double N) {
    EaihrdParams p;
    p.a = a;
    p.h = h;
    p.d = d;
    p.s = q.F - a;
    p.r2 = q.R2 - h;
    p.r3 = q.R3 - d;
    p.r1 = q.r1;
    if (!(a > 0) || !(h > 0) || !(d > 0) || !(p.s > 0) || !(p.r2 >= 0) || !(p.r3 >= 0))
        throw InvalidArgument("rate split must give positive a, s, h, d and nonnegative r2, r3");
    const double hsd = h * p.s * d;
    p.c1 = q.C1 * hsd / a;
    p.c2 = q.C2 * hsd / p.s;
    p.N = N;
    p.D0 = q.D0;
    p.H0 = q.D1_0 / d;
    p.I0 = (q.D2_0 + q.R3 * q.D1_0) / (h * d);
    p.E0 = (q.D3_0 + h * d * (q.R2 + q.R3) * p.I0 - q.R3 * q.R3 * q.D1_0) / hsd;
    p.A0 = a * q.Atilde0 / hsd;
    const double bracket = q.D2_0 + q.D1_0 * (q.R2 + q.R3) + q.D0 * q.R2 * q.R3;
    p.R0 = 1.0 - (p.A0 + p.I0 + p.H0 + p.D0) - (q.alpha - q.F * bracket) / hsd;
    return p;
}

FourthAParams fourtha_reference() {
    FourthAParams p;
    p.F = 0.4721;
    p.r1 = 0.1453;
    p.R2 = 0.1793;
    p.R3 = 0.1036;
    p.C1 = 44.1761;
    p.C2 = 163.6048;
    p.alpha = 0.000425;
    p.D0 = 0.0392e-6;
    p.D1_0 = 0.0144e-6;
    p.D2_0 = 0.0183e-6;
    p.D3_0 = 0.0058e-6;
    p.Atilde0 = 0.1702e-6;
    return p;
}

// ---------------------------------------------------------------------------
// Model definitions

ModelKind parse_model_kind(const std::string& name) {
    if (name == "seir") return ModelKind::seir;
    if (name == "eaihrd") return ModelKind::eaihrd;
    if (name == "fourtha" || name == "4tha") return ModelKind::fourtha;
    throw InvalidArgument("unknown model '" + name + "' (expected seir, eaihrd or fourtha)");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::seir: return "seir";
        case ModelKind::eaihrd: return "eaihrd";
        case ModelKind::fourtha: return "fourtha";
    }
    return "?";
}

std::size_t ModelDef::quantity_index(const std::string& quantity) const {
    const auto it = std::find(quantity_names.begin(), quantity_names.end(), quantity);
    if (it == quantity_names.end())
        throw InvalidArgument("model " + name + " has no quantity '" + quantity + "'");
    return static_cast<std::size_t>(it - quantity_names.begin());
}

Eigen::Index ModelDef::state_index(const std::string& state) const {
    const auto it = std::find(state_names.begin(), state_names.end(), state);
    if (it == state_names.end()) throw InvalidArgument("model " + name + " has no state '" + state + "'");
    return it - state_names.begin();
}

SolverConfig ModelDef::solver(std::vector<double> grid) const {
    SolverConfig cfg;
    cfg.method = SolverMethod::rk45_adaptive;
    cfg.rel_tol = rel_tol;
    cfg.abs_tol = abs_tol;
    cfg.output_grid = std::move(grid);
    return cfg;
}

TimeSeries ModelDef::simulate(const Vector& q, const std::vector<double>& grid) const {
    return simulate(q, solver(grid));
}

TimeSeries ModelDef::simulate(const Vector& q, const SolverConfig& cfg) const {
    if (static_cast<std::size_t>(q.size()) != n_quantities())
        throw InvalidArgument("quantity vector has the wrong length for model " + name);
    const Vector p = rhs_params(q);
    const Vector x0 = initial_state(q);
    return integrate(system, {p.data(), static_cast<std::size_t>(p.size())},
                     {x0.data(), static_cast<std::size_t>(x0.size())}, cfg);
}

std::pair<TimeSeries, Matrix> ModelDef::observable_sensitivities(const Vector& q,
                                                                 const std::vector<std::size_t>& free,
                                                                 const SolverConfig& cfg) const {
    if (static_cast<std::size_t>(q.size()) != n_quantities())
        throw InvalidArgument("quantity vector has the wrong length for model " + name);
    const Vector p = rhs_params(q);
    const Vector x0 = initial_state(q);
    std::vector<std::size_t> all(system.n_params);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto [ts, sens] = integrate_with_sensitivities(
        system, {p.data(), static_cast<std::size_t>(p.size())},
        {x0.data(), static_cast<std::size_t>(x0.size())}, cfg, all);

    Matrix pm(param_map.rows(), static_cast<Eigen::Index>(free.size()));
    Matrix cm(ic_map.rows(), static_cast<Eigen::Index>(free.size()));
    for (std::size_t j = 0; j < free.size(); ++j) {
        if (free[j] >= n_quantities()) throw InvalidArgument("free quantity index out of range");
        pm.col(static_cast<Eigen::Index>(j)) = param_map.col(static_cast<Eigen::Index>(free[j]));
        cm.col(static_cast<Eigen::Index>(j)) = ic_map.col(static_cast<Eigen::Index>(free[j]));
    }
    Matrix jac(static_cast<Eigen::Index>(ts.size()), static_cast<Eigen::Index>(free.size()));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Matrix dx = sens.d_state_d_params[i] * pm + sens.d_state_d_ic[i] * cm;
        jac.row(static_cast<Eigen::Index>(i)) = dx.row(observable);
    }
    return {ts.select(observable), std::move(jac)};
}

namespace {

Matrix selection(Eigen::Index rows, Eigen::Index cols, Eigen::Index first_col) {
    Matrix m = Matrix::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) m(i, first_col + i) = 1.0;
    return m;
}

}  // namespace

ModelDef seir_model(double N) {
    if (!(N > 0)) throw InvalidArgument("SEIR population must be positive");
    ModelDef m;
    m.kind = ModelKind::seir;
    m.name = "seir";
    m.system = seir_system();
    m.state_names = {"S", "E", "I", "R"};
    m.quantity_names = {"beta", "sigma", "gamma", "S0", "E0", "I0"};
    m.observable = 2;
    m.hidden = 1;
    m.param_map = Matrix::Zero(4, 6);
    m.param_map.topLeftCorner(3, 3).setIdentity();
    m.param_offset = Vector::Zero(4);
    m.param_offset(3) = N;
    m.ic_map = Matrix::Zero(4, 6);
    m.ic_map.block(0, 3, 3, 3).setIdentity();
    m.ic_map.block(3, 3, 1, 3).setConstant(-1.0);
    m.ic_offset = Vector::Zero(4);
    m.ic_offset(3) = N;
    m.rel_tol = 1e-8;
    m.abs_tol = 1e-10;
    return m;
}

ModelDef eaihrd_model() {
    ModelDef m;
    m.kind = ModelKind::eaihrd;
    m.name = "eaihrd";
    m.system = eaihrd_system();
    m.state_names = {"A", "I", "H", "R", "D", "E"};
    m.quantity_names = {"a", "s", "r1", "r2", "r3", "h", "d", "c1", "c2",
                        "A0", "I0", "H0", "R0", "D0", "E0"};
    m.observable = 4;
    m.hidden = 0;
    m.param_map = selection(9, 15, 0);
    m.param_offset = Vector::Zero(9);
    m.ic_map = selection(6, 15, 9);
    m.ic_offset = Vector::Zero(6);
    // populations are fractions of N, of order 1e-8 at t = 0
    m.rel_tol = 1e-8;
    m.abs_tol = 1e-18;
    return m;
}

ModelDef fourtha_model() {
    ModelDef m;
    m.kind = ModelKind::fourtha;
    m.name = "fourtha";
    m.system = fourtha_system();
    m.state_names = {"D", "D1", "D2", "D3", "Atilde"};
    m.quantity_names = {"F",  "R2",   "R3",   "r1",   "C1",   "C2",
                        "alpha", "D0", "D1_0", "D2_0", "D3_0", "Atilde0"};
    m.observable = 0;
    m.hidden = 4;
    m.param_map = selection(7, 12, 0);
    m.param_offset = Vector::Zero(7);
    m.ic_map = selection(5, 12, 7);
    m.ic_offset = Vector::Zero(5);
    m.rel_tol = 1e-8;
    m.abs_tol = 1e-18;
    return m;
}

ModelDef make_model(ModelKind kind, double seir_population) {
    switch (kind) {
        case ModelKind::seir: return seir_model(seir_population);
        case ModelKind::eaihrd: return eaihrd_model();
        case ModelKind::fourtha: return fourtha_model();
    }
    throw InvalidArgument("unknown model kind");
}

Vector to_quantities(const SeirParams& p) {
    Vector q(6);
    q << p.beta, p.sigma, p.gamma, p.S0, p.E0, p.I0;
    return q;
}

Vector to_quantities(const EaihrdParams& p) {
    Vector q(15);
    q << p.a, p.s, p.r1, p.r2, p.r3, p.h, p.d, p.c1, p.c2, p.A0, p.I0, p.H0, p.R0, p.D0, p.E0;
    return q;
}

Vector to_quantities(const FourthAParams& p) {
    Vector q(12);
    q << p.F, p.R2, p.R3, p.r1, p.C1, p.C2, p.alpha, p.D0, p.D1_0, p.D2_0, p.D3_0, p.Atilde0;
    return q;
}

SeirParams seir_from_quantities(const Vector& q, double N) {
    if (q.size() != 6) throw InvalidArgument("SEIR quantity vector must have 6 entries");
    return SeirParams::with_population(q(0), q(1), q(2), q(3), q(4), q(5), N);
}

FourthAParams fourtha_from_quantities(const Vector& q) {
    if (q.size() != 12) throw InvalidArgument("4thA quantity vector must have 12 entries");
    return FourthAParams{q(0), q(1), q(2), q(3), q(4), q(5), q(6), q(7), q(8), q(9), q(10), q(11)};
}

EaihrdParams eaihrd_from_quantities(const Vector& q, double N) {
    if (q.size() != 15) throw InvalidArgument("EAIHRD quantity vector must have 15 entries");
    EaihrdParams p;
    p.a = q(0);
    p.s = q(1);
    p.r1 = q(2);
    p.r2 = q(3);
    p.r3 = q(4);
    p.h = q(5);
    p.d = q(6);
    p.c1 = q(7);
    p.c2 = q(8);
    p.N = N;
    p.A0 = q(9);
    p.I0 = q(10);
    p.H0 = q(11);
    p.R0 = q(12);
    p.D0 = q(13);
    p.E0 = q(14);
    return p;
}

SymmetryCheck verify_symmetry(const ModelDef& model, const SymmetryPair& pair, double horizon, double tol) {
    const auto grid = SolverConfig::daily_grid(horizon);
    const Vector a = model.simulate(pair.primary, grid).column(model.observable);
    const Vector b = model.simulate(pair.partner, grid).column(model.observable);
    SymmetryCheck check;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a(i)), std::abs(b(i)), 1e-300});
        const double dev = std::abs(a(i) - b(i)) / scale;
        if (dev > check.max_deviation) {
            check.max_deviation = dev;
            check.at_time = grid[static_cast<std::size_t>(i)];
        }
    }
    check.holds = check.max_deviation < tol;
    return check;
}

}  // namespace epifit
