#pragma once

#include "epifit/ode.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace epifit {

// ---------------------------------------------------------------------------
// SEIR

/// SEIR with per-capita incidence: S' = -beta S I / N.
///
/// R0 is carried for bookkeeping (N = S0 + E0 + I0 + R0); it never enters
/// the dynamics of S, E, I. Symmetry partners may have R0 < 0.
struct SeirParams {
    double beta = 0, sigma = 0, gamma = 0;
    double S0 = 0, E0 = 0, I0 = 0, R0 = 0;
    double N = 0;

    /// Builds a parameter set with R0 = N - S0 - E0 - I0.
    static SeirParams with_population(double beta, double sigma, double gamma, double S0, double E0,
                                      double I0, double N);
    /// All rates positive and all compartments nonnegative.
    bool is_physical() const;
};

/// State (S, E, I, R); parameters (beta, sigma, gamma, N).
OdeSystem seir_system();

/// Partner set from the (sigma, gamma) swap that leaves I(t) unchanged.
SeirParams seir_symmetry_partner(const SeirParams& p);

/// Table-row-1 values: beta=0.45, sigma=1/3, gamma=0.1, (S,E,I,R)(0)=(8485,500,50,4).
SeirParams seir_reference();

// ---------------------------------------------------------------------------
// EAIHRD

/// EAIHRD rates and initial state, with populations stored as fractions of N.
///
/// c1 and c2 are in the normalized convention: the unnormalized rates acting
/// on head counts are c1 / N and c2 / N (see `unnormalized_c1`).
struct EaihrdParams {
    double a = 0, s = 0, r1 = 0, r2 = 0, r3 = 0, h = 0, d = 0;
    double c1 = 0, c2 = 0;
    double N = 1;
    double A0 = 0, I0 = 0, H0 = 0, R0 = 0, D0 = 0, E0 = 0;

    double unnormalized_c1() const { return c1 / N; }
    double unnormalized_c2() const { return c2 / N; }
};

/// State (A, I, H, R, D, E); parameters (a, s, r1, r2, r3, h, d, c1, c2).
OdeSystem eaihrd_system();

// ---------------------------------------------------------------------------
// 4thA: fourth-order ODE for D coupled with the scaled asymptomatic A~.

struct FourthAParams {
    double F = 0, R2 = 0, R3 = 0, r1 = 0;
    double C1 = 0, C2 = 0, alpha = 0;
    double D0 = 0, D1_0 = 0, D2_0 = 0, D3_0 = 0;  // D(0) and its first three derivatives
    double Atilde0 = 0;

    double k1() const { return F * R2 * R3; }
    double k2() const { return F * R2 + F * R3 + R2 * R3; }
    double k3() const { return F + R2 + R3; }
};

/// State (D, D', D'', D''', A~); parameters (F, R2, R3, r1, C1, C2, alpha).
OdeSystem fourtha_system();

/// Partner set from the F <-> R2 swap that leaves D(t) unchanged.
FourthAParams eaihrd_symmetry_partner(const FourthAParams& p);

/// Reduction of the EAIHRD rates and initial state to the 4thA parameters.
FourthAParams eaihrd_to_4tha(const EaihrdParams& p);

/// Inverse of `eaihrd_to_4tha` once the splits F = a + s, R2 = r2 + h,
/// R3 = r3 + d are fixed by choosing a, h and d. N is only recorded.
EaihrdParams fourtha_to_eaihrd(const FourthAParams& q, double a, double h, double d, double N = 1.0);

/// Exact 4thA set used for the Mexico-normalized experiments.
FourthAParams fourtha_reference();

inline constexpr double mexico_population = 127'575'528.0;

// ---------------------------------------------------------------------------
// Model definitions used by the estimators.

enum class ModelKind { seir, eaihrd, fourtha };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

/// An ODE model seen through its full quantity vector: rate parameters
/// followed by initial conditions. Both the rhs parameters and the initial
/// state are affine in the quantity vector:
///   rhs_params = param_map * q + param_offset
///   x0         = ic_map * q + ic_offset
struct ModelDef {
    ModelKind kind{};
    std::string name;
    OdeSystem system;
    std::vector<std::string> state_names;
    std::vector<std::string> quantity_names;
    Eigen::Index observable = 0;
    Eigen::Index hidden = 0;  // default non-observable for prediction bands
    Matrix param_map;
    Vector param_offset;
    Matrix ic_map;
    Vector ic_offset;
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;

    std::size_t n_quantities() const { return quantity_names.size(); }
    std::size_t quantity_index(const std::string& quantity) const;
    Eigen::Index state_index(const std::string& state) const;

    Vector rhs_params(const Vector& q) const { return param_map * q + param_offset; }
    Vector initial_state(const Vector& q) const { return ic_map * q + ic_offset; }

    SolverConfig solver(std::vector<double> grid) const;

    /// All states on `grid`.
    TimeSeries simulate(const Vector& q, const std::vector<double>& grid) const;
    TimeSeries simulate(const Vector& q, const SolverConfig& cfg) const;

    /// Observable and its derivative with respect to the selected quantities:
    /// returns the n_times x 1 series and the n_times x |free| Jacobian.
    std::pair<TimeSeries, Matrix> observable_sensitivities(const Vector& q,
                                                           const std::vector<std::size_t>& free,
                                                           const SolverConfig& cfg) const;
};

/// SEIR quantities (beta, sigma, gamma, S0, E0, I0); N is a model constant.
ModelDef seir_model(double N);
/// EAIHRD quantities (a, s, r1, r2, r3, h, d, c1, c2, A0, I0, H0, R0, D0, E0).
ModelDef eaihrd_model();
/// 4thA quantities (F, R2, R3, r1, C1, C2, alpha, D0, D1_0, D2_0, D3_0, Atilde0).
ModelDef fourtha_model();
ModelDef make_model(ModelKind kind, double seir_population = 9039.0);

Vector to_quantities(const SeirParams& p);
Vector to_quantities(const EaihrdParams& p);
Vector to_quantities(const FourthAParams& p);
SeirParams seir_from_quantities(const Vector& q, double N);
FourthAParams fourtha_from_quantities(const Vector& q);
EaihrdParams eaihrd_from_quantities(const Vector& q, double N = 1.0);

// ---------------------------------------------------------------------------
// Symmetry verification

struct SymmetryPair {
    Vector primary;
    Vector partner;
    std::string map_name;
};

struct SymmetryCheck {
    bool holds = false;
    double max_deviation = 0;  // max relative pointwise deviation of the observable
    double at_time = 0;
};

/// Integrates both sets on a daily grid over [0, horizon] and compares the observable.
SymmetryCheck verify_symmetry(const ModelDef& model, const SymmetryPair& pair, double horizon,
                              double tol);

}  // namespace epifit
