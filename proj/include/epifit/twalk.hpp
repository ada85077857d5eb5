#pragma once

#include "epifit/ode.hpp"
#include "epifit/optimize.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <utility>

namespace epifit {

/// Both point sequences of a t-walk run. `states` is the primary chain (the
/// x point); `partner_states` is the coupled x' point.
struct McmcChain {
    Matrix states;          // n_steps x p
    Matrix partner_states;  // n_steps x p
    Vector log_posterior;   // of `states`, i.e. -U
    double acceptance_rate = 0.0;
    Vector psrf;            // per parameter, last half of the two chains
    std::size_t steps() const { return static_cast<std::size_t>(states.rows()); }
};

/// Energy U = -log target (up to a constant); +infinity or an epifit::Error
/// marks points outside the support.
using Energy = std::function<double(const Vector&)>;

/// The t-walk kernel with default move mix (walk, traverse, blow, hop) and
/// constants a_w = 1.5, a_t = 6, support restricted to a box.
class TWalk {
public:
    TWalk(Energy energy, Vector lower, Vector upper, const Vector& x0, const Vector& xp0,
          std::uint64_t seed);

    /// Advances the pair by `n_steps` kernel applications, appending both points per step.
    void run(std::size_t n_steps);

    std::size_t steps() const { return n_recorded_; }
    std::size_t dimension() const { return static_cast<std::size_t>(x_.size()); }
    std::size_t accepted() const { return accepted_; }

    /// PSRF of the last `window` recorded steps of the two points.
    Vector psrf_last(std::size_t window) const;

    /// Snapshot of everything recorded so far (psrf left empty).
    McmcChain chain() const;

private:
    double energy(const Vector& v) const;
    bool in_support(const Vector& y, const Vector& other) const;
    double simbeta();
    void record();

    Energy energy_;
    Vector lower_, upper_;
    Vector x_, xp_;
    double u_, up_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
    double pphi_;
    std::size_t accepted_ = 0;
    std::size_t n_recorded_ = 0;
    Matrix xs_, xps_;
    Vector us_;
};

/// Runs `n_steps` of the t-walk from `init_pair` on the free coordinates of
/// `space`; `neg_log_posterior` receives free coordinates in natural units.
McmcChain twalk_sample(const Objective& neg_log_posterior, const ParameterSpace& space,
                       std::size_t n_steps, std::uint64_t seed,
                       const std::pair<Vector, Vector>& init_pair);

/// Two-chain Gelman-Rubin potential scale reduction factor per column.
Vector psrf(const Matrix& chain_a, const Matrix& chain_b);

/// PSRF of the last `window` rows of both chains of `chain`.
Vector chain_psrf(const McmcChain& chain, std::size_t window);

/// Rows end, end - skip, ..., (n_keep of them), returned in chronological order.
std::vector<std::size_t> thin_indices(std::size_t length, std::size_t n_keep, std::size_t skip);
Matrix thin_chain(const Matrix& states, std::size_t n_keep, std::size_t skip);

}  // namespace epifit
