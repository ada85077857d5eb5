#pragma once

#include "epifit/ode.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace epifit {

enum class ObjectiveKind { log_sq, rel_sq, neg_log_likelihood, neg_log_posterior };
enum class DataTransform { levels, increments };

ObjectiveKind parse_objective_kind(const std::string& name);
std::string to_string(ObjectiveKind kind);
DataTransform parse_data_transform(const std::string& name);
std::string to_string(DataTransform t);

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::rel_sq;
    DataTransform data_transform = DataTransform::levels;
    /// Empty: sigma_L is a free search coordinate. Otherwise the pinned value.
    std::optional<double> sigma_L_fixed;

    bool uses_sigma_L() const {
        return kind == ObjectiveKind::neg_log_likelihood || kind == ObjectiveKind::neg_log_posterior;
    }
};

/// Independent Gaussian prior per search coordinate: mean (lb+ub)/2, std (ub-lb)/6.
struct PriorSpec {
    Vector mean;
    Vector stddev;

    static PriorSpec from_bounds(const Vector& lower, const Vector& upper);
    /// Sum of (theta_j - mu_j)^2 / (2 s_j^2); additive constants dropped.
    double neg_log_prior(const Vector& theta) const;
};

/// [t_init, t_init + t_train], inclusive at both ends.
struct TrainingWindow {
    double t_init = 0.0;
    double t_train = 0.0;

    TimeSeries apply(const TimeSeries& series) const;
};

// Core formulas on aligned value vectors. All throw ObjectiveUndefined naming
// the first offending index.

/// Sum |log d_i - log m_i|^2; every value must be > 0.
double log_sq_loss(const Vector& data, const Vector& model);
/// Sum |d_i / m_i - 1|^2; model values must be nonzero.
double rel_sq_loss(const Vector& data, const Vector& model);
/// n ln sigma_L + Sum ln m_i + Sum (d_i / m_i - 1)^2 / (2 sigma_L^2).
double neg_log_likelihood(const Vector& data, const Vector& model, double sigma_L);
/// neg_log_likelihood + prior.neg_log_prior(theta).
double neg_log_posterior(const Vector& data, const Vector& model, double sigma_L, const Vector& theta,
                         const PriorSpec& prior);

/// First differences; the result lives on times[1..] of the input grid.
TimeSeries increments_view(const TimeSeries& series);

struct ObjectiveValue {
    double value = 0.0;
    std::size_t excluded = 0;  // zero-increment indices dropped from ratio terms
};

/// Evaluates `spec` on single-column data/model series already restricted to
/// the training window. For increments objectives, indices whose model
/// increment has magnitude below 1e-15 are dropped and counted.
ObjectiveValue evaluate_objective(const ObjectiveSpec& spec, const TimeSeries& data,
                                  const TimeSeries& model, double sigma_L, const Vector& theta,
                                  const PriorSpec* prior);

inline constexpr double zero_increment_threshold = 1e-15;

}  // namespace epifit
