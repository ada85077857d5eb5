#pragma once

#include "epifit/loss.hpp"
#include "epifit/models.hpp"
#include "epifit/noise.hpp"
#include "epifit/optimize.hpp"
#include "epifit/twalk.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace epifit {

enum class EstimatorKind { DO, MLE, MAP, MCMC };

EstimatorKind parse_estimator_kind(const std::string& name);
std::string to_string(EstimatorKind kind);

enum class EnsembleSource { bootstrap, mcmc };
std::string to_string(EnsembleSource source);

/// Runs `body(i)` for i in [0, n) on up to `max_threads` workers (0: hardware
/// concurrency). Results must be written to per-index slots by the caller.
void parallel_for(std::size_t n, std::size_t max_threads, const std::function<void(std::size_t)>& body);

struct McmcSettings {
    std::size_t n_keep = 5000;
    std::size_t skip = 10;
    double psrf_threshold = 1.1;
    std::size_t max_steps = 1'000'000;
    std::size_t block = 5000;  // steps between convergence checks
};

/// Everything an estimator needs besides the data.
///
/// `space` ranges over the model's full quantity vector; pinned quantities are
/// held at their fixed values. For MLE/MAP/MCMC a noise scale sigma_L is
/// appended as an extra search coordinate unless `sigma_L_fixed` is set.
struct EstimationProblem {
    ModelDef model;
    ParameterSpace space;
    TrainingWindow window;
    DataTransform data_transform = DataTransform::levels;
    ObjectiveKind do_objective = ObjectiveKind::rel_sq;
    std::optional<double> sigma_L_fixed;
    double sigma_L_lower = 1e-4;
    double sigma_L_upper = 2.0;
    std::size_t restarts = 10;
    /// Random restarts per bootstrap replicate, in addition to a start at the step-1 estimate.
    std::size_t replicate_restarts = 10;
    NelderMeadOptions optimizer;
    McmcSettings mcmc;
    std::size_t threads = 0;
};

/// The objective an estimator minimises on windowed data, in search coordinates.
struct EstimatorObjective {
    ObjectiveSpec spec;
    ParameterSpace search_space;  // model quantities + optional sigma_L
    std::optional<PriorSpec> prior;

    /// Full model quantity vector for a free search vector.
    Vector quantities(const Vector& free) const;
};

EstimatorObjective make_objective(const EstimationProblem& problem, EstimatorKind kind);

/// Objective value at `free` against windowed single-column `data`.
double evaluate(const EstimationProblem& problem, const EstimatorObjective& obj, const TimeSeries& data,
                const Vector& free);

struct EstimateEnsemble {
    Matrix draws;  // k x p, free search coordinates
    Matrix quantities;  // k x n_quantities, full model quantity vectors
    std::vector<std::string> names;
    EnsembleSource source = EnsembleSource::bootstrap;
    std::uint64_t seed = 0;
    std::string estimator_name;
    std::size_t requested = 0;  // replicates or draws asked for
    std::size_t failures = 0;
    std::size_t effective_k() const { return static_cast<std::size_t>(draws.rows()); }
    Eigen::Index column(const std::string& name) const;
};

struct PointEstimate {
    FitResult fit;
    Vector quantities;
    std::vector<std::string> names;
};

/// Step-1 fit: multistart minimisation of the estimator's objective on `data`
/// (the observable, already restricted to the training window).
PointEstimate fit_point(const EstimationProblem& problem, EstimatorKind kind, const TimeSeries& data,
                        std::uint64_t seed);

/// Parametric bootstrap: fit `data`, treat the fitted model output as truth,
/// refit `k` noisy realisations of it. Failed replicates are dropped and counted.
EstimateEnsemble bootstrap(const EstimationProblem& problem, EstimatorKind kind, const TimeSeries& data,
                           const NoiseSpec& noise, std::size_t k, std::uint64_t seed,
                           PointEstimate* step1 = nullptr);

struct McmcRun {
    McmcChain chain;
    PointEstimate start;
    bool converged = false;
    EstimateEnsemble ensemble;
};

/// Posterior sampling: t-walk started near the MAP estimate, run in blocks
/// until the last-half PSRF falls below the threshold (and the chain is long
/// enough to thin) or `max_steps` is reached, then thinned from the end.
McmcRun mcmc_estimate(const EstimationProblem& problem, const TimeSeries& data, std::uint64_t seed);

}  // namespace epifit
