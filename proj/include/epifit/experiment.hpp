#pragma once

#include "epifit/config.hpp"
#include "epifit/estimators.hpp"
#include "epifit/sensitivity.hpp"
#include "epifit/stats.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace epifit {

/// Pointwise percentiles across ensemble trajectories of one state variable.
struct BandSummary {
    static constexpr std::array<double, 5> levels{5, 25, 50, 75, 95};

    std::string variable;
    std::vector<double> times;
    Matrix curves;  // n_times x 5, columns follow `levels`
    std::size_t failed = 0;  // ensemble rows whose trajectory could not be integrated
};

/// Integrates every ensemble row over a daily grid on [0, horizon] and takes
/// type-7 percentiles at each time. Throws if no row can be integrated.
BandSummary percentile_bands(const EstimateEnsemble& ensemble, const ModelDef& model, double horizon,
                             Eigen::Index variable, std::size_t threads = 1);

/// Box statistics of one ensemble column.
BoxStats box_stats(const EstimateEnsemble& ensemble, const std::string& parameter);

struct McmcSummary {
    std::size_t steps = 0;
    double acceptance_rate = 0.0;
    bool converged = false;
    Vector psrf;
};

struct EstimatorResult {
    EstimatorKind kind{};
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EstimateEnsemble ensemble;
    std::optional<PointEstimate> point;  // step-1 fit (MAP start for MCMC)
    std::optional<McmcSummary> mcmc;
    std::vector<BandSummary> bands;  // observable, then non-observable
    std::vector<std::pair<std::string, BoxStats>> boxes;
    double seconds = 0.0;
};

struct SyntheticData {
    TimeSeries clean;     // all states over the horizon
    TimeSeries reported;  // noisy observable over the horizon
    NoiseSpec noise;      // effective spec (seed resolved)
};

struct ExperimentReport {
    ExperimentConfig config;
    SyntheticData data;
    std::vector<EstimatorResult> results;
    std::optional<HessianReport> hessian;
    std::string hessian_error;
    bool partial = false;
};

/// Seed actually used for a named stream of an experiment.
std::uint64_t stream_seed(const ExperimentConfig& cfg, std::uint64_t stream);

SyntheticData generate_data(const ExperimentConfig& cfg);

EstimationProblem make_problem(const ExperimentConfig& cfg, std::size_t threads);

/// Full protocol: data, estimator ensembles, prediction bands, box
/// statistics and the Hessian at the exact parameters. Estimator failures are
/// recorded in their result and mark the report partial.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t threads = 0);

/// Hessian report at the configured exact parameters over the horizon grid.
HessianReport experiment_hessian(const ExperimentConfig& cfg);

/// %.17g
std::string format_double(double v);

void write_data_csv(const SyntheticData& data, const ModelDef& model, const std::string& path);
void write_hessian_csv(const HessianReport& h, const std::string& path);
/// Writes every artifact of `report` into `dir` (created if needed).
void write_report(const ExperimentReport& report, const std::string& dir);

}  // namespace epifit
