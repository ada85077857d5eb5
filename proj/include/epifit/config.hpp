#pragma once

#include "epifit/error.hpp"
#include "epifit/estimators.hpp"
#include "epifit/loss.hpp"
#include "epifit/models.hpp"
#include "epifit/noise.hpp"
#include "epifit/optimize.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace epifit {

/// Malformed or inconsistent configuration. `line()` is 1-based, 0 when unknown.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& source, int line, const std::string& what)
        : InvalidArgument(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// One experiment, read from a YAML document whose keys mirror these fields.
struct ExperimentConfig {
    ModelKind model = ModelKind::seir;
    double population = 9039.0;  // SEIR only
    Vector exact_params;         // full quantity vector, in model order
    ParameterSpace space;        // over the full quantity vector
    NoiseSpec data_noise;
    NoiseSpec bootstrap_noise;
    std::vector<EstimatorKind> estimators;
    double t_train = 30.0;
    double horizon = 60.0;
    std::size_t k = 200;
    McmcSettings mcmc;
    std::string outputs = "output";
    std::uint64_t seed = 1;

    ObjectiveKind do_objective = ObjectiveKind::rel_sq;
    DataTransform data_transform = DataTransform::levels;
    std::size_t restarts = 10;
    std::size_t replicate_restarts = 10;
    std::optional<std::string> non_observable;
    std::optional<double> sigma_L_fixed;
    double sigma_L_lower = 1e-4;
    double sigma_L_upper = 2.0;

    std::string source = "<config>";
    std::map<std::string, int> key_lines;  // top-level key -> line, for diagnostics

    ModelDef make_model() const;
    /// Throws ConfigError naming the offending fields.
    void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Flat `name: value` map (e.g. a parameter file for check-symmetry).
std::map<std::string, double> load_scalar_map(const std::string& path);

}  // namespace epifit
