#include "epifit/noise.hpp"

#include "epifit/error.hpp"

#include <random>

namespace epifit {

NoiseStructure parse_noise_structure(const std::string& name) {
    if (name == "level") return NoiseStructure::level;
    if (name == "increment") return NoiseStructure::increment;
    throw InvalidArgument("unknown noise structure '" + name + "' (expected level or increment)");
}

std::string to_string(NoiseStructure s) {
    return s == NoiseStructure::level ? "level" : "increment";
}

void NoiseSpec::validate() const {
    if (!(sigma >= 0)) throw InvalidArgument("noise sigma must be >= 0");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

TimeSeries apply_level_noise(const TimeSeries& clean, const NoiseSpec& spec) {
    spec.validate();
    TimeSeries out = clean;
    if (spec.sigma == 0.0) return out;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> eps(0.0, spec.sigma);
    for (Eigen::Index c = 0; c < out.values.cols(); ++c)
        for (Eigen::Index r = 0; r < out.values.rows(); ++r) out.values(r, c) *= 1.0 + eps(rng);
    return out;
}

TimeSeries apply_increment_noise(const TimeSeries& clean, const NoiseSpec& spec) {
    spec.validate();
    TimeSeries out = clean;
    if (spec.sigma == 0.0) return out;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> eps(0.0, spec.sigma);
    for (Eigen::Index c = 0; c < out.values.cols(); ++c)
        for (Eigen::Index r = 1; r < out.values.rows(); ++r) {
            const double increment = clean.values(r, c) - clean.values(r - 1, c);
            out.values(r, c) = out.values(r - 1, c) + increment * (1.0 + eps(rng));
        }
    return out;
}

TimeSeries apply_noise(const TimeSeries& clean, const NoiseSpec& spec) {
    return spec.structure == NoiseStructure::level ? apply_level_noise(clean, spec)
                                                   : apply_increment_noise(clean, spec);
}

}  // namespace epifit
