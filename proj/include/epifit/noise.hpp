#pragma once

#include "epifit/ode.hpp"

#include <cstdint>
#include <string>

namespace epifit {

/// Relative normal noise on levels (d_i = d^_i (1 + e_i)) or on increments
/// (Delta d_i = Delta d^_i (1 + e_i)), e_i ~ N(0, sigma^2) i.i.d.
enum class NoiseStructure { level, increment };

NoiseStructure parse_noise_structure(const std::string& name);
std::string to_string(NoiseStructure s);

struct NoiseSpec {
    NoiseStructure structure = NoiseStructure::level;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Multiplies every value by an independent N(1, sigma^2) draw.
TimeSeries apply_level_noise(const TimeSeries& clean, const NoiseSpec& spec);

/// Perturbs increments and re-accumulates from the first value:
/// d_0 = d^_0, d_i = d_{i-1} + Delta d^_i (1 + e_i).
TimeSeries apply_increment_noise(const TimeSeries& clean, const NoiseSpec& spec);

/// Dispatches on `spec.structure`.
TimeSeries apply_noise(const TimeSeries& clean, const NoiseSpec& spec);

/// Derives an independent stream seed from a base seed and a stream index (SplitMix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace epifit
