#pragma once

#include <span>
#include <vector>

namespace epifit {

/// Type-7 quantile (linear interpolation between order statistics), q in [0, 1].
double quantile(std::span<const double> values, double q);
/// Same as `quantile` on data that is already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double q);

double mean(std::span<const double> values);
/// Unbiased sample variance (n - 1 denominator).
double variance(std::span<const double> values);

/// Five-number summary with Tukey whiskers at 1.5 IQR.
struct BoxStats {
    double whisker_low = 0;
    double q25 = 0;
    double median = 0;
    double q75 = 0;
    double whisker_high = 0;
    std::vector<double> outliers;

    double iqr() const { return q75 - q25; }
    bool box_contains(double x) const { return q25 <= x && x <= q75; }
};

BoxStats box_stats(std::span<const double> values);

}  // namespace epifit
