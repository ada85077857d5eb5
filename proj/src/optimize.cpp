#include "epifit/optimize.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace epifit {

Transform ParameterSpace::auto_transform(double lower, double upper) {
    return (lower > 0 && upper / lower >= 100.0) ? Transform::log : Transform::linear;
}

void ParameterSpace::add(const std::string& name, double lo, double hi, std::optional<double> fixed_value) {
    names.push_back(name);
    lower.conservativeResize(lower.size() + 1);
    upper.conservativeResize(upper.size() + 1);
    lower(lower.size() - 1) = lo;
    upper(upper.size() - 1) = hi;
    fixed.push_back(fixed_value);
    transform.push_back(auto_transform(lo, hi));
}

void ParameterSpace::validate() const {
    const auto n = names.size();
    if (static_cast<std::size_t>(lower.size()) != n || static_cast<std::size_t>(upper.size()) != n ||
        fixed.size() != n || transform.size() != n)
        throw InvalidArgument("parameter space fields differ in length");
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (fixed[i]) continue;
        if (!(lower(k) < upper(k)))
            throw InvalidArgument("parameter '" + names[i] + "' needs lower < upper");
        if (transform[i] == Transform::log && !(lower(k) > 0))
            throw InvalidArgument("parameter '" + names[i] + "' uses a log transform but lower <= 0");
    }
}

std::size_t ParameterSpace::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::size_t> ParameterSpace::free_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (!fixed[i]) idx.push_back(i);
    return idx;
}

std::size_t ParameterSpace::n_free() const { return free_indices().size(); }

std::vector<std::string> ParameterSpace::free_names() const {
    std::vector<std::string> out;
    for (auto i : free_indices()) out.push_back(names[i]);
    return out;
}

Vector ParameterSpace::free_lower() const {
    const auto idx = free_indices();
    Vector v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) v(static_cast<Eigen::Index>(j)) = lower(static_cast<Eigen::Index>(idx[j]));
    return v;
}

Vector ParameterSpace::free_upper() const {
    const auto idx = free_indices();
    Vector v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) v(static_cast<Eigen::Index>(j)) = upper(static_cast<Eigen::Index>(idx[j]));
    return v;
}

Vector ParameterSpace::expand(const Vector& free_values) const {
    Vector full(static_cast<Eigen::Index>(names.size()));
    Eigen::Index j = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        full(k) = fixed[i] ? *fixed[i] : free_values(j++);
    }
    if (j != free_values.size()) throw InvalidArgument("free vector length does not match the space");
    return full;
}

Vector ParameterSpace::to_unit(const Vector& free_values) const {
    const auto idx = free_indices();
    Vector u(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(idx[j]);
        const auto jj = static_cast<Eigen::Index>(j);
        if (transform[idx[j]] == Transform::log)
            u(jj) = std::log(free_values(jj) / lower(k)) / std::log(upper(k) / lower(k));
        else
            u(jj) = (free_values(jj) - lower(k)) / (upper(k) - lower(k));
    }
    return u;
}

Vector ParameterSpace::from_unit(const Vector& unit) const {
    const auto idx = free_indices();
    Vector v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(idx[j]);
        const auto jj = static_cast<Eigen::Index>(j);
        const double u = std::clamp(unit(jj), 0.0, 1.0);
        if (transform[idx[j]] == Transform::log)
            v(jj) = lower(k) * std::exp(u * std::log(upper(k) / lower(k)));
        else
            v(jj) = lower(k) + u * (upper(k) - lower(k));
        v(jj) = std::clamp(v(jj), lower(k), upper(k));
    }
    return v;
}

bool ParameterSpace::contains(const Vector& free_values) const {
    const auto idx = free_indices();
    if (static_cast<std::size_t>(free_values.size()) != idx.size()) return false;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(idx[j]);
        const double v = free_values(static_cast<Eigen::Index>(j));
        if (!(v >= lower(k) && v <= upper(k))) return false;
    }
    return true;
}

namespace {

struct Evaluator {
    const Objective& objective;
    const ParameterSpace& space;
    std::size_t count = 0;

    double operator()(const Vector& unit) {
        ++count;
        double v;
        try {
            v = objective(space.from_unit(unit));
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }
};

Vector clamp_unit(Vector u) { return u.cwiseMax(0.0).cwiseMin(1.0); }

double diameter(const std::vector<Vector>& simplex) {
    double d = 0;
    for (std::size_t i = 1; i < simplex.size(); ++i)
        d = std::max(d, (simplex[i] - simplex[0]).lpNorm<Eigen::Infinity>());
    return d;
}

// One Nelder-Mead descent in the unit cube. Returns true on diameter convergence.
bool descend(Evaluator& eval, std::vector<Vector>& simplex, std::vector<double>& values,
             std::size_t budget, double tol) {
    const std::size_t n = simplex.size() - 1;
    std::vector<std::size_t> order(n + 1);
    while (true) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        std::vector<Vector> s2;
        std::vector<double> v2;
        for (auto i : order) {
            s2.push_back(simplex[i]);
            v2.push_back(values[i]);
        }
        simplex.swap(s2);
        values.swap(v2);

        if (diameter(simplex) < tol) return true;
        if (eval.count >= budget) return false;

        Vector centroid = Vector::Zero(simplex[0].size());
        for (std::size_t i = 0; i < n; ++i) centroid += simplex[i];
        centroid /= static_cast<double>(n);

        const Vector xr = clamp_unit(centroid + (centroid - simplex[n]));
        const double fr = eval(xr);
        if (fr < values[0]) {
            const Vector xe = clamp_unit(centroid + 2.0 * (centroid - simplex[n]));
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if (fr < values[n - 1]) {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        if (fr < values[n]) {
            const Vector xc = clamp_unit(centroid + 0.5 * (xr - centroid));
            const double fc = eval(xc);
            if (fc <= fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
        } else {
            const Vector xc = centroid + 0.5 * (simplex[n] - centroid);
            const double fc = eval(xc);
            if (fc < values[n]) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
        }
        for (std::size_t i = 1; i <= n; ++i) {
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
            values[i] = eval(simplex[i]);
        }
    }
}

void build_simplex(Evaluator& eval, const Vector& x0, double step, std::vector<Vector>& simplex,
                   std::vector<double>& values, std::optional<double> f0 = std::nullopt) {
    const auto n = x0.size();
    simplex.assign(1, x0);
    values.assign(1, f0 ? *f0 : eval(x0));
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector x = x0;
        x(i) = x0(i) + step <= 1.0 ? x0(i) + step : x0(i) - step;
        simplex.push_back(x);
        values.push_back(eval(x));
    }
}

}  // namespace

FitResult nelder_mead(const Objective& objective, const ParameterSpace& space, const Vector& start,
                      const NelderMeadOptions& options) {
    space.validate();
    const std::size_t n = space.n_free();
    if (static_cast<std::size_t>(start.size()) != n) throw InvalidArgument("start point has the wrong dimension");

    Evaluator eval{objective, space};
    FitResult result;
    if (n == 0) {
        result.theta_hat = Vector(0);
        result.objective_value = eval(Vector(0));
        result.converged = true;
        result.evaluations = eval.count;
        return result;
    }

    std::vector<Vector> simplex;
    std::vector<double> values;
    build_simplex(eval, clamp_unit(space.to_unit(start)), options.initial_step, simplex, values);
    bool converged = descend(eval, simplex, values, options.max_evaluations, options.diameter_tol);

    // Restart around the best vertex to escape premature collapse on a face of the box.
    while (converged && eval.count + n + 1 < options.max_evaluations) {
        const double before = values[0];
        const Vector best = simplex[0];
        build_simplex(eval, best, 0.02, simplex, values, before);
        converged = descend(eval, simplex, values, options.max_evaluations, options.diameter_tol);
        if (!(values[0] < before - 1e-12 * std::max(1.0, std::abs(before)))) break;
    }

    const auto best = std::min_element(values.begin(), values.end()) - values.begin();
    result.theta_hat = space.from_unit(simplex[static_cast<std::size_t>(best)]);
    result.objective_value = values[static_cast<std::size_t>(best)];
    result.converged = converged;
    result.evaluations = eval.count;
    result.restarts_tried = 1;
    return result;
}

FitResult multistart_optimize(const Objective& objective, const ParameterSpace& space,
                              std::size_t n_restarts, std::uint64_t seed,
                              const NelderMeadOptions& options) {
    space.validate();
    if (n_restarts == 0) throw InvalidArgument("multistart needs at least one restart");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(space.n_free());

    FitResult best;
    best.objective_value = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
    for (std::size_t r = 0; r < n_restarts; ++r) {
        Vector u(n);
        for (Eigen::Index i = 0; i < n; ++i) u(i) = unif(rng);
        FitResult fit = nelder_mead(objective, space, space.from_unit(u), options);
        evaluations += fit.evaluations;
        if (fit.objective_value < best.objective_value) best = fit;
    }
    if (!std::isfinite(best.objective_value))
        throw OptimizationFailed("no restart produced a finite objective value");
    best.restarts_tried = n_restarts;
    best.evaluations = evaluations;
    return best;
}

}  // namespace epifit
