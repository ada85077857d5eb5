#include "epifit/estimators.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace epifit {

EstimatorKind parse_estimator_kind(const std::string& name) {
    if (name == "DO" || name == "do") return EstimatorKind::DO;
    if (name == "MLE" || name == "mle") return EstimatorKind::MLE;
    if (name == "MAP" || name == "map") return EstimatorKind::MAP;
    if (name == "MCMC" || name == "mcmc") return EstimatorKind::MCMC;
    throw InvalidArgument("unknown estimator '" + name + "' (expected DO, MLE, MAP or MCMC)");
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::DO: return "DO";
        case EstimatorKind::MLE: return "MLE";
        case EstimatorKind::MAP: return "MAP";
        case EstimatorKind::MCMC: return "MCMC";
    }
    return "?";
}

std::string to_string(EnsembleSource source) { return source == EnsembleSource::bootstrap ? "bootstrap" : "mcmc"; }

void parallel_for(std::size_t n, std::size_t max_threads, const std::function<void(std::size_t)>& body) {
    std::size_t workers = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

Vector EstimatorObjective::quantities(const Vector& free) const {
    const Vector full = search_space.expand(free);
    const auto nq = spec.uses_sigma_L() ? full.size() - 1 : full.size();
    return full.head(nq);
}

EstimatorObjective make_objective(const EstimationProblem& problem, EstimatorKind kind) {
    problem.space.validate();
    if (problem.space.size() != problem.model.n_quantities())
        throw InvalidArgument("parameter space does not cover the model quantities");
    EstimatorObjective obj;
    obj.spec.data_transform = problem.data_transform;
    switch (kind) {
        case EstimatorKind::DO:
            obj.spec.kind = problem.do_objective;
            if (obj.spec.uses_sigma_L()) throw InvalidArgument("DO objective must be log_sq or rel_sq");
            break;
        case EstimatorKind::MLE: obj.spec.kind = ObjectiveKind::neg_log_likelihood; break;
        case EstimatorKind::MAP:
        case EstimatorKind::MCMC: obj.spec.kind = ObjectiveKind::neg_log_posterior; break;
    }
    obj.search_space = problem.space;
    if (obj.spec.uses_sigma_L()) {
        obj.spec.sigma_L_fixed = problem.sigma_L_fixed;
        obj.search_space.add("sigma_L", problem.sigma_L_lower, problem.sigma_L_upper, problem.sigma_L_fixed);
    }
    if (obj.spec.kind == ObjectiveKind::neg_log_posterior)
        obj.prior = PriorSpec::from_bounds(obj.search_space.free_lower(), obj.search_space.free_upper());
    obj.search_space.validate();
    return obj;
}

double evaluate(const EstimationProblem& problem, const EstimatorObjective& obj, const TimeSeries& data,
                const Vector& free) {
    const Vector full = obj.search_space.expand(free);
    const Vector q = obj.quantities(free);
    const double sigma_L = obj.spec.uses_sigma_L() ? full(full.size() - 1) : 1.0;
    const TimeSeries model = problem.model.simulate(q, data.times).select(problem.model.observable);
    return evaluate_objective(obj.spec, data, model, sigma_L, free, obj.prior ? &*obj.prior : nullptr).value;
}

Eigen::Index EstimateEnsemble::column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("ensemble has no column '" + name + "'");
    return static_cast<Eigen::Index>(it - names.begin());
}

namespace {

TimeSeries observable_window(const EstimationProblem& problem, const TimeSeries& data) {
    if (data.values.cols() != 1) throw InvalidArgument("estimators expect a single observable column");
    TimeSeries w = problem.window.apply(data);
    if (w.size() < 2) throw InvalidArgument("training window holds fewer than two data points");
    return w;
}

Objective bind(const EstimationProblem& problem, const EstimatorObjective& obj, const TimeSeries& data) {
    return [&problem, &obj, &data](const Vector& free) { return evaluate(problem, obj, data, free); };
}

}  // namespace

PointEstimate fit_point(const EstimationProblem& problem, EstimatorKind kind, const TimeSeries& data,
                        std::uint64_t seed) {
    const EstimatorObjective obj = make_objective(problem, kind);
    const TimeSeries window = observable_window(problem, data);
    PointEstimate est;
    est.fit = multistart_optimize(bind(problem, obj, window), obj.search_space, problem.restarts, seed,
                                  problem.optimizer);
    est.quantities = obj.quantities(est.fit.theta_hat);
    est.names = obj.search_space.free_names();
    return est;
}

EstimateEnsemble bootstrap(const EstimationProblem& problem, EstimatorKind kind, const TimeSeries& data,
                           const NoiseSpec& noise, std::size_t k, std::uint64_t seed, PointEstimate* step1) {
    if (k == 0) throw InvalidArgument("bootstrap needs k >= 1");
    noise.validate();
    const EstimatorObjective obj = make_objective(problem, kind);
    const TimeSeries window = observable_window(problem, data);

    // (1) fit the reported data.
    PointEstimate theta_hat = fit_point(problem, kind, data, derive_seed(seed, 0));
    if (step1) *step1 = theta_hat;

    // (2) the fitted model output is the numerical truth.
    const TimeSeries truth = problem.model.simulate(theta_hat.quantities, window.times).select(problem.model.observable);

    // (3) + (4) noisy realisations, each refitted independently.
    const auto p = static_cast<Eigen::Index>(obj.search_space.n_free());
    std::vector<std::optional<Vector>> rows(k);
    parallel_for(k, problem.threads, [&](std::size_t r) {
        NoiseSpec rep = noise;
        rep.seed = derive_seed(noise.seed, r + 1);
        const TimeSeries realisation = apply_noise(truth, rep);
        const Objective f = bind(problem, obj, realisation);
        try {
            FitResult best = nelder_mead(f, obj.search_space, theta_hat.fit.theta_hat, problem.optimizer);
            if (problem.replicate_restarts > 0) {
                try {
                    FitResult ms = multistart_optimize(f, obj.search_space, problem.replicate_restarts,
                                                       derive_seed(seed, r + 1), problem.optimizer);
                    if (ms.objective_value < best.objective_value) best = ms;
                } catch (const OptimizationFailed&) {
                }
            }
            if (std::isfinite(best.objective_value)) rows[r] = best.theta_hat;
        } catch (const Error&) {
        }
    });

    EstimateEnsemble ens;
    ens.source = EnsembleSource::bootstrap;
    ens.seed = seed;
    ens.estimator_name = to_string(kind);
    ens.names = obj.search_space.free_names();
    ens.requested = k;
    std::vector<Vector> ok;
    for (auto& r : rows)
        if (r) ok.push_back(*r);
    ens.failures = k - ok.size();
    ens.draws.resize(static_cast<Eigen::Index>(ok.size()), p);
    ens.quantities.resize(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(problem.model.n_quantities()));
    for (std::size_t i = 0; i < ok.size(); ++i) {
        ens.draws.row(static_cast<Eigen::Index>(i)) = ok[i].transpose();
        ens.quantities.row(static_cast<Eigen::Index>(i)) = obj.quantities(ok[i]).transpose();
    }
    return ens;
}

namespace {

// Two distinct starting points scattered around `centre` in unit coordinates.
std::pair<Vector, Vector> initial_pair(const ParameterSpace& space, const Vector& centre, const Objective& energy,
                                       std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector u0 = space.to_unit(centre);
    auto jitter = [&](double scale) {
        Vector u = u0;
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = std::clamp(u(i) + scale * normal(rng), 1e-9, 1.0 - 1e-9);
        return space.from_unit(u);
    };
    double scale = 1e-2;
    for (int attempt = 0; attempt < 40; ++attempt, scale *= 0.7) {
        const Vector a = jitter(scale);
        const Vector b = jitter(scale);
        if ((a.array() == b.array()).any()) continue;
        double ea, eb;
        try {
            ea = energy(a);
            eb = energy(b);
        } catch (const Error&) {
            continue;
        }
        if (std::isfinite(ea) && std::isfinite(eb)) return {a, b};
    }
    throw InvalidArgument("could not place the t-walk initial pair at finite posterior values");
}

}  // namespace

McmcRun mcmc_estimate(const EstimationProblem& problem, const TimeSeries& data, std::uint64_t seed) {
    const McmcSettings& s = problem.mcmc;
    if (s.max_steps < s.n_keep * s.skip)
        throw InvalidArgument("mcmc.max_steps is smaller than n_keep * skip");
    const EstimatorObjective obj = make_objective(problem, EstimatorKind::MCMC);
    const TimeSeries window = observable_window(problem, data);
    const Objective energy = bind(problem, obj, window);

    McmcRun run;
    run.start = fit_point(problem, EstimatorKind::MAP, data, derive_seed(seed, 0));
    std::mt19937_64 rng(derive_seed(seed, 1));
    const auto init = initial_pair(obj.search_space, run.start.fit.theta_hat, energy, rng);

    TWalk walker(energy, obj.search_space.free_lower(), obj.search_space.free_upper(), init.first, init.second,
                 derive_seed(seed, 2));
    const std::size_t needed = s.n_keep * s.skip;
    const std::size_t block = std::max<std::size_t>(1, s.block);
    while (walker.steps() < s.max_steps) {
        walker.run(std::min(block, s.max_steps - walker.steps()));
        if (walker.steps() < needed || walker.steps() < 4) continue;
        try {
            const Vector r = walker.psrf_last(walker.steps() / 2);
            if ((r.array() < s.psrf_threshold).all()) {
                run.converged = true;
                break;
            }
        } catch (const PsrfUndefined&) {
        }
    }
    run.chain = walker.chain();
    try {
        run.chain.psrf = chain_psrf(run.chain, run.chain.steps() / 2);
    } catch (const PsrfUndefined&) {
        run.chain.psrf = Vector::Constant(static_cast<Eigen::Index>(obj.search_space.n_free()),
                                          std::numeric_limits<double>::quiet_NaN());
    }

    EstimateEnsemble& ens = run.ensemble;
    ens.source = EnsembleSource::mcmc;
    ens.seed = seed;
    ens.estimator_name = "MCMC";
    ens.names = obj.search_space.free_names();
    ens.requested = s.n_keep;
    ens.draws = thin_chain(run.chain.states, s.n_keep, s.skip);
    ens.quantities.resize(ens.draws.rows(), static_cast<Eigen::Index>(problem.model.n_quantities()));
    for (Eigen::Index i = 0; i < ens.draws.rows(); ++i)
        ens.quantities.row(i) = obj.quantities(ens.draws.row(i).transpose()).transpose();
    return run;
}

}  // namespace epifit
