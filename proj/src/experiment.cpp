#include "epifit/experiment.hpp"

#include "epifit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace epifit {

namespace {

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kBootstrapStream = 2;
constexpr std::uint64_t kEstimatorStream = 100;

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

BandSummary percentile_bands(const EstimateEnsemble& ensemble, const ModelDef& model, double horizon,
                             Eigen::Index variable, std::size_t threads) {
    if (ensemble.quantities.rows() == 0) throw InvalidArgument("cannot build bands from an empty ensemble");
    BandSummary band;
    band.variable = model.state_names.at(static_cast<std::size_t>(variable));
    band.times = SolverConfig::daily_grid(horizon);
    const auto k = static_cast<std::size_t>(ensemble.quantities.rows());
    std::vector<std::optional<Vector>> traj(k);
    parallel_for(k, threads, [&](std::size_t r) {
        try {
            traj[r] = model.simulate(ensemble.quantities.row(static_cast<Eigen::Index>(r)).transpose(), band.times)
                          .column(variable);
        } catch (const Error&) {
        }
    });
    std::vector<Vector> ok;
    for (auto& t : traj)
        if (t) ok.push_back(std::move(*t));
    band.failed = k - ok.size();
    if (ok.empty()) throw Error("every ensemble trajectory failed to integrate; band is empty");

    const auto n = static_cast<Eigen::Index>(band.times.size());
    band.curves.resize(n, static_cast<Eigen::Index>(BandSummary::levels.size()));
    std::vector<double> column(ok.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < ok.size(); ++r) column[r] = ok[r](i);
        std::sort(column.begin(), column.end());
        for (std::size_t l = 0; l < BandSummary::levels.size(); ++l)
            band.curves(i, static_cast<Eigen::Index>(l)) = quantile_sorted(column, BandSummary::levels[l] / 100.0);
    }
    return band;
}

BoxStats box_stats(const EstimateEnsemble& ensemble, const std::string& parameter) {
    const Vector col = ensemble.draws.col(ensemble.column(parameter));
    return box_stats(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
}

std::uint64_t stream_seed(const ExperimentConfig& cfg, std::uint64_t stream) { return derive_seed(cfg.seed, stream); }

SyntheticData generate_data(const ExperimentConfig& cfg) {
    const ModelDef model = cfg.make_model();
    SyntheticData data;
    data.clean = model.simulate(cfg.exact_params, SolverConfig::daily_grid(cfg.horizon));
    data.noise = cfg.data_noise;
    data.noise.seed = derive_seed(stream_seed(cfg, kDataStream), cfg.data_noise.seed);
    data.reported = apply_noise(data.clean.select(model.observable), data.noise);
    return data;
}

EstimationProblem make_problem(const ExperimentConfig& cfg, std::size_t threads) {
    EstimationProblem p;
    p.model = cfg.make_model();
    p.space = cfg.space;
    p.window = TrainingWindow{0.0, cfg.t_train};
    p.data_transform = cfg.data_transform;
    p.do_objective = cfg.do_objective;
    p.sigma_L_fixed = cfg.sigma_L_fixed;
    p.sigma_L_lower = cfg.sigma_L_lower;
    p.sigma_L_upper = cfg.sigma_L_upper;
    p.restarts = cfg.restarts;
    p.replicate_restarts = cfg.replicate_restarts;
    p.mcmc = cfg.mcmc;
    p.threads = threads;
    return p;
}

HessianReport experiment_hessian(const ExperimentConfig& cfg) {
    const ModelDef model = cfg.make_model();
    return loss_hessian(model, cfg.exact_params, cfg.space.free_indices(), SolverConfig::daily_grid(cfg.horizon));
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t threads) {
    cfg.validate();
    ExperimentReport report;
    report.config = cfg;
    report.data = generate_data(cfg);
    const EstimationProblem problem = make_problem(cfg, threads);

    NoiseSpec boot_noise = cfg.bootstrap_noise;
    boot_noise.seed = derive_seed(stream_seed(cfg, kBootstrapStream), cfg.bootstrap_noise.seed);

    for (const EstimatorKind kind : cfg.estimators) {
        EstimatorResult res;
        res.kind = kind;
        res.seed = stream_seed(cfg, kEstimatorStream + static_cast<std::uint64_t>(kind));
        const auto start = std::chrono::steady_clock::now();
        try {
            if (kind == EstimatorKind::MCMC) {
                McmcRun run = mcmc_estimate(problem, report.data.reported, res.seed);
                res.ensemble = std::move(run.ensemble);
                res.point = std::move(run.start);
                res.mcmc = McmcSummary{run.chain.steps(), run.chain.acceptance_rate, run.converged, run.chain.psrf};
            } else {
                PointEstimate step1;
                res.ensemble = bootstrap(problem, kind, report.data.reported, boot_noise, cfg.k, res.seed, &step1);
                res.point = std::move(step1);
            }
            if (res.ensemble.effective_k() == 0) throw Error("every bootstrap replicate failed");
            res.bands.push_back(percentile_bands(res.ensemble, problem.model, cfg.horizon, problem.model.observable, threads));
            res.bands.push_back(percentile_bands(res.ensemble, problem.model, cfg.horizon, problem.model.hidden, threads));
            for (const auto& name : res.ensemble.names) res.boxes.emplace_back(name, box_stats(res.ensemble, name));
            res.ok = true;
        } catch (const Error& e) {
            res.ok = false;
            res.error = e.what();
            report.partial = true;
        }
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.results.push_back(std::move(res));
    }

    try {
        report.hessian = experiment_hessian(cfg);
    } catch (const Error& e) {
        report.hessian_error = e.what();
        report.partial = true;
    }
    return report;
}

void write_data_csv(const SyntheticData& data, const ModelDef& model, const std::string& path) {
    auto out = open_output(path);
    out << "time";
    for (const auto& s : model.state_names) out << ',' << s;
    out << ",reported\n";
    for (std::size_t i = 0; i < data.clean.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out << format_double(data.clean.times[i]);
        for (Eigen::Index c = 0; c < data.clean.values.cols(); ++c) out << ',' << format_double(data.clean.values(r, c));
        out << ',' << format_double(data.reported.values(r, 0)) << '\n';
    }
}

void write_hessian_csv(const HessianReport& h, const std::string& path) {
    auto out = open_output(path);
    out << "parameter";
    for (const auto& n : h.parameter_names) out << ',' << n;
    out << ",eigenvalue\n";
    for (Eigen::Index i = 0; i < h.matrix.rows(); ++i) {
        out << h.parameter_names[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < h.matrix.cols(); ++j) out << ',' << format_double(h.matrix(i, j));
        out << ',' << format_double(h.eigenvalues(i)) << '\n';
    }
}

namespace {

nlohmann::json to_json(const Vector& v) {
    auto arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

nlohmann::json named(const std::vector<std::string>& names, const Vector& v) {
    auto obj = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i) obj[names[i]] = v(static_cast<Eigen::Index>(i));
    return obj;
}

nlohmann::json noise_json(const NoiseSpec& n) {
    return {{"structure", to_string(n.structure)}, {"sigma", n.sigma}, {"seed", n.seed}};
}

}  // namespace

void write_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const ExperimentConfig& cfg = report.config;
    const ModelDef model = cfg.make_model();
    auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    write_data_csv(report.data, model, path("data.csv"));

    {
        auto out = open_output(path("boxstats.csv"));
        out << "estimator,parameter,whisker_low,q25,median,q75,whisker_high,n_outliers\n";
        for (const auto& res : report.results)
            for (const auto& [name, b] : res.boxes)
                out << to_string(res.kind) << ',' << name << ',' << format_double(b.whisker_low) << ','
                    << format_double(b.q25) << ',' << format_double(b.median) << ',' << format_double(b.q75) << ','
                    << format_double(b.whisker_high) << ',' << b.outliers.size() << '\n';
    }

    for (const auto& res : report.results) {
        if (!res.ok) continue;
        const std::string est = to_string(res.kind);
        {
            auto out = open_output(path("estimates_" + est + ".csv"));
            for (std::size_t j = 0; j < res.ensemble.names.size(); ++j) out << (j ? "," : "") << res.ensemble.names[j];
            out << '\n';
            for (Eigen::Index i = 0; i < res.ensemble.draws.rows(); ++i) {
                for (Eigen::Index j = 0; j < res.ensemble.draws.cols(); ++j)
                    out << (j ? "," : "") << format_double(res.ensemble.draws(i, j));
                out << '\n';
            }
        }
        for (const auto& band : res.bands) {
            auto out = open_output(path("bands_" + est + "_" + band.variable + ".csv"));
            out << "time,p5,p25,p50,p75,p95\n";
            for (std::size_t i = 0; i < band.times.size(); ++i) {
                out << format_double(band.times[i]);
                for (Eigen::Index l = 0; l < band.curves.cols(); ++l)
                    out << ',' << format_double(band.curves(static_cast<Eigen::Index>(i), l));
                out << '\n';
            }
        }
    }

    if (report.hessian) write_hessian_csv(*report.hessian, path("hessian.csv"));

    nlohmann::json j;
    j["model"] = to_string(cfg.model);
    j["seed"] = cfg.seed;
    j["partial"] = report.partial;
    j["t_train"] = cfg.t_train;
    j["horizon"] = cfg.horizon;
    j["k"] = cfg.k;
    j["observable"] = model.state_names[static_cast<std::size_t>(model.observable)];
    j["non_observable"] = model.state_names[static_cast<std::size_t>(model.hidden)];
    j["exact_params"] = named(model.quantity_names, cfg.exact_params);
    j["free_parameters"] = cfg.space.free_names();
    j["data_noise"] = noise_json(report.data.noise);
    j["bootstrap_noise"] = noise_json(NoiseSpec{cfg.bootstrap_noise.structure, cfg.bootstrap_noise.sigma,
                                                derive_seed(stream_seed(cfg, kBootstrapStream), cfg.bootstrap_noise.seed)});
    j["objective"] = {{"do_kind", to_string(cfg.do_objective)}, {"data_transform", to_string(cfg.data_transform)}};
    j["mcmc_settings"] = {{"n_keep", cfg.mcmc.n_keep},
                          {"skip", cfg.mcmc.skip},
                          {"psrf_threshold", cfg.mcmc.psrf_threshold},
                          {"max_steps", cfg.mcmc.max_steps}};
    auto ests = nlohmann::json::array();
    for (const auto& res : report.results) {
        nlohmann::json e;
        e["estimator"] = to_string(res.kind);
        e["seed"] = res.seed;
        e["ok"] = res.ok;
        if (!res.ok) e["error"] = res.error;
        if (res.ok) {
            e["source"] = to_string(res.ensemble.source);
            e["requested"] = res.ensemble.requested;
            e["effective_k"] = res.ensemble.effective_k();
            e["failures"] = res.ensemble.failures;
        }
        if (res.point) {
            e["point_estimate"] = named(res.point->names, res.point->fit.theta_hat);
            e["point_objective"] = res.point->fit.objective_value;
            e["point_converged"] = res.point->fit.converged;
        }
        if (res.mcmc) {
            e["chain_steps"] = res.mcmc->steps;
            e["acceptance_rate"] = res.mcmc->acceptance_rate;
            e["psrf_converged"] = res.mcmc->converged;
            e["psrf"] = res.ok ? named(res.ensemble.names, res.mcmc->psrf) : to_json(res.mcmc->psrf);
        }
        for (const auto& band : res.bands) e["band_failures"][band.variable] = band.failed;
        ests.push_back(e);
    }
    j["estimators"] = ests;
    if (report.hessian) {
        j["hessian"] = {{"parameters", report.hessian->parameter_names},
                        {"eigenvalues", to_json(report.hessian->eigenvalues)},
                        {"eigengap_log10", report.hessian->eigengap_log10},
                        {"eigengap_index", report.hessian->eigengap_index}};
    } else {
        j["hessian"] = {{"error", report.hessian_error}};
    }
    auto out = open_output(path("report.json"));
    out << j.dump(2) << '\n';
}

}  // namespace epifit
