// epifit: command-line front end for identifiability experiments.

#include "epifit/config.hpp"
#include "epifit/error.hpp"
#include "epifit/experiment.hpp"
#include "epifit/models.hpp"
#include "epifit/sensitivity.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::optional<std::string> output;
    bool quiet = false;
};

std::string output_dir(const GlobalOptions& g, const epifit::ExperimentConfig& cfg) {
    if (g.output) return *g.output;
    if (cfg.key_lines.count("outputs")) return cfg.outputs;
    if (const char* env = std::getenv("EPIFIT_OUTPUT"); env && *env) return env;
    return cfg.outputs;
}

epifit::ExperimentConfig load(const std::string& path, const GlobalOptions& g) {
    epifit::ExperimentConfig cfg = epifit::load_config(path);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// `counts`: the quantities are head counts, also shown truncated to whole individuals.
void print_quantities(const std::vector<std::string>& names, const epifit::Vector& q, const std::string& label,
                      bool counts) {
    std::cout << label << ":\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double v = q(static_cast<Eigen::Index>(i));
        std::cout << "  " << names[i] << " = " << fmt(v, "%.10g");
        if (counts && names[i].back() == '0' && std::abs(v) >= 100) std::cout << "  (~" << fmt(std::trunc(v), "%.0f") << ")";
        std::cout << '\n';
    }
}

double take(std::map<std::string, double>& m, const std::string& key, const std::string& file) {
    const auto it = m.find(key);
    if (it == m.end()) throw epifit::ConfigError(file, 0, "missing parameter '" + key + "'");
    const double v = it->second;
    m.erase(it);
    return v;
}

void reject_leftovers(const std::map<std::string, double>& m, const std::string& file) {
    if (!m.empty()) throw epifit::ConfigError(file, 0, "unknown parameter '" + m.begin()->first + "'");
}

int cmd_check_symmetry(const std::string& model_name, const std::string& file, double horizon_opt, double tol,
                       const GlobalOptions& g) {
    using namespace epifit;
    const ModelKind kind = parse_model_kind(model_name);
    auto values = load_scalar_map(file);
    ModelDef model;
    SymmetryPair pair;
    double horizon = horizon_opt;
    if (kind == ModelKind::seir) {
        const double beta = take(values, "beta", file), sigma = take(values, "sigma", file);
        const double gamma = take(values, "gamma", file), S0 = take(values, "S0", file);
        const double E0 = take(values, "E0", file), I0 = take(values, "I0", file);
        double N = 9039.0;
        if (values.count("N")) N = take(values, "N", file);
        else if (values.count("R0")) N = S0 + E0 + I0 + take(values, "R0", file);
        if (values.count("R0")) {
            const double R0 = take(values, "R0", file);
            if (std::abs(S0 + E0 + I0 + R0 - N) > 1e-9 * N)
                throw ConfigError(file, 0, "S0 + E0 + I0 + R0 must equal N");
        }
        reject_leftovers(values, file);
        const SeirParams p = SeirParams::with_population(beta, sigma, gamma, S0, E0, I0, N);
        const SeirParams partner = seir_symmetry_partner(p);
        model = seir_model(N);
        pair = SymmetryPair{to_quantities(p), to_quantities(partner), "sigma<->gamma"};
        if (horizon <= 0) horizon = 60.0;
        if (!g.quiet) {
            std::vector<std::string> names = model.quantity_names;
            names.push_back("R0");
            Vector a(7), b(7);
            a << pair.primary, p.R0;
            b << pair.partner, partner.R0;
            print_quantities(names, a, "primary", true);
            print_quantities(names, b, "partner", true);
        }
    } else {
        FourthAParams q;
        if (values.count("a") || values.count("c1")) {
            EaihrdParams e;
            e.a = take(values, "a", file); e.s = take(values, "s", file); e.r1 = take(values, "r1", file);
            e.r2 = take(values, "r2", file); e.r3 = take(values, "r3", file); e.h = take(values, "h", file);
            e.d = take(values, "d", file); e.c1 = take(values, "c1", file); e.c2 = take(values, "c2", file);
            e.A0 = take(values, "A0", file); e.I0 = take(values, "I0", file); e.H0 = take(values, "H0", file);
            e.R0 = take(values, "R0", file); e.D0 = take(values, "D0", file); e.E0 = take(values, "E0", file);
            if (values.count("N")) e.N = take(values, "N", file);
            q = eaihrd_to_4tha(e);
        } else {
            const ModelDef m = fourtha_model();
            Vector v(static_cast<Eigen::Index>(m.n_quantities()));
            for (std::size_t i = 0; i < m.n_quantities(); ++i)
                v(static_cast<Eigen::Index>(i)) = take(values, m.quantity_names[i], file);
            q = fourtha_from_quantities(v);
        }
        reject_leftovers(values, file);
        model = fourtha_model();
        pair = SymmetryPair{to_quantities(q), to_quantities(eaihrd_symmetry_partner(q)), "F<->R2"};
        if (horizon <= 0) horizon = 180.0;
        if (!g.quiet) {
            print_quantities(model.quantity_names, pair.primary, "primary", false);
            print_quantities(model.quantity_names, pair.partner, "partner", false);
        }
    }
    const SymmetryCheck check = verify_symmetry(model, pair, horizon, tol);
    std::cout << "symmetry " << pair.map_name << " over " << fmt(horizon) << " days: max deviation "
              << fmt(check.max_deviation, "%.3e") << (check.holds ? " < " : " >= ") << fmt(tol, "%.0e")
              << " (at t=" << fmt(check.at_time) << ")" << (check.holds ? " -> holds" : " -> does not hold") << '\n';
    return check.holds ? kExitOk : kExitRuntime;
}

int cmd_validate(const std::string& path, const GlobalOptions& g) {
    const auto cfg = load(path, g);
    if (!g.quiet) {
        std::cout << path << ": ok\n  model " << epifit::to_string(cfg.model) << ", free:";
        for (const auto& n : cfg.space.free_names()) std::cout << ' ' << n;
        std::cout << "\n  t_train " << fmt(cfg.t_train) << ", horizon " << fmt(cfg.horizon) << ", k " << cfg.k
                  << ", seed " << cfg.seed << '\n';
    }
    return kExitOk;
}

int cmd_gen_data(const std::string& path, const GlobalOptions& g) {
    const auto cfg = load(path, g);
    const auto dir = output_dir(g, cfg);
    std::filesystem::create_directories(dir);
    const auto data = epifit::generate_data(cfg);
    const auto file = (std::filesystem::path(dir) / "data.csv").string();
    epifit::write_data_csv(data, cfg.make_model(), file);
    if (!g.quiet) std::cout << "wrote " << file << " (" << data.clean.size() << " points, seed " << data.noise.seed << ")\n";
    return kExitOk;
}

void print_hessian(const epifit::HessianReport& h) {
    std::cout << "Hessian eigenvalues (descending):\n";
    for (Eigen::Index i = 0; i < h.eigenvalues.size(); ++i) std::cout << "  " << fmt(h.eigenvalues(i), "%.3e") << '\n';
    std::cout << "eigengap " << fmt(h.eigengap_log10, "%.3f") << " decades between eigenvalues "
              << h.eigengap_index + 1 << " and " << h.eigengap_index + 2 << '\n';
}

int cmd_hessian(const std::string& path, const GlobalOptions& g) {
    const auto cfg = load(path, g);
    const auto dir = output_dir(g, cfg);
    std::filesystem::create_directories(dir);
    const auto h = epifit::experiment_hessian(cfg);
    const auto file = (std::filesystem::path(dir) / "hessian.csv").string();
    epifit::write_hessian_csv(h, file);
    if (!g.quiet) {
        print_hessian(h);
        std::cout << "wrote " << file << '\n';
    }
    return kExitOk;
}

int cmd_run(const std::string& path, const GlobalOptions& g) {
    const auto cfg = load(path, g);
    const auto dir = output_dir(g, cfg);
    const auto start = std::chrono::steady_clock::now();
    const auto report = epifit::run_experiment(cfg, g.threads);
    epifit::write_report(report, dir);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!g.quiet) {
        std::cout << "model " << epifit::to_string(cfg.model) << ", seed " << cfg.seed << ", t_train "
                  << fmt(cfg.t_train) << ", horizon " << fmt(cfg.horizon) << '\n';
        for (const auto& r : report.results) {
            std::cout << "  " << epifit::to_string(r.kind) << ": ";
            if (!r.ok) {
                std::cout << "FAILED (" << r.error << ")";
            } else {
                std::cout << "k=" << r.ensemble.effective_k() << "/" << r.ensemble.requested;
                for (const auto& [name, b] : r.boxes)
                    std::cout << "  " << name << " median " << fmt(b.median) << " [" << fmt(b.q25) << ", "
                              << fmt(b.q75) << "]";
                if (r.mcmc)
                    std::cout << "  steps " << r.mcmc->steps << " accept " << fmt(r.mcmc->acceptance_rate, "%.3f")
                              << (r.mcmc->converged ? " (PSRF converged)" : " (PSRF cap reached)");
            }
            std::cout << "  [" << fmt(r.seconds, "%.1f") << " s]\n";
        }
        if (report.hessian)
            std::cout << "  Hessian eigengap " << fmt(report.hessian->eigengap_log10, "%.3f") << " decades\n";
        std::cout << "wrote " << dir << (report.partial ? " (partial results)" : "") << " in " << fmt(total, "%.1f")
                  << " s\n";
    }
    return report.partial ? kExitRuntime : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter identifiability experiments for compartmental epidemic models"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    GlobalOptions g;
    std::uint64_t seed = 0;
    std::string output;
    auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", g.threads, "Cap on worker threads (0: all cores)");
    auto* out_opt = app.add_option("--output", output, "Output directory (falls back to EPIFIT_OUTPUT)");
    app.add_flag("--quiet", g.quiet, "Suppress the summary on standard output");

    std::string config_path, model_name, params_file;
    double horizon = 0.0, tol = 1e-4;

    auto* run = app.add_subcommand("run", "Run a full experiment and write all artifacts");
    run->add_option("config", config_path, "Experiment config (YAML)")->required();
    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("config", config_path, "Experiment config (YAML)")->required();
    auto* gen = app.add_subcommand("gen-data", "Write the exact and noisy synthetic data");
    gen->add_option("config", config_path, "Experiment config (YAML)")->required();
    auto* hess = app.add_subcommand("hessian", "Loss Hessian eigen-spectrum at the exact parameters");
    hess->add_option("config", config_path, "Experiment config (YAML)")->required();
    auto* sym = app.add_subcommand("check-symmetry", "Build and verify the symmetry partner of a parameter set");
    sym->add_option("model", model_name, "seir, eaihrd or fourtha")->required();
    sym->add_option("params-file", params_file, "YAML map of parameter values")->required();
    sym->add_option("--horizon", horizon, "Days to compare (default 60 for SEIR, 180 otherwise)");
    sym->add_option("--tol", tol, "Relative tolerance on the observable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count()) g.seed = seed;
    if (out_opt->count()) g.output = output;

    try {
        if (*run) return cmd_run(config_path, g);
        if (*validate) return cmd_validate(config_path, g);
        if (*gen) return cmd_gen_data(config_path, g);
        if (*hess) return cmd_hessian(config_path, g);
        if (*sym) return cmd_check_symmetry(model_name, params_file, horizon, tol, g);
    } catch (const epifit::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
