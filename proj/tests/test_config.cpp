#include "epifit/config.hpp"
#include "epifit/error.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace epifit;

namespace {

const char* const seir_yaml = R"(model: seir
space:
  beta: {lower: 0.01, upper: 1.5}
  sigma: {lower: 0.001, upper: 1}
  gamma: {lower: 0.001, upper: 1}
  E0: {lower: 10, upper: 4000}
data_noise: {sigma: 0.05, seed: 1}
bootstrap_noise: {sigma: 0.05, seed: 2}
estimators: [DO, MLE, MAP, MCMC]
t_train: 30
k: 50
seed: 7
)";

int error_line(const std::string& text) {
    try {
        parse_config(text, "test.yaml");
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

std::string error_text(const std::string& text) {
    try {
        parse_config(text, "test.yaml");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("SEIR config with model defaults") {
    const auto cfg = parse_config(seir_yaml);
    CHECK(cfg.model == ModelKind::seir);
    CHECK(cfg.horizon == 60.0);
    CHECK(cfg.t_train == 30.0);
    CHECK(cfg.k == 50);
    CHECK(cfg.seed == 7);
    CHECK(cfg.data_noise.structure == NoiseStructure::level);
    CHECK(cfg.data_noise.sigma == 0.05);
    CHECK(cfg.bootstrap_noise.seed == 2);
    CHECK(cfg.data_transform == DataTransform::levels);
    CHECK(cfg.estimators.size() == 4);
    CHECK(cfg.mcmc.n_keep == 5000);
    CHECK(cfg.mcmc.skip == 10);
    // Unlisted quantities are pinned at their exact values.
    CHECK(cfg.space.n_free() == 4);
    CHECK(cfg.space.fixed[cfg.space.index_of("S0")].value() == 8485.0);
    CHECK(cfg.space.fixed[cfg.space.index_of("I0")].value() == 50.0);
    CHECK(cfg.exact_params(1) == doctest::Approx(1.0 / 3.0));
    CHECK(cfg.make_model().observable == 2);
    CHECK(cfg.make_model().state_names[static_cast<std::size_t>(cfg.make_model().hidden)] == "E");
}

TEST_CASE("4thA config defaults to increments and a 180-day horizon") {
    const auto cfg = parse_config(R"(model: fourtha
space:
  C1: {lower: 1, upper: 60}
  D0: {lower: 1e-8, upper: 8e-8}
  Atilde0: {fixed: 1.702e-7}
non_observable: Atilde
)");
    CHECK(cfg.horizon == 180.0);
    CHECK(cfg.data_noise.structure == NoiseStructure::increment);
    CHECK(cfg.data_transform == DataTransform::increments);
    CHECK(cfg.space.transform[cfg.space.index_of("C1")] == Transform::linear);
    CHECK(cfg.space.transform[cfg.space.index_of("D0")] == Transform::linear);
    CHECK(cfg.space.n_free() == 2);
    CHECK(cfg.make_model().hidden == 4);
}

TEST_CASE("EAIHRD config needs every exact parameter") {
    CHECK(error_text("model: eaihrd\nspace:\n  a: {lower: 0.1, upper: 0.3}\n").find("exact_params") != std::string::npos);
    const auto cfg = parse_config(R"(model: eaihrd
exact_params: {a: 0.2, s: 0.2721, r1: 0.1453, r2: 0.0793, r3: 0.0536, h: 0.1, d: 0.05, c1: 0.3, c2: 0.8,
               A0: 2.5e-5, I0: 4e-6, H0: 3e-7, R0: 0.7, D0: 4e-8, E0: 8e-6}
space:
  a: {lower: 0.1, upper: 0.3}
)");
    CHECK(cfg.exact_params.size() == 15);
    CHECK(cfg.space.n_free() == 1);
}

TEST_CASE("unknown keys are rejected with their line number") {
    CHECK(error_line(std::string(seir_yaml) + "horizn: 90\n") == 13);
    CHECK(error_text(std::string(seir_yaml) + "horizn: 90\n").find("horizn") != std::string::npos);
    CHECK(error_line("model: seir\nspace:\n  beta: {lower: 0.01, uper: 1.5}\n") == 3);
    CHECK(error_line("model: seir\nspace:\n  bta: {lower: 0.01, upper: 1.5}\n") == 3);
    CHECK(error_line("model: seir\nspace:\n  beta: {lower: 0.01, upper: 1.5}\nmcmc: {n_keep: 10, thin: 2}\n") == 4);
}

TEST_CASE("inconsistent values are reported against the offending fields") {
    const std::string msg = error_text(std::string(seir_yaml) + "horizon: 20\n");
    CHECK(msg.find("t_train") != std::string::npos);
    CHECK(msg.find("horizon") != std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: {lower: 1, upper: 0.5}\n").find("lower < upper") != std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: {lower: 0.5, upper: 0.6}\n").find("outside") != std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: fixed\n").find("no free") != std::string::npos);
    CHECK(error_text("model: sir\n").find("sir") != std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: {lower: 0.01, upper: 1.5}\nestimators: [DO, DO]\n").find("twice") !=
          std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: {lower: 0.01, upper: 1.5}\nk: 0\n").find("k") != std::string::npos);
    CHECK(error_text("model: seir\nspace:\n  beta: {lower: 0.01, upper: 1.5}\nmcmc: {n_keep: 100, skip: 10, max_steps: 50}\n")
              .find("max_steps") != std::string::npos);
    CHECK(error_line("model: seir\nspace: [1, 2\n") > 0);
}

TEST_CASE("optional sections") {
    const auto cfg = parse_config(std::string(seir_yaml) + R"(objective: {do_kind: log_sq, data_transform: increments}
sigma_L: {fixed: 0.05}
mcmc: {n_keep: 50, skip: 1000, max_steps: 200000, psrf_threshold: 1.2, block: 1000}
restarts: 4
replicate_restarts: 2
outputs: out/dir
)");
    CHECK(cfg.do_objective == ObjectiveKind::log_sq);
    CHECK(cfg.data_transform == DataTransform::increments);
    CHECK(cfg.sigma_L_fixed.value() == 0.05);
    CHECK(cfg.mcmc.max_steps == 200000);
    CHECK(cfg.mcmc.block == 1000);
    CHECK(cfg.mcmc.psrf_threshold == 1.2);
    CHECK(cfg.restarts == 4);
    CHECK(cfg.replicate_restarts == 2);
    CHECK(cfg.outputs == "out/dir");
    CHECK(error_text(std::string(seir_yaml) + "objective: {do_kind: neg_log_likelihood}\n").find("do_kind") !=
          std::string::npos);
}

TEST_CASE("files and scalar maps") {
    const auto dir = std::filesystem::temp_directory_path() / "epifit_test_config";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "run.yaml").string();
    std::ofstream(path) << seir_yaml;
    const auto cfg = load_config(path);
    CHECK(cfg.source == path);
    CHECK_THROWS_AS(load_config((dir / "missing.yaml").string()), ConfigError);

    const auto params = (dir / "params.yaml").string();
    std::ofstream(params) << "beta: 0.45\nsigma: 0.3333333333333333\n";
    const auto m = load_scalar_map(params);
    CHECK(m.at("beta") == 0.45);
    CHECK(m.size() == 2);
    std::ofstream(params) << "beta: [1, 2]\n";
    CHECK_THROWS_AS(load_scalar_map(params), ConfigError);
    std::filesystem::remove_all(dir);
}
