#include "epifit/error.hpp"
#include "epifit/experiment.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace epifit;
namespace fs = std::filesystem;

namespace {

std::string small_seir(double data_sigma, double boot_sigma, const std::string& estimators = "[DO, MLE, MAP, MCMC]") {
    std::ostringstream s;
    s << "model: seir\n"
         "space:\n"
         "  beta: {lower: 0.01, upper: 1.5}\n"
         "  sigma: {lower: 0.001, upper: 1}\n"
         "  gamma: {lower: 0.001, upper: 1}\n"
         "  E0: {lower: 10, upper: 4000}\n"
      << "data_noise: {sigma: " << data_sigma << ", seed: 1}\n"
      << "bootstrap_noise: {sigma: " << boot_sigma << ", seed: 2}\n"
      << "estimators: " << estimators << "\n"
      << "t_train: 30\nk: 6\nrestarts: 4\nreplicate_restarts: 1\n"
         "mcmc: {n_keep: 50, skip: 20, max_steps: 20000, block: 2000}\n"
         "seed: 3\n";
    return s.str();
}

EstimateEnsemble constant_s_ensemble(std::initializer_list<double> s0s) {
    EstimateEnsemble e;
    e.names = {"S0"};
    e.quantities.resize(static_cast<Eigen::Index>(s0s.size()), 6);
    e.draws.resize(static_cast<Eigen::Index>(s0s.size()), 1);
    Eigen::Index r = 0;
    for (double s0 : s0s) {
        // No infectives: S stays at S0 for all time.
        e.quantities.row(r) << 0.45, 0.2, 0.1, s0, 0.0, 0.0;
        e.draws(r++, 0) = s0;
    }
    return e;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST_CASE("percentile bands from simple ensembles") {
    const auto model = seir_model(9039);
    const auto one = percentile_bands(constant_s_ensemble({5.0}), model, 10, 0);
    for (Eigen::Index i = 0; i < one.curves.rows(); ++i)
        for (Eigen::Index l = 0; l < 5; ++l) CHECK(one.curves(i, l) == doctest::Approx(5.0));

    const auto two = percentile_bands(constant_s_ensemble({0.0, 1.0}), model, 10, 0);
    CHECK(two.variable == "S");
    CHECK(two.times.size() == 11);
    for (Eigen::Index i = 0; i < two.curves.rows(); ++i) {
        CHECK(two.curves(i, 0) == doctest::Approx(0.05));
        CHECK(two.curves(i, 2) == doctest::Approx(0.5));
        CHECK(two.curves(i, 4) == doctest::Approx(0.95));
    }
    CHECK_THROWS_AS(percentile_bands(EstimateEnsemble{}, model, 10, 0), InvalidArgument);
}

TEST_CASE("box statistics of ensemble columns") {
    EstimateEnsemble e;
    e.names = {"x"};
    e.draws.resize(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) e.draws(i, 0) = static_cast<double>(i + 1);
    const auto b = box_stats(e, "x");
    CHECK(b.q25 == doctest::Approx(25.75));
    CHECK(b.median == doctest::Approx(50.5));
    CHECK(b.q75 == doctest::Approx(75.25));
    CHECK(b.outliers.empty());

    e.draws.setConstant(2.5);
    const auto c = box_stats(e, "x");
    CHECK(c.whisker_low == 2.5);
    CHECK(c.q25 == 2.5);
    CHECK(c.whisker_high == 2.5);
    CHECK(c.iqr() == 0.0);
}

TEST_CASE("synthetic data: clean trajectories and seeded noise") {
    const auto cfg = parse_config(small_seir(0.05, 0.05));
    const auto a = generate_data(cfg), b = generate_data(cfg);
    CHECK(a.reported.values == b.reported.values);
    CHECK(a.clean.values.cols() == 4);
    CHECK(a.reported.size() == 61);
    CHECK(a.noise.seed == derive_seed(stream_seed(cfg, 1), 1));
    CHECK(a.reported.values(10, 0) != a.clean.values(10, 2));

    const auto quiet = generate_data(parse_config(small_seir(0.0, 0.0)));
    CHECK(quiet.reported.values.col(0) == quiet.clean.values.col(2));
}

TEST_CASE("zero noise collapses every prediction band") {
    const auto report = run_experiment(parse_config(small_seir(0.0, 0.0, "[DO, MLE, MAP]")), 1);
    CHECK_FALSE(report.partial);
    REQUIRE(report.results.size() == 3);
    for (const auto& res : report.results) {
        CAPTURE(to_string(res.kind));
        REQUIRE(res.ok);
        REQUIRE(res.bands.size() == 2);
        CHECK(res.bands[0].variable == "I");
        CHECK(res.bands[1].variable == "E");
        for (const auto& band : res.bands)
            for (Eigen::Index i = 0; i < band.curves.rows(); ++i) {
                const double width = band.curves(i, 4) - band.curves(i, 0);
                CHECK(width <= 1e-3 * std::abs(band.curves(i, 2)));
            }
    }
}

TEST_CASE("full protocol: ordered bands, tracking medians and a Hessian report") {
    const auto cfg = parse_config(small_seir(0.05, 0.05));
    const auto report = run_experiment(cfg, 1);
    REQUIRE(report.results.size() == 4);
    REQUIRE(report.hessian.has_value());
    CHECK(report.hessian->eigenvalues.size() == 4);
    for (const auto& res : report.results) {
        CAPTURE(to_string(res.kind));
        REQUIRE(res.ok);
        CHECK(res.ensemble.effective_k() >= 1);
        CHECK(res.boxes.size() == res.ensemble.names.size());
        for (const auto& band : res.bands)
            for (Eigen::Index i = 0; i < band.curves.rows(); ++i)
                for (Eigen::Index l = 0; l + 1 < 5; ++l) CHECK(band.curves(i, l) <= band.curves(i, l + 1));
        // The observable's median tracks the reported data over the training window:
        // d = m (1 + e), so the residual d / m - 1 is the noise draw itself.
        for (std::size_t t = 0; t <= 30; ++t) {
            const double d = report.data.reported.values(static_cast<Eigen::Index>(t), 0);
            CHECK(std::abs(d / res.bands[0].curves(static_cast<Eigen::Index>(t), 2) - 1.0) <= 3 * 0.05);
        }
    }
    const auto& mcmc = report.results.back();
    CHECK(mcmc.kind == EstimatorKind::MCMC);
    REQUIRE(mcmc.mcmc.has_value());
    CHECK(mcmc.ensemble.effective_k() == 50);
    CHECK(mcmc.ensemble.source == EnsembleSource::mcmc);
}

TEST_CASE("report files are complete and reproducible") {
    const auto cfg = parse_config(small_seir(0.05, 0.05, "[DO, MCMC]"));
    const auto dir = fs::temp_directory_path() / "epifit_test_experiment";
    fs::remove_all(dir);
    write_report(run_experiment(cfg, 1), (dir / "a").string());
    write_report(run_experiment(cfg, 2), (dir / "b").string());

    const std::vector<std::string> files{"data.csv", "boxstats.csv", "estimates_DO.csv", "estimates_MCMC.csv",
                                         "bands_DO_I.csv", "bands_DO_E.csv", "bands_MCMC_I.csv",
                                         "bands_MCMC_E.csv", "hessian.csv", "report.json"};
    for (const auto& f : files) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir / "a" / f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    CHECK(first_line(dir / "a" / "bands_DO_I.csv") == "time,p5,p25,p50,p75,p95");
    CHECK(first_line(dir / "a" / "estimates_DO.csv") == "beta,sigma,gamma,E0");
    CHECK(first_line(dir / "a" / "estimates_MCMC.csv") == "beta,sigma,gamma,E0,sigma_L");
    CHECK(first_line(dir / "a" / "boxstats.csv") ==
          "estimator,parameter,whisker_low,q25,median,q75,whisker_high,n_outliers");
    CHECK(first_line(dir / "a" / "hessian.csv") == "parameter,beta,sigma,gamma,E0,eigenvalue");
    CHECK(first_line(dir / "a" / "data.csv") == "time,S,E,I,R,reported");

    const auto j = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
    CHECK(j["seed"] == 3);
    CHECK(j["model"] == "seir");
    CHECK(j["estimators"].size() == 2);
    CHECK(j["estimators"][0]["effective_k"] == 6);
    CHECK(j["estimators"][1]["psrf"].contains("sigma"));
    CHECK(j["hessian"]["eigenvalues"].size() == 4);

    // 17 significant digits round-trip exactly.
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(0.1) == "0.10000000000000001");
    fs::remove_all(dir);
}

TEST_CASE("estimator failures mark the report partial") {
    // A one-day window leaves too few data points for any fit.
    auto cfg = parse_config(small_seir(0.05, 0.05, "[DO]"));
    cfg.t_train = 0.5;
    const auto report = run_experiment(cfg, 1);
    CHECK(report.partial);
    REQUIRE(report.results.size() == 1);
    CHECK_FALSE(report.results[0].ok);
    CHECK_FALSE(report.results[0].error.empty());
}
