#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrlab/experiments.hpp"
#include "attrlab/stability.hpp"

using namespace attrlab;
using namespace attrlab::experiments;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("axiom validation at small scale tracks the split-count model") {
    AxiomValidationConfig cfg;
    cfg.rho = 0.5;
    cfg.rounds = 50;
    cfg.n_seeds = 8;
    cfg.n_samples = 800;
    cfg.threads = 2;
    const auto rows = run_axiom_validation(cfg);
    REQUIRE(rows.size() == 1);
    const auto& row = rows[0];
    auto get = [&](const auto& kv, const std::string& key) {
        for (const auto& [k, v] : kv)
            if (k == key) return v;
        FAIL("missing key");
        return 0.0;
    };
    CHECK(get(row.measured, "ratio") > 1.0);
    CHECK(get(row.measured, "gap") > 0.0);
    CHECK(get(row.theory, "ratio") == stability::theoretical_ratio(0.5, 1.0));
    CHECK(get(row.theory, "gap") == stability::split_gap(0.5, 50.0));
    CHECK(get(row.theory, "first_mover_count") == doctest::Approx(50.0 / 1.75));
}

TEST_CASE("split counts balance out without collinearity") {
    AxiomValidationConfig cfg;
    cfg.rho = 0.0;
    cfg.rounds = 100;
    cfg.n_seeds = 20;
    cfg.n_samples = 1500;
    cfg.threads = 2;
    const auto rows = run_axiom_validation(cfg);
    const double ratio = rows[0].measured[2].second;
    CHECK(ratio > 0.85);
    CHECK(ratio < 1.25);
}

TEST_CASE("snr calibration bins track the normal-law prediction") {
    SnrCalibrationConfig cfg;
    cfg.rho = 0.85;
    cfg.group_count = 4;
    cfg.group_size = 5;
    cfg.beta_step = 0.25;
    cfg.n_models = 50;
    cfg.n_samples = 2000;
    cfg.train = {100, 3, 0.1, 0.8, 1.0, 1, 0};
    cfg.data_seed = 11;
    cfg.seed_base = 87000;
    cfg.threads = 2;
    const auto result = run_snr_calibration(cfg);
    REQUIRE(result.bin_rows.size() == 6);
    auto bin = [&](std::size_t i) {
        return std::pair<double, double>{result.bin_rows[i].measured[0].second,
                                         result.bin_rows[i].theory[0].second};
    };
    // Low-SNR bin stays at or below the prediction (conservative regime).
    const auto [low_emp, low_theory] = bin(0);
    CHECK(low_emp <= low_theory + 0.05);
    // Significant bins are quiet.
    const auto [sig_emp, sig_theory] = bin(4);
    CHECK(sig_emp <= 0.03);
    CHECK(sig_theory <= 0.03);
    const auto [top_emp, top_theory] = bin(5);
    CHECK(top_emp == 0.0);
    CHECK(top_theory < 0.005);
}

TEST_CASE("mild collinearity already flips more within groups than between") {
    FlipSweepConfig cfg;
    cfg.rhos = {0.1};
    cfg.n_models = 12;
    cfg.group_count = 2;
    cfg.group_size = 2;
    cfg.group_weights = {1.0, 0.6};
    cfg.n_samples = 600;
    cfg.train.rounds = 40;
    cfg.eval_count = 80;
    cfg.background_count = 20;
    cfg.threads = 2;
    const auto rows = run_flip_sweep(cfg);
    const double within = rows[0].measured[0].second;
    const double between = rows[0].measured[1].second;
    CHECK(within >= between);
    CHECK(within > 0.1);  // near-symmetric pair keeps flipping
}

TEST_CASE("conditional sweep separates a strongly asymmetric pair") {
    ConditionalSweepConfig cfg;
    cfg.rhos = {0.5};
    cfg.delta_betas = {1.0};
    cfg.n_models = 10;
    cfg.n_samples = 600;
    cfg.train.rounds = 40;
    cfg.train.max_depth = 3;
    cfg.eval_count = 80;
    cfg.background_count = 20;
    cfg.threads = 2;
    const auto rows = run_conditional_sweep(cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].measured[0].second == 0.0);  // flip
}

TEST_CASE("convergence endpoints behave") {
    ConvergenceConfig cfg;
    cfg.rho = 0.9;
    cfg.ensemble_sizes = {1, 12};
    cfg.n_models = 12;
    cfg.n_resamples = 100;
    cfg.n_samples = 700;
    cfg.train.rounds = 40;
    cfg.eval_count = 80;
    cfg.background_count = 20;
    cfg.threads = 2;
    const auto rows = run_convergence(cfg);
    REQUIRE(rows.size() == 2);
    // M = n_models: single possible consensus.
    CHECK(rows[1].measured[0].second == 0.0);
    CHECK(rows[1].measured[1].second == 0.0);  // cv
}

TEST_CASE("result files are byte-identical across runs") {
    const auto dir_a = std::filesystem::temp_directory_path() / "attrlab_exp_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "attrlab_exp_b";
    AxiomValidationConfig cfg;
    cfg.rho = 0.7;
    cfg.rounds = 30;
    cfg.n_seeds = 4;
    cfg.n_samples = 500;
    cfg.threads = 2;
    cfg.out_dir = dir_a.string();
    run_axiom_validation(cfg);
    cfg.out_dir = dir_b.string();
    run_axiom_validation(cfg);
    for (const char* file : {"results.csv", "results.json", "plotdata.csv"}) {
        const std::string a = slurp((dir_a / file).string());
        const std::string b = slurp((dir_b / file).string());
        CHECK(!a.empty());
        CHECK(a == b);
    }
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("ratio sweep needs enough rho points") {
    RatioSweepConfig cfg;
    cfg.rhos = {0.5, 0.9};
    CHECK_THROWS_AS(run_ratio_sweep(cfg), ParameterError);
}

TEST_CASE("fresh data matrix carries names and seeds") {
    synthdata::DgpConfig dgp;
    dgp.groups = {1, 2, 0.5};
    dgp.n_samples = 400;
    gbdt::TrainConfig train;
    train.rounds = 10;
    attribution::EvalProtocol protocol;
    protocol.eval_count = 50;
    protocol.background_count = 15;
    protocol.threads = 2;
    const auto m = fresh_data_matrix(dgp, train, 3, 77, protocol);
    CHECK(m.names == std::vector<std::string>{"g0f0", "g0f1"});
    CHECK(m.seeds == std::vector<std::uint64_t>{77, 78, 79});
    CHECK(m.n_models() == 3);
}

TEST_SUITE_END();
