#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "attrlab/attribution.hpp"
#include "attrlab/rng.hpp"
#include "attrlab/stats.hpp"
#include "attrlab/synthdata.hpp"
#include "support/oracles.hpp"

using namespace attrlab;
using namespace attrlab::attribution;
using attrlab::synthdata::Dataset;
using attrlab::synthdata::DgpConfig;
using attrlab::synthdata::sample_dataset;

namespace {

Dataset small_dataset(int n_groups, int group_size, double rho, int n, std::uint64_t seed) {
    DgpConfig cfg;
    cfg.groups = {n_groups, group_size, rho};
    cfg.n_samples = n;
    cfg.seed = seed;
    return sample_dataset(cfg);
}

BackgroundSet background_from(const Dataset& data, std::size_t count) {
    BackgroundSet bg;
    bg.rows = Matrix(count, data.n_features());
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < data.n_features(); ++c) bg.rows(r, c) = data.features(r, c);
    return bg;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double out = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("attribution");

TEST_CASE("constant model attributes nothing") {
    Dataset data = small_dataset(1, 2, 0.0, 60, 1);
    for (double& y : data.target) y = 2.0;
    gbdt::TrainConfig cfg;
    cfg.rounds = 5;
    const auto model = gbdt::fit(data, cfg);
    const auto bg = background_from(data, 8);
    const auto phi = shap_local(model, data.features.row(0), bg);
    for (double v : phi.values) CHECK(v == 0.0);
}

TEST_CASE("single stump gives the whole efficiency budget to its feature") {
    const Dataset data = small_dataset(2, 1, 0.0, 200, 2);
    gbdt::TrainConfig cfg;
    cfg.rounds = 1;
    cfg.max_depth = 1;
    const auto model = gbdt::fit(data, cfg);
    REQUIRE(model.split_log.size() == 1);
    const int used = model.split_log[0].feature;
    const auto bg = background_from(data, 16);

    double bg_mean = 0.0;
    for (std::size_t b = 0; b < bg.size(); ++b) bg_mean += model.predict(bg.rows.row(b));
    bg_mean /= static_cast<double>(bg.size());

    const auto x = data.features.row(5);
    const auto phi = shap_local(model, x, bg);
    CHECK(std::abs(phi.values[static_cast<std::size_t>(used)] -
                   (model.predict(x) - bg_mean)) < 1e-12);
    CHECK(phi.values[static_cast<std::size_t>(1 - used)] == 0.0);
}

TEST_CASE("matches the brute-force subset enumeration oracle") {
    // Depth-3 trees over 4 features, background 8.
    const Dataset data = small_dataset(2, 2, 0.5, 300, 3);
    gbdt::TrainConfig cfg;
    cfg.rounds = 5;
    cfg.max_depth = 3;
    cfg.seed = 1;
    const auto model = gbdt::fit(data, cfg);
    const auto bg = background_from(data, 8);
    for (std::size_t r = 0; r < 10; ++r) {
        const auto x = data.features.row(r);
        const auto fast = shap_local(model, x, bg);
        const auto slow = testing::brute_force_shapley(model, x, bg.rows);
        CHECK(max_abs_diff(fast.values, slow) < 1e-9);
    }
}

TEST_CASE("oracle equivalence holds across random small ensembles") {
    Rng rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const int n_feats = 2 + static_cast<int>(rng.next_index(5));  // 2..6 features
        const int depth = 1 + static_cast<int>(rng.next_index(3));    // 1..3
        DgpConfig dcfg;
        dcfg.groups = {1, n_feats, 0.3};
        dcfg.n_samples = 150;
        dcfg.seed = 100 + static_cast<std::uint64_t>(trial);
        const Dataset data = sample_dataset(dcfg);
        gbdt::TrainConfig cfg;
        cfg.rounds = 3;
        cfg.max_depth = depth;
        cfg.subsample = 0.8;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto model = gbdt::fit(data, cfg);
        const auto bg = background_from(data, 5);
        const auto x = data.features.row(20 + static_cast<std::size_t>(trial));
        const auto fast = shap_local(model, x, bg);
        const auto slow = testing::brute_force_shapley(model, x, bg.rows);
        CHECK(max_abs_diff(fast.values, slow) < 1e-9);
    }
}

TEST_CASE("efficiency: local values sum to the centered prediction") {
    const Dataset data = small_dataset(2, 3, 0.7, 400, 4);
    gbdt::TrainConfig cfg;
    cfg.rounds = 30;
    cfg.max_depth = 4;
    cfg.subsample = 0.9;
    cfg.seed = 3;
    const auto model = gbdt::fit(data, cfg);
    const auto bg = background_from(data, 25);
    double bg_mean = 0.0;
    for (std::size_t b = 0; b < bg.size(); ++b) bg_mean += model.predict(bg.rows.row(b));
    bg_mean /= static_cast<double>(bg.size());
    for (std::size_t r = 0; r < 30; ++r) {
        const auto x = data.features.row(r);
        const auto phi = shap_local(model, x, bg);
        double total = 0.0;
        for (double v : phi.values) total += v;
        CHECK(std::abs(total - (model.predict(x) - bg_mean)) < 1e-9);
    }
}

TEST_CASE("dummy feature gets exactly zero") {
    DgpConfig dcfg;
    dcfg.groups = {2, 1, 0.0};
    dcfg.extras = 1;  // never informative
    dcfg.n_samples = 250;
    dcfg.seed = 6;
    dcfg.betas = {1.0, 0.5, 0.0};
    const Dataset data = sample_dataset(dcfg);
    gbdt::TrainConfig cfg;
    cfg.rounds = 15;
    cfg.max_depth = 2;
    const auto model = gbdt::fit(data, cfg);
    const auto counts = gbdt::split_counts(model);
    REQUIRE(counts[2] == 0);
    const auto bg = background_from(data, 10);
    for (std::size_t r = 0; r < 10; ++r) {
        const auto phi = shap_local(model, data.features.row(r), bg);
        CHECK(phi.values[2] == 0.0);
    }
}

TEST_CASE("symmetry: trees referencing duplicated columns identically give equal values") {
    // Hand-built two-tree ensemble: tree 0 splits feature 0, tree 1 splits
    // feature 1 at the same threshold with the same leaf values.
    gbdt::Ensemble ens;
    ens.base_score = 0.0;
    ens.learning_rate = 1.0;
    ens.n_features = 2;
    for (int f : {0, 1}) {
        gbdt::Tree tree;
        tree.nodes.resize(3);
        tree.nodes[0] = gbdt::TreeNode{f, 0.0, 1, 2, 0.0, 4};
        tree.nodes[1] = gbdt::TreeNode{-1, 0.0, -1, -1, -1.0, 2};
        tree.nodes[2] = gbdt::TreeNode{-1, 0.0, -1, -1, 1.0, 2};
        ens.trees.push_back(tree);
        ens.split_log.push_back(gbdt::SplitRecord{f, 0, f});
    }
    BackgroundSet bg;
    bg.rows = Matrix(2, 2);
    bg.rows(0, 0) = -1.0;
    bg.rows(0, 1) = -1.0;
    bg.rows(1, 0) = 1.0;
    bg.rows(1, 1) = 1.0;
    const std::vector<double> x{0.5, 0.5};  // duplicated column: same value
    const auto phi = shap_local(ens, x, bg);
    CHECK(phi.values[0] == doctest::Approx(phi.values[1]).epsilon(1e-12));
}

TEST_CASE("linearity: ensemble values are the sum of per-tree values") {
    const Dataset data = small_dataset(1, 3, 0.4, 250, 8);
    gbdt::TrainConfig cfg;
    cfg.rounds = 2;
    cfg.max_depth = 2;
    cfg.seed = 2;
    const auto model = gbdt::fit(data, cfg);
    REQUIRE(model.trees.size() == 2);
    const auto bg = background_from(data, 6);
    const auto x = data.features.row(3);

    auto single_tree = [&](std::size_t idx) {
        gbdt::Ensemble sub = model;
        sub.trees = {model.trees[idx]};
        sub.base_score = 0.0;
        return shap_local(sub, x, bg);
    };
    const auto full = shap_local(model, x, bg);
    const auto t0 = single_tree(0);
    const auto t1 = single_tree(1);
    for (std::size_t j = 0; j < full.values.size(); ++j)
        CHECK(std::abs(full.values[j] - (t0.values[j] + t1.values[j])) < 1e-12);
}

TEST_CASE("empty background is rejected") {
    const Dataset data = small_dataset(1, 2, 0.0, 50, 9);
    gbdt::TrainConfig cfg;
    cfg.rounds = 2;
    const auto model = gbdt::fit(data, cfg);
    BackgroundSet empty;
    empty.rows = Matrix(0, 2);
    CHECK_THROWS_AS(shap_local(model, data.features.row(0), empty), ParameterError);
}

TEST_CASE("global attribution is the mean absolute local value") {
    const Dataset data = small_dataset(1, 2, 0.5, 200, 10);
    gbdt::TrainConfig cfg;
    cfg.rounds = 10;
    cfg.max_depth = 2;
    const auto model = gbdt::fit(data, cfg);
    const auto bg = background_from(data, 12);

    Matrix one_row(1, 2);
    one_row(0, 0) = data.features(5, 0);
    one_row(0, 1) = data.features(5, 1);
    const auto global_one = shap_global(model, one_row, bg);
    const auto local = shap_local(model, one_row.row(0), bg);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(global_one.values[j] == doctest::Approx(std::abs(local.values[j])).epsilon(1e-12));

    // Duplicating the eval rows leaves the mean unchanged.
    Matrix twice(2, 2);
    for (std::size_t c = 0; c < 2; ++c) twice(0, c) = twice(1, c) = one_row(0, c);
    const auto global_twice = shap_global(model, twice, bg);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(global_twice.values[j] == doctest::Approx(global_one.values[j]).epsilon(1e-12));
}

TEST_CASE("permutation importance behaves on used and unused features") {
    DgpConfig dcfg;
    dcfg.groups = {2, 1, 0.0};
    dcfg.n_samples = 300;
    dcfg.seed = 12;
    dcfg.noise_sd = 0.2;
    dcfg.betas = {1.0, 0.0};
    const Dataset data = sample_dataset(dcfg);
    gbdt::TrainConfig cfg;
    cfg.rounds = 20;
    cfg.max_depth = 2;
    const auto model = gbdt::fit(data, cfg);
    REQUIRE(gbdt::split_counts(model)[1] == 0);

    const auto imp = permutation_importance(model, data.features, data.target, 5);
    CHECK(imp.values[0] > 0.0);
    CHECK(imp.values[1] == 0.0);

    const auto imp_other_seed = permutation_importance(model, data.features, data.target, 6);
    CHECK(imp.values[0] != imp_other_seed.values[0]);  // stochastic method

    Matrix tiny(5, 2);
    CHECK_THROWS_AS(
        permutation_importance(model, tiny, std::vector<double>(5, 0.0), 1), ParameterError);
}

TEST_CASE("split count importance normalizes and flags degeneracy") {
    const Dataset data = small_dataset(1, 3, 0.4, 200, 13);
    gbdt::TrainConfig cfg;
    cfg.rounds = 10;
    cfg.max_depth = 2;
    const auto model = gbdt::fit(data, cfg);
    const auto imp = split_count_importance(model);
    double total = 0.0;
    for (double v : imp.values) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    const auto counts = gbdt::split_counts(model);
    const auto argmax_count =
        std::max_element(counts.begin(), counts.end()) - counts.begin();
    const auto argmax_imp =
        std::max_element(imp.values.begin(), imp.values.end()) - imp.values.begin();
    CHECK(argmax_count == argmax_imp);

    Dataset flat = data;
    for (double& y : flat.target) y = 0.0;
    const auto degenerate_model = gbdt::fit(flat, cfg);
    const auto zero = split_count_importance(degenerate_model);
    CHECK(zero.degenerate);
    for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("attribution matrix basics") {
    const Dataset data = small_dataset(1, 2, 0.6, 400, 14);
    gbdt::TrainConfig cfg;
    cfg.rounds = 15;
    cfg.max_depth = 2;
    EvalProtocol protocol;
    protocol.eval_count = 50;
    protocol.background_count = 20;
    protocol.threads = 1;

    // M=1 equals shap_global of the one model.
    const auto matrix = attribution_matrix(data, cfg, 1, 42, Method::shap, protocol);
    const auto split = make_split(data, protocol);
    gbdt::TrainConfig one = cfg;
    one.seed = 42;
    const auto model = gbdt::fit(split.train, one);
    const auto direct = shap_global(model, split.eval_rows, split.background);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(matrix.values(0, j) == doctest::Approx(direct.values[j]).epsilon(1e-12));
    CHECK(matrix.seeds == std::vector<std::uint64_t>{42});

    // Deterministic config: all rows identical.
    const auto det = attribution_matrix(data, cfg, 4, 7, Method::shap, protocol);
    for (std::size_t i = 1; i < det.n_models(); ++i)
        for (std::size_t j = 0; j < det.n_features(); ++j)
            CHECK(det.values(i, j) == det.values(0, j));
}

TEST_CASE("attribution matrix supports the other methods") {
    const Dataset data = small_dataset(1, 2, 0.5, 400, 22);
    gbdt::TrainConfig cfg;
    cfg.rounds = 15;
    cfg.max_depth = 2;
    EvalProtocol protocol;
    protocol.eval_count = 50;
    protocol.background_count = 15;
    protocol.threads = 1;

    const auto counts = attribution_matrix(data, cfg, 2, 3, Method::split_count, protocol);
    for (std::size_t i = 0; i < 2; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 2; ++j) total += counts.values(i, j);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    const auto perm = attribution_matrix(data, cfg, 2, 3, Method::permutation, protocol);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(perm.values(i, j) >= 0.0);
}

TEST_CASE("attribution matrix is identical for any worker count") {
    const Dataset data = small_dataset(1, 2, 0.7, 400, 21);
    gbdt::TrainConfig cfg;
    cfg.rounds = 12;
    cfg.max_depth = 2;
    cfg.subsample = 0.7;
    EvalProtocol one;
    one.eval_count = 50;
    one.background_count = 15;
    one.threads = 1;
    EvalProtocol four = one;
    four.threads = 4;
    const auto a = attribution_matrix(data, cfg, 6, 33, Method::shap, one);
    const auto b = attribution_matrix(data, cfg, 6, 33, Method::shap, four);
    CHECK(a.values.data() == b.values.data());
    CHECK(a.seeds == b.seeds);
}

TEST_CASE("matrix csv round trip with sidecar") {
    const Dataset data = small_dataset(1, 2, 0.5, 300, 15);
    gbdt::TrainConfig cfg;
    cfg.rounds = 10;
    cfg.subsample = 0.7;
    EvalProtocol protocol;
    protocol.eval_count = 40;
    protocol.background_count = 15;
    protocol.threads = 1;
    const auto matrix = attribution_matrix(data, cfg, 3, 5, Method::shap, protocol);
    const std::string path =
        (std::filesystem::temp_directory_path() / "attrlab_matrix.csv").string();
    save_matrix(matrix, path);
    const auto loaded = load_matrix(path);
    CHECK(loaded.names == matrix.names);
    CHECK(loaded.seeds == matrix.seeds);
    CHECK(loaded.method == Method::shap);
    for (std::size_t i = 0; i < matrix.n_models(); ++i)
        for (std::size_t j = 0; j < matrix.n_features(); ++j)
            CHECK(loaded.values(i, j) == matrix.values(i, j));
    std::remove(path.c_str());
    std::remove((path + ".meta.json").c_str());
}

TEST_CASE("symmetric pair: column means agree and the difference changes sign") {
    const Dataset data = small_dataset(1, 2, 0.9, 2000, 17);
    gbdt::TrainConfig cfg;
    cfg.rounds = 40;
    cfg.max_depth = 2;
    cfg.subsample = 0.5;
    EvalProtocol protocol;
    protocol.eval_count = 150;
    protocol.background_count = 30;
    const auto matrix = attribution_matrix(data, cfg, 50, 19, Method::shap, protocol);

    double mean0 = 0.0, mean1 = 0.0;
    bool positive = false, negative = false;
    for (std::size_t i = 0; i < matrix.n_models(); ++i) {
        mean0 += matrix.values(i, 0);
        mean1 += matrix.values(i, 1);
        const double d = matrix.values(i, 0) - matrix.values(i, 1);
        positive = positive || d > 0;
        negative = negative || d < 0;
    }
    mean0 /= 50.0;
    mean1 /= 50.0;
    CHECK(std::abs(mean0 - mean1) / std::max(mean0, mean1) < 0.10);
    CHECK(positive);
    CHECK(negative);
}

TEST_CASE("fresh-data symmetry: per-model global attributions balance across the pair") {
    std::vector<double> phi0, phi1;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Dataset data = small_dataset(1, 2, 0.9, 500, 900 + seed);
        gbdt::TrainConfig cfg;
        cfg.rounds = 25;
        cfg.max_depth = 2;
        EvalProtocol protocol;
        protocol.eval_count = 80;
        protocol.background_count = 20;
        const auto split = make_split(data, protocol);
        const auto model = gbdt::fit(split.train, cfg);
        const auto global = shap_global(model, split.eval_rows, split.background);
        phi0.push_back(global.values[0]);
        phi1.push_back(global.values[1]);
    }
    const double m0 = mean(phi0);
    const double m1 = mean(phi1);
    CHECK(std::abs(m0 - m1) / std::max(m0, m1) < 0.05);
}

TEST_SUITE_END();
