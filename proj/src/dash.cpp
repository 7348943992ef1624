#include "attrlab/dash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "attrlab/rng.hpp"
#include "attrlab/stats.hpp"

namespace attrlab::dash {

Aggregator aggregator_from_string(const std::string& name) {
    if (name == "mean") return Aggregator::mean;
    if (name == "trimmed") return Aggregator::trimmed;
    if (name == "median") return Aggregator::median;
    throw ParameterError("unknown aggregator \"" + name + "\"");
}

std::string ConsensusMethod::describe() const {
    switch (aggregator) {
        case Aggregator::mean: return "mean";
        case Aggregator::trimmed: return "trimmed(" + std::to_string(trim) + ")";
        case Aggregator::median: return "median";
    }
    return "mean";
}

namespace {

double aggregate_column(std::vector<double>& column, const ConsensusMethod& method) {
    switch (method.aggregator) {
        case Aggregator::mean:
            return mean(column);
        case Aggregator::median:
            return median(column);
        case Aggregator::trimmed: {
            const std::size_t m = column.size();
            const std::size_t per_tail = static_cast<std::size_t>(
                std::floor(method.trim * static_cast<double>(m)));
            std::sort(column.begin(), column.end());
            double s = 0.0;
            for (std::size_t i = per_tail; i < m - per_tail; ++i) s += column[i];
            return s / static_cast<double>(m - 2 * per_tail);
        }
    }
    return 0.0;
}

}  // namespace

ConsensusResult consensus(const attribution::AttributionMatrix& attr,
                          const ConsensusMethod& method) {
    const std::size_t m = attr.n_models();
    if (m < 1) throw ParameterError("consensus: empty attribution matrix");
    if (method.aggregator == Aggregator::trimmed) {
        if (!(method.trim >= 0.0 && method.trim < 0.5))
            throw ParameterError("consensus: trim must be in [0, 0.5)");
        const std::size_t per_tail =
            static_cast<std::size_t>(std::floor(method.trim * static_cast<double>(m)));
        if (m - 2 * per_tail < 1)
            throw ParameterError("consensus: trimming leaves no rows");
    }
    ConsensusResult out;
    out.method = method;
    out.n_models = static_cast<int>(m);
    out.values.resize(attr.n_features());
    std::vector<double> column(m);
    for (std::size_t j = 0; j < attr.n_features(); ++j) {
        for (std::size_t i = 0; i < m; ++i) column[i] = attr.values(i, j);
        out.values[j] = aggregate_column(column, method);
    }
    return out;
}

bool is_balanced(const std::vector<int>& first_movers, const std::vector<int>& group) {
    if (group.empty()) throw ParameterError("is_balanced: empty group");
    std::vector<long> counts(group.size(), 0);
    for (int mover : first_movers)
        for (std::size_t g = 0; g < group.size(); ++g)
            if (mover == group[g]) ++counts[g];
    return std::all_of(counts.begin(), counts.end(),
                       [&](long c) { return c == counts[0]; });
}

double consensus_flip_rate(const attribution::AttributionMatrix& attr, int j, int k, int m_sub,
                           int n_resamples, std::uint64_t seed) {
    const int m = static_cast<int>(attr.n_models());
    const int p = static_cast<int>(attr.n_features());
    if (j < 0 || k < 0 || j >= p || k >= p || j == k)
        throw ParameterError("consensus_flip_rate: invalid feature pair");
    if (m_sub < 1 || m_sub > m)
        throw ParameterError("consensus_flip_rate: M_sub must be in [1, M]");
    if (m_sub == static_cast<int>(attr.n_models())) return 0.0;
    if (m_sub == 1) return stability::empirical_flip_rate(attr, j, k);
    if (n_resamples < 1) throw ParameterError("consensus_flip_rate: need n_resamples >= 1");

    Rng rng(seed);
    long cj = 0, ck = 0;
    for (int rep = 0; rep < n_resamples; ++rep) {
        const auto rows = sample_without_replacement(static_cast<std::size_t>(m),
                                                     static_cast<std::size_t>(m_sub), rng);
        double sum_j = 0.0, sum_k = 0.0;
        for (std::size_t r : rows) {
            sum_j += attr.values(r, static_cast<std::size_t>(j));
            sum_k += attr.values(r, static_cast<std::size_t>(k));
        }
        if (sum_j > sum_k)
            ++cj;
        else if (sum_k > sum_j)
            ++ck;
    }
    return static_cast<double>(std::min(cj, ck)) / static_cast<double>(n_resamples);
}

double consensus_flip_rate_retrain(const synthdata::Dataset& dataset,
                                   const gbdt::TrainConfig& train_config, int j, int k, int m_sub,
                                   int n_trials, std::uint64_t seed_base,
                                   const attribution::EvalProtocol& protocol) {
    if (m_sub < 1) throw ParameterError("consensus_flip_rate_retrain: M_sub must be >= 1");
    if (n_trials < 2) throw ParameterError("consensus_flip_rate_retrain: need n_trials >= 2");
    long cj = 0, ck = 0;
    for (int trial = 0; trial < n_trials; ++trial) {
        const auto matrix = attribution::attribution_matrix(
            dataset, train_config, m_sub,
            seed_base + static_cast<std::uint64_t>(trial) * static_cast<std::uint64_t>(m_sub),
            attribution::Method::shap, protocol);
        const auto res = consensus(matrix);
        if (res.values[static_cast<std::size_t>(j)] > res.values[static_cast<std::size_t>(k)])
            ++cj;
        else if (res.values[static_cast<std::size_t>(k)] > res.values[static_cast<std::size_t>(j)])
            ++ck;
    }
    return static_cast<double>(std::min(cj, ck)) / static_cast<double>(n_trials);
}

std::vector<std::vector<int>> tied_groups(const attribution::AttributionMatrix& attr,
                                          const stability::CorrelationGroups& groups) {
    std::vector<std::vector<int>> ties;
    for (const auto& group : groups.groups) {
        // Union-find over unstable pairs inside this correlation group.
        std::vector<int> parent(group.size());
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
            return x;
        };
        for (std::size_t a = 0; a < group.size(); ++a)
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                const auto diag = stability::z_test(attr, group[a], group[b]);
                if (diag.verdict != stability::Verdict::stable)
                    parent[static_cast<std::size_t>(find(static_cast<int>(b)))] =
                        find(static_cast<int>(a));
            }
        std::vector<std::vector<int>> buckets(group.size());
        for (std::size_t a = 0; a < group.size(); ++a)
            buckets[static_cast<std::size_t>(find(static_cast<int>(a)))].push_back(group[a]);
        for (auto& bucket : buckets)
            if (bucket.size() >= 2) {
                std::sort(bucket.begin(), bucket.end());
                ties.push_back(std::move(bucket));
            }
    }
    std::sort(ties.begin(), ties.end());
    return ties;
}

std::vector<std::vector<int>> ranking_blocks(const std::vector<double>& consensus_values,
                                             const std::vector<std::vector<int>>& ties) {
    const std::size_t p = consensus_values.size();
    std::vector<int> block_of(p, -1);
    std::vector<std::vector<int>> blocks;
    std::vector<double> block_value;
    for (const auto& tie : ties) {
        double total = 0.0;
        for (int j : tie) {
            block_of[static_cast<std::size_t>(j)] = static_cast<int>(blocks.size());
            total += consensus_values[static_cast<std::size_t>(j)];
        }
        blocks.push_back(tie);
        block_value.push_back(total / static_cast<double>(tie.size()));
    }
    for (std::size_t j = 0; j < p; ++j) {
        if (block_of[j] >= 0) continue;
        blocks.push_back({static_cast<int>(j)});
        block_value.push_back(consensus_values[j]);
    }
    std::vector<std::size_t> order(blocks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (block_value[a] != block_value[b]) return block_value[a] > block_value[b];
        return blocks[a] < blocks[b];
    });
    std::vector<std::vector<int>> out;
    out.reserve(blocks.size());
    for (std::size_t idx : order) out.push_back(blocks[idx]);
    return out;
}

std::string stage_name(ProgressiveStage stage) {
    switch (stage) {
        case ProgressiveStage::screen_at_5: return "screen@5";
        case ProgressiveStage::confirm_at_10: return "confirm@10";
        case ProgressiveStage::resolve_at_25: return "resolve@25";
    }
    return "screen@5";
}

ProgressiveOutcome progressive_dash(const synthdata::Dataset& dataset,
                                    const gbdt::TrainConfig& train_config,
                                    const std::vector<std::pair<int, int>>& pairs_of_interest,
                                    std::uint64_t seed_base,
                                    const attribution::EvalProtocol& protocol) {
    ProgressiveOutcome out;
    out.pairs.reserve(pairs_of_interest.size());

    const attribution::DataSplit split = attribution::make_split(dataset, protocol);
    auto train_block = [&](int count, int offset) {
        std::vector<gbdt::Ensemble> models(static_cast<std::size_t>(count));
        parallel_for(static_cast<std::size_t>(count), protocol.threads, [&](std::size_t i) {
            gbdt::TrainConfig cfg = train_config;
            cfg.seed = seed_base + static_cast<std::uint64_t>(offset) + i;
            models[i] = gbdt::fit(split.train, cfg);
        });
        return models;
    };
    std::vector<gbdt::Ensemble> models = train_block(5, 0);
    out.models_trained = 5;

    attribution::AttributionMatrix matrix;
    matrix.names = dataset.names;
    matrix.method = attribution::Method::shap;
    auto extend_matrix = [&](const std::vector<gbdt::Ensemble>& block) {
        Matrix grown(matrix.values.rows() + block.size(), dataset.n_features());
        std::copy(matrix.values.data().begin(), matrix.values.data().end(),
                  grown.data().begin());
        std::vector<std::vector<double>> rows(block.size());
        parallel_for(block.size(), protocol.threads, [&](std::size_t i) {
            rows[i] = attribution::shap_global(block[i], split.eval_rows, split.background).values;
        });
        for (std::size_t i = 0; i < block.size(); ++i) {
            auto dst = grown.row(matrix.values.rows() + i);
            std::copy(rows[i].begin(), rows[i].end(), dst.begin());
            matrix.seeds.push_back(block[i].seed);
        }
        matrix.values = std::move(grown);
    };
    extend_matrix(models);

    // Stage 1: single-model screen on the first model.
    bool any_flagged = false;
    for (const auto& [j, k] : pairs_of_interest) {
        ProgressivePairOutcome po;
        po.j = j;
        po.k = k;
        const auto sc = stability::screen(models[0], j, k);
        po.z_split = sc.z_split;
        po.screen_flagged = sc.flagged;
        po.verdict = stability::Verdict::stable;
        any_flagged = any_flagged || sc.flagged;
        out.pairs.push_back(po);
    }
    if (!any_flagged) {
        out.stage_reached = ProgressiveStage::screen_at_5;
        return out;
    }

    // Stage 2: confirm flagged pairs with the 10-model z-test.
    extend_matrix(train_block(5, 5));
    out.models_trained = 10;
    out.stage_reached = ProgressiveStage::confirm_at_10;
    bool any_borderline = false;
    for (ProgressivePairOutcome& po : out.pairs) {
        if (!po.screen_flagged) continue;
        const auto diag = stability::z_test(matrix, po.j, po.k);
        po.z10 = diag.z;
        po.verdict = diag.verdict;
        if (std::isfinite(diag.z) && diag.z > 1.5 && diag.z < 2.5) any_borderline = true;
    }
    if (!any_borderline) return out;

    // Stage 3: resolve borderline pairs at M=25.
    extend_matrix(train_block(15, 10));
    out.models_trained = 25;
    out.stage_reached = ProgressiveStage::resolve_at_25;
    for (ProgressivePairOutcome& po : out.pairs) {
        if (!po.screen_flagged) continue;
        if (!(std::isfinite(po.z10) && po.z10 > 1.5 && po.z10 < 2.5)) continue;
        const auto diag = stability::z_test(matrix, po.j, po.k);
        po.z25 = diag.z;
        po.verdict = diag.verdict;
    }
    return out;
}

double info_loss_within(int m) {
    if (m < 1) throw ParameterError("info_loss_within: m must be >= 1");
    return log2_factorial(m);
}

double info_between(int m_models, double delta, double sigma) {
    if (m_models < 1) throw ParameterError("info_between: M must be >= 1");
    if (!(sigma > 0.0)) throw ParameterError("info_between: sigma must be positive");
    if (delta < 0.0) throw ParameterError("info_between: delta must be >= 0");
    const double flip = normal_cdf(-delta * std::sqrt(static_cast<double>(m_models)) / sigma);
    return 1.0 - binary_entropy(flip);
}

std::string consensus_report_json(const ConsensusResult& result,
                                  const std::vector<std::string>& names,
                                  const std::vector<std::vector<int>>& blocks) {
    nlohmann::json values = nlohmann::json::object();
    for (std::size_t j = 0; j < result.values.size(); ++j)
        values[names[j]] = result.values[j];
    nlohmann::json ties = nlohmann::json::array();
    for (const auto& tie : result.tied_groups) {
        nlohmann::json entry = nlohmann::json::array();
        for (int j : tie) entry.push_back(names[static_cast<std::size_t>(j)]);
        ties.push_back(std::move(entry));
    }
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& block : blocks) {
        nlohmann::json entry = nlohmann::json::array();
        for (int j : block) entry.push_back(names[static_cast<std::size_t>(j)]);
        ranking.push_back(std::move(entry));
    }
    nlohmann::json doc{{"method", result.method.describe()},
                       {"M", result.n_models},
                       {"values", std::move(values)},
                       {"tied_groups", std::move(ties)},
                       {"balanced", result.balanced},
                       {"first_mover_counts", result.first_mover_counts},
                       {"ranking_blocks", std::move(ranking)}};
    return doc.dump(2);
}

}  // namespace attrlab::dash
