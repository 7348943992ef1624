#include "attrlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "attrlab/rng.hpp"

#include <json.hpp>

#include "attrlab/dash.hpp"
#include "attrlab/stability.hpp"
#include "attrlab/stats.hpp"

namespace attrlab::experiments {

namespace {

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double lookup(const std::vector<std::pair<std::string, double>>& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw ParameterError("missing key \"" + key + "\" in result row");
}

bool has_key(const std::vector<std::pair<std::string, double>>& kv, const std::string& key) {
    return std::any_of(kv.begin(), kv.end(), [&](const auto& e) { return e.first == key; });
}

// Least-squares fit of a in ratio(rho) = 1/(1 - a*rho^2): coarse grid then
// local refinement; deterministic.
double fit_alpha(const std::vector<double>& rhos, const std::vector<double>& ratios) {
    auto sse = [&](double a) {
        double total = 0.0;
        for (std::size_t i = 0; i < rhos.size(); ++i) {
            const double denom = 1.0 - a * rhos[i] * rhos[i];
            if (denom <= 1e-9) return std::numeric_limits<double>::infinity();
            const double d = ratios[i] - 1.0 / denom;
            total += d * d;
        }
        return total;
    };
    double best_a = 0.0;
    double best = sse(0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double a = i * 1e-3;
        const double s = sse(a);
        if (s < best) {
            best = s;
            best_a = a;
        }
    }
    for (int i = -100; i <= 100; ++i) {
        const double a = best_a + i * 1e-5;
        if (a < 0.0 || a > 1.0) continue;
        const double s = sse(a);
        if (s < best) {
            best = s;
            best_a = a;
        }
    }
    return best_a;
}

// Per-model within-group ratio: first-mover split count over the mean count
// of the other group members; averaged over groups with a first mover and a
// positive denominator.
double within_group_ratio(const gbdt::Ensemble& model, const std::vector<int>& group_of,
                          int n_groups) {
    const std::vector<int> counts = gbdt::split_counts(model);
    const std::vector<int> movers = gbdt::first_mover(model, group_of, n_groups);
    double total = 0.0;
    int used = 0;
    for (int g = 0; g < n_groups; ++g) {
        const int mover = movers[static_cast<std::size_t>(g)];
        if (mover < 0) continue;
        double others = 0.0;
        int n_others = 0;
        for (std::size_t j = 0; j < group_of.size(); ++j)
            if (group_of[j] == g && static_cast<int>(j) != mover) {
                others += counts[j];
                ++n_others;
            }
        if (n_others == 0 || others <= 0.0) continue;
        total += counts[static_cast<std::size_t>(mover)] / (others / n_others);
        ++used;
    }
    if (used == 0) return std::numeric_limits<double>::quiet_NaN();
    return total / used;
}

std::vector<std::pair<int, int>> within_pairs(const std::vector<int>& group_of) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t j = 0; j < group_of.size(); ++j)
        for (std::size_t k = j + 1; k < group_of.size(); ++k)
            if (group_of[j] >= 0 && group_of[j] == group_of[k])
                pairs.emplace_back(static_cast<int>(j), static_cast<int>(k));
    return pairs;
}

std::vector<std::pair<int, int>> between_pairs(const std::vector<int>& group_of) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t j = 0; j < group_of.size(); ++j)
        for (std::size_t k = j + 1; k < group_of.size(); ++k)
            if (group_of[j] >= 0 && group_of[k] >= 0 && group_of[j] != group_of[k])
                pairs.emplace_back(static_cast<int>(j), static_cast<int>(k));
    return pairs;
}

std::vector<double> graded_betas(int group_count, int group_size,
                                 const std::vector<double>& group_weights, double beta_step) {
    std::vector<double> betas;
    betas.reserve(static_cast<std::size_t>(group_count * group_size));
    for (int g = 0; g < group_count; ++g) {
        const double w = group_weights.empty()
                             ? 1.0
                             : group_weights[static_cast<std::size_t>(g) % group_weights.size()];
        for (int i = 0; i < group_size; ++i) betas.push_back(w * (1.0 + beta_step * i));
    }
    return betas;
}

}  // namespace

void write_results(const std::string& dir, const std::vector<ResultRow>& rows,
                   const PlotSpec& plot) {
    if (rows.empty()) throw ParameterError("write_results: no rows");
    std::filesystem::create_directories(dir);

    // results.csv: schema from the first row.
    {
        std::ofstream out(dir + "/results.csv");
        if (!out) throw IoError("cannot write " + dir + "/results.csv");
        out << "experiment";
        for (const auto& [key, _] : rows[0].params) out << ',' << key;
        for (const auto& [key, _] : rows[0].measured) out << ',' << key;
        for (const auto& [key, _] : rows[0].theory) out << ",theory_" << key;
        out << ",seed_lo,seed_hi\n";
        for (const ResultRow& row : rows) {
            out << row.experiment;
            for (const auto& [_, v] : row.params) out << ',' << format_value(v);
            for (const auto& [_, v] : row.measured) out << ',' << format_value(v);
            for (const auto& [_, v] : row.theory) out << ',' << format_value(v);
            out << ',' << row.seed_lo << ',' << row.seed_hi << '\n';
        }
    }

    // results.json
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const ResultRow& row : rows) {
            nlohmann::json obj{{"experiment", row.experiment},
                               {"seed_lo", row.seed_lo},
                               {"seed_hi", row.seed_hi}};
            for (const auto& [k, v] : row.params) obj["params"][k] = v;
            for (const auto& [k, v] : row.measured) obj["measured"][k] = v;
            for (const auto& [k, v] : row.theory) obj["theory"][k] = v;
            arr.push_back(std::move(obj));
        }
        std::ofstream out(dir + "/results.json");
        if (!out) throw IoError("cannot write " + dir + "/results.json");
        out << arr.dump(2) << '\n';
    }

    // plotdata.csv: x, series, one column per y key.
    {
        std::ofstream out(dir + "/plotdata.csv");
        if (!out) throw IoError("cannot write " + dir + "/plotdata.csv");
        out << "x,series";
        for (const std::string& y : plot.y) out << ',' << y;
        out << '\n';
        for (const ResultRow& row : rows) {
            out << format_value(lookup(row.params, plot.x)) << ',';
            if (!plot.series.empty()) out << format_value(lookup(row.params, plot.series));
            for (const std::string& y : plot.y) {
                double v;
                if (has_key(row.measured, y))
                    v = lookup(row.measured, y);
                else if (has_key(row.theory, y))
                    v = lookup(row.theory, y);
                else
                    v = lookup(row.params, y);
                out << ',' << format_value(v);
            }
            out << '\n';
        }
    }
}

attribution::AttributionMatrix fresh_data_matrix(const synthdata::DgpConfig& dgp,
                                                 const gbdt::TrainConfig& train, int n_models,
                                                 std::uint64_t seed_base,
                                                 const attribution::EvalProtocol& protocol) {
    if (n_models < 1) throw ParameterError("fresh_data_matrix: n_models must be >= 1");
    attribution::AttributionMatrix out;
    out.values = Matrix(static_cast<std::size_t>(n_models),
                        static_cast<std::size_t>(dgp.n_features()));
    out.seeds.resize(static_cast<std::size_t>(n_models));
    out.names = synthdata::feature_names(dgp);
    out.method = attribution::Method::shap;
    out.eval_seed = protocol.eval_seed;
    out.background_seed = protocol.background_seed;

    parallel_for(static_cast<std::size_t>(n_models), protocol.threads, [&](std::size_t i) {
        const std::uint64_t seed = seed_base + i;
        synthdata::DgpConfig cell = dgp;
        cell.seed = seed;
        const synthdata::Dataset data = synthdata::sample_dataset(cell);
        attribution::EvalProtocol local = protocol;
        local.eval_seed = protocol.eval_seed ^ (seed * 0x9e3779b97f4a7c15ULL);
        local.background_seed = protocol.background_seed ^ (seed * 0xd1342543de82ef95ULL);
        const attribution::DataSplit split = attribution::make_split(data, local);
        gbdt::TrainConfig cfg = train;
        cfg.seed = seed;
        const gbdt::Ensemble model = gbdt::fit(split.train, cfg);
        const auto row = attribution::shap_global(model, split.eval_rows, split.background);
        auto dst = out.values.row(i);
        std::copy(row.values.begin(), row.values.end(), dst.begin());
        out.seeds[i] = seed;
    });
    return out;
}

RatioSweepResult run_ratio_sweep(const RatioSweepConfig& config) {
    if (config.rhos.size() < 3)
        throw ParameterError("run_ratio_sweep: need at least 3 rho values for the alpha fit");
    RatioSweepResult result;

    for (int depth : config.depths) {
        std::vector<double> mean_ratios;
        for (std::size_t ri = 0; ri < config.rhos.size(); ++ri) {
            const double rho = config.rhos[ri];
            const std::uint64_t cell_base =
                config.seed_base + 10000 * static_cast<std::uint64_t>(depth) + 100 * ri;
            std::vector<double> ratios(static_cast<std::size_t>(config.n_seeds),
                                       std::numeric_limits<double>::quiet_NaN());
            parallel_for(static_cast<std::size_t>(config.n_seeds), config.threads,
                         [&](std::size_t s) {
                             synthdata::DgpConfig dgp;
                             dgp.groups = {2, 5, rho};
                             dgp.n_samples = config.n_samples;
                             dgp.seed = cell_base + s;
                             const synthdata::Dataset data = synthdata::sample_dataset(dgp);
                             gbdt::TrainConfig cfg;
                             cfg.rounds = config.rounds;
                             cfg.max_depth = depth;
                             cfg.learning_rate = config.eta;
                             cfg.seed = cell_base + s;
                             const gbdt::Ensemble model = gbdt::fit(data, cfg);
                             ratios[s] = within_group_ratio(model, data.group_of, 2);
                         });
            std::vector<double> valid;
            for (double r : ratios)
                if (std::isfinite(r)) valid.push_back(r);
            const double mean_ratio = valid.empty()
                                          ? std::numeric_limits<double>::quiet_NaN()
                                          : mean(valid);
            mean_ratios.push_back(mean_ratio);

            ResultRow row;
            row.experiment = "ratio-sweep";
            row.params = {{"depth", static_cast<double>(depth)}, {"rho", rho}};
            row.measured = {{"ratio", mean_ratio}};
            row.theory = {{"ratio_alpha1", stability::theoretical_ratio(rho, 1.0)}};
            row.seed_lo = cell_base;
            row.seed_hi = cell_base + static_cast<std::uint64_t>(config.n_seeds) - 1;
            result.rows.push_back(std::move(row));
        }
        result.fitted_alpha[depth] = fit_alpha(config.rhos, mean_ratios);
    }

    if (!config.out_dir.empty()) {
        // Append the fitted alpha as one row per depth.
        std::vector<ResultRow> all = result.rows;
        for (const auto& [depth, alpha] : result.fitted_alpha) {
            ResultRow row;
            row.experiment = "ratio-sweep-alpha";
            row.params = {{"depth", static_cast<double>(depth)}, {"rho", 0.0}};
            row.measured = {{"ratio", alpha}};
            row.theory = {{"ratio_alpha1", 0.0}};
            row.seed_lo = config.seed_base;
            row.seed_hi = config.seed_base;
            all.push_back(std::move(row));
        }
        write_results(config.out_dir, all, PlotSpec{"rho", {"ratio", "ratio_alpha1"}, "depth"});
    }
    return result;
}

std::vector<ResultRow> run_flip_sweep(const FlipSweepConfig& config) {
    std::vector<ResultRow> rows;
    for (std::size_t ri = 0; ri < config.rhos.size(); ++ri) {
        const double rho = config.rhos[ri];
        synthdata::DgpConfig dgp;
        dgp.groups = {config.group_count, config.group_size, rho};
        dgp.n_samples = config.n_samples;
        dgp.betas = graded_betas(config.group_count, config.group_size, config.group_weights, 0.0);
        attribution::EvalProtocol protocol;
        protocol.eval_count = config.eval_count;
        protocol.background_count = config.background_count;
        protocol.threads = config.threads;
        const std::uint64_t cell_base = config.seed_base + 1000 * ri;
        const auto matrix =
            fresh_data_matrix(dgp, config.train, config.n_models, cell_base, protocol);

        std::vector<int> group_of;
        for (int g = 0; g < config.group_count; ++g)
            for (int i = 0; i < config.group_size; ++i) group_of.push_back(g);

        double within = 0.0;
        const auto wp = within_pairs(group_of);
        for (const auto& [j, k] : wp) within += stability::empirical_flip_rate(matrix, j, k);
        within /= static_cast<double>(wp.size());

        double between = 0.0;
        const auto bp = between_pairs(group_of);
        for (const auto& [j, k] : bp) between += stability::empirical_flip_rate(matrix, j, k);
        if (!bp.empty()) between /= static_cast<double>(bp.size());

        ResultRow row;
        row.experiment = "flip-sweep";
        row.params = {{"rho", rho}, {"M", static_cast<double>(config.n_models)}};
        row.measured = {{"within_flip", within}, {"between_flip", between}};
        // Exact symmetric-group prediction for the within flip.
        const auto model = stability::exact_flip_model(config.group_size >= 2 ? config.group_size : 2);
        row.theory = {{"within_flip", model.flip_tiebroken}, {"between_flip", 0.0}};
        row.seed_lo = cell_base;
        row.seed_hi = cell_base + static_cast<std::uint64_t>(config.n_models) - 1;
        rows.push_back(std::move(row));
    }
    if (!config.out_dir.empty())
        write_results(config.out_dir, rows,
                      PlotSpec{"rho", {"within_flip", "between_flip"}, ""});
    return rows;
}

std::vector<ResultRow> run_convergence(const ConvergenceConfig& config) {
    synthdata::DgpConfig dgp;
    dgp.groups = {1, 2, config.rho};
    dgp.n_samples = config.n_samples;
    dgp.seed = config.data_seed;
    const synthdata::Dataset data = synthdata::sample_dataset(dgp);
    attribution::EvalProtocol protocol;
    protocol.eval_count = config.eval_count;
    protocol.background_count = config.background_count;
    protocol.threads = config.threads;
    const auto matrix = attribution::attribution_matrix(
        data, config.train, config.n_models, config.seed_base, attribution::Method::shap,
        protocol);

    const auto diag = stability::z_test(matrix, 0, 1);

    // Sizes beyond the master matrix cannot be resampled; drop them.
    std::vector<int> sizes;
    for (int m_sub : config.ensemble_sizes)
        if (m_sub >= 1 && m_sub <= config.n_models) sizes.push_back(m_sub);
    if (sizes.empty()) throw ParameterError("run_convergence: no usable ensemble sizes");

    std::vector<ResultRow> rows;
    for (std::size_t mi = 0; mi < sizes.size(); ++mi) {
        const int m_sub = sizes[mi];
        const double flip = dash::consensus_flip_rate(matrix, 0, 1, m_sub, config.n_resamples,
                                                      config.seed_base + 99991 + mi);

        // CV of the consensus attribution of feature 0 across resamples.
        Rng rng(config.seed_base + 77777 + mi);
        std::vector<double> consensus_values;
        consensus_values.reserve(static_cast<std::size_t>(config.n_resamples));
        if (m_sub == config.n_models) {
            double s = 0.0;
            for (std::size_t i = 0; i < matrix.n_models(); ++i) s += matrix.values(i, 0);
            consensus_values.assign(2, s / static_cast<double>(matrix.n_models()));
        } else {
            for (int rep = 0; rep < config.n_resamples; ++rep) {
                const auto pick = sample_without_replacement(
                    matrix.n_models(), static_cast<std::size_t>(m_sub), rng);
                double s = 0.0;
                for (std::size_t r : pick) s += matrix.values(r, 0);
                consensus_values.push_back(s / static_cast<double>(m_sub));
            }
        }
        const double cv = mean(consensus_values) != 0.0
                              ? sample_sd(consensus_values) / mean(consensus_values)
                              : 0.0;

        ResultRow row;
        row.experiment = "convergence";
        row.params = {{"M", static_cast<double>(m_sub)}, {"rho", config.rho}};
        row.measured = {{"consensus_flip", flip}, {"attribution_cv", cv}};
        const double snr = std::isfinite(diag.snr) ? diag.snr : 0.0;
        row.theory = {{"consensus_flip",
                       stability::flip_from_snr(snr * std::sqrt(static_cast<double>(m_sub)))}};
        row.seed_lo = config.seed_base;
        row.seed_hi = config.seed_base + static_cast<std::uint64_t>(config.n_models) - 1;
        rows.push_back(std::move(row));
    }
    if (!config.out_dir.empty())
        write_results(config.out_dir, rows,
                      PlotSpec{"M", {"consensus_flip", "attribution_cv"}, ""});
    return rows;
}

std::vector<ResultRow> run_conditional_sweep(const ConditionalSweepConfig& config) {
    std::vector<ResultRow> rows;
    std::size_t cell = 0;
    for (double rho : config.rhos) {
        for (double delta_beta : config.delta_betas) {
            synthdata::DgpConfig dgp;
            dgp.groups = {1, 2, rho};
            dgp.n_samples = config.n_samples;
            dgp.betas = {1.0 + delta_beta / 2.0, 1.0 - delta_beta / 2.0};
            attribution::EvalProtocol protocol;
            protocol.eval_count = config.eval_count;
            protocol.background_count = config.background_count;
            protocol.threads = config.threads;
            const std::uint64_t cell_base = config.seed_base + 1000 * cell;
            ++cell;
            const auto matrix =
                fresh_data_matrix(dgp, config.train, config.n_models, cell_base, protocol);
            const double flip = stability::empirical_flip_rate(matrix, 0, 1);
            const auto diag = stability::z_test(matrix, 0, 1);

            ResultRow row;
            row.experiment = "conditional-sweep";
            row.params = {{"rho", rho},
                          {"delta_beta", delta_beta},
                          {"M", static_cast<double>(config.n_models)}};
            row.measured = {{"flip", flip}};
            const double snr = std::isfinite(diag.snr) ? diag.snr : 0.0;
            row.theory = {{"flip", stability::flip_from_snr(snr)}};
            row.seed_lo = cell_base;
            row.seed_hi = cell_base + static_cast<std::uint64_t>(config.n_models) - 1;
            rows.push_back(std::move(row));
        }
    }
    if (!config.out_dir.empty())
        write_results(config.out_dir, rows, PlotSpec{"delta_beta", {"flip"}, "rho"});
    return rows;
}

SnrCalibrationResult run_snr_calibration(const SnrCalibrationConfig& config) {
    synthdata::DgpConfig dgp;
    dgp.groups = {config.group_count, config.group_size, config.rho};
    dgp.n_samples = config.n_samples;
    dgp.seed = config.data_seed;
    dgp.betas = graded_betas(config.group_count, config.group_size, {}, config.beta_step);
    const synthdata::Dataset data = synthdata::sample_dataset(dgp);
    attribution::EvalProtocol protocol;
    protocol.eval_count = config.eval_count;
    protocol.background_count = config.background_count;
    protocol.threads = config.threads;
    const auto matrix = attribution::attribution_matrix(
        data, config.train, config.n_models, config.seed_base, attribution::Method::shap,
        protocol);

    SnrCalibrationResult result;
    std::vector<double> zs, flips;
    for (const auto& [j, k] : within_pairs(data.group_of)) {
        const auto diag = stability::z_test(matrix, j, k);
        if (!std::isfinite(diag.snr)) continue;
        result.pair_snr.push_back(diag.snr);
        result.pair_flip.push_back(diag.flip_empirical);
        zs.push_back(diag.z);
        flips.push_back(diag.flip_empirical);
    }
    if (zs.size() >= 2) result.pearson_r_z_flip = pearson(zs, flips);

    const std::vector<double> edges{0.0, 0.5, 1.0, 1.28, 1.96, 3.0,
                                    std::numeric_limits<double>::infinity()};
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        double emp = 0.0, theo = 0.0;
        int count = 0;
        for (std::size_t i = 0; i < result.pair_snr.size(); ++i) {
            if (result.pair_snr[i] >= edges[b] && result.pair_snr[i] < edges[b + 1]) {
                emp += result.pair_flip[i];
                theo += stability::flip_from_snr(result.pair_snr[i]);
                ++count;
            }
        }
        ResultRow row;
        row.experiment = "snr-calibration";
        row.params = {{"snr_lo", edges[b]},
                      {"snr_hi", edges[b + 1]},
                      {"n_pairs", static_cast<double>(count)}};
        row.measured = {{"flip", count ? emp / count : 0.0}};
        row.theory = {{"flip", count ? theo / count : 0.0}};
        row.seed_lo = config.seed_base;
        row.seed_hi = config.seed_base + static_cast<std::uint64_t>(config.n_models) - 1;
        result.bin_rows.push_back(std::move(row));
    }
    if (!config.out_dir.empty())
        write_results(config.out_dir, result.bin_rows, PlotSpec{"snr_lo", {"flip"}, ""});
    return result;
}

std::vector<ResultRow> run_axiom_validation(const AxiomValidationConfig& config) {
    std::vector<double> mover_counts(static_cast<std::size_t>(config.n_seeds), 0.0);
    std::vector<double> other_counts(static_cast<std::size_t>(config.n_seeds), 0.0);
    std::vector<double> valid(static_cast<std::size_t>(config.n_seeds), 0.0);
    parallel_for(static_cast<std::size_t>(config.n_seeds), config.threads, [&](std::size_t s) {
        synthdata::DgpConfig dgp;
        dgp.groups = {1, 2, config.rho};
        dgp.n_samples = config.n_samples;
        dgp.seed = config.seed_base + s;
        const synthdata::Dataset data = synthdata::sample_dataset(dgp);
        gbdt::TrainConfig cfg;
        cfg.rounds = config.rounds;
        cfg.max_depth = 1;
        cfg.learning_rate = config.eta;
        cfg.seed = config.seed_base + s;
        const gbdt::Ensemble model = gbdt::fit(data, cfg);
        const auto counts = gbdt::split_counts(model);
        const auto movers = gbdt::first_mover(model, data.group_of, 1);
        if (movers[0] < 0) return;
        const int other = movers[0] == 0 ? 1 : 0;
        mover_counts[s] = counts[static_cast<std::size_t>(movers[0])];
        other_counts[s] = counts[static_cast<std::size_t>(other)];
        valid[s] = 1.0;
    });
    double mover = 0.0, other = 0.0, n_valid = 0.0;
    for (std::size_t s = 0; s < valid.size(); ++s) {
        mover += mover_counts[s];
        other += other_counts[s];
        n_valid += valid[s];
    }
    if (n_valid == 0.0) throw ParameterError("run_axiom_validation: no model produced splits");
    mover /= n_valid;
    other /= n_valid;

    const double t = static_cast<double>(config.rounds);
    const double denom = 2.0 - config.rho * config.rho;
    ResultRow row;
    row.experiment = "axiom-validation";
    row.params = {{"rho", config.rho},
                  {"T", t},
                  {"seeds", static_cast<double>(config.n_seeds)}};
    row.measured = {{"first_mover_count", mover},
                    {"other_count", other},
                    {"ratio", other > 0.0 ? mover / other : std::numeric_limits<double>::quiet_NaN()},
                    {"gap", mover - other}};
    row.theory = {{"first_mover_count", t / denom},
                  {"other_count", (1.0 - config.rho * config.rho) * t / denom},
                  {"ratio", stability::theoretical_ratio(config.rho, 1.0)},
                  {"gap", stability::split_gap(config.rho, t)}};
    row.seed_lo = config.seed_base;
    row.seed_hi = config.seed_base + static_cast<std::uint64_t>(config.n_seeds) - 1;
    std::vector<ResultRow> rows{std::move(row)};
    if (!config.out_dir.empty())
        write_results(config.out_dir, rows,
                      PlotSpec{"rho", {"first_mover_count", "other_count"}, ""});
    return rows;
}

std::vector<ResultRow> run_benchmark(const BenchmarkConfig& config) {
    const int m_dash = std::min(config.m_dash, config.n_models);
    std::vector<ResultRow> rows;
    for (std::size_t ri = 0; ri < config.rhos.size(); ++ri) {
        const double rho = config.rhos[ri];
        synthdata::DgpConfig dgp;
        dgp.groups = {config.group_count, config.group_size, rho};
        dgp.n_samples = config.n_samples;
        dgp.seed = config.data_seed + ri;
        dgp.betas = graded_betas(config.group_count, config.group_size, config.group_weights, 0.0);
        const synthdata::Dataset data = synthdata::sample_dataset(dgp);
        attribution::EvalProtocol protocol;
        protocol.eval_count = config.eval_count;
        protocol.background_count = config.background_count;
        protocol.threads = config.threads;
        const std::uint64_t cell_base = config.seed_base + 1000 * ri;
        const auto matrix = attribution::attribution_matrix(
            data, config.train, config.n_models, cell_base, attribution::Method::shap, protocol);

        double single = 0.0, consensus = 0.0;
        const auto wp = within_pairs(data.group_of);
        for (std::size_t pi = 0; pi < wp.size(); ++pi) {
            const auto& [j, k] = wp[pi];
            single += stability::empirical_flip_rate(matrix, j, k);
            consensus += dash::consensus_flip_rate(matrix, j, k, m_dash,
                                                   config.n_resamples, cell_base + 31 + pi);
        }
        single /= static_cast<double>(wp.size());
        consensus /= static_cast<double>(wp.size());

        ResultRow row;
        row.experiment = "benchmark";
        row.params = {{"rho", rho},
                      {"M_dash", static_cast<double>(m_dash)},
                      {"M", static_cast<double>(config.n_models)}};
        row.measured = {{"single_flip", single}, {"dash_flip", consensus}};
        row.theory = {{"dash_over_single", m_dash > 1 ? 0.5 : 1.0}};
        row.seed_lo = cell_base;
        row.seed_hi = cell_base + static_cast<std::uint64_t>(config.n_models) - 1;
        rows.push_back(std::move(row));
    }
    if (!config.out_dir.empty())
        write_results(config.out_dir, rows, PlotSpec{"rho", {"single_flip", "dash_flip"}, ""});
    return rows;
}

}  // namespace attrlab::experiments
