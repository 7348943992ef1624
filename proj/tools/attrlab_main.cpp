// Command-line driver wiring the generator, learner, attribution and
// diagnostics into the screen -> z-test -> consensus workflow.
//
// Exit codes: 0 success (no instability), 2 usage error, 3 instability
// detected, 4 I/O error.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attrlab/attribution.hpp"
#include "attrlab/dash.hpp"
#include "attrlab/experiments.hpp"
#include "attrlab/gbdt.hpp"
#include "attrlab/stability.hpp"
#include "attrlab/synthdata.hpp"
#include "disclosure_template.hpp"

namespace {

using namespace attrlab;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitUnstable = 3;
constexpr int kExitIo = 4;

struct GenerateArgs {
    std::string groups = "4x5";
    double rho = 0.0;
    int extras = 0;
    int n = 2000;
    std::uint64_t seed = 1;
    double noise = 1.0;
    std::vector<double> betas;
    std::string out;
};

struct DataArgs {
    std::string input;
    std::string target = "target";
};

struct ModelFlags {
    int rounds = 100;
    int depth = 3;
    double eta = 0.1;
    double subsample = 0.8;
    double colsample = 1.0;
    int min_leaf = 1;
};

struct ProtocolFlags {
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    std::uint64_t eval_seed = 20240;
    std::uint64_t background_seed = 20241;
};

unsigned g_threads = 0;
std::string g_config_file;  // consumed before parsing; bound for --help only

// Flat key=value config support: `--config FILE` anywhere on the command
// line loads defaults for the invoked subcommand. Explicit flags win over
// the file; the file wins over built-in defaults.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i),
                       args.begin() + static_cast<long>(i) + 2);
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
        } else {
            ++i;
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file " + config_path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t eq = line.find('=');
        if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        const std::string flag = "--" + key;
        bool present = false;
        for (const std::string& arg : args)
            if (arg == flag || arg.rfind(flag + "=", 0) == 0) present = true;
        if (!present) {
            args.push_back(flag);
            args.push_back(value);
        }
    }
    return args;
}

synthdata::GroupSpec parse_groups(const std::string& text, double rho) {
    const auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= text.size())
        throw ParameterError("--groups expects LxM, e.g. 4x5");
    synthdata::GroupSpec spec;
    spec.group_count = std::stoi(text.substr(0, x));
    spec.group_size = std::stoi(text.substr(x + 1));
    spec.rho = rho;
    return spec;
}

synthdata::Dataset load_input(const DataArgs& args) {
    // Numeric target selects by index.
    if (!args.target.empty() &&
        args.target.find_first_not_of("0123456789") == std::string::npos)
        return synthdata::load_csv(args.input, static_cast<std::size_t>(std::stoul(args.target)));
    return synthdata::load_csv(args.input, args.target);
}

gbdt::TrainConfig to_train_config(const ModelFlags& flags, std::uint64_t seed) {
    gbdt::TrainConfig cfg;
    cfg.rounds = flags.rounds;
    cfg.max_depth = flags.depth;
    cfg.learning_rate = flags.eta;
    cfg.subsample = flags.subsample;
    cfg.colsample = flags.colsample;
    cfg.min_leaf = flags.min_leaf;
    cfg.seed = seed;
    return cfg;
}

attribution::EvalProtocol to_protocol(const ProtocolFlags& flags) {
    attribution::EvalProtocol protocol;
    protocol.eval_count = flags.eval_count;
    protocol.background_count = flags.background_count;
    protocol.eval_seed = flags.eval_seed;
    protocol.background_seed = flags.background_seed;
    protocol.threads = g_threads;
    return protocol;
}

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
    cmd->add_option("--rounds", flags.rounds, "Boosting rounds");
    cmd->add_option("--depth", flags.depth, "Maximum tree depth");
    cmd->add_option("--eta", flags.eta, "Learning rate");
    cmd->add_option("--subsample", flags.subsample, "Row fraction per tree");
    cmd->add_option("--colsample", flags.colsample, "Feature fraction per tree");
    cmd->add_option("--min-leaf", flags.min_leaf, "Minimum rows per leaf");
}

void add_protocol_flags(CLI::App* cmd, ProtocolFlags& flags) {
    cmd->add_option("--eval-rows", flags.eval_count, "Held-out evaluation rows");
    cmd->add_option("--background-rows", flags.background_count, "Background rows");
    cmd->add_option("--eval-seed", flags.eval_seed, "Evaluation slice seed");
    cmd->add_option("--background-seed", flags.background_seed, "Background seed");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string replace_all(std::string text, const std::string& what, const std::string& with) {
    std::size_t pos = 0;
    while ((pos = text.find(what, pos)) != std::string::npos) {
        text.replace(pos, what.size(), with);
        pos += with.size();
    }
    return text;
}

std::string join_names(const std::vector<int>& indices, const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i) out += ", ";
        out += names[static_cast<std::size_t>(indices[i])];
    }
    return out;
}

int cmd_generate(const GenerateArgs& args) {
    synthdata::DgpConfig cfg;
    cfg.groups = parse_groups(args.groups, args.rho);
    cfg.extras = args.extras;
    cfg.n_samples = args.n;
    cfg.seed = args.seed;
    cfg.noise_sd = args.noise;
    cfg.betas = args.betas;
    const synthdata::Dataset data = synthdata::sample_dataset(cfg);
    synthdata::save_csv(data, args.out);
    std::cout << "wrote " << data.n_rows() << " rows x " << data.n_features()
              << " features to " << args.out << "\n";
    return kExitOk;
}

int cmd_train(const DataArgs& data_args, const ModelFlags& flags, std::uint64_t seed,
              const std::string& out) {
    const synthdata::Dataset data = load_input(data_args);
    const gbdt::Ensemble model = gbdt::fit(data, to_train_config(flags, seed));
    gbdt::save_model(model, out);
    const auto counts = gbdt::split_counts(model);
    int total = 0;
    for (int c : counts) total += c;
    std::cout << "trained " << model.trees.size() << " trees, " << total << " splits; model in "
              << out << "\n";
    return kExitOk;
}

int cmd_attribute(const std::string& model_path, const DataArgs& data_args,
                  const std::string& method_name, const ProtocolFlags& protocol_flags,
                  std::uint64_t seed, const std::string& out) {
    const gbdt::Ensemble model = gbdt::load_model(model_path);
    const synthdata::Dataset data = load_input(data_args);
    const auto method = attribution::method_from_string(method_name);
    const auto split = attribution::make_split(data, to_protocol(protocol_flags));

    attribution::AttributionVector vec;
    switch (method) {
        case attribution::Method::shap:
            vec = attribution::shap_global(model, split.eval_rows, split.background);
            break;
        case attribution::Method::permutation:
            vec = attribution::permutation_importance(model, split.eval_rows, split.eval_target,
                                                      seed);
            break;
        case attribution::Method::split_count:
            vec = attribution::split_count_importance(model);
            break;
    }
    attribution::AttributionMatrix matrix;
    matrix.values = Matrix(1, data.n_features());
    for (std::size_t j = 0; j < vec.values.size(); ++j) matrix.values(0, j) = vec.values[j];
    matrix.names = data.names;
    matrix.method = method;
    matrix.seeds = {model.seed};
    matrix.eval_seed = protocol_flags.eval_seed;
    matrix.background_seed = protocol_flags.background_seed;
    attribution::save_matrix(matrix, out);
    std::cout << "wrote attribution row to " << out << "\n";
    return kExitOk;
}

struct DiagnoseResult {
    stability::CorrelationGroups groups;
    std::vector<stability::ScreenResult> screens;
    std::optional<stability::DiagnosticReport> confirm;
    attribution::AttributionMatrix matrix;  // filled when confirm is set
    bool unstable = false;
};

DiagnoseResult run_diagnose(const synthdata::Dataset& data, const ModelFlags& flags,
                            const ProtocolFlags& protocol_flags, double threshold, bool confirm,
                            int confirm_models, std::uint64_t seed) {
    DiagnoseResult res;
    res.groups = stability::correlate_groups(data.features, threshold);

    const auto protocol = to_protocol(protocol_flags);
    const auto split = attribution::make_split(data, protocol);
    const gbdt::Ensemble model = gbdt::fit(split.train, to_train_config(flags, seed));
    for (const auto& group : res.groups.groups)
        for (std::size_t a = 0; a < group.size(); ++a)
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                const auto sc = stability::screen(model, group[a], group[b]);
                res.unstable = res.unstable || sc.flagged;
                res.screens.push_back(sc);
            }

    if (confirm && !res.groups.groups.empty()) {
        res.matrix = attribution::attribution_matrix(data, to_train_config(flags, seed),
                                                     confirm_models, seed,
                                                     attribution::Method::shap, protocol);
        res.confirm = stability::diagnose_pairs(res.matrix, res.groups);
        // The multi-model test supersedes the single-model screen.
        res.unstable = res.confirm->n_unstable > 0;
    }
    return res;
}

nlohmann::json screens_to_json(const std::vector<stability::ScreenResult>& screens,
                               const std::vector<std::string>& names) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& sc : screens) {
        arr.push_back({{"j", sc.j},
                       {"k", sc.k},
                       {"feature_j", names[static_cast<std::size_t>(sc.j)]},
                       {"feature_k", names[static_cast<std::size_t>(sc.k)]},
                       {"p_hat_j", sc.p_hat_j},
                       {"p_hat_k", sc.p_hat_k},
                       {"t_eff", sc.t_eff},
                       {"z_split", sc.z_split},
                       {"flagged", sc.flagged}});
    }
    return arr;
}

int cmd_diagnose(const DataArgs& data_args, const ModelFlags& flags,
                 const ProtocolFlags& protocol_flags, double threshold, bool confirm,
                 int confirm_models, std::uint64_t seed, const std::string& out) {
    const synthdata::Dataset data = load_input(data_args);
    const auto res =
        run_diagnose(data, flags, protocol_flags, threshold, confirm, confirm_models, seed);

    nlohmann::json doc{{"threshold", threshold},
                       {"groups", res.groups.groups},
                       {"singletons", res.groups.singletons},
                       {"zero_variance", res.groups.flagged_zero_variance},
                       {"screen", screens_to_json(res.screens, data.names)},
                       {"unstable", res.unstable}};
    if (res.confirm)
        doc["z_test"] = nlohmann::json::parse(stability::report_to_json(*res.confirm, data.names));
    const std::string text = doc.dump(2);
    if (!out.empty())
        write_text(out, text);
    else
        std::cout << text << "\n";
    return res.unstable ? kExitUnstable : kExitOk;
}

int cmd_dash(const DataArgs& data_args, const ModelFlags& flags,
             const ProtocolFlags& protocol_flags, int n_models, const std::string& method_name,
             double trim, double threshold, std::uint64_t seed, const std::string& out) {
    const synthdata::Dataset data = load_input(data_args);
    const auto protocol = to_protocol(protocol_flags);
    const auto train_config = to_train_config(flags, seed);
    const auto matrix = attribution::attribution_matrix(data, train_config, n_models, seed,
                                                        attribution::Method::shap, protocol);

    dash::ConsensusMethod method;
    method.aggregator = dash::aggregator_from_string(method_name);
    method.trim = trim;
    auto result = dash::consensus(matrix, method);

    const auto groups = stability::correlate_groups(data.features, threshold);
    result.tied_groups = dash::tied_groups(matrix, groups);

    // First-mover counts over the same models (balance metadata).
    const auto split = attribution::make_split(data, protocol);
    const auto group_of = groups.group_of(data.n_features());
    result.first_mover_counts.assign(data.n_features(), 0);
    std::vector<std::vector<int>> movers_per_model(static_cast<std::size_t>(n_models));
    parallel_for(static_cast<std::size_t>(n_models), protocol.threads, [&](std::size_t i) {
        gbdt::TrainConfig cfg = train_config;
        cfg.seed = seed + i;
        const auto model = gbdt::fit(split.train, cfg);
        movers_per_model[i] =
            gbdt::first_mover(model, group_of, static_cast<int>(groups.groups.size()));
    });
    for (const auto& movers : movers_per_model)
        for (int mover : movers)
            if (mover >= 0) result.first_mover_counts[static_cast<std::size_t>(mover)] += 1;
    result.balanced = !groups.groups.empty();
    for (std::size_t g = 0; g < groups.groups.size(); ++g) {
        std::vector<int> per_model;
        for (const auto& movers : movers_per_model) per_model.push_back(movers[g]);
        if (!dash::is_balanced(per_model, groups.groups[g])) result.balanced = false;
    }

    const auto blocks = dash::ranking_blocks(result.values, result.tied_groups);
    const std::string text = dash::consensus_report_json(result, data.names, blocks);
    if (!out.empty())
        write_text(out, text);
    else
        std::cout << text << "\n";
    return kExitOk;
}

int cmd_report(const DataArgs& data_args, const ModelFlags& flags,
               const ProtocolFlags& protocol_flags, double threshold, int confirm_models,
               std::uint64_t seed, const std::string& template_path, const std::string& out) {
    const synthdata::Dataset data = load_input(data_args);
    const auto res =
        run_diagnose(data, flags, protocol_flags, threshold, true, confirm_models, seed);

    std::string tpl = kDisclosureTemplate;
    if (!template_path.empty()) {
        std::ifstream in(template_path);
        if (!in) throw IoError("cannot open template " + template_path);
        std::stringstream ss;
        ss << in.rdbuf();
        tpl = ss.str();
    }
    while (!tpl.empty() && (tpl.back() == '\n' || tpl.back() == '\r')) tpl.pop_back();

    std::ostringstream text;
    text << "Attribution stability report\n";
    text << "============================\n";
    text << "Features: " << data.n_features() << ", rows: " << data.n_rows() << "\n";
    text << "Correlated groups (|rho| > " << threshold << "): " << res.groups.groups.size()
         << "\n\n";

    // Tie sets from the confirmation matrix decide the disclosure.
    std::vector<std::vector<int>> ties;
    if (res.confirm) ties = dash::tied_groups(res.matrix, res.groups);
    if (ties.empty()) {
        text << "Disclosure: no unstable correlated groups detected; single-model rankings are "
                "reliable for this dataset and configuration.\n";
    } else {
        text << "Disclosure:\n";
        for (const auto& tie : ties) {
            double flip = 0.0;
            int n_pairs = 0;
            for (std::size_t a = 0; a < tie.size(); ++a)
                for (std::size_t b = a + 1; b < tie.size(); ++b) {
                    flip += stability::empirical_flip_rate(res.matrix, tie[a], tie[b]);
                    ++n_pairs;
                }
            if (n_pairs > 0) flip /= n_pairs;
            char flip_text[16];
            std::snprintf(flip_text, sizeof(flip_text), "%.0f", 100.0 * flip);
            char thr_text[16];
            std::snprintf(thr_text, sizeof(thr_text), "%g", threshold);
            std::string filled = replace_all(tpl, "{features}", join_names(tie, data.names));
            filled = replace_all(filled, "{threshold}", thr_text);
            filled = replace_all(filled, "{flip_percent}", flip_text);
            text << "  " << filled << "\n";
        }
    }
    if (res.confirm) {
        text << "\nPairwise z-test (" << confirm_models << " models): " << res.confirm->n_unstable
             << "/" << res.confirm->n_pairs << " within-group pairs unstable\n";
        for (const auto& d : res.confirm->pairs) {
            text << "  " << data.names[static_cast<std::size_t>(d.j)] << " vs "
                 << data.names[static_cast<std::size_t>(d.k)] << ": z=";
            if (std::isfinite(d.z)) {
                char z_text[32];
                std::snprintf(z_text, sizeof(z_text), "%.3f", d.z);
                text << z_text;
            } else {
                text << "inf";
            }
            text << ", flip=" << d.flip_empirical << ", " << stability::verdict_name(d.verdict)
                 << "\n";
        }
    }

    const std::string rendered = text.str();
    if (!out.empty())
        write_text(out, rendered);
    else
        std::cout << rendered;
    return ties.empty() ? kExitOk : kExitUnstable;
}

int cmd_experiment(const std::string& name, const std::string& out_dir,
                   const std::vector<double>& rhos, const std::vector<int>& depths, int seeds,
                   int n_models, int n_samples, std::uint64_t seed_base) {
    namespace ex = experiments;
    if (name == "ratio-sweep") {
        ex::RatioSweepConfig cfg;
        if (!depths.empty()) cfg.depths = depths;
        if (!rhos.empty()) cfg.rhos = rhos;
        if (seeds > 0) cfg.n_seeds = seeds;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        const auto result = ex::run_ratio_sweep(cfg);
        for (const auto& [depth, alpha] : result.fitted_alpha)
            std::cout << "depth " << depth << ": fitted alpha = " << alpha << "\n";
    } else if (name == "flip-sweep") {
        ex::FlipSweepConfig cfg;
        if (!rhos.empty()) cfg.rhos = rhos;
        if (n_models > 0) cfg.n_models = n_models;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_flip_sweep(cfg);
    } else if (name == "convergence") {
        ex::ConvergenceConfig cfg;
        if (!rhos.empty()) cfg.rho = rhos[0];
        if (n_models > 0) cfg.n_models = n_models;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_convergence(cfg);
    } else if (name == "conditional-sweep") {
        ex::ConditionalSweepConfig cfg;
        if (!rhos.empty()) cfg.rhos = rhos;
        if (n_models > 0) cfg.n_models = n_models;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_conditional_sweep(cfg);
    } else if (name == "snr-calibration") {
        ex::SnrCalibrationConfig cfg;
        if (!rhos.empty()) cfg.rho = rhos[0];
        if (n_models > 0) cfg.n_models = n_models;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_snr_calibration(cfg);
    } else if (name == "axiom-validation") {
        ex::AxiomValidationConfig cfg;
        if (!rhos.empty()) cfg.rho = rhos[0];
        if (seeds > 0) cfg.n_seeds = seeds;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_axiom_validation(cfg);
    } else if (name == "benchmark") {
        ex::BenchmarkConfig cfg;
        if (!rhos.empty()) cfg.rhos = rhos;
        if (n_models > 0) cfg.n_models = n_models;
        if (n_samples > 0) cfg.n_samples = n_samples;
        cfg.seed_base = seed_base;
        cfg.threads = g_threads;
        cfg.out_dir = out_dir;
        ex::run_benchmark(cfg);
    } else {
        throw CLI::ValidationError("experiment",
                                   "unknown experiment \"" + name +
                                       "\" (ratio-sweep, flip-sweep, convergence, "
                                       "conditional-sweep, snr-calibration, axiom-validation, "
                                       "benchmark)");
    }
    std::cout << "experiment " << name << " written to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-attribution stability laboratory for boosted trees"};
    app.require_subcommand(1);
    app.add_option("--threads", g_threads, "Worker threads (0 = hardware)");

    // generate
    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Sample a synthetic collinear dataset");
    generate->add_option("--groups", gen.groups, "Group layout LxM (e.g. 4x5)");
    generate->add_option("--rho", gen.rho, "Within-group correlation")->required();
    generate->add_option("--extras", gen.extras, "Independent extra features");
    generate->add_option("--n", gen.n, "Sample count");
    generate->add_option("--seed", gen.seed, "RNG seed");
    generate->add_option("--noise", gen.noise, "Target noise sd");
    generate->add_option("--betas", gen.betas, "Response weights (default: 1 per group feature)")->delimiter(',');
    generate->add_option("-o,--out", gen.out, "Output CSV")->required();
    generate->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // train
    DataArgs train_data;
    ModelFlags train_flags;
    std::uint64_t train_seed = 1;
    std::string train_out;
    auto* train = app.add_subcommand("train", "Fit a boosted-tree model");
    train->add_option("-i,--input", train_data.input, "Input CSV")->required();
    train->add_option("--target", train_data.target, "Target column name or index");
    add_model_flags(train, train_flags);
    train->add_option("--seed", train_seed, "Training seed");
    train->add_option("-o,--out", train_out, "Model JSON path")->required();
    train->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // attribute
    std::string attr_model, attr_method = "shap", attr_out;
    DataArgs attr_data;
    ProtocolFlags attr_protocol;
    std::uint64_t attr_seed = 1;
    auto* attribute = app.add_subcommand("attribute", "Global attribution for a trained model");
    attribute->add_option("-m,--model", attr_model, "Model JSON")->required();
    attribute->add_option("-i,--input", attr_data.input, "Input CSV")->required();
    attribute->add_option("--target", attr_data.target, "Target column name or index");
    attribute->add_option("--method", attr_method, "shap | permutation | split_count");
    add_protocol_flags(attribute, attr_protocol);
    attribute->add_option("--seed", attr_seed, "Seed (permutation method)");
    attribute->add_option("-o,--out", attr_out, "Output CSV")->required();
    attribute->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // diagnose
    DataArgs diag_data;
    ModelFlags diag_flags;
    ProtocolFlags diag_protocol;
    double diag_threshold = 0.5;
    bool diag_confirm = false;
    int diag_models = 5;
    std::uint64_t diag_seed = 1;
    std::string diag_out;
    auto* diagnose =
        app.add_subcommand("diagnose", "Screen correlated pairs for ranking instability");
    diagnose->add_option("-i,--input", diag_data.input, "Input CSV")->required();
    diagnose->add_option("--target", diag_data.target, "Target column name or index");
    diagnose->add_option("--threshold", diag_threshold, "Correlation grouping threshold");
    diagnose->add_flag("--confirm", diag_confirm, "Escalate to the multi-model z-test");
    diagnose->add_option("-M,--models", diag_models, "Models for --confirm");
    add_model_flags(diagnose, diag_flags);
    add_protocol_flags(diagnose, diag_protocol);
    diagnose->add_option("--seed", diag_seed, "Seed base");
    diagnose->add_option("-o,--out", diag_out, "Report JSON path (default stdout)");
    diagnose->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // dash
    DataArgs dash_data;
    ModelFlags dash_flags;
    ProtocolFlags dash_protocol;
    int dash_models = 25;
    std::string dash_method = "mean";
    double dash_trim = 0.05;
    double dash_threshold = 0.5;
    std::uint64_t dash_seed = 1;
    std::string dash_out;
    auto* dash_cmd = app.add_subcommand("dash", "Consensus attribution over M models");
    dash_cmd->add_option("-i,--input", dash_data.input, "Input CSV")->required();
    dash_cmd->add_option("--target", dash_data.target, "Target column name or index");
    dash_cmd->add_option("-M,--models", dash_models, "Ensemble size");
    dash_cmd->add_option("--method", dash_method, "mean | trimmed | median");
    dash_cmd->add_option("--trim", dash_trim, "Per-tail trim fraction for --method trimmed");
    dash_cmd->add_option("--threshold", dash_threshold, "Correlation grouping threshold");
    add_model_flags(dash_cmd, dash_flags);
    add_protocol_flags(dash_cmd, dash_protocol);
    dash_cmd->add_option("--seed", dash_seed, "Seed base");
    dash_cmd->add_option("-o,--out", dash_out, "Report JSON path (default stdout)");
    dash_cmd->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // report
    DataArgs report_data;
    ModelFlags report_flags;
    ProtocolFlags report_protocol;
    double report_threshold = 0.5;
    int report_models = 5;
    std::uint64_t report_seed = 1;
    std::string report_template, report_out;
    auto* report = app.add_subcommand("report", "Human-readable instability disclosure");
    report->add_option("-i,--input", report_data.input, "Input CSV")->required();
    report->add_option("--target", report_data.target, "Target column name or index");
    report->add_option("--threshold", report_threshold, "Correlation grouping threshold");
    report->add_option("-M,--models", report_models, "Models for the z-test");
    add_model_flags(report, report_flags);
    add_protocol_flags(report, report_protocol);
    report->add_option("--seed", report_seed, "Seed base");
    report->add_option("--template", report_template, "Disclosure template file");
    report->add_option("-o,--out", report_out, "Report path (default stdout)");
    report->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    // experiment
    std::string exp_name, exp_out = "experiments_out";
    std::vector<double> exp_rhos;
    std::vector<int> exp_depths;
    int exp_seeds = 0, exp_models = 0, exp_samples = 0;
    std::uint64_t exp_seed_base = 0;
    auto* experiment = app.add_subcommand("experiment", "Run a canned experiment");
    experiment->add_option("name", exp_name, "Experiment name")->required();
    experiment->add_option("--out", exp_out, "Output directory");
    experiment->add_option("--rhos", exp_rhos, "Correlation grid")->delimiter(',');
    experiment->add_option("--depths", exp_depths, "Tree depths (ratio-sweep)")->delimiter(',');
    experiment->add_option("--seeds", exp_seeds, "Seeds per cell");
    experiment->add_option("-M,--models", exp_models, "Models per cell");
    experiment->add_option("--n", exp_samples, "Sample count");
    experiment->add_option("--seed-base", exp_seed_base, "Base seed");
    experiment->add_option("--config", g_config_file, "Flat key=value config file (flags override it)");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = apply_config_file(std::move(args));
        std::reverse(args.begin(), args.end());  // CLI11 consumes back to front
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (train->parsed()) return cmd_train(train_data, train_flags, train_seed, train_out);
        if (attribute->parsed())
            return cmd_attribute(attr_model, attr_data, attr_method, attr_protocol, attr_seed,
                                 attr_out);
        if (diagnose->parsed())
            return cmd_diagnose(diag_data, diag_flags, diag_protocol, diag_threshold,
                                diag_confirm, diag_models, diag_seed, diag_out);
        if (dash_cmd->parsed())
            return cmd_dash(dash_data, dash_flags, dash_protocol, dash_models, dash_method,
                            dash_trim, dash_threshold, dash_seed, dash_out);
        if (report->parsed())
            return cmd_report(report_data, report_flags, report_protocol, report_threshold,
                              report_models, report_seed, report_template, report_out);
        if (experiment->parsed())
            return cmd_experiment(exp_name, exp_out, exp_rhos, exp_depths, exp_seeds, exp_models,
                                  exp_samples, exp_seed_base);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ParameterError& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
