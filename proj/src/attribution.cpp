#include "attrlab/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "attrlab/rng.hpp"
#include "attrlab/stats.hpp"

namespace attrlab::attribution {

namespace {

// A leaf flattened to one interval constraint per distinct path feature:
// the leaf is reached iff value_j is in [lo_j, hi_j) for every j listed.
struct LeafGame {
    double value = 0.0;
    std::vector<int> features;
    std::vector<double> lo;
    std::vector<double> hi;
};

constexpr int kMaxPathFeatures = 64;  // distinct features on one root-to-leaf path

std::vector<LeafGame> flatten_tree(const gbdt::Tree& tree) {
    std::vector<LeafGame> leaves;
    struct Frame {
        int node;
        std::vector<int> features;
        std::vector<double> lo;
        std::vector<double> hi;
    };
    std::vector<Frame> stack;
    stack.push_back(Frame{0, {}, {}, {}});
    while (!stack.empty()) {
        Frame fr = std::move(stack.back());
        stack.pop_back();
        const gbdt::TreeNode& nd = tree.nodes[static_cast<std::size_t>(fr.node)];
        if (nd.feature < 0) {
            leaves.push_back(LeafGame{nd.value, std::move(fr.features), std::move(fr.lo),
                                      std::move(fr.hi)});
            continue;
        }
        const auto position = std::find(fr.features.begin(), fr.features.end(), nd.feature);
        const bool is_new = position == fr.features.end();
        const std::size_t slot = static_cast<std::size_t>(position - fr.features.begin());
        Frame left = fr;
        Frame right = std::move(fr);
        if (is_new) {
            left.features.push_back(nd.feature);
            left.lo.push_back(-std::numeric_limits<double>::infinity());
            left.hi.push_back(std::numeric_limits<double>::infinity());
            right.features.push_back(nd.feature);
            right.lo.push_back(-std::numeric_limits<double>::infinity());
            right.hi.push_back(std::numeric_limits<double>::infinity());
        }
        left.node = nd.left;
        right.node = nd.right;
        left.hi[slot] = std::min(left.hi[slot], nd.threshold);
        right.lo[slot] = std::max(right.lo[slot], nd.threshold);
        // Prune branches whose interval became empty.
        if (left.lo[slot] < left.hi[slot]) stack.push_back(std::move(left));
        if (right.lo[slot] < right.hi[slot]) stack.push_back(std::move(right));
    }
    return leaves;
}

class FactorialTable {
public:
    FactorialTable() {
        table_[0] = 1.0;
        for (int i = 1; i <= kMaxPathFeatures; ++i) table_[i] = table_[i - 1] * i;
    }
    double operator()(int n) const { return table_[n]; }

private:
    double table_[kMaxPathFeatures + 1];
};

const FactorialTable kFactorial;

// Adds the Shapley values of one tree for the game
//   v(S) = mean over background rows z of tree(x_S combined with z_{~S}).
// For a single (leaf, z) the indicator term is [A subset of S][B disjoint
// from S] with A = features passing for x only and B = passing for z only;
// its Shapley value is (p-1)! q! / (p+q)! on A and -p! (q-1)! / (p+q)! on B.
void accumulate_tree_shap(const gbdt::Tree& tree, std::span<const double> x,
                          const Matrix& background, double scale, std::vector<double>& phi) {
    const std::vector<LeafGame> leaves = flatten_tree(tree);
    const std::size_t n_bg = background.rows();
    for (const LeafGame& leaf : leaves) {
        const int width = static_cast<int>(leaf.features.size());
        if (width == 0) continue;  // constant term, no attribution
        if (width > kMaxPathFeatures)
            throw ParameterError("shap_local: path uses too many distinct features");
        std::uint64_t x_mask = 0;
        for (int i = 0; i < width; ++i) {
            const double v = x[static_cast<std::size_t>(leaf.features[static_cast<std::size_t>(i)])];
            if (v >= leaf.lo[static_cast<std::size_t>(i)] && v < leaf.hi[static_cast<std::size_t>(i)])
                x_mask |= std::uint64_t{1} << i;
        }
        const std::uint64_t full = width == 64 ? ~std::uint64_t{0}
                                               : (std::uint64_t{1} << width) - 1;
        for (std::size_t b = 0; b < n_bg; ++b) {
            const auto z = background.row(b);
            std::uint64_t z_mask = 0;
            for (int i = 0; i < width; ++i) {
                const double v =
                    z[static_cast<std::size_t>(leaf.features[static_cast<std::size_t>(i)])];
                if (v >= leaf.lo[static_cast<std::size_t>(i)] &&
                    v < leaf.hi[static_cast<std::size_t>(i)])
                    z_mask |= std::uint64_t{1} << i;
            }
            if ((x_mask | z_mask) != full) continue;  // some condition fails for both
            const std::uint64_t only_x = x_mask & ~z_mask;  // A: need j present
            const std::uint64_t only_z = z_mask & ~x_mask;  // B: need j absent
            const int p = std::popcount(only_x);
            const int q = std::popcount(only_z);
            if (p + q == 0) continue;  // leaf reached regardless: constant
            const double common = scale * leaf.value / kFactorial(p + q);
            if (p > 0) {
                const double w = common * kFactorial(p - 1) * kFactorial(q);
                std::uint64_t bits = only_x;
                while (bits) {
                    const int i = std::countr_zero(bits);
                    bits &= bits - 1;
                    phi[static_cast<std::size_t>(leaf.features[static_cast<std::size_t>(i)])] += w;
                }
            }
            if (q > 0) {
                const double w = -common * kFactorial(p) * kFactorial(q - 1);
                std::uint64_t bits = only_z;
                while (bits) {
                    const int i = std::countr_zero(bits);
                    bits &= bits - 1;
                    phi[static_cast<std::size_t>(leaf.features[static_cast<std::size_t>(i)])] += w;
                }
            }
        }
    }
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Method method_from_string(const std::string& name) {
    if (name == "shap") return Method::shap;
    if (name == "permutation") return Method::permutation;
    if (name == "split_count") return Method::split_count;
    throw ParameterError("unknown attribution method \"" + name + "\"");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::shap: return "shap";
        case Method::permutation: return "permutation";
        case Method::split_count: return "split_count";
    }
    return "shap";
}

AttributionVector shap_local(const gbdt::Ensemble& ensemble, std::span<const double> x,
                             const BackgroundSet& background) {
    if (background.size() == 0) throw ParameterError("shap_local: empty background");
    if (background.rows.cols() != static_cast<std::size_t>(ensemble.n_features))
        throw ParameterError("shap_local: background feature count mismatch");
    if (x.size() != static_cast<std::size_t>(ensemble.n_features))
        throw ParameterError("shap_local: feature vector length mismatch");

    AttributionVector out;
    out.kind = Kind::local_signed;
    out.values.assign(static_cast<std::size_t>(ensemble.n_features), 0.0);
    const double scale = ensemble.learning_rate / static_cast<double>(background.size());
    for (const gbdt::Tree& tree : ensemble.trees)
        accumulate_tree_shap(tree, x, background.rows, scale, out.values);
    return out;
}

AttributionVector shap_global(const gbdt::Ensemble& ensemble, const Matrix& eval_rows,
                              const BackgroundSet& background) {
    if (eval_rows.rows() == 0) throw ParameterError("shap_global: empty evaluation slice");
    AttributionVector out;
    out.kind = Kind::global_mean_abs;
    out.values.assign(static_cast<std::size_t>(ensemble.n_features), 0.0);
    for (std::size_t r = 0; r < eval_rows.rows(); ++r) {
        const AttributionVector local = shap_local(ensemble, eval_rows.row(r), background);
        for (std::size_t j = 0; j < out.values.size(); ++j)
            out.values[j] += std::abs(local.values[j]);
    }
    for (double& v : out.values) v /= static_cast<double>(eval_rows.rows());
    return out;
}

AttributionVector permutation_importance(const gbdt::Ensemble& ensemble, const Matrix& eval_rows,
                                         std::span<const double> eval_target, std::uint64_t seed) {
    const std::size_t n = eval_rows.rows();
    if (n < 10) throw ParameterError("permutation_importance: need at least 10 evaluation rows");
    if (eval_target.size() != n)
        throw ParameterError("permutation_importance: target length mismatch");

    const std::vector<double> base_pred = ensemble.predict_batch(eval_rows);
    double base_mse = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double d = base_pred[r] - eval_target[r];
        base_mse += d * d;
    }
    base_mse /= static_cast<double>(n);

    AttributionVector out;
    out.kind = Kind::global_mean_abs;
    out.values.assign(static_cast<std::size_t>(ensemble.n_features), 0.0);
    Rng rng(seed);
    Matrix work = eval_rows;
    std::vector<double> saved(n);
    std::vector<std::size_t> perm(n);
    for (std::size_t j = 0; j < static_cast<std::size_t>(ensemble.n_features); ++j) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        for (std::size_t r = 0; r < n; ++r) saved[r] = work(r, j);
        for (std::size_t r = 0; r < n; ++r) work(r, j) = saved[perm[r]];
        double mse = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = ensemble.predict(work.row(r)) - eval_target[r];
            mse += d * d;
        }
        mse /= static_cast<double>(n);
        out.values[j] = std::max(0.0, mse - base_mse);
        for (std::size_t r = 0; r < n; ++r) work(r, j) = saved[r];
    }
    return out;
}

AttributionVector split_count_importance(const gbdt::Ensemble& ensemble) {
    const std::vector<int> counts = gbdt::split_counts(ensemble);
    AttributionVector out;
    out.kind = Kind::global_mean_abs;
    out.values.assign(counts.size(), 0.0);
    long total = 0;
    for (int c : counts) total += c;
    if (total == 0) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t j = 0; j < counts.size(); ++j)
        out.values[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
    return out;
}

DataSplit make_split(const synthdata::Dataset& dataset, const EvalProtocol& protocol) {
    const std::size_t n = dataset.n_rows();
    if (protocol.eval_count == 0 || protocol.background_count == 0)
        throw ParameterError("make_split: eval_count and background_count must be positive");
    if (protocol.eval_count + 2 > n)
        throw ParameterError("make_split: dataset too small for the evaluation slice");

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    Rng eval_rng(protocol.eval_seed);
    shuffle(indices, eval_rng);
    std::vector<std::size_t> eval_idx(indices.begin(),
                                      indices.begin() + static_cast<long>(protocol.eval_count));
    std::vector<std::size_t> train_idx(indices.begin() + static_cast<long>(protocol.eval_count),
                                       indices.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    DataSplit split;
    split.train = dataset.select_rows(train_idx);
    split.eval_rows = Matrix(eval_idx.size(), dataset.n_features());
    split.eval_target.resize(eval_idx.size());
    for (std::size_t i = 0; i < eval_idx.size(); ++i) {
        const auto src = dataset.features.row(eval_idx[i]);
        auto dst = split.eval_rows.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        split.eval_target[i] = dataset.target[eval_idx[i]];
    }

    const std::size_t bg_count = std::min(protocol.background_count, train_idx.size());
    Rng bg_rng(protocol.background_seed);
    const std::vector<std::size_t> bg_pick =
        sample_without_replacement(train_idx.size(), bg_count, bg_rng);
    split.background.rows = Matrix(bg_count, dataset.n_features());
    for (std::size_t i = 0; i < bg_count; ++i) {
        const auto src = split.train.features.row(bg_pick[i]);
        auto dst = split.background.rows.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return split;
}

AttributionMatrix attribution_matrix(const synthdata::Dataset& dataset,
                                     const gbdt::TrainConfig& train_config, int n_models,
                                     std::uint64_t seed_base, Method method,
                                     const EvalProtocol& protocol) {
    if (n_models < 1) throw ParameterError("attribution_matrix: n_models must be >= 1");
    const DataSplit split = make_split(dataset, protocol);

    AttributionMatrix out;
    out.values = Matrix(static_cast<std::size_t>(n_models), dataset.n_features());
    out.names = dataset.names;
    out.method = method;
    out.eval_seed = protocol.eval_seed;
    out.background_seed = protocol.background_seed;
    out.seeds.resize(static_cast<std::size_t>(n_models));

    parallel_for(static_cast<std::size_t>(n_models), protocol.threads, [&](std::size_t i) {
        gbdt::TrainConfig cfg = train_config;
        cfg.seed = seed_base + i;
        const gbdt::Ensemble model = gbdt::fit(split.train, cfg);
        AttributionVector row;
        switch (method) {
            case Method::shap:
                row = shap_global(model, split.eval_rows, split.background);
                break;
            case Method::permutation:
                row = permutation_importance(model, split.eval_rows, split.eval_target, cfg.seed);
                break;
            case Method::split_count:
                row = split_count_importance(model);
                break;
        }
        auto dst = out.values.row(i);
        std::copy(row.values.begin(), row.values.end(), dst.begin());
        out.seeds[i] = cfg.seed;
    });
    return out;
}

void save_matrix(const AttributionMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t c = 0; c < matrix.names.size(); ++c) {
        if (c) out << ',';
        out << matrix.names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < matrix.values.rows(); ++r) {
        for (std::size_t c = 0; c < matrix.values.cols(); ++c) {
            if (c) out << ',';
            out << format_value(matrix.values(r, c));
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path);

    nlohmann::json meta{{"seeds", matrix.seeds},
                        {"method", method_name(matrix.method)},
                        {"eval_slice_seed", matrix.eval_seed},
                        {"background_seed", matrix.background_seed}};
    std::ofstream side(path + ".meta.json");
    if (!side) throw IoError("cannot write " + path + ".meta.json");
    side << meta.dump(2) << '\n';
}

AttributionMatrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    AttributionMatrix out;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header in " + path, 1);
    std::size_t start = 0;
    while (start <= line.size()) {
        const std::size_t comma = line.find(',', start);
        const std::size_t end = comma == std::string::npos ? line.size() : comma;
        std::string name = line.substr(start, end - start);
        if (!name.empty() && name.back() == '\r') name.pop_back();
        out.names.push_back(std::move(name));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    std::vector<std::vector<double>> rows;
    long row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        long col_no = 1;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::size_t end = comma == std::string::npos ? line.size() : comma;
            std::string cell = line.substr(pos, end - pos);
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            char* parse_end = nullptr;
            const double v = std::strtod(cell.c_str(), &parse_end);
            if (parse_end != cell.c_str() + cell.size())
                throw ParseError("non-numeric cell at row " + std::to_string(row_no), row_no,
                                 col_no);
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
            ++col_no;
        }
        if (row.size() != out.names.size())
            throw ParseError("row width mismatch at row " + std::to_string(row_no), row_no);
        rows.push_back(std::move(row));
    }
    out.values = Matrix(rows.size(), out.names.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < out.names.size(); ++c) out.values(r, c) = rows[r][c];

    std::ifstream side(path + ".meta.json");
    if (side) {
        nlohmann::json meta = nlohmann::json::parse(side);
        out.seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
        out.method = method_from_string(meta.at("method").get<std::string>());
        out.eval_seed = meta.at("eval_slice_seed").get<std::uint64_t>();
        out.background_seed = meta.at("background_seed").get<std::uint64_t>();
    }
    return out;
}

}  // namespace attrlab::attribution
